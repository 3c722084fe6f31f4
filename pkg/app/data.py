#!/usr/bin/env python3
"""
data.py - Semi-DA task generation, (n, m, k) splitting and CSV persistence
"""

import configparser
import csv
import logging
import os
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from diffcore import ParameterError
from dicts import CSV_HEADER, DATA_DEFAULTS, TASK_FILES
from scenarios import ScenarioSpec

log = logging.getLogger("DATA")

DOMAIN_TAGS = ("source", "target")


class ParseError(ValueError):
    def __init__(self, path: str, line: int, message: str) -> None:
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


# ----------------------------------------------------------------------
# Sets
# ----------------------------------------------------------------------
def _check_features(features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ParameterError(f"features must be a matrix, got shape {features.shape}")
    if not np.all(np.isfinite(features)):
        raise ParameterError("features contain non-finite values")
    return features


def _check_tag(tag: str) -> str:
    if tag not in DOMAIN_TAGS:
        raise ParameterError(f"domain tag must be one of {DOMAIN_TAGS}, got '{tag}'")
    return tag


@dataclass
class LabeledSet:
    features: np.ndarray
    labels: np.ndarray
    domain_tag: str

    def __post_init__(self):
        self.features = _check_features(self.features)
        self.labels = np.asarray(self.labels).reshape(-1)
        _check_tag(self.domain_tag)
        if self.labels.shape[0] != self.features.shape[0]:
            raise ParameterError(f"{self.features.shape[0]} feature rows but {self.labels.shape[0]} labels")
        if self.labels.dtype.kind == "f" and not np.all(np.isfinite(self.labels)):
            raise ParameterError("labels contain non-finite values")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def domain(self) -> int:
        return DOMAIN_TAGS.index(self.domain_tag)


@dataclass
class UnlabeledSet:
    features: np.ndarray
    domain_tag: str
    # Ground truth kept for the oracle baseline only; never used by adaptation methods
    oracle_labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.features = _check_features(self.features)
        _check_tag(self.domain_tag)
        if self.oracle_labels is not None:
            self.oracle_labels = np.asarray(self.oracle_labels).reshape(-1)
            if self.oracle_labels.shape[0] != self.features.shape[0]:
                raise ParameterError("oracle labels do not match feature rows")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def domain(self) -> int:
        return DOMAIN_TAGS.index(self.domain_tag)

    def oracle(self) -> LabeledSet:
        if self.oracle_labels is None:
            raise ParameterError("unlabeled set carries no oracle labels")
        return LabeledSet(self.features, self.oracle_labels, self.domain_tag)


@dataclass
class SemiDATask:
    source: LabeledSet
    target_labeled: LabeledSet
    target_unlabeled: UnlabeledSet
    test_target: LabeledSet
    scenario: ScenarioSpec
    seed: int

    @property
    def n(self) -> int:
        return len(self.source)

    @property
    def m(self) -> int:
        return len(self.target_labeled)

    @property
    def k(self) -> int:
        return len(self.target_unlabeled)

    @property
    def task_kind(self) -> str:
        return self.scenario.task_kind


# ----------------------------------------------------------------------
# Generation
# ----------------------------------------------------------------------
def check_sizes(n: int, m: int, k: int, enforce_label_budget: bool = True) -> None:
    if n < 1 or k < 1:
        raise ParameterError(f"need n >= 1 and k >= 1, got n={n}, k={k}")
    if not 1 <= m <= k:
        raise ParameterError(f"need 1 <= m <= k, got m={m}, k={k}")
    if enforce_label_budget and m > n * DATA_DEFAULTS["label_budget_ratio"]:
        raise ParameterError(f"m={m} exceeds the labeled-target budget n/10 = {n / 10:g}")


def gen_task(spec: ScenarioSpec, n: int, m: int, k: int, seed: int,
             test_size: int = DATA_DEFAULTS["test_size"], enforce_label_budget: bool = True) -> SemiDATask:
    check_sizes(n, m, k, enforce_label_budget)
    if test_size < 1:
        raise ParameterError(f"test_size must be >= 1, got {test_size}")
    source_ss, pool_ss, pick_ss, test_ss = np.random.SeedSequence(int(seed)).spawn(4)

    xs, ys = spec.sample(0, n, np.random.default_rng(source_ss))
    x_pool, y_pool = spec.sample(1, k, np.random.default_rng(pool_ss))
    # a prefix of one permutation, so a larger m under the same seed labels a superset
    picked = np.sort(np.random.default_rng(pick_ss).permutation(k)[:m])
    x_test, y_test = spec.sample(1, test_size, np.random.default_rng(test_ss))

    log.debug(f"Generated {spec.kind} task n={n} m={m} k={k} seed={seed}")
    return SemiDATask(
        source=LabeledSet(xs, ys, "source"),
        target_labeled=LabeledSet(x_pool[picked], y_pool[picked], "target"),
        target_unlabeled=UnlabeledSet(x_pool, "target", oracle_labels=y_pool),
        test_target=LabeledSet(x_test, y_test, "target"),
        scenario=spec,
        seed=int(seed),
    )


# ----------------------------------------------------------------------
# Persistence
# ----------------------------------------------------------------------
def _fmt(value: float) -> str:
    return "%.17g" % value


def _fmt_label(value, task_kind: str) -> str:
    return str(int(value)) if task_kind == "classification" else _fmt(float(value))


def _write_csv(path: str, features: np.ndarray, labels: Optional[np.ndarray], domain: int, task_kind: str) -> None:
    lines = [",".join(CSV_HEADER)]
    for i, row in enumerate(features):
        label = "" if labels is None else _fmt_label(labels[i], task_kind)
        lines.append(f"{_fmt(row[0])},{_fmt(row[1])},{label},{domain}")
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("\n".join(lines) + "\n")


def format_param(value) -> str:
    if isinstance(value, (tuple, list)):
        return ", ".join(_fmt(float(v)) for v in value)
    return _fmt(float(value))


def parse_param(text: str):
    parts = [p.strip() for p in text.split(",")]
    values = tuple(float(p) for p in parts)
    return values if len(values) > 1 else values[0]


def save_task(task: SemiDATask, path: str) -> None:
    os.makedirs(path, exist_ok=True)
    kind = task.task_kind
    _write_csv(os.path.join(path, TASK_FILES["source"]), task.source.features, task.source.labels, 0, kind)
    _write_csv(os.path.join(path, TASK_FILES["target_labeled"]), task.target_labeled.features,
               task.target_labeled.labels, 1, kind)
    _write_csv(os.path.join(path, TASK_FILES["target_unlabeled"]), task.target_unlabeled.features,
               task.target_unlabeled.oracle_labels, 1, kind)
    _write_csv(os.path.join(path, TASK_FILES["test_target"]), task.test_target.features, task.test_target.labels, 1, kind)

    cfg = configparser.ConfigParser()
    cfg["scenario"] = {"kind": task.scenario.kind}
    for key in sorted(task.scenario.params):
        cfg["scenario"][key] = format_param(task.scenario.params[key])
    cfg["task"] = {
        "task_kind": kind,
        "seed": str(task.seed),
        "n": str(task.n),
        "m": str(task.m),
        "k": str(task.k),
        "test_size": str(len(task.test_target)),
    }
    with open(os.path.join(path, TASK_FILES["scenario"]), "w", encoding="utf-8") as f:
        cfg.write(f)
    log.info(f"Saved task to {path}")


def _read_csv(path: str, task_kind: str, require_labels: bool, expect_domain: int):
    features: List[List[float]] = []
    labels: List[float] = []
    missing = 0
    try:
        f = open(path, "r", encoding="utf-8", newline="")
    except OSError as e:
        raise ParseError(path, 0, f"cannot open: {e}") from e
    with f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise ParseError(path, 1, f"expected header {','.join(CSV_HEADER)}, got {header}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(CSV_HEADER):
                raise ParseError(path, line_no, f"expected {len(CSV_HEADER)} fields, got {len(row)}")
            try:
                x1, x2 = float(row[0]), float(row[1])
            except ValueError as e:
                raise ParseError(path, line_no, f"bad feature value: {e}") from e
            if row[3].strip() != str(expect_domain):
                raise ParseError(path, line_no, f"domain must be {expect_domain}, got '{row[3]}'")
            if row[2].strip() == "":
                if require_labels:
                    raise ParseError(path, line_no, "missing label")
                missing += 1
            else:
                try:
                    labels.append(int(row[2]) if task_kind == "classification" else float(row[2]))
                except ValueError as e:
                    raise ParseError(path, line_no, f"bad label: {e}") from e
            features.append([x1, x2])
    if missing and labels:
        raise ParseError(path, 0, "label column is only partially filled")
    x = np.asarray(features, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(x)):
        raise ParseError(path, 0, "non-finite feature values")
    dtype = np.int64 if task_kind == "classification" else np.float64
    y = np.asarray(labels, dtype=dtype) if labels or require_labels else None
    return x, y


def load_task(path: str) -> SemiDATask:
    sidecar = os.path.join(path, TASK_FILES["scenario"])
    cfg = configparser.ConfigParser()
    try:
        with open(sidecar, "r", encoding="utf-8") as f:
            cfg.read_file(f)
    except OSError as e:
        raise ParseError(sidecar, 0, f"cannot open: {e}") from e
    except configparser.Error as e:
        raise ParseError(sidecar, getattr(e, "lineno", 0) or 0, str(e)) from e
    if not cfg.has_section("scenario") or not cfg.has_section("task"):
        raise ParseError(sidecar, 0, "sidecar needs [scenario] and [task] sections")
    try:
        params = {key: parse_param(value) for key, value in cfg["scenario"].items() if key != "kind"}
        spec = ScenarioSpec(cfg["scenario"]["kind"], params)
        seed = cfg["task"].getint("seed")
    except (KeyError, ValueError) as e:
        raise ParseError(sidecar, 0, f"invalid scenario description: {e}") from e

    kind = spec.task_kind
    xs, ys = _read_csv(os.path.join(path, TASK_FILES["source"]), kind, True, 0)
    xl, yl = _read_csv(os.path.join(path, TASK_FILES["target_labeled"]), kind, True, 1)
    xu, yu = _read_csv(os.path.join(path, TASK_FILES["target_unlabeled"]), kind, False, 1)
    xt, yt = _read_csv(os.path.join(path, TASK_FILES["test_target"]), kind, True, 1)
    return SemiDATask(
        source=LabeledSet(xs, ys, "source"),
        target_labeled=LabeledSet(xl, yl, "target"),
        target_unlabeled=UnlabeledSet(xu, "target", oracle_labels=yu),
        test_target=LabeledSet(xt, yt, "target"),
        scenario=spec,
        seed=seed,
    )
