#!/usr/bin/env python3
"""
trainer.py - SGD training loop for LIRR and the baseline methods, evaluation and metrics output
"""

import csv
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from data import LabeledSet, SemiDATask
from diffcore import DimensionError, Graph, Node, ParameterError
from dicts import DIVERGENCE_LIMIT, METHODS, METRICS_HEADER, METRICS_LOG_EVERY, OPTIM_DEFAULTS
from models import LIRRModel, ModelBinding, ModelConfig, init_model
from objectives import (
    Batches,
    ConfigError,
    LabeledBatch,
    LIRRConfig,
    LossReport,
    irm_penalty_weight,
    loss_dann,
    loss_irm_baseline,
    loss_lirr_total,
    loss_risk,
    loss_s_plus_t,
)

log = logging.getLogger("TRAINER")

# methods that train f_d against the reversal and may score domain-tagged sets with it
DOMAIN_HEAD_METHODS = ("lirr", "risk_only")
REP_METHODS = ("lirr", "lirr_cosc", "dann")
RISK_METHODS = ("lirr", "lirr_cosc", "risk_only")


class DivergenceError(RuntimeError):
    def __init__(self, message: str, record: "RunRecord") -> None:
        super().__init__(message)
        self.record = record


# ----------------------------------------------------------------------
# Optimizer
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class OptimConfig:
    lr: float = OPTIM_DEFAULTS["lr"]
    momentum: float = OPTIM_DEFAULTS["momentum"]
    weight_decay: float = OPTIM_DEFAULTS["weight_decay"]
    total_iters: int = OPTIM_DEFAULTS["total_iters"]
    batch_size: int = OPTIM_DEFAULTS["batch_size"]
    decay_fraction: float = OPTIM_DEFAULTS["decay_fraction"]
    decay_multiplier: float = OPTIM_DEFAULTS["decay_multiplier"]
    seed: int = 0

    def __post_init__(self):
        if not (self.lr > 0.0 and math.isfinite(self.lr)):
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0.0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.total_iters < 1 or self.batch_size < 1:
            raise ConfigError(f"total_iters and batch_size must be >= 1, got {self.total_iters}, {self.batch_size}")
        if not 0.0 <= self.decay_fraction <= 1.0:
            raise ConfigError(f"decay point must lie within the run, got fraction {self.decay_fraction}")
        if not self.decay_multiplier > 0.0:
            raise ConfigError(f"decay_multiplier must be positive, got {self.decay_multiplier}")

    @property
    def decay_iter(self) -> int:
        return int(math.floor(self.decay_fraction * self.total_iters))

    def lr_at(self, iteration: int) -> float:
        return self.lr * self.decay_multiplier if iteration >= self.decay_iter else self.lr


def sgd_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], velocity: Dict[str, np.ndarray],
             lr: float, momentum: float, weight_decay: float) -> Dict[str, np.ndarray]:
    """v <- momentum v + g + wd p ; p <- p - lr v. Updates velocity in place, returns new params."""
    updated = {}
    for name, value in params.items():
        if name not in grads:
            raise ParameterError(f"no gradient for parameter '{name}'")
        grad = np.asarray(grads[name], dtype=np.float64)
        if grad.shape != value.shape:
            raise DimensionError(f"gradient for '{name}' has shape {grad.shape}, parameter has {value.shape}")
        v = momentum * velocity.get(name, np.zeros_like(value)) + grad + weight_decay * value
        velocity[name] = v
        updated[name] = value - lr * v
    return updated


# ----------------------------------------------------------------------
# Batches
# ----------------------------------------------------------------------
def _draw(rng: np.random.Generator, size: int, batch: int, replace_always: bool = False) -> np.ndarray:
    return rng.choice(size, size=batch, replace=replace_always or size < batch)


class BatchSampler:
    """Independent streams for S, T~ and T so methods see identical batches under one seed."""

    def __init__(self, task: SemiDATask, batch_size: int, seed: int, oracle_target: bool = False) -> None:
        self.task = task
        self.batch_size = batch_size
        self.oracle_target = oracle_target
        s_ss, tl_ss, tu_ss = np.random.SeedSequence([int(seed), int(task.seed)]).spawn(3)
        self.rng_s = np.random.default_rng(s_ss)
        self.rng_tl = np.random.default_rng(tl_ss)
        self.rng_tu = np.random.default_rng(tu_ss)
        self.x_dim = task.source.features.shape[1]
        if oracle_target:
            self.pool = task.target_unlabeled.oracle()

    def next(self) -> Batches:
        task, b = self.task, self.batch_size
        src = _draw(self.rng_s, task.n, b)
        lab = _draw(self.rng_tl, task.m, b, replace_always=True)
        unl = _draw(self.rng_tu, task.k, b)
        if self.oracle_target:
            # every target point labeled, source ignored
            return Batches(
                LabeledBatch.empty(self.x_dim),
                LabeledBatch(self.pool.features[unl], self.pool.labels[unl]),
                np.zeros((0, self.x_dim)),
            )
        return Batches(
            LabeledBatch(task.source.features[src], task.source.labels[src]),
            LabeledBatch(task.target_labeled.features[lab], task.target_labeled.labels[lab]),
            task.target_unlabeled.features[unl],
        )


# ----------------------------------------------------------------------
# Methods
# ----------------------------------------------------------------------
Objective = Callable[[ModelBinding, Batches, int], Tuple[Node, LossReport]]


def _objective(method: str, cfg: LIRRConfig, total_iters: int) -> Objective:
    def lirr(b, batches, it):
        return loss_lirr_total(b, batches, cfg)

    def dann(b, batches, it):
        return loss_dann(b, batches, cfg)

    def risk_only(b, batches, it):
        return loss_risk(b, batches, cfg)

    def s_plus_t(b, batches, it):
        return loss_s_plus_t(b, batches, cfg.task_kind)

    def irm(b, batches, it):
        weight = irm_penalty_weight(it, total_iters, cfg)
        loss, report = loss_irm_baseline(b, batches, weight, cfg.task_kind)
        # keep the step size comparable once the penalty weight jumps
        if weight > 1.0:
            loss = b.graph.scale(loss, 1.0 / weight)
        return loss, report

    objectives = {
        "lirr": lirr,
        "lirr_cosc": lirr,
        "dann": dann,
        "irm": irm,
        "s_plus_t": s_plus_t,
        "risk_only": risk_only,
        "full_t": s_plus_t,
    }
    return objectives[method]


# ----------------------------------------------------------------------
# RunRecord and evaluation
# ----------------------------------------------------------------------
@dataclass
class RunRecord:
    method: str
    model: LIRRModel
    reports: List[LossReport] = field(default_factory=list)
    lrs: List[float] = field(default_factory=list)
    src_metric: float = math.nan
    tgt_metric: float = math.nan
    wall_time: float = 0.0
    status: str = "ok"

    @property
    def iterations(self) -> int:
        return len(self.reports)


def predict(model: LIRRModel, x: np.ndarray, domain: Optional[int] = None) -> np.ndarray:
    """
    Class labels (classification) or values (regression). With a domain flag and
    a model whose eval_head is "domain" the prediction comes from f_d(g(x), domain),
    otherwise from the invariant predictor.
    """
    if domain is not None and model.eval_head == "domain":
        out = model.predict_domain(x, domain)
    else:
        out = model.predict(x)
    if model.task_kind == "classification":
        return out.argmax(axis=1)
    return out.reshape(-1)


def evaluate(model: LIRRModel, labeled: LabeledSet, task_kind: Optional[str] = None) -> float:
    """Accuracy for classification, mean absolute error for regression."""
    task_kind = task_kind or model.task_kind
    if len(labeled) == 0:
        raise ParameterError("cannot evaluate on an empty set")
    pred = predict(model, labeled.features, labeled.domain)
    if task_kind == "classification":
        return float(np.mean(pred == labeled.labels))
    return float(np.mean(np.abs(pred - labeled.labels)))


def write_metrics_csv(record: RunRecord, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for i, (report, lr) in enumerate(zip(record.reports, record.lrs)):
            writer.writerow([i] + [repr(float(v)) for v in report.row()] + [repr(lr)])
        writer.writerow(["final", repr(record.src_metric), repr(record.tgt_metric)])


# ----------------------------------------------------------------------
# Training
# ----------------------------------------------------------------------
def train(method: str, task: SemiDATask, lirr_cfg: Optional[LIRRConfig] = None,
          optim_cfg: Optional[OptimConfig] = None, model_cfg: Optional[ModelConfig] = None) -> RunRecord:
    if method not in METHODS:
        raise ConfigError(f"unknown method '{method}' (known: {sorted(METHODS)})")
    lirr_cfg = lirr_cfg or LIRRConfig(task_kind=task.task_kind)
    optim_cfg = optim_cfg or OptimConfig()
    model_cfg = model_cfg or ModelConfig(task_kind=task.task_kind, x_dim=task.source.features.shape[1])
    if lirr_cfg.task_kind != task.task_kind or model_cfg.task_kind != task.task_kind:
        raise ConfigError(f"task is {task.task_kind} but configs say {lirr_cfg.task_kind}/{model_cfg.task_kind}")
    if method == "lirr_cosc":
        model_cfg = replace(model_cfg, head_kind="cosine")
    if method == "full_t" and task.target_unlabeled.oracle_labels is None:
        raise ConfigError("full_t needs the target pool's oracle labels")

    model = init_model(model_cfg, optim_cfg.seed)
    # coefficients carried through the reversal nodes into g; 0 where the method has none
    model.grl_lambda_rep = lirr_cfg.lambda_rep if method in REP_METHODS else 0.0
    model.grl_lambda_risk = lirr_cfg.lambda_risk if method in RISK_METHODS else 0.0
    if method in DOMAIN_HEAD_METHODS:
        model.eval_head = lirr_cfg.eval_head
    sampler = BatchSampler(task, optim_cfg.batch_size, optim_cfg.seed, oracle_target=method == "full_t")
    objective = _objective(method, lirr_cfg, optim_cfg.total_iters)
    record = RunRecord(method, model)
    velocity: Dict[str, np.ndarray] = {}

    log.info(f"Training {method} on {task.scenario.kind} (n={task.n}, m={task.m}, k={task.k}) "
             f"for {optim_cfg.total_iters} iterations")
    start = time.perf_counter()
    for it in range(optim_cfg.total_iters):
        graph = Graph()
        binding = model.bind(graph)
        loss, report = objective(binding, sampler.next(), it)
        value = loss.item()
        if not math.isfinite(value) or abs(value) > DIVERGENCE_LIMIT:
            record.status = "diverged"
            record.wall_time = time.perf_counter() - start
            raise DivergenceError(f"{method}: loss {value!r} at iteration {it}", record)

        lr = optim_cfg.lr_at(it)
        grads = binding.gradients(graph.backward(loss))
        model.params = sgd_step(model.params, grads, velocity, lr, optim_cfg.momentum, optim_cfg.weight_decay)
        record.reports.append(report)
        record.lrs.append(lr)
        if it % METRICS_LOG_EVERY == 0:
            log.debug(f"{method} iter {it}: l_i={report.l_i:.4f} l_total={report.l_total:.4f} lr={lr:g}")

    if not model.is_finite():
        record.status = "diverged"
        raise DivergenceError(f"{method}: parameters became non-finite", record)

    record.wall_time = time.perf_counter() - start
    record.src_metric = evaluate(model, task.source)
    record.tgt_metric = evaluate(model, task.test_target)
    log.info(f"{method} done in {record.wall_time:.1f}s: src={record.src_metric:.4f} tgt={record.tgt_metric:.4f}")
    return record
