#!/usr/bin/env python3
"""
bound.py - Generalization-bound terms, hypothesis distances, exact lemma checks and MI decomposition

All distances are computed exactly by enumerating a finite hypothesis class over
the cell masses of two (empirical or exact) distributions.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import singledispatch
from typing import Callable, Dict, Sequence

import numpy as np
from scipy.special import rel_entr
from sklearn.model_selection import train_test_split
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler
from sklearn.svm import SVC

from data import LabeledSet, SemiDATask
from diffcore import DimensionError, ParameterError
from dicts import BOUND_DEFAULTS, BOUND_HEADER, LEMMA_TOLERANCE, TILDE_THRESHOLDS
from scenarios import ScenarioSpec

log = logging.getLogger("BOUND")

MODES = ("population", "finite_sample")
LOSS_KINDS = ("zero_one", "l1")
PAIR_CHUNK = 512
POWERSET_LIMIT = 12


# ----------------------------------------------------------------------
# Finite hypothesis classes
# ----------------------------------------------------------------------
def _grid_locator(lo: np.ndarray, hi: np.ndarray, size: int) -> Callable[[np.ndarray], np.ndarray]:
    width = np.where(hi > lo, hi - lo, 1.0)

    def locate(x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != 2:
            raise DimensionError(f"grid classes take 2-D points, got {x.shape}")
        idx = np.clip(np.floor((x - lo) / width * size).astype(np.int64), 0, size - 1)
        return idx[:, 0] * size + idx[:, 1]

    return locate


def _ordinal_locator(n_cells: int) -> Callable[[np.ndarray], np.ndarray]:
    def locate(z: np.ndarray) -> np.ndarray:
        z = np.asarray(z).reshape(-1)
        if z.size and (z.dtype.kind not in "iu" or z.min() < 0 or z.max() >= n_cells):
            raise ParameterError(f"ordinal cells must be integers in [0, {n_cells})")
        return z.astype(np.int64)

    return locate


def _bbox(*samples: np.ndarray):
    points = np.vstack([np.atleast_2d(np.asarray(s, dtype=np.float64)) for s in samples])
    if points.size == 0:
        raise ParameterError("cannot build a grid from empty samples")
    return points.min(axis=0), points.max(axis=0)


def _axis_thresholds(size: int):
    # cell coordinate along one axis, thresholds 0..size so both constants are included
    coords = np.arange(size * size)
    return (coords // size, coords % size), np.arange(size + 1)


@dataclass(eq=False)
class FiniteHypothesisClass:
    """Hypotheses as rows of a table over cells; locate() maps samples to cells."""

    table: np.ndarray
    locate: Callable[[np.ndarray], np.ndarray]
    vc_dim: int
    pdim: int
    name: str = "custom"

    def __post_init__(self):
        self.table = np.atleast_2d(np.asarray(self.table, dtype=np.float64))
        if self.table.shape[0] == 0 or self.table.shape[1] == 0:
            raise ParameterError("hypothesis class is empty")
        if not np.all(np.isfinite(self.table)):
            raise ParameterError("hypothesis class must be total on its cells")
        if self.vc_dim < 1 or self.pdim < 1:
            raise ParameterError(f"capacity must be >= 1, got vc_dim={self.vc_dim}, pdim={self.pdim}")

    def __len__(self) -> int:
        return self.table.shape[0]

    @property
    def n_cells(self) -> int:
        return self.table.shape[1]

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.table == 0.0) | (self.table == 1.0)))

    def masses(self, sample: np.ndarray) -> np.ndarray:
        cells = self.locate(sample)
        if cells.size == 0:
            raise ParameterError("sample is empty")
        return np.bincount(cells, minlength=self.n_cells) / cells.size

    def evaluate(self, index: int, sample: np.ndarray) -> np.ndarray:
        return self.table[index, self.locate(sample)]

    @classmethod
    def axis_stumps(cls, *samples: np.ndarray, grid_size: int = BOUND_DEFAULTS["grid_size"]) -> "FiniteHypothesisClass":
        """Signed threshold stumps on either axis of a grid spanning the samples."""
        lo, hi = _bbox(*samples)
        (ix, iy), thresholds = _axis_thresholds(grid_size)
        rows = []
        for coord in (ix, iy):
            for t in thresholds:
                above = (coord >= t).astype(np.float64)
                rows.extend([above, 1.0 - above])
        return cls(np.array(rows), _grid_locator(lo, hi, grid_size), BOUND_DEFAULTS["stump_vc_dim"],
                   BOUND_DEFAULTS["stump_vc_dim"], "axis_stumps")

    @classmethod
    def line_stumps(cls, n_cells: int) -> "FiniteHypothesisClass":
        """I(z >= t) and I(z < t) over an ordinal Z = {0..n_cells-1}, constants included."""
        if n_cells < 1:
            raise ParameterError(f"n_cells must be >= 1, got {n_cells}")
        z = np.arange(n_cells)
        rows = []
        for t in range(n_cells + 1):
            above = (z >= t).astype(np.float64)
            rows.extend([above, 1.0 - above])
        return cls(np.array(rows), _ordinal_locator(n_cells), 2, 2, "line_stumps")

    @classmethod
    def powerset(cls, n_cells: int) -> "FiniteHypothesisClass":
        if not 1 <= n_cells <= POWERSET_LIMIT:
            raise ParameterError(f"powerset class needs 1 <= |Z| <= {POWERSET_LIMIT}, got {n_cells}")
        codes = np.arange(2 ** n_cells)
        table = ((codes[:, None] >> np.arange(n_cells)[None, :]) & 1).astype(np.float64)
        return cls(table, _ordinal_locator(n_cells), n_cells, n_cells, "powerset")

    @classmethod
    def regression_stumps(cls, *samples: np.ndarray, bins: int = BOUND_DEFAULTS["regression_bins"],
                          levels: Sequence[float] = BOUND_DEFAULTS["regression_levels"]) -> "FiniteHypothesisClass":
        """Two-level step functions along either axis of a bins x bins grid."""
        lo, hi = _bbox(*samples)
        (ix, iy), thresholds = _axis_thresholds(bins)
        rows = []
        for coord in (ix, iy):
            for t in thresholds:
                above = coord >= t
                for low in levels:
                    for high in levels:
                        rows.append(np.where(above, float(high), float(low)))
        return cls(np.array(rows), _grid_locator(lo, hi, bins), 3, 3, "regression_stumps")


# ----------------------------------------------------------------------
# Distances
# ----------------------------------------------------------------------
def _check_binary(classH: FiniteHypothesisClass) -> None:
    if not classH.is_binary:
        raise ParameterError(f"class '{classH.name}' is real-valued; use dH_tilde")


def dH_from_masses(table: np.ndarray, diff: np.ndarray) -> float:
    return float(min(1.0, np.abs(table @ diff).max()))


def dH_delta_H_from_masses(table: np.ndarray, diff: np.ndarray) -> float:
    # P(h_i xor h_j) gap = a_i + a_j - 2 sum_z diff_z h_i(z) h_j(z)
    a = table @ diff
    best = 0.0
    for start in range(0, table.shape[0], PAIR_CHUNK):
        block = table[start:start + PAIR_CHUNK]
        gap = a[start:start + PAIR_CHUNK, None] + a[None, :] - 2.0 * (block * diff) @ table.T
        best = max(best, float(np.abs(gap).max()))
    return min(1.0, best)


def dH_tilde_from_masses(table: np.ndarray, diff: np.ndarray, thresholds: Sequence[float]) -> float:
    best = 0.0
    for start in range(0, table.shape[0], PAIR_CHUNK):
        spread = np.abs(table[start:start + PAIR_CHUNK, None, :] - table[None, :, :])
        for t in thresholds:
            best = max(best, float(np.abs((spread > t) @ diff).max()))
    return min(1.0, best)


def _mass_diff(classH: FiniteHypothesisClass, sample_s: np.ndarray, sample_t: np.ndarray) -> np.ndarray:
    return classH.masses(sample_s) - classH.masses(sample_t)


def dH(classH: FiniteHypothesisClass, sample_s: np.ndarray, sample_t: np.ndarray) -> float:
    _check_binary(classH)
    return dH_from_masses(classH.table, _mass_diff(classH, sample_s, sample_t))


def dH_delta_H(classH: FiniteHypothesisClass, sample_s: np.ndarray, sample_t: np.ndarray) -> float:
    _check_binary(classH)
    return dH_delta_H_from_masses(classH.table, _mass_diff(classH, sample_s, sample_t))


def dH_tilde(classH: FiniteHypothesisClass, sample_s: np.ndarray, sample_t: np.ndarray,
             thresholds: Sequence[float] = TILDE_THRESHOLDS) -> float:
    """Distance over the sets {|h - h'| > t} for a real-valued class."""
    return dH_tilde_from_masses(classH.table, _mass_diff(classH, sample_s, sample_t), thresholds)


# ----------------------------------------------------------------------
# Risk, disagreement, noise, concentration
# ----------------------------------------------------------------------
def empirical_risk(h, labeled: LabeledSet, loss_kind: str = "zero_one") -> float:
    """Mean 0-1 disagreement or mean |h - y|. h is a predictor callable or a prediction array."""
    if loss_kind not in LOSS_KINDS:
        raise ParameterError(f"loss_kind must be one of {LOSS_KINDS}, got '{loss_kind}'")
    if len(labeled) == 0:
        raise ParameterError("empirical risk of an empty set")
    pred = np.asarray(h(labeled.features) if callable(h) else h).reshape(-1)
    labels = np.asarray(labeled.labels).reshape(-1)
    if pred.shape != labels.shape:
        raise DimensionError(f"{pred.shape[0]} predictions for {labels.shape[0]} labels")
    if loss_kind == "zero_one":
        return float(np.mean(pred != labels))
    return float(np.mean(np.abs(pred.astype(np.float64) - labels)))


def _require_spec(spec) -> ScenarioSpec:
    if spec is None:
        raise ParameterError("analytic labeling functions are required (no scenario given)")
    return spec


def disagreement_term(spec: ScenarioSpec, sample_s: np.ndarray, sample_t: np.ndarray) -> float:
    spec = _require_spec(spec)
    gaps = []
    for sample in (sample_s, sample_t):
        if len(sample) == 0:
            raise ParameterError("disagreement over an empty sample")
        gaps.append(float(np.mean(np.abs(spec.conditional_mean(0, sample) - spec.conditional_mean(1, sample)))))
    return min(gaps)


def noise_term(spec: ScenarioSpec, sample_s: LabeledSet, sample_t: LabeledSet) -> float:
    spec = _require_spec(spec)
    total = 0.0
    for domain, labeled in enumerate((sample_s, sample_t)):
        if len(labeled) == 0:
            raise ParameterError("noise over an empty sample")
        f = spec.conditional_mean(domain, labeled.features)
        total += float(np.mean(np.abs(np.asarray(labeled.labels, dtype=np.float64) - f)))
    return abs(total)


def concentration_term(n: int, m: int, d: int, delta: float = BOUND_DEFAULTS["delta"]) -> float:
    if not (isinstance(d, (int, np.integer)) and d >= 1):
        raise ParameterError(f"capacity d must be an integer >= 1, got {d!r}")
    if n < d or m < d:
        raise ParameterError(f"need n, m >= d, got n={n}, m={m}, d={d}")
    if not 0.0 < delta < 1.0:
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")
    log_conf = math.log(1.0 / delta)
    radicand = (8.0 * d / m * math.log(math.e * m / d) + 2.0 / m * log_conf
                + 8.0 * d / n * math.log(math.e * n / d) + 2.0 / n * log_conf)
    return math.sqrt(radicand)


# ----------------------------------------------------------------------
# Discrete joints over (D, Y, Z)
# ----------------------------------------------------------------------
class DiscreteJoint:
    """p(d, y, z) with |D| = 2; Y takes the values 0..|Y|-1."""

    def __init__(self, table) -> None:
        table = np.asarray(table, dtype=np.float64)
        if table.ndim != 3 or table.shape[0] != 2 or table.shape[1] < 1 or table.shape[2] < 1:
            raise ParameterError(f"joint must have shape (2, |Y|, |Z|), got {table.shape}")
        if not np.all(np.isfinite(table)) or np.any(table < 0.0):
            raise ParameterError("joint entries must be finite and nonnegative")
        if abs(table.sum() - 1.0) > 1e-12:
            raise ParameterError(f"joint sums to {table.sum()!r}, not 1")
        if np.any(table.sum(axis=(1, 2)) <= 0.0):
            raise ParameterError("each domain needs positive mass")
        self.table = table

    @property
    def n_y(self) -> int:
        return self.table.shape[1]

    @property
    def n_z(self) -> int:
        return self.table.shape[2]

    @property
    def p_d(self) -> np.ndarray:
        return self.table.sum(axis=(1, 2))

    def conditional(self, domain: int) -> np.ndarray:
        """p(y, z | d)"""
        return self.table[domain] / self.p_d[domain]

    def p_z(self, domain: int) -> np.ndarray:
        return self.conditional(domain).sum(axis=0)

    def cond_mean(self, domain: int) -> np.ndarray:
        # E[Y | Z=z, D=d]; zero where the domain puts no mass on z
        joint = self.conditional(domain)
        pz = joint.sum(axis=0)
        y = np.arange(self.n_y, dtype=np.float64)
        return np.where(pz > 0.0, (y[:, None] * joint).sum(axis=0) / np.where(pz > 0.0, pz, 1.0), 0.0)

    def _expected_abs(self, domain: int, pred: np.ndarray) -> float:
        y = np.arange(self.n_y, dtype=np.float64)
        return float((self.conditional(domain) * np.abs(y[:, None] - pred[None, :])).sum())

    def risk(self, h: np.ndarray, domain: int) -> float:
        h = np.asarray(h, dtype=np.float64).reshape(-1)
        if h.shape[0] != self.n_z:
            raise DimensionError(f"hypothesis over {h.shape[0]} cells, joint has {self.n_z}")
        return self._expected_abs(domain, h)

    def noise(self, domain: int) -> float:
        return self._expected_abs(domain, self.cond_mean(domain))

    def disagreement(self) -> float:
        gap = np.abs(self.cond_mean(0) - self.cond_mean(1))
        return float(min(self.p_z(0) @ gap, self.p_z(1) @ gap))

    def sample(self, domain: int, size: int, rng: np.random.Generator):
        """(z, y) pairs drawn from p(y, z | d)."""
        flat = rng.choice(self.n_y * self.n_z, size=size, p=self.conditional(domain).reshape(-1))
        return flat % self.n_z, flat // self.n_z


def random_monotone_joint(rng: np.random.Generator, n_z: int = 8, floor: float = 1e-3) -> DiscreteJoint:
    """Binary-label joint whose per-domain conditional means are monotone along the ordinal Z."""
    p_d = rng.uniform(0.2, 0.8)
    table = np.empty((2, 2, n_z))
    for domain, weight in enumerate((p_d, 1.0 - p_d)):
        pz = rng.dirichlet(np.ones(n_z)) + floor
        pz /= pz.sum()
        f = np.sort(rng.uniform(size=n_z))
        if rng.random() < 0.5:
            f = f[::-1]
        table[domain, 0] = weight * pz * (1.0 - f)
        table[domain, 1] = weight * pz * f
    return DiscreteJoint(table / table.sum())


@dataclass
class DiscreteTask:
    joint: DiscreteJoint
    n: int
    m: int
    seed: int = 0


# ----------------------------------------------------------------------
# Lemma check and mutual information
# ----------------------------------------------------------------------
def lemma_a2_check(joint: DiscreteJoint, classH: FiniteHypothesisClass) -> Dict:
    """
    For every h: |eps_S(h) - eps_T(h)| <= |n_S + n_T| + d_HdH(D_S(Z), D_T(Z)) + disagreement,
    all evaluated exactly from the probability table.
    """
    if joint.n_y != 2:
        raise ParameterError(f"the risk-gap inequality is stated for binary labels, got |Y|={joint.n_y}")
    if classH.n_cells != joint.n_z:
        raise DimensionError(f"class covers {classH.n_cells} cells, joint has {joint.n_z}")
    _check_binary(classH)
    lhs = np.array([abs(joint.risk(h, 0) - joint.risk(h, 1)) for h in classH.table])
    distance = dH_delta_H_from_masses(classH.table, joint.p_z(0) - joint.p_z(1))
    noise = abs(joint.noise(0) + joint.noise(1))
    disagreement = joint.disagreement()
    rhs = noise + distance + disagreement
    return {
        "lhs": lhs,
        "rhs": rhs,
        "holds": bool(np.all(lhs <= rhs + LEMMA_TOLERANCE)),
        "noise": noise,
        "distance": distance,
        "disagreement": disagreement,
    }


def mi_decomposition(joint: DiscreteJoint) -> Dict[str, float]:
    """I(D; Y, Z) = I(D; Z) + I(D; Y | Z) in nats, with 0 log 0 = 0."""
    p = joint.table
    p_d = p.sum(axis=(1, 2))
    p_dz = p.sum(axis=1)
    p_yz = p.sum(axis=0)
    p_z = p_yz.sum(axis=0)

    i_dz = float(rel_entr(p_dz, p_d[:, None] * p_z[None, :]).sum())
    i_d_yz = float(rel_entr(p, p_d[:, None, None] * p_yz[None, :, :]).sum())
    safe_z = np.where(p_z > 0.0, p_z, 1.0)
    i_dy_given_z = float(rel_entr(p, p_dz[:, None, :] * p_yz[None, :, :] / safe_z).sum())
    return {"i_dz": i_dz, "i_dy_given_z": i_dy_given_z, "i_d_yz": i_d_yz}


# ----------------------------------------------------------------------
# BoundReport
# ----------------------------------------------------------------------
@dataclass
class BoundReport:
    mode: str
    n: int
    m: int
    emp_risk_t: float
    emp_risk_s: float
    distance_term: float
    disagreement_term: float
    noise_term: float
    concentration_term: float
    delta: float
    distance_kind: str = "HdH"
    proxy_a_distance: float = float("nan")
    weight_t: float = field(init=False)
    weight_s: float = field(init=False)
    bound_total: float = field(init=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got '{self.mode}'")
        self.weight_t = self.m / (self.n + self.m)
        self.weight_s = self.n / (self.n + self.m)
        self.bound_total = self.weight_t * self.emp_risk_t + self.weight_s * (
            self.emp_risk_s + self.distance_term + self.disagreement_term
            + self.noise_term + self.concentration_term
        )

    def to_row(self) -> list:
        return [self.mode if key == "mode" else repr(getattr(self, key)) for key in BOUND_HEADER]

    def describe(self) -> str:
        label = "d_HdH" if self.distance_kind == "HdH" else "d_H~"
        lines = [
            f"Bound report ({self.mode}, n={self.n}, m={self.m}, delta={self.delta:g})",
            f"  weights          : target {self.weight_t:.4f}  source {self.weight_s:.4f}",
            f"  empirical risk   : target {self.emp_risk_t:.4f}  source {self.emp_risk_s:.4f}",
            f"  {label:<17}: {self.distance_term:.4f}",
            f"  disagreement     : {self.disagreement_term:.4f}",
            f"  noise            : {self.noise_term:.4f}",
            f"  concentration    : {self.concentration_term:.4f}"
            + ("" if self.mode == "finite_sample" else " (omitted in population mode)"),
        ]
        if not math.isnan(self.proxy_a_distance):
            lines.append(f"  proxy A-distance : {self.proxy_a_distance:.4f} (learned features, not in total)")
        lines.append(f"  bound total      : {self.bound_total:.4f}")
        return "\n".join(lines)


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}, got '{mode}'")


def bound_report(h, task, classH=None, delta: float = BOUND_DEFAULTS["delta"], mode: str = "finite_sample",
                 seed: int = 0) -> BoundReport:
    """Assemble every bound term for predictor h on a sampled or discrete task."""
    return _report(task, h, classH, delta, mode, seed)


@singledispatch
def _report(task, h, classH, delta, mode, seed) -> BoundReport:
    raise ParameterError(f"no bound report for task type {type(task).__name__}")


@_report.register
def _(task: SemiDATask, h, classH=None, delta=BOUND_DEFAULTS["delta"], mode="finite_sample", seed=0):
    _check_mode(mode)
    spec = task.scenario
    regression = task.task_kind == "regression"
    loss_kind = "l1" if regression else "zero_one"

    if mode == "population":
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), task.seed]))
        size = int(BOUND_DEFAULTS["population_samples"])
        xs, ys = spec.sample(0, size, rng)
        xt, yt = spec.sample(1, size, rng)
        source, target = LabeledSet(xs, ys, "source"), LabeledSet(xt, yt, "target")
        target_features = xt
    else:
        source, target = task.source, task.target_labeled
        target_features = task.target_unlabeled.features

    if classH is None:
        factory = FiniteHypothesisClass.regression_stumps if regression else FiniteHypothesisClass.axis_stumps
        classH = factory(source.features, target_features)
    if regression:
        distance, kind = dH_tilde(classH, source.features, target_features), "H~"
    else:
        distance, kind = dH_delta_H(classH, source.features, target_features), "HdH"

    concentration = 0.0
    if mode == "finite_sample":
        concentration = concentration_term(task.n, task.m, classH.pdim if regression else classH.vc_dim, delta)

    report = BoundReport(
        mode=mode, n=task.n, m=task.m,
        emp_risk_t=empirical_risk(h, target, loss_kind),
        emp_risk_s=empirical_risk(h, source, loss_kind),
        distance_term=distance,
        disagreement_term=disagreement_term(spec, source.features, target_features),
        noise_term=noise_term(spec, source, target),
        concentration_term=concentration,
        delta=delta, distance_kind=kind,
    )
    log.debug(f"{spec.kind} {mode}: total {report.bound_total:.4f}")
    return report


@_report.register
def _(task: DiscreteTask, h, classH=None, delta=BOUND_DEFAULTS["delta"], mode="finite_sample", seed=0):
    _check_mode(mode)
    joint = task.joint
    if classH is None:
        classH = FiniteHypothesisClass.line_stumps(joint.n_z)
    _check_binary(classH)
    h = np.asarray(h(np.arange(joint.n_z)) if callable(h) else h, dtype=np.float64).reshape(-1)
    f_s, f_t = joint.cond_mean(0), joint.cond_mean(1)

    if mode == "population":
        emp_t, emp_s = joint.risk(h, 1), joint.risk(h, 0)
        distance = dH_delta_H_from_masses(classH.table, joint.p_z(0) - joint.p_z(1))
        disagreement = joint.disagreement()
        noise = abs(joint.noise(0) + joint.noise(1))
        concentration = 0.0
    else:
        rng = np.random.default_rng(task.seed)
        zs, ys = joint.sample(0, task.n, rng)
        zt, yt = joint.sample(1, task.m, rng)
        emp_s = float(np.mean(np.abs(ys - h[zs])))
        emp_t = float(np.mean(np.abs(yt - h[zt])))
        distance = dH_delta_H(classH, zs, zt)
        gap = np.abs(f_s - f_t)
        disagreement = float(min(gap[zs].mean(), gap[zt].mean()))
        noise = abs(float(np.mean(np.abs(ys - f_s[zs]))) + float(np.mean(np.abs(yt - f_t[zt]))))
        concentration = concentration_term(task.n, task.m, classH.vc_dim, delta)

    return BoundReport(
        mode=mode, n=task.n, m=task.m, emp_risk_t=emp_t, emp_risk_s=emp_s,
        distance_term=distance, disagreement_term=disagreement, noise_term=noise,
        concentration_term=concentration, delta=delta,
    )


# ----------------------------------------------------------------------
# Proxy A-distance on learned features
# ----------------------------------------------------------------------
def proxy_a_distance(z_s: np.ndarray, z_t: np.ndarray, seed: int = 0,
                     kernel: str = BOUND_DEFAULTS["proxy_kernel"]) -> float:
    """
    Fit an SVM domain classifier on half of the pooled features and report
    2 (1 - 2 err) from its error on the other half.
    """
    z_s = np.atleast_2d(np.asarray(z_s, dtype=np.float64))
    z_t = np.atleast_2d(np.asarray(z_t, dtype=np.float64))
    if z_s.shape[0] < 2 or z_t.shape[0] < 2:
        raise ParameterError("proxy A-distance needs at least two points per domain")
    if z_s.shape[1] != z_t.shape[1]:
        raise DimensionError(f"feature widths differ: {z_s.shape} vs {z_t.shape}")

    x = np.vstack([z_s, z_t])
    y = np.concatenate([np.ones(z_s.shape[0]), np.zeros(z_t.shape[0])])
    x_train, x_test, y_train, y_test = train_test_split(
        x, y, test_size=0.5, random_state=seed % 2**32, stratify=y
    )
    svm = make_pipeline(StandardScaler(), SVC(kernel=kernel))
    svm.fit(x_train, y_train)
    error = 1.0 - svm.score(x_test, y_test)
    log.debug(f"Proxy A-distance: held-out domain error {error:.4f} on {len(y_test)} points")
    return 2.0 * (1.0 - 2.0 * error)
