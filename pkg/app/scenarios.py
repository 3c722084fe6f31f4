#!/usr/bin/env python3
"""
scenarios.py - Synthetic shift scenarios with analytic optimal predictors and noise levels
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Tuple

import numpy as np
from scipy import integrate
from scipy.special import expit, logit
from scipy.stats import norm

from diffcore import ParameterError
from dicts import MC_SAMPLES, SCENARIOS

log = logging.getLogger("SCENARIO")

MOON_ARC_NODES = 600


def _check_domain(domain: int) -> None:
    if domain not in (0, 1) or isinstance(domain, bool):
        raise ParameterError(f"domain must be 0 (source) or 1 (target), got {domain!r}")


def _gaussian_expectation(fn, mean: float, std: float = 1.0, points=None) -> float:
    """E[fn(U)] for U ~ N(mean, std^2) by adaptive quadrature."""
    lo, hi = mean - 12.0 * std, mean + 12.0 * std
    if points is not None:
        points = [p for p in points if lo < p < hi] or None
    value, _ = integrate.quad(lambda u: fn(u) * norm.pdf(u, mean, std), lo, hi, points=points, limit=400)
    return float(value)


def _bernoulli_noise(p):
    # E|Y - p| for Y ~ Bernoulli(p)
    return 2.0 * p * (1.0 - p)


# ----------------------------------------------------------------------
# Scenario kinds
# ----------------------------------------------------------------------
class _Scenario:
    task_kind = "classification"

    def __init__(self, params: Dict) -> None:
        self.p = params

    def sample(self, domain: int, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def conditional_mean(self, domain: int, x: np.ndarray) -> np.ndarray:
        """P(Y=1 | x) for classification, the conditional median for regression."""
        raise NotImplementedError

    def noise(self, domain: int) -> float:
        raise NotImplementedError

    def _labels(self, p: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return (rng.random(p.shape[0]) < p).astype(np.int64)


class _CovariateShift(_Scenario):
    """Shared posterior along a direction; the target marginal moves orthogonally to it."""

    def _u(self, x):
        return x @ np.asarray(self.p["direction"])

    def _offset(self, domain):
        return np.asarray(self.p["target_offset"]) * domain

    def sample(self, domain, n, rng):
        x = rng.normal(0.0, self.p["spread"], size=(n, 2)) + self._offset(domain)
        return x, self._labels(self.conditional_mean(domain, x), rng)

    def conditional_mean(self, domain, x):
        return expit(self.p["sharpness"] * self._u(x))

    def noise(self, domain):
        mean = float(self._offset(domain) @ np.asarray(self.p["direction"]))
        kappa = self.p["sharpness"]
        return _gaussian_expectation(lambda u: _bernoulli_noise(expit(kappa * u)), mean, self.p["spread"], points=[0.0])


class _LabelShift(_Scenario):
    """Identical class-conditionals N(mu_y, I); only the class prior moves."""

    def _prior(self, domain):
        return self.p["target_prior_1"] if domain else self.p["source_prior_1"]

    def sample(self, domain, n, rng):
        y = (rng.random(n) < self._prior(domain)).astype(np.int64)
        means = np.where(y[:, None] == 1, np.asarray(self.p["mean_1"]), np.asarray(self.p["mean_0"]))
        return means + rng.normal(size=(n, 2)), y

    def conditional_mean(self, domain, x):
        mu0, mu1 = np.asarray(self.p["mean_0"]), np.asarray(self.p["mean_1"])
        score = logit(self._prior(domain)) + x @ (mu1 - mu0) - 0.5 * (mu1 @ mu1 - mu0 @ mu0)
        return expit(score)

    def noise(self, domain):
        mu0, mu1 = np.asarray(self.p["mean_0"]), np.asarray(self.p["mean_1"])
        diff = mu1 - mu0
        scale = float(np.linalg.norm(diff))
        prior = self._prior(domain)
        bias = logit(prior) - 0.5 * float(mu1 @ mu1 - mu0 @ mu0)

        # posterior depends on x only through s = diff . x, normal per class
        def per_class(mu):
            return _gaussian_expectation(
                lambda s: _bernoulli_noise(expit(bias + s)), float(diff @ mu), scale
            )

        return prior * per_class(mu1) + (1.0 - prior) * per_class(mu0)


class _ConditionalShift(_Scenario):
    """
    Target posterior (1 - delta) sigmoid(kappa (x1 - shift)) + delta against the
    source's (1 - delta) sigmoid(kappa x1); the target marginal also moves by target_offset.
    """

    def _posterior(self, domain, u):
        delta = self.p["posterior_offset"]
        shift = self.p["boundary_shift"] * domain
        return (1.0 - delta) * expit(self.p["sharpness"] * (u - shift)) + delta * domain

    def sample(self, domain, n, rng):
        x = rng.normal(size=(n, 2)) + np.asarray(self.p["target_offset"]) * domain
        return x, self._labels(self.conditional_mean(domain, x), rng)

    def conditional_mean(self, domain, x):
        return self._posterior(domain, x[:, 0])

    def noise(self, domain):
        mean = float(self.p["target_offset"][0]) * domain
        return _gaussian_expectation(
            lambda u: _bernoulli_noise(self._posterior(domain, u)), mean,
            points=[self.p["boundary_shift"] * domain],
        )


class _TwoMoonsRotation(_Scenario):
    """Two interleaved half circles with Gaussian jitter; the target is the source rotated about the origin."""

    CENTER = np.array([0.5, 0.25])

    def _rotation(self, domain):
        angle = math.radians(self.p["angle_deg"]) * domain
        c, s = math.cos(angle), math.sin(angle)
        return np.array([[c, -s], [s, c]])

    @staticmethod
    def _arc(label, theta):
        if label == 0:
            pts = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        else:
            pts = np.stack([1.0 - np.cos(theta), 0.5 - np.sin(theta)], axis=-1)
        return pts - _TwoMoonsRotation.CENTER

    def sample(self, domain, n, rng):
        y = rng.integers(0, 2, size=n)
        theta = rng.uniform(0.0, math.pi, size=n)
        arcs = np.where(y[:, None] == 1, self._arc(1, theta), self._arc(0, theta))
        x = arcs + rng.normal(0.0, self.p["jitter"], size=(n, 2))
        return x @ self._rotation(domain).T, y.astype(np.int64)

    def conditional_mean(self, domain, x):
        # undo the rotation, then compare the two arc densities (midpoint rule over the angle)
        local = np.asarray(x) @ self._rotation(domain)
        theta = (np.arange(MOON_ARC_NODES) + 0.5) * math.pi / MOON_ARC_NODES
        sigma2 = self.p["jitter"] ** 2
        out = np.empty(local.shape[0])
        for start in range(0, local.shape[0], 2000):
            chunk = local[start:start + 2000]
            dens = []
            for label in (0, 1):
                arc = self._arc(label, theta)
                d2 = ((chunk[:, None, :] - arc[None, :, :]) ** 2).sum(axis=-1)
                dens.append(np.exp(-0.5 * d2 / sigma2).mean(axis=1))
            total = dens[0] + dens[1]
            out[start:start + 2000] = np.where(total > 0.0, dens[1] / np.where(total > 0.0, total, 1.0), 0.5)
        return out

    def noise(self, domain):
        # rotation invariant; seeded Monte Carlo over the source law
        rng = np.random.default_rng(np.random.SeedSequence([0x6D6F6F6E, MC_SAMPLES]))
        x, _ = self.sample(0, MC_SAMPLES // 2, rng)
        return float(_bernoulli_noise(self.conditional_mean(0, x)).mean())


class _RegressionSineShift(_Scenario):
    """y = sin(x1) + offset * domain + Gaussian noise; x2 is a shifted nuisance coordinate."""

    task_kind = "regression"

    def sample(self, domain, n, rng):
        lo, hi = self.p["target_range"] if domain else self.p["source_range"]
        x1 = rng.uniform(lo, hi, size=n)
        x2 = rng.normal(size=n) + self.p["nuisance_shift"] * domain
        x = np.stack([x1, x2], axis=1)
        y = self.conditional_mean(domain, x) + rng.normal(0.0, self.p["noise_std"], size=n)
        return x, y

    def conditional_mean(self, domain, x):
        return np.sin(np.asarray(x)[:, 0]) + self.p["offset"] * domain

    def noise(self, domain):
        # E|N(0, s^2)| = s * sqrt(2 / pi)
        return self.p["noise_std"] * math.sqrt(2.0 / math.pi)


SCENARIO_TYPES = {
    "covariate_shift": _CovariateShift,
    "label_shift": _LabelShift,
    "conditional_shift": _ConditionalShift,
    "two_moons_rotation": _TwoMoonsRotation,
    "regression_sine_shift": _RegressionSineShift,
}


# ----------------------------------------------------------------------
# ScenarioSpec
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class ScenarioSpec:
    kind: str
    params: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SCENARIO_TYPES:
            raise ParameterError(f"unsupported scenario kind '{self.kind}' (known: {sorted(SCENARIO_TYPES)})")
        merged = {k: v for k, v in SCENARIOS[self.kind].items() if k != "task_kind"}
        unknown = set(self.params) - set(merged)
        if unknown:
            raise ParameterError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        merged.update(self.params)
        object.__setattr__(self, "params", merged)

    @cached_property
    def _impl(self) -> _Scenario:
        return SCENARIO_TYPES[self.kind](self.params)

    @property
    def task_kind(self) -> str:
        return self._impl.task_kind

    def sample(self, domain: int, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        _check_domain(domain)
        return self._impl.sample(domain, int(n), rng)

    def conditional_mean(self, domain: int, x: np.ndarray) -> np.ndarray:
        _check_domain(domain)
        return self._impl.conditional_mean(domain, np.atleast_2d(np.asarray(x, dtype=np.float64)))

    @cached_property
    def n_S(self) -> float:
        return self._impl.noise(0)

    @cached_property
    def n_T(self) -> float:
        return self._impl.noise(1)


def make_scenario(kind: str, **overrides) -> ScenarioSpec:
    return ScenarioSpec(kind, dict(overrides))


def bayes_predict(spec: ScenarioSpec, domain: int, x: np.ndarray) -> np.ndarray:
    """Label distribution (n x 2) for classification; conditional median (n,) for regression."""
    f = spec.conditional_mean(domain, x)
    if spec.task_kind == "classification":
        return np.stack([1.0 - f, f], axis=1)
    return f
