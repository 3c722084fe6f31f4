#!/usr/bin/env python3
"""
objectives.py - Training losses: representation, invariant risk, LIRR total and baselines

Every loss returns a scalar graph node whose single backward pass realizes the
min-max: gradient reversal nodes sit between the encoder output and the
adversarial heads (f_d for the risk term, C for the representation term).
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from diffcore import ContractError, Graph, Node
from dicts import EVAL_HEADS, IRM_DEFAULTS, LIRR_DEFAULTS, TASK_KINDS
from models import ModelBinding


class ConfigError(ValueError):
    pass


# ----------------------------------------------------------------------
# Types
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class LIRRConfig:
    lambda_risk: float = LIRR_DEFAULTS["lambda_risk"]
    lambda_rep: float = LIRR_DEFAULTS["lambda_rep"]
    task_kind: str = "classification"
    rep_includes_labeled_target: bool = LIRR_DEFAULTS["rep_includes_labeled_target"]
    eval_head: str = LIRR_DEFAULTS["eval_head"]
    irm_penalty_weight: float = IRM_DEFAULTS["penalty_weight"]
    irm_warmup_fraction: float = IRM_DEFAULTS["warmup_fraction"]

    def __post_init__(self):
        for name in ("lambda_risk", "lambda_rep", "irm_penalty_weight"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and value >= 0.0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be a finite value >= 0, got {value!r}")
        if self.task_kind not in TASK_KINDS:
            raise ConfigError(f"task_kind must be one of {TASK_KINDS}, got '{self.task_kind}'")
        if self.eval_head not in EVAL_HEADS:
            raise ConfigError(f"eval_head must be one of {EVAL_HEADS}, got '{self.eval_head}'")
        if not 0.0 <= self.irm_warmup_fraction <= 1.0:
            raise ConfigError(f"irm_warmup_fraction must lie in [0, 1], got {self.irm_warmup_fraction}")


@dataclass
class LabeledBatch:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        self.y = np.asarray(self.y).reshape(-1)
        if self.x.shape[0] != self.y.shape[0]:
            raise ContractError(f"batch has {self.x.shape[0]} rows but {self.y.shape[0]} labels")

    def __len__(self) -> int:
        return self.x.shape[0]

    @classmethod
    def empty(cls, x_dim: int = 2) -> "LabeledBatch":
        return cls(np.zeros((0, x_dim)), np.zeros(0))


@dataclass
class Batches:
    source: LabeledBatch
    target_labeled: LabeledBatch
    target_unlabeled: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    @property
    def sizes(self) -> Tuple[int, int, int]:
        return len(self.source), len(self.target_labeled), int(self.target_unlabeled.shape[0])


@dataclass
class LossReport:
    l_i: float
    l_d: float = math.nan
    l_rep: float = math.nan
    l_risk: float = math.nan
    l_total: float = math.nan
    n_s: int = 0
    n_t_lab: int = 0
    n_t_unlab: int = 0
    penalty: float = math.nan

    def row(self) -> List[float]:
        return [self.l_i, self.l_d, self.l_rep, self.l_risk, self.l_total]


def risk_value(l_i: float, l_d: float, lambda_risk: float) -> float:
    return l_i + lambda_risk * (l_i - l_d)


# ----------------------------------------------------------------------
# Building blocks over encoded features
# ----------------------------------------------------------------------
class _Encoded:
    """Each sub-batch encoded once, in source / labeled target / unlabeled order."""

    def __init__(self, b: ModelBinding, batches: Batches) -> None:
        self.batches = batches
        self.z_s = b.encode(batches.source.x) if len(batches.source) else None
        self.z_tl = b.encode(batches.target_labeled.x) if len(batches.target_labeled) else None
        self.z_tu = b.encode(batches.target_unlabeled) if batches.target_unlabeled.shape[0] else None

    def labeled(self) -> List[Tuple[Node, np.ndarray, int]]:
        out = []
        if self.z_s is not None:
            out.append((self.z_s, self.batches.source.y, 0))
        if self.z_tl is not None:
            out.append((self.z_tl, self.batches.target_labeled.y, 1))
        if not out:
            raise ContractError("no labeled examples in either domain")
        return out


def _concat_rows(graph: Graph, nodes: List[Node]) -> Node:
    out = nodes[0]
    for node in nodes[1:]:
        out = graph.concat_rows(out, node)
    return out


def task_loss(graph: Graph, pred: Node, y: np.ndarray, task_kind: str) -> Node:
    if task_kind == "classification":
        return graph.softmax_cross_entropy(pred, y.astype(np.int64))
    return graph.l1_loss(pred, graph.constant(np.asarray(y, dtype=np.float64).reshape(-1, 1)))


def _pooled_loss(graph: Graph, preds: List[Node], labels: List[np.ndarray], task_kind: str) -> Node:
    # Equal weight per example over the concatenated labeled batch
    return task_loss(graph, _concat_rows(graph, preds), np.concatenate(labels), task_kind)


def _invariant(b: ModelBinding, enc: _Encoded, task_kind: str) -> Tuple[Node, List[Node]]:
    parts = enc.labeled()
    preds = [b.predict_invariant(z) for z, _, _ in parts]
    return _pooled_loss(b.graph, preds, [y for _, y, _ in parts], task_kind), preds


def _dependent(b: ModelBinding, enc: _Encoded, task_kind: str, lam: Optional[float]) -> Node:
    parts = enc.labeled()
    preds = []
    for z, _, domain in parts:
        if lam is not None:
            z = b.graph.grad_reverse(z, lam)
        preds.append(b.forward_fd(z, domain))
    return _pooled_loss(b.graph, preds, [y for _, y, _ in parts], task_kind)


def _representation(b: ModelBinding, z_source: List[Node], z_target: List[Node], lam: float) -> Node:
    if not z_source or not z_target:
        raise ContractError("representation loss needs features from both domains")
    g = b.graph
    logits_s = b.domain_logits(_concat_rows(g, z_source), lam)
    logits_t = b.domain_logits(_concat_rows(g, z_target), lam)
    # C outputs the probability of the source domain
    src = g.sigmoid_cross_entropy(logits_s, np.ones(logits_s.shape[0]))
    tgt = g.sigmoid_cross_entropy(logits_t, np.zeros(logits_t.shape[0]))
    return g.add(src, tgt)


def _rep_sides(enc: _Encoded, include_labeled_target: bool) -> Tuple[List[Node], List[Node]]:
    source = [enc.z_s] if enc.z_s is not None else []
    target = []
    if include_labeled_target and enc.z_tl is not None:
        target.append(enc.z_tl)
    if enc.z_tu is not None:
        target.append(enc.z_tu)
    return source, target


def _report(batches: Batches, **values) -> LossReport:
    n_s, n_tl, n_tu = batches.sizes
    return LossReport(n_s=n_s, n_t_lab=n_tl, n_t_unlab=n_tu, **values)


# ----------------------------------------------------------------------
# Public losses
# ----------------------------------------------------------------------
def loss_rep(b: ModelBinding, x_source: np.ndarray, x_target: np.ndarray, lam: float = 1.0) -> Node:
    """Domain-classifier cross-entropy; C descends on it, g ascends through the reversal."""
    if len(x_source) == 0 or len(x_target) == 0:
        raise ContractError("representation loss needs nonempty source and target batches")
    return _representation(b, [b.encode(x_source)], [b.encode(x_target)], lam)


def loss_invariant(b: ModelBinding, source: LabeledBatch, target: LabeledBatch, task_kind: str = "classification") -> Node:
    enc = _Encoded(b, Batches(source, target, np.zeros((0, source.x.shape[1]))))
    return _invariant(b, enc, task_kind)[0]


def loss_dependent(b: ModelBinding, source: LabeledBatch, target: LabeledBatch, task_kind: str = "classification") -> Node:
    enc = _Encoded(b, Batches(source, target, np.zeros((0, source.x.shape[1]))))
    return _dependent(b, enc, task_kind, lam=None)


def predictor_share(lambda_risk: float) -> float:
    """Weight on L_i for f_i and on L_d for f_d in the risk surrogate."""
    return 1.0 + lambda_risk


def _risk_parts(b: ModelBinding, enc: _Encoded, cfg: LIRRConfig) -> Tuple[Node, float, float]:
    g = b.graph
    share = predictor_share(cfg.lambda_risk)
    l_i, _ = _invariant(b, enc, cfg.task_kind)
    l_d = _dependent(b, enc, cfg.task_kind, lam=cfg.lambda_risk / share)
    # f_i and f_d both descend at weight (1 + lambda); the reversal hands g exactly -lambda dL_d
    surrogate = g.add(g.scale(l_i, share), g.scale(l_d, share))
    return surrogate, l_i.item(), l_d.item()


def loss_risk(b: ModelBinding, batches: Batches, cfg: LIRRConfig) -> Tuple[Node, LossReport]:
    enc = _Encoded(b, batches)
    surrogate, l_i, l_d = _risk_parts(b, enc, cfg)
    l_risk = risk_value(l_i, l_d, cfg.lambda_risk)
    return surrogate, _report(batches, l_i=l_i, l_d=l_d, l_risk=l_risk, l_total=l_risk)


def loss_lirr_total(b: ModelBinding, batches: Batches, cfg: LIRRConfig) -> Tuple[Node, LossReport]:
    g = b.graph
    enc = _Encoded(b, batches)
    surrogate, l_i, l_d = _risk_parts(b, enc, cfg)
    source, target = _rep_sides(enc, cfg.rep_includes_labeled_target)
    rep = _representation(b, source, target, cfg.lambda_rep)
    l_rep = rep.item()
    l_risk = risk_value(l_i, l_d, cfg.lambda_risk)
    report = _report(batches, l_i=l_i, l_d=l_d, l_rep=l_rep, l_risk=l_risk, l_total=l_risk + cfg.lambda_rep * l_rep)
    return g.add(surrogate, rep), report


def loss_dann(b: ModelBinding, batches: Batches, cfg: LIRRConfig) -> Tuple[Node, LossReport]:
    g = b.graph
    enc = _Encoded(b, batches)
    l_i, _ = _invariant(b, enc, cfg.task_kind)
    source, target = _rep_sides(enc, cfg.rep_includes_labeled_target)
    rep = _representation(b, source, target, cfg.lambda_rep)
    report = _report(
        batches, l_i=l_i.item(), l_rep=rep.item(), l_risk=l_i.item(),
        l_total=l_i.item() + cfg.lambda_rep * rep.item(),
    )
    return g.add(l_i, rep), report


def loss_s_plus_t(b: ModelBinding, batches: Batches, task_kind: str = "classification") -> Tuple[Node, LossReport]:
    enc = _Encoded(b, Batches(batches.source, batches.target_labeled, np.zeros((0, batches.source.x.shape[1]))))
    l_i, _ = _invariant(b, enc, task_kind)
    value = l_i.item()
    return l_i, _report(batches, l_i=value, l_risk=value, l_total=value)


def irm_penalty(b: ModelBinding, pred: Node, y: np.ndarray, task_kind: str) -> Node:
    """Squared derivative of the environment risk w.r.t. a dummy output scale at 1."""
    g = b.graph
    if task_kind == "classification":
        grad = g.ce_scale_grad(pred, y.astype(np.int64))
    else:
        grad = g.l1_scale_grad(pred, g.constant(np.asarray(y, dtype=np.float64).reshape(-1, 1)))
    return g.mul(grad, grad)


def irm_penalty_weight(iteration: int, total_iters: int, cfg: LIRRConfig) -> float:
    if iteration >= int(math.floor(cfg.irm_warmup_fraction * total_iters)):
        return cfg.irm_penalty_weight
    return 1.0


def loss_irm_baseline(b: ModelBinding, batches: Batches, penalty_weight: float,
                      task_kind: str = "classification") -> Tuple[Node, LossReport]:
    """L_i + w * sum over labeled environments of the dummy-scale penalty; empty environments are skipped."""
    g = b.graph
    enc = _Encoded(b, Batches(batches.source, batches.target_labeled, np.zeros((0, batches.source.x.shape[1]))))
    l_i, preds = _invariant(b, enc, task_kind)
    penalties = [irm_penalty(b, pred, y, task_kind) for pred, (_, y, _) in zip(preds, enc.labeled())]
    penalty = penalties[0] if len(penalties) == 1 else g.add(penalties[0], penalties[1])
    total = g.add(l_i, g.scale(penalty, penalty_weight))
    report = _report(
        batches, l_i=l_i.item(), l_risk=l_i.item(), l_total=total.item(), penalty=penalty.item(),
    )
    return total, report
