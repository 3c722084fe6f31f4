#!/usr/bin/env python3
"""
models.py - Encoder g, predictors f_i / f_d, domain classifier C and the cosine head
"""

import json
import logging
import struct
from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple

import numpy as np

from diffcore import Graph, Node, ParameterError
from dicts import (
    ACTIVATIONS,
    CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
    COMPONENTS,
    MODEL_DEFAULTS,
    TASK_KINDS,
)

log = logging.getLogger("MODELS")


class ModelError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


# ----------------------------------------------------------------------
# Specs
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class MLPSpec:
    layer_sizes: Tuple[int, ...]
    activation: str = "relu"
    seed: int = 0
    activate_output: bool = False

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ModelError(f"MLP needs an input and an output width, got {sizes}")
        if any(s < 1 for s in sizes):
            raise ModelError(f"MLP widths must be >= 1, got {sizes}")
        if self.activation not in ACTIVATIONS:
            raise ModelError(f"unknown activation '{self.activation}'")

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]


@dataclass(frozen=True)
class ModelConfig:
    task_kind: str = "classification"
    head_kind: str = "linear"
    x_dim: int = MODEL_DEFAULTS["x_dim"]
    encoder_hidden: Tuple[int, ...] = MODEL_DEFAULTS["encoder_hidden"]
    z_dim: int = MODEL_DEFAULTS["z_dim"]
    head_hidden: int = MODEL_DEFAULTS["head_hidden"]
    activation: str = MODEL_DEFAULTS["activation"]
    n_classes: int = MODEL_DEFAULTS["n_classes"]
    cosine_temperature: float = MODEL_DEFAULTS["cosine_temperature"]

    @property
    def n_out(self) -> int:
        return self.n_classes if self.task_kind == "classification" else 1


def component_seeds(seed: int) -> Dict[str, int]:
    """One 64-bit seed per component, spawned in a fixed order."""
    children = np.random.SeedSequence(int(seed)).spawn(len(COMPONENTS))
    seeds = {}
    for name, child in zip(COMPONENTS, children):
        lo, hi = child.generate_state(2, dtype=np.uint32)
        seeds[name] = int(hi) << 32 | int(lo)
    return seeds


def build_specs(cfg: ModelConfig, seed: int) -> Dict[str, MLPSpec]:
    seeds = component_seeds(seed)
    act = cfg.activation
    n_out = cfg.n_out
    return {
        "g": MLPSpec((cfg.x_dim, *cfg.encoder_hidden, cfg.z_dim), act, seeds["g"], activate_output=True),
        "fi": MLPSpec((cfg.z_dim, cfg.head_hidden, n_out), act, seeds["fi"]),
        "fd": MLPSpec((cfg.z_dim + 1, cfg.head_hidden, n_out), act, seeds["fd"]),
        "c": MLPSpec((cfg.z_dim, cfg.head_hidden, 1), act, seeds["c"]),
        # Cosine head is a single c x dim weight, no hidden layer
        "cos": MLPSpec((cfg.z_dim, n_out), act, seeds["cos"]),
    }


def init_mlp(spec: MLPSpec, prefix: str) -> Dict[str, np.ndarray]:
    rng = np.random.default_rng(spec.seed)
    params = {}
    for i, (fan_in, fan_out) in enumerate(zip(spec.layer_sizes[:-1], spec.layer_sizes[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[f"{prefix}.{i}.W"] = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        params[f"{prefix}.{i}.b"] = np.zeros((1, fan_out))
    return params


# ----------------------------------------------------------------------
# Cosine head
# ----------------------------------------------------------------------
@dataclass
class CosineHead:
    weight: np.ndarray
    temperature: float

    def __post_init__(self):
        if not self.temperature > 0.0:
            raise ModelError(f"cosine temperature must be positive, got {self.temperature}")

    def logits(self, z: np.ndarray) -> np.ndarray:
        graph = Graph()
        return cosine_logits(graph, graph.constant(z), graph.constant(self.weight), self.temperature).value


def cosine_logits(graph: Graph, z: Node, weight: Node, temperature: float) -> Node:
    if z.shape[1] != weight.shape[1]:
        raise ModelError(f"cosine head expects dim {weight.shape[1]}, got features of shape {z.shape}")
    sims = graph.matmul(graph.normalize_rows(z), graph.transpose(graph.normalize_rows(weight)))
    return graph.scale(sims, 1.0 / temperature)


# ----------------------------------------------------------------------
# LIRR model
# ----------------------------------------------------------------------
@dataclass
class LIRRModel:
    specs: Dict[str, MLPSpec]
    params: Dict[str, np.ndarray]
    task_kind: str = "classification"
    head_kind: str = "linear"
    temperature: float = MODEL_DEFAULTS["cosine_temperature"]
    grl_lambda_rep: float = 1.0
    grl_lambda_risk: float = 1.0
    eval_head: str = "invariant"

    @classmethod
    def from_specs(cls, specs: Dict[str, MLPSpec], task_kind: str = "classification",
                   head_kind: str = "linear", temperature: float = MODEL_DEFAULTS["cosine_temperature"]) -> "LIRRModel":
        missing = [name for name in COMPONENTS if name not in specs]
        if missing:
            raise ModelError(f"missing component specs: {missing}")
        if task_kind not in TASK_KINDS:
            raise ModelError(f"unknown task kind '{task_kind}'")
        if head_kind not in ("linear", "cosine"):
            raise ModelError(f"unknown head kind '{head_kind}'")
        if head_kind == "cosine" and task_kind != "classification":
            raise ModelError("cosine head only applies to classification")
        if not temperature > 0.0:
            raise ModelError(f"cosine temperature must be positive, got {temperature}")

        z_dim = specs["g"].n_out
        for name in ("fi", "c", "cos"):
            if specs[name].n_in != z_dim:
                raise ModelError(f"{name} input width {specs[name].n_in} != encoder output width {z_dim}")
        if specs["fd"].n_in != z_dim + 1:
            raise ModelError(f"fd input width {specs['fd'].n_in} != encoder output width + 1 ({z_dim + 1})")
        if specs["fi"].n_out != specs["fd"].n_out:
            raise ModelError(f"fi and fd output widths differ: {specs['fi'].n_out} vs {specs['fd'].n_out}")
        if specs["c"].n_out != 1:
            raise ModelError(f"domain classifier must output 1 unit, got {specs['c'].n_out}")
        if task_kind == "regression" and specs["fi"].n_out != 1:
            raise ModelError("regression predictors must output 1 unit")
        if len(specs["cos"].layer_sizes) != 2:
            raise ModelError("cosine head is a single weight matrix")

        params: Dict[str, np.ndarray] = {}
        for name in COMPONENTS:
            params.update(init_mlp(specs[name], name))
        # cosine weight is stored c x dim
        params["cos.W"] = params.pop("cos.0.W").T.copy()
        params.pop("cos.0.b")
        return cls(dict(specs), params, task_kind, head_kind, float(temperature))

    @property
    def z_dim(self) -> int:
        return self.specs["g"].n_out

    @property
    def n_out(self) -> int:
        return self.specs["fi"].n_out

    def clone(self) -> "LIRRModel":
        return replace(self, specs=dict(self.specs), params={k: v.copy() for k, v in self.params.items()})

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.params.values())

    def cosine_head(self) -> CosineHead:
        return CosineHead(self.params["cos.W"], self.temperature)

    def bind(self, graph: Graph, nodes: Optional[Dict[str, Node]] = None) -> "ModelBinding":
        return ModelBinding(self, graph, nodes)

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Invariant-predictor output: logits (classification) or values (regression)."""
        graph = Graph()
        binding = self.bind(graph)
        return binding.predict_invariant(binding.encode(x)).value

    def predict_domain(self, x: np.ndarray, domain: int) -> np.ndarray:
        """Domain-dependent predictor output with the domain channel set to `domain`."""
        graph = Graph()
        binding = self.bind(graph)
        return binding.forward_fd(binding.encode(x), domain).value

    def encode(self, x: np.ndarray) -> np.ndarray:
        return self.bind(Graph()).encode(x).value


def init_model(cfg: ModelConfig, seed: int) -> LIRRModel:
    return LIRRModel.from_specs(build_specs(cfg, seed), cfg.task_kind, cfg.head_kind, cfg.cosine_temperature)


# ----------------------------------------------------------------------
# Binding: the model's parameters recorded as leaves on one graph
# ----------------------------------------------------------------------
class ModelBinding:
    def __init__(self, model: LIRRModel, graph: Graph, nodes: Optional[Dict[str, Node]] = None) -> None:
        self.model = model
        self.graph = graph
        # Caller-supplied leaves override the model's own values (finite-difference checks)
        supplied = nodes or {}
        self.nodes: Dict[str, Node] = {
            name: supplied[name] if name in supplied else graph.param(value, name)
            for name, value in model.params.items()
        }

    def _activate(self, h: Node, activation: str) -> Node:
        return self.graph.relu(h) if activation == "relu" else self.graph.tanh(h)

    def mlp(self, name: str, x: Node) -> Node:
        spec = self.model.specs[name]
        if x.shape[1] != spec.n_in:
            raise ModelError(f"{name} expects width {spec.n_in}, got input of shape {x.shape}")
        g = self.graph
        h = x
        n_layers = len(spec.layer_sizes) - 1
        for i in range(n_layers):
            h = g.add(g.matmul(h, self.nodes[f"{name}.{i}.W"]), self.nodes[f"{name}.{i}.b"])
            if i < n_layers - 1 or spec.activate_output:
                h = self._activate(h, spec.activation)
        return h

    def encode(self, x) -> Node:
        if not isinstance(x, Node):
            x = self.graph.constant(x)
        return self.mlp("g", x)

    def predict_invariant(self, z: Node) -> Node:
        if self.model.head_kind == "cosine":
            return self.cosine_logits(z)
        return self.mlp("fi", z)

    def forward_fd(self, z: Node, domain: int) -> Node:
        if domain not in (0, 1) or isinstance(domain, bool):
            raise ParameterError(f"domain flag must be 0 or 1, got {domain!r}")
        channel = self.graph.constant(np.full((z.shape[0], 1), float(domain)))
        return self.mlp("fd", self.graph.concat_cols(z, channel))

    def domain_logits(self, z: Node, lam: float) -> Node:
        return self.mlp("c", self.graph.grad_reverse(z, lam))

    def forward_domain_classifier(self, z: Node, lam: float) -> Node:
        """Probability of the source domain, computed behind a gradient reversal."""
        return self.graph.sigmoid(self.domain_logits(z, lam))

    def cosine_logits(self, z: Node) -> Node:
        return cosine_logits(self.graph, z, self.nodes["cos.W"], self.model.temperature)

    def gradients(self, grads) -> Dict[str, np.ndarray]:
        return {name: grads[node.id].data for name, node in self.nodes.items()}


# ----------------------------------------------------------------------
# Checkpoints
# ----------------------------------------------------------------------
def save_checkpoint(model: LIRRModel, path: str, meta: Optional[dict] = None) -> None:
    header = {
        "task_kind": model.task_kind,
        "head_kind": model.head_kind,
        "temperature": model.temperature,
        "grl_lambda_rep": model.grl_lambda_rep,
        "grl_lambda_risk": model.grl_lambda_risk,
        "eval_head": model.eval_head,
        "specs": {
            name: {
                "layer_sizes": list(spec.layer_sizes),
                "activation": spec.activation,
                "seed": spec.seed,
                "activate_output": spec.activate_output,
            }
            for name, spec in model.specs.items()
        },
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<HI", CHECKPOINT_VERSION, len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(model.params)))
        for name, value in model.params.items():
            raw = name.encode("utf-8")
            rows, cols = value.shape
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(struct.pack("<II", rows, cols))
            f.write(np.ascontiguousarray(value, dtype="<f8").tobytes())
    log.debug(f"Saved checkpoint {path} ({len(model.params)} tensors)")


def _read(f, n: int, path: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise CheckpointError(f"{path}: truncated checkpoint")
    return data


def load_checkpoint(path: str) -> Tuple[LIRRModel, dict]:
    with open(path, "rb") as f:
        if _read(f, len(CHECKPOINT_MAGIC), path) != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: not a model checkpoint")
        version, blob_len = struct.unpack("<HI", _read(f, 6, path))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        try:
            header = json.loads(_read(f, blob_len, path).decode("utf-8"))
        except ValueError as e:
            raise CheckpointError(f"{path}: corrupt header: {e}") from e
        (count,) = struct.unpack("<I", _read(f, 4, path))
        params: Dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read(f, 2, path))
            name = _read(f, name_len, path).decode("utf-8")
            rows, cols = struct.unpack("<II", _read(f, 8, path))
            values = np.frombuffer(_read(f, 8 * rows * cols, path), dtype="<f8")
            params[name] = values.astype(np.float64).reshape(rows, cols)
        if f.read(1):
            raise CheckpointError(f"{path}: trailing bytes after last tensor")

    specs = {
        name: MLPSpec(tuple(s["layer_sizes"]), s["activation"], int(s["seed"]), bool(s["activate_output"]))
        for name, s in header["specs"].items()
    }
    model = LIRRModel(
        specs=specs,
        params=params,
        task_kind=header["task_kind"],
        head_kind=header["head_kind"],
        temperature=float(header["temperature"]),
        grl_lambda_rep=float(header["grl_lambda_rep"]),
        grl_lambda_risk=float(header["grl_lambda_risk"]),
        eval_head=header.get("eval_head", "invariant"),
    )
    return model, header.get("meta", {})
