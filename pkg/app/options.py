#!/usr/bin/env python3
"""
options.py - Experiment configuration files, overrides and typed config objects
"""

import configparser
import logging
import os
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Tuple

from data import check_sizes, parse_param
from diffcore import ParameterError
from dicts import CONFIG_DEFAULTS, LAMBDA_GRID, METHODS
from models import ModelConfig
from objectives import ConfigError, LIRRConfig
from scenarios import ScenarioSpec
from trainer import OptimConfig

log = logging.getLogger("OPTIONS")

__all__ = ["ConfigError", "ConfigManager", "ExperimentConfig"]

BOOLEANS = {"true": True, "false": False}


# ----------------------------------------------------------------------
# Value parsing
# ----------------------------------------------------------------------
def _split(text: str):
    return [part.strip() for part in text.split(",") if part.strip()]


def parse_value(kind: str, text: str, where: str):
    text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "str":
            return text
        if kind == "bool":
            return BOOLEANS[text.lower()]
        if kind == "ints":
            return tuple(int(p) for p in _split(text))
        if kind == "floats":
            return tuple(float(p) for p in _split(text))
        if kind == "strs":
            return tuple(_split(text))
    except (KeyError, ValueError):
        raise ConfigError(f"{where}: cannot read '{text}' as {kind}") from None
    raise ConfigError(f"{where}: unknown value kind '{kind}'")


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ", ".join(format_value(v) for v in value)
    return str(value)


# ----------------------------------------------------------------------
# ExperimentConfig
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    scenario: ScenarioSpec
    methods: Tuple[str, ...]
    seeds: int
    root_seed: int
    m_values: Tuple[int, ...]
    n: int
    k: int
    test_size: int
    enforce_label_budget: bool
    lambda_pairs: Tuple[Tuple[float, float], ...]
    output_dir: str
    jobs: int

    @property
    def seed_indices(self) -> range:
        return range(self.seeds)


# ----------------------------------------------------------------------
# ConfigManager
# ----------------------------------------------------------------------
class ConfigManager:
    """Defaults from CONFIG_DEFAULTS, then the config file, then overrides."""

    def __init__(self, config_path: Optional[str] = None, overrides: Iterable[str] = ()) -> None:
        self.values: Dict[str, Dict[str, object]] = {
            section: {key: default for key, (_, default) in keys.items()}
            for section, keys in CONFIG_DEFAULTS.items()
        }
        # scenario parameters depend on the kind, kept as text until the ScenarioSpec is built
        self.scenario_params: Dict[str, str] = {}
        self.config_path = config_path
        if config_path:
            self._load(config_path)
        for item in overrides:
            self.apply_override(item)

    # ----------------------------
    # Load / Write
    # ----------------------------
    def _load(self, path: str) -> None:
        parser = configparser.ConfigParser()
        try:
            with open(path, "r", encoding="utf-8") as f:
                parser.read_file(f)
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        except configparser.Error as e:
            raise ConfigError(f"{path}: {e}") from e
        for section in parser.sections():
            for key, text in parser[section].items():
                self.set(section, key, text)
        log.info(f"Loaded config {path}")

    def write(self, path: str) -> None:
        parser = configparser.ConfigParser()
        for section, keys in self.values.items():
            parser[section] = {key: format_value(value) for key, value in keys.items()}
        parser["scenario"].update(self.scenario_params)
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            parser.write(f)

    # ----------------------------
    # Access
    # ----------------------------
    def set(self, section: str, key: str, text: str) -> None:
        if section not in CONFIG_DEFAULTS:
            raise ConfigError(f"unknown config section [{section}]")
        if key not in CONFIG_DEFAULTS[section]:
            if section == "scenario":
                self.scenario_params[key] = text.strip()
                return
            raise ConfigError(f"unknown key '{key}' in [{section}]")
        kind, _ = CONFIG_DEFAULTS[section][key]
        self.values[section][key] = parse_value(kind, text, f"{section}.{key}")

    def apply_override(self, item: str) -> None:
        """section.key=value"""
        target, sep, text = item.partition("=")
        section, dot, key = target.strip().partition(".")
        if not sep or not dot or not key:
            raise ConfigError(f"override must look like section.key=value, got '{item}'")
        self.set(section, key.strip(), text)

    def get(self, section: str, key: str):
        try:
            return self.values[section][key]
        except KeyError:
            raise ConfigError(f"unknown setting {section}.{key}") from None

    # ----------------------------
    # Typed configs
    # ----------------------------
    def scenario(self) -> ScenarioSpec:
        try:
            params = {key: parse_param(text) for key, text in self.scenario_params.items()}
            return ScenarioSpec(self.get("scenario", "kind"), params)
        except (ParameterError, ValueError) as e:
            raise ConfigError(f"invalid scenario settings: {e}") from e

    def m_values(self) -> Tuple[int, ...]:
        ratios = self.get("data", "m_ratios")
        if ratios:
            k = self.get("data", "k")
            return tuple(max(1, int(round(r * k))) for r in ratios)
        return tuple(self.get("data", "m"))

    def lambda_pairs(self) -> Tuple[Tuple[float, float], ...]:
        if self.get("experiment", "lambda_grid"):
            return tuple((r, p) for r in LAMBDA_GRID for p in LAMBDA_GRID)
        return ((self.get("lirr", "lambda_risk"), self.get("lirr", "lambda_rep")),)

    def experiment(self) -> ExperimentConfig:
        methods = tuple(self.get("experiment", "methods"))
        unknown = [m for m in methods if m not in METHODS]
        if not methods or unknown:
            raise ConfigError(f"methods must be a nonempty subset of {sorted(METHODS)}, got {list(methods)}")
        seeds = self.get("experiment", "seeds")
        if seeds < 1:
            raise ConfigError(f"need at least one seed, got {seeds}")
        jobs = self.get("experiment", "jobs")
        if jobs < 0:
            raise ConfigError(f"jobs must be >= 0, got {jobs}")

        n, k = self.get("data", "n"), self.get("data", "k")
        m_values = self.m_values()
        if not m_values:
            raise ConfigError("no labeled-target sizes given (data.m or data.m_ratios)")
        enforce = self.get("data", "enforce_label_budget")
        try:
            for m in m_values:
                check_sizes(n, m, k, enforce)
        except ParameterError as e:
            raise ConfigError(str(e)) from e
        test_size = self.get("data", "test_size")
        if test_size < 1:
            raise ConfigError(f"test_size must be >= 1, got {test_size}")

        return ExperimentConfig(
            name=self.get("experiment", "name"),
            scenario=self.scenario(),
            methods=methods,
            seeds=seeds,
            root_seed=self.get("experiment", "root_seed"),
            m_values=m_values,
            n=n,
            k=k,
            test_size=test_size,
            enforce_label_budget=enforce,
            lambda_pairs=self.lambda_pairs(),
            output_dir=self.get("experiment", "output_dir"),
            jobs=jobs or (os.cpu_count() or 1),
        )

    def lirr_config(self, task_kind: str, lambda_risk: Optional[float] = None,
                    lambda_rep: Optional[float] = None) -> LIRRConfig:
        return LIRRConfig(
            lambda_risk=self.get("lirr", "lambda_risk") if lambda_risk is None else lambda_risk,
            lambda_rep=self.get("lirr", "lambda_rep") if lambda_rep is None else lambda_rep,
            task_kind=task_kind,
            rep_includes_labeled_target=self.get("lirr", "rep_includes_labeled_target"),
            eval_head=self.get("lirr", "eval_head"),
            irm_penalty_weight=self.get("lirr", "irm_penalty_weight"),
            irm_warmup_fraction=self.get("lirr", "irm_warmup_fraction"),
        )

    def optim_config(self, seed: int = 0) -> OptimConfig:
        return OptimConfig(
            lr=self.get("optim", "lr"),
            momentum=self.get("optim", "momentum"),
            weight_decay=self.get("optim", "weight_decay"),
            total_iters=self.get("optim", "total_iters"),
            batch_size=self.get("optim", "batch_size"),
            seed=seed,
        )

    def model_config(self, task_kind: str) -> ModelConfig:
        activation = self.get("model", "activation")
        if activation not in ("relu", "tanh"):
            raise ConfigError(f"model.activation must be relu or tanh, got '{activation}'")
        hidden = self.get("model", "encoder_hidden")
        if any(h < 1 for h in hidden) or self.get("model", "z_dim") < 1 or self.get("model", "head_hidden") < 1:
            raise ConfigError("layer widths must be positive")
        return ModelConfig(
            task_kind=task_kind,
            encoder_hidden=tuple(hidden),
            z_dim=self.get("model", "z_dim"),
            head_hidden=self.get("model", "head_hidden"),
            activation=activation,
            cosine_temperature=self.get("model", "cosine_temperature"),
        )
