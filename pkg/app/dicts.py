#!/usr/bin/env python3
"""
dicts.py - Constants
"""

# ----------------------------------------------------------------------
# Methods
# ----------------------------------------------------------------------
# Trained by trainer.train; the first five are the comparison set
METHODS = {
    "lirr":      "Invariant representations + invariant risks",
    "lirr_cosc": "LIRR with a cosine classifier head",
    "dann":      "Invariant representations only (adversarial feature alignment)",
    "irm":       "Invariant risk penalty over the two labeled environments",
    "s_plus_t":  "Labeled source plus labeled target, unlabeled data ignored",
    "risk_only": "Invariant risks only (representation branch off)",
    "full_t":    "Oracle trained on every labeled target point",
}

TASK_KINDS = ("classification", "regression")

# Component initialization order; each component draws from its own spawned seed stream
COMPONENTS = ("g", "fi", "fd", "c", "cos")

# ----------------------------------------------------------------------
# Model
# ----------------------------------------------------------------------
MODEL_DEFAULTS = {
    "x_dim": 2,
    "encoder_hidden": (64, 64),
    "z_dim": 16,
    "head_hidden": 32,
    "activation": "relu",
    "n_classes": 2,
    "cosine_temperature": 0.05,   # divides cosine logits
}

ACTIVATIONS = ("relu", "tanh")

CHECKPOINT_MAGIC = b"SDAC"
CHECKPOINT_VERSION = 1

# ----------------------------------------------------------------------
# Objectives
# ----------------------------------------------------------------------
LIRR_DEFAULTS = {
    "lambda_risk": 1.0,
    "lambda_rep": 1.0,
    "rep_includes_labeled_target": True,   # C sees T~ together with T
    "eval_head": "domain",                 # f_d(z, d) scores domain-tagged sets for the LIRR family
}

EVAL_HEADS = ("domain", "invariant")

IRM_DEFAULTS = {
    "penalty_weight": 100.0,
    "warmup_fraction": 0.5,   # penalty weight is 1.0 before this point
}

# ----------------------------------------------------------------------
# Optimizer
# ----------------------------------------------------------------------
OPTIM_DEFAULTS = {
    "lr": 1e-3,
    "momentum": 0.9,
    "weight_decay": 5e-4,
    "total_iters": 4000,
    "batch_size": 64,          # per sub-batch (S, T~ and T each)
    "decay_fraction": 0.75,
    "decay_multiplier": 0.1,
}

DIVERGENCE_LIMIT = 1e6
METRICS_LOG_EVERY = 50

# ----------------------------------------------------------------------
# Data
# ----------------------------------------------------------------------
DATA_DEFAULTS = {
    "n": 2000,
    "k": 2000,
    "m": (20, 100),
    "test_size": 2000,
    "label_budget_ratio": 0.1,   # m <= n / 10 unless disabled
}

# Shift construction parameters per scenario kind
SCENARIOS = {
    "covariate_shift": {
        "task_kind": "classification",
        "direction": (0.7071067811865476, 0.7071067811865476),
        "sharpness": 25.0,
        "target_offset": (1.5, -1.5),
        "spread": 1.0,
    },
    "label_shift": {
        "task_kind": "classification",
        "mean_0": (-0.5, 0.0),
        "mean_1": (0.5, 0.0),
        "source_prior_1": 0.5,
        "target_prior_1": 0.1,
    },
    "conditional_shift": {
        "task_kind": "classification",
        "sharpness": 4.0,
        "boundary_shift": 1.0,
        "posterior_offset": 0.0,
        "target_offset": (0.0, 1.0),
    },
    "two_moons_rotation": {
        "task_kind": "classification",
        "jitter": 0.1,
        "angle_deg": 30.0,
    },
    "regression_sine_shift": {
        "task_kind": "regression",
        "offset": 0.5,
        "noise_std": 0.1,
        "source_range": (-3.0, 3.0),
        "target_range": (-2.0, 4.0),
        "nuisance_shift": 1.0,
    },
}

CSV_HEADER = ("x1", "x2", "y", "domain")
TASK_FILES = {
    "source": "source.csv",
    "target_labeled": "target_labeled.csv",
    "target_unlabeled": "target_unlabeled.csv",
    "test_target": "test_target.csv",
    "scenario": "scenario.cfg",
}

# Samples used for Monte-Carlo ground truth where no closed form exists
MC_SAMPLES = 200000

# ----------------------------------------------------------------------
# Bound
# ----------------------------------------------------------------------
BOUND_DEFAULTS = {
    "delta": 0.05,
    "grid_size": 32,
    "stump_vc_dim": 3,
    "regression_bins": 8,
    "regression_levels": (0.0, 0.5, 1.0),
    "population_samples": 100000,
    "proxy_kernel": "linear",
}

# Thresholds t of the regression distance class I(|h - h'| > t)
TILDE_THRESHOLDS = tuple(round(0.05 * i, 2) for i in range(21))

LEMMA_TOLERANCE = 1e-9

# ----------------------------------------------------------------------
# Harness
# ----------------------------------------------------------------------
METRICS_HEADER = ("iter", "l_i", "l_d", "l_rep", "l_risk", "l_total", "lr")
RESULTS_HEADER = (
    "method", "m", "seed_index", "seed", "lambda_risk", "lambda_rep",
    "status", "src_metric", "tgt_metric",
)
SUMMARY_HEADER = ("method", "m", "lambda_risk", "lambda_rep", "n_ok", "n_failed", "tgt_mean", "tgt_std", "src_mean", "src_std")
BOUND_HEADER = (
    "mode", "n", "m", "weight_t", "weight_s", "emp_risk_t", "emp_risk_s",
    "distance_term", "disagreement_term", "noise_term", "concentration_term",
    "delta", "bound_total", "proxy_a_distance",
)

LAMBDA_GRID = (1.0, 0.1, 0.01)

EXIT_CODES = {
    "OK": 0,
    "RUNTIME": 1,
    "CONFIG": 2,
    "INTERRUPT": 130,
}

# Config file schema: section -> key -> (kind, default). Kinds: int, float, str, bool, ints, floats, strs
CONFIG_DEFAULTS = {
    "experiment": {
        "name": ("str", "experiment"),
        "methods": ("strs", ("lirr", "dann", "irm", "s_plus_t")),
        "seeds": ("int", 5),
        "root_seed": ("int", 0),
        "output_dir": ("str", "runs"),
        "jobs": ("int", 0),          # 0 = all available cores
        "lambda_grid": ("bool", False),
    },
    "scenario": {
        "kind": ("str", "conditional_shift"),
    },
    "data": {
        "n": ("int", DATA_DEFAULTS["n"]),
        "k": ("int", DATA_DEFAULTS["k"]),
        "m": ("ints", DATA_DEFAULTS["m"]),
        "m_ratios": ("floats", ()),
        "test_size": ("int", DATA_DEFAULTS["test_size"]),
        "enforce_label_budget": ("bool", True),
    },
    "lirr": {
        "lambda_risk": ("float", LIRR_DEFAULTS["lambda_risk"]),
        "lambda_rep": ("float", LIRR_DEFAULTS["lambda_rep"]),
        "rep_includes_labeled_target": ("bool", LIRR_DEFAULTS["rep_includes_labeled_target"]),
        "eval_head": ("str", LIRR_DEFAULTS["eval_head"]),
        "irm_penalty_weight": ("float", IRM_DEFAULTS["penalty_weight"]),
        "irm_warmup_fraction": ("float", IRM_DEFAULTS["warmup_fraction"]),
    },
    "optim": {
        "lr": ("float", OPTIM_DEFAULTS["lr"]),
        "momentum": ("float", OPTIM_DEFAULTS["momentum"]),
        "weight_decay": ("float", OPTIM_DEFAULTS["weight_decay"]),
        "total_iters": ("int", OPTIM_DEFAULTS["total_iters"]),
        "batch_size": ("int", OPTIM_DEFAULTS["batch_size"]),
    },
    "model": {
        "encoder_hidden": ("ints", MODEL_DEFAULTS["encoder_hidden"]),
        "z_dim": ("int", MODEL_DEFAULTS["z_dim"]),
        "head_hidden": ("int", MODEL_DEFAULTS["head_hidden"]),
        "activation": ("str", MODEL_DEFAULTS["activation"]),
        "cosine_temperature": ("float", MODEL_DEFAULTS["cosine_temperature"]),
    },
}
