#!/usr/bin/env python3
"""
plot.py - Labeled-ratio curves of a sweep as standalone SVG
"""

import logging
from typing import Dict, List, Tuple

import matplotlib
matplotlib.use("Agg")

import matplotlib.pyplot as plt

from sweep import SweepResult

log = logging.getLogger("PLOT")

Series = Dict[str, Tuple[List[float], List[float]]]

# byte-stable output, every vertex kept
SVG_RC = {
    "svg.hashsalt": "semida-lab",
    "path.simplify": False,
    "svg.fonttype": "none",
}


def curve_series(result: SweepResult) -> Series:
    """Per method: labeled-target ratios m/k and the mean target metric, default lambda pair only."""
    series: Series = {}
    seen_pair: Dict[str, Tuple[float, float]] = {}
    for row in result.summary():
        pair = (row["lambda_risk"], row["lambda_rep"])
        if seen_pair.setdefault(row["method"], pair) != pair:
            continue
        xs, ys = series.setdefault(row["method"], ([], []))
        xs.append(row["m"] / result.k)
        ys.append(row["tgt_mean"])
    for method, (xs, ys) in series.items():
        order = sorted(range(len(xs)), key=xs.__getitem__)
        series[method] = ([xs[i] for i in order], [ys[i] for i in order])
    return series


def emit_curve_svg(result: SweepResult, path: str, axis: str = "labeled_ratio") -> Series:
    if axis != "labeled_ratio":
        raise ValueError(f"unsupported axis '{axis}'")
    series = curve_series(result)
    metric = "Accuracy" if result.task_kind == "classification" else "MAE"
    single = all(len(xs) < 2 for xs, _ in series.values())
    if single:
        log.warning("Only one labeled-ratio point per method; drawing a scatter instead of curves")

    with matplotlib.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(6.4, 4.8))
        for method, (xs, ys) in series.items():
            if single:
                ax.scatter(xs, ys, label=method, gid=f"curve-{method}")
            else:
                ax.plot(xs, ys, marker="o", label=method, gid=f"curve-{method}")
        ax.set_xlabel("Ratio of labeled target data")
        ax.set_ylabel(metric)
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    log.info(f"Wrote {path}")
    return series
