#!/usr/bin/env python3
"""
sweep.py - Multi-seed method comparison, labeled-ratio and lambda sweeps
"""

import csv
import hashlib
import io
import logging
import math
import os
from dataclasses import dataclass
from multiprocessing import Pool
from typing import Dict, List, Optional, Tuple

import numpy as np
from rich.console import Console
from rich.table import Table
from tqdm import tqdm

from data import gen_task
from dicts import RESULTS_HEADER, SUMMARY_HEADER
from options import ConfigManager, ExperimentConfig
from trainer import DivergenceError, train, write_metrics_csv

log = logging.getLogger("SWEEP")

# methods whose objective reads both trade-off weights; the lambda grid expands only these
LAMBDA_METHODS = ("lirr", "lirr_cosc")


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from the cell coordinates; adding cells never moves existing ones."""
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass(frozen=True)
class Cell:
    method: str
    m: int
    seed_index: int
    seed: int
    data_seed: int
    lambda_risk: float
    lambda_rep: float


@dataclass
class CellResult:
    method: str
    m: int
    seed_index: int
    seed: int
    lambda_risk: float
    lambda_rep: float
    status: str
    src_metric: float
    tgt_metric: float

    def row(self) -> List[str]:
        return [self.method, str(self.m), str(self.seed_index), str(self.seed), repr(self.lambda_risk),
                repr(self.lambda_rep), self.status, repr(self.src_metric), repr(self.tgt_metric)]


@dataclass
class SweepResult:
    cells: List[CellResult]
    task_kind: str
    k: int

    def summary(self) -> List[Dict]:
        return summarize(self.cells)


# ----------------------------------------------------------------------
# Cells
# ----------------------------------------------------------------------
def plan_cells(exp: ExperimentConfig) -> List[Cell]:
    cells = []
    for m in exp.m_values:
        for seed_index in exp.seed_indices:
            # every cell of one seed index shares data, initialization and batch streams, so
            # methods, sizes and lambda pairs are compared on paired runs
            data_seed = derive_seed(exp.root_seed, "data", seed_index)
            seed = derive_seed(exp.root_seed, "train", seed_index)
            for method in exp.methods:
                pairs = exp.lambda_pairs if method in LAMBDA_METHODS else exp.lambda_pairs[:1]
                for lambda_risk, lambda_rep in pairs:
                    cells.append(Cell(method, m, seed_index, seed, data_seed, lambda_risk, lambda_rep))
    return cells


def run_cell(job: Tuple[ConfigManager, ExperimentConfig, Cell, Optional[str]]) -> CellResult:
    options, exp, cell, metrics_dir = job
    status, src, tgt = "ok", math.nan, math.nan
    try:
        task = gen_task(exp.scenario, exp.n, cell.m, exp.k, cell.data_seed, exp.test_size, exp.enforce_label_budget)
        record = train(
            cell.method, task,
            options.lirr_config(task.task_kind, cell.lambda_risk, cell.lambda_rep),
            options.optim_config(cell.seed),
            options.model_config(task.task_kind),
        )
        src, tgt = record.src_metric, record.tgt_metric
        if metrics_dir:
            name = f"{cell.method}_m{cell.m}_s{cell.seed_index}_r{cell.lambda_risk:g}_p{cell.lambda_rep:g}.csv"
            write_metrics_csv(record, os.path.join(metrics_dir, name))
    except DivergenceError as e:
        log.warning(f"Cell {cell.method} m={cell.m} seed {cell.seed_index} diverged: {e}")
        status = "diverged"
    except Exception as e:
        log.error(f"Cell {cell.method} m={cell.m} seed {cell.seed_index} failed: {e}")
        status = "failed"
    return CellResult(cell.method, cell.m, cell.seed_index, cell.seed, cell.lambda_risk, cell.lambda_rep,
                      status, src, tgt)


def run_sweep(options: ConfigManager, jobs: Optional[int] = None, out_dir: Optional[str] = None,
              progress: bool = True) -> SweepResult:
    exp = options.experiment()
    cells = plan_cells(exp)
    jobs = jobs or exp.jobs
    metrics_dir = None
    if out_dir:
        metrics_dir = os.path.join(out_dir, "cells")
        os.makedirs(metrics_dir, exist_ok=True)
    work = [(options, exp, cell, metrics_dir) for cell in cells]
    log.info(f"Sweep '{exp.name}': {len(cells)} cells on {exp.scenario.kind} with {jobs} job(s)")

    bar = tqdm(total=len(work), desc=exp.name, disable=not progress, leave=False)
    results: List[CellResult] = []
    if jobs <= 1:
        for item in work:
            results.append(run_cell(item))
            bar.update()
    else:
        # imap keeps config order whatever the completion order
        with Pool(min(jobs, len(work))) as pool:
            for result in pool.imap(run_cell, work):
                results.append(result)
                bar.update()
    bar.close()
    return SweepResult(results, exp.scenario.task_kind, exp.k)


# ----------------------------------------------------------------------
# Aggregation
# ----------------------------------------------------------------------
def _mean_std(values: List[float]) -> Tuple[float, float]:
    if not values:
        return math.nan, math.nan
    if len(values) < 2:
        return float(values[0]), 0.0
    return float(np.mean(values)), float(np.std(values, ddof=1))


def summarize(cells: List[CellResult]) -> List[Dict]:
    groups: Dict[Tuple, List[CellResult]] = {}
    for cell in cells:
        groups.setdefault((cell.method, cell.m, cell.lambda_risk, cell.lambda_rep), []).append(cell)
    rows = []
    for (method, m, lambda_risk, lambda_rep), members in groups.items():
        ok = [c for c in members if c.status == "ok"]
        tgt_mean, tgt_std = _mean_std([c.tgt_metric for c in ok])
        src_mean, src_std = _mean_std([c.src_metric for c in ok])
        rows.append({
            "method": method, "m": m, "lambda_risk": lambda_risk, "lambda_rep": lambda_rep,
            "n_ok": len(ok), "n_failed": len(members) - len(ok),
            "tgt_mean": tgt_mean, "tgt_std": tgt_std, "src_mean": src_mean, "src_std": src_std,
        })
    return rows


def ranking(result: SweepResult) -> Dict[int, List[Dict]]:
    """Per labeled-target size, summary rows best first (accuracy up, MAE down)."""
    higher_is_better = result.task_kind == "classification"
    by_m: Dict[int, List[Dict]] = {}
    for row in result.summary():
        by_m.setdefault(row["m"], []).append(row)
    for rows in by_m.values():
        rows.sort(key=lambda r: (math.isnan(r["tgt_mean"]),
                                 -r["tgt_mean"] if higher_is_better else r["tgt_mean"]))
    return by_m


def lambda_table(result: SweepResult, method: str = "lirr") -> Dict[int, Dict[Tuple[float, float], float]]:
    table: Dict[int, Dict[Tuple[float, float], float]] = {}
    for row in result.summary():
        if row["method"] == method:
            table.setdefault(row["m"], {})[(row["lambda_risk"], row["lambda_rep"])] = row["tgt_mean"]
    return table


# ----------------------------------------------------------------------
# Output
# ----------------------------------------------------------------------
def _fmt(value: float) -> str:
    return "nan" if math.isnan(value) else f"{value:.4f}"


def ranking_tables(result: SweepResult) -> List[Table]:
    metric = "accuracy" if result.task_kind == "classification" else "MAE"
    tables = []
    for m, rows in ranking(result).items():
        table = Table(title=f"m = {m} (target {metric}, mean ± std)")
        for column in ("rank", "method", "λ_risk", "λ_rep", "target", "source", "ok/failed"):
            table.add_column(column)
        for rank, row in enumerate(rows, start=1):
            table.add_row(
                str(rank), row["method"], f"{row['lambda_risk']:g}", f"{row['lambda_rep']:g}",
                f"{_fmt(row['tgt_mean'])} ± {_fmt(row['tgt_std'])}",
                f"{_fmt(row['src_mean'])} ± {_fmt(row['src_std'])}",
                f"{row['n_ok']}/{row['n_failed']}",
            )
        tables.append(table)
    return tables


def render_ranking(result: SweepResult) -> str:
    console = Console(file=io.StringIO(), width=100, record=True, color_system=None)
    for table in ranking_tables(result):
        console.print(table)
    return console.export_text()


def write_results(result: SweepResult, out_dir: str) -> Dict[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, name)
             for name in ("results.csv", "summary.csv", "ranking.txt", "lambda_table.csv")}

    with open(paths["results.csv"], "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(RESULTS_HEADER)
        for cell in result.cells:
            writer.writerow(cell.row())

    with open(paths["summary.csv"], "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for row in result.summary():
            writer.writerow([row[key] if isinstance(row[key], (str, int)) else repr(row[key]) for key in SUMMARY_HEADER])

    with open(paths["ranking.txt"], "w", encoding="utf-8") as f:
        f.write(render_ranking(result))

    grid = lambda_table(result)
    with open(paths["lambda_table.csv"], "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        reps = sorted({p for cells in grid.values() for (_, p) in cells}, reverse=True)
        writer.writerow(["m", "lambda_risk"] + [f"lambda_rep={p:g}" for p in reps])
        for m, cells in grid.items():
            for r in sorted({r for (r, _) in cells}, reverse=True):
                writer.writerow([m, f"{r:g}"] + [repr(cells.get((r, p), math.nan)) for p in reps])

    log.info(f"Wrote sweep outputs to {out_dir}")
    return paths


def load_results(path: str, task_kind: str, k: int) -> SweepResult:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != RESULTS_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        cells = [
            CellResult(row["method"], int(row["m"]), int(row["seed_index"]), int(row["seed"]),
                       float(row["lambda_risk"]), float(row["lambda_rep"]), row["status"],
                       float(row["src_metric"]), float(row["tgt_metric"]))
            for row in reader
        ]
    return SweepResult(cells, task_kind, k)
