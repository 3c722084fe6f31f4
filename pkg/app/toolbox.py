#!/usr/bin/env python3
"""
toolbox.py - Command dispatch for the experiment CLI
"""

import argparse
import csv
import logging
import os

from rich.console import Console

from bound import bound_report, proxy_a_distance
from data import check_sizes, gen_task, load_task, save_task
from diffcore import ParameterError
from dicts import BOUND_HEADER, METHODS, TASK_FILES
from models import load_checkpoint, save_checkpoint
from options import ConfigError, ConfigManager
from plot import emit_curve_svg
from sweep import load_results, render_ranking, run_sweep, write_results
from trainer import evaluate, predict, train, write_metrics_csv

log = logging.getLogger("TOOLBOX")


class ExperimentToolbox:
    def __init__(self, args: argparse.Namespace) -> None:
        self.args = args
        self.console = Console(stderr=True)
        self.options = ConfigManager(getattr(args, "config", None), getattr(args, "set", None) or ())
        self._apply_flags()

        # Command Map
        self.command_map = {
            "gen-data": self._gen_data,
            "train": self._train,
            "evaluate": self._evaluate,
            "bound": self._bound,
            "sweep": self._sweep,
            "plot": self._plot,
        }

    # ----------------------------------------------------------------------
    # Helpers
    # ----------------------------------------------------------------------
    def _apply_flags(self) -> None:
        flag_map = {
            "scenario": ("scenario", "kind"),
            "seed": ("experiment", "root_seed"),
            "jobs": ("experiment", "jobs"),
            "n": ("data", "n"),
            "k": ("data", "k"),
            "m": ("data", "m"),
            "test_size": ("data", "test_size"),
            "iters": ("optim", "total_iters"),
        }
        for flag, (section, key) in flag_map.items():
            value = getattr(self.args, flag, None)
            if value is not None:
                self.options.set(section, key, str(value))

    def _out_dir(self) -> str:
        out = self.args.out or self.options.get("experiment", "output_dir")
        os.makedirs(out, exist_ok=True)
        return out

    def _task(self):
        if getattr(self.args, "task", None):
            return load_task(self.args.task)
        spec = self.options.scenario()
        n, k = self.options.get("data", "n"), self.options.get("data", "k")
        m = self.options.m_values()[0]
        enforce = self.options.get("data", "enforce_label_budget")
        try:
            check_sizes(n, m, k, enforce)
        except ParameterError as e:
            raise ConfigError(str(e)) from e
        return gen_task(spec, n, m, k, self.options.get("experiment", "root_seed"),
                        self.options.get("data", "test_size"), enforce)

    # ----------------------------------------------------------------------
    # Commands
    # ----------------------------------------------------------------------
    def _gen_data(self) -> int:
        task = self._task()
        out = self._out_dir()
        save_task(task, out)
        log.info(f"{task.scenario.kind}: n={task.n} m={task.m} k={task.k} -> {out}")
        print("\n".join(os.path.join(out, name) for name in TASK_FILES.values()))
        return 0

    def _train(self) -> int:
        method = self.args.method
        if method not in METHODS:
            raise ConfigError(f"unknown method '{method}'")
        task = self._task()
        seed = self.options.get("experiment", "root_seed")
        record = train(
            method, task,
            self.options.lirr_config(task.task_kind),
            self.options.optim_config(seed),
            self.options.model_config(task.task_kind),
        )
        out = self._out_dir()
        save_checkpoint(record.model, os.path.join(out, "model.ckpt"),
                        {"method": method, "scenario": task.scenario.kind, "task_seed": task.seed, "seed": seed})
        write_metrics_csv(record, os.path.join(out, "metrics.csv"))
        self.options.write(os.path.join(out, "config.cfg"))
        print(f"{method}: src={record.src_metric:.4f} tgt={record.tgt_metric:.4f} ({record.wall_time:.1f}s)")
        return 0

    def _evaluate(self) -> int:
        task = load_task(self.args.task)
        model, meta = load_checkpoint(self.args.model)
        src = evaluate(model, task.source)
        tgt = evaluate(model, task.test_target)
        metric = "accuracy" if model.task_kind == "classification" else "MAE"
        print(f"{meta.get('method', 'model')}: source {metric} {src:.4f}, target {metric} {tgt:.4f}")
        return 0

    def _bound(self) -> int:
        task = load_task(self.args.task)
        model, _ = load_checkpoint(self.args.model)
        report = bound_report(lambda x: predict(model, x), task, delta=self.args.delta, mode=self.args.mode,
                              seed=self.options.get("experiment", "root_seed"))
        report.proxy_a_distance = proxy_a_distance(model.encode(task.source.features),
                                                   model.encode(task.target_unlabeled.features), seed=task.seed)
        print(report.describe())
        if self.args.out:
            path = os.path.join(self._out_dir(), "bound.csv")
            with open(path, "w", encoding="utf-8", newline="") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(BOUND_HEADER)
                writer.writerow(report.to_row())
        return 0

    def _sweep(self) -> int:
        out = self._out_dir()
        self.options.write(os.path.join(out, "config.cfg"))
        result = run_sweep(self.options, jobs=self.args.jobs, out_dir=out, progress=not self.args.quiet)
        write_results(result, out)
        emit_curve_svg(result, os.path.join(out, "curve.svg"))
        if not self.args.quiet:
            self.console.print(render_ranking(result))
        failed = sum(cell.status != "ok" for cell in result.cells)
        if failed:
            log.warning(f"{failed} of {len(result.cells)} cells did not finish")
        return 0

    def _plot(self) -> int:
        run_dir = self.args.results
        options = ConfigManager(os.path.join(run_dir, "config.cfg"))
        result = load_results(os.path.join(run_dir, "results.csv"), options.scenario().task_kind,
                              options.get("data", "k"))
        out = self.args.out or os.path.join(run_dir, "curve.svg")
        emit_curve_svg(result, out)
        print(out)
        return 0

    def run(self) -> int:
        return self.command_map[self.args.command]()
