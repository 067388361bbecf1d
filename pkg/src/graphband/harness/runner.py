"""Execute every cell of an experiment grid and write one regret trace per cell."""
from __future__ import annotations

import csv
import json
import logging
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from pathlib import Path

import numpy as np

from ..algorithms import Learner, LearnerConfig, run
from ..environments import BiddingEnvironment, generate_synthetic, load_auction_csv
from ..graphs import BidGrid
from .config import Cell, EnvironmentSpec, ExperimentConfig, cells

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("round", "cum_regret", "norm_regret", "epoch", "gamma")
TRACE_DIR = "traces"
MANIFEST = "manifest.json"


def fmt(x: float) -> str:
    return f"{x:.10g}"


def _spec_key(spec: EnvironmentSpec, T: int):
    return (spec.kind, spec.mode, spec.data_seed, spec.normalization, spec.path, spec.max_rows,
            tuple(spec.price_window), T)


@lru_cache(maxsize=4)
def _dataset(key):
    kind, mode, data_seed, normalization, path, max_rows, window, T = key
    if kind == "synthetic":
        return generate_synthetic(mode, T, data_seed, normalization=normalization)
    return load_auction_csv(path, max_rows=max_rows, price_window=window, seed=data_seed)


def load_dataset(spec: EnvironmentSpec, T: int):
    ds = _dataset(_spec_key(spec, T))
    if len(ds) < T:
        raise ValueError(f"environment has {len(ds)} rounds but T={T}")
    return ds


def trace_rows(result) -> list[tuple]:
    cum = 0.0
    rows = []
    for tr in result.transcripts:
        cum += tr.regret
        t = tr.t + 1
        rows.append((t, cum, cum / t, tr.epoch, tr.gamma))
    return rows


def write_trace(path: Path, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for t, cum, norm, epoch, gamma in rows:
            w.writerow((t, fmt(cum), fmt(norm), epoch, fmt(gamma)))


def read_trace(path) -> np.ndarray:
    """Trace as a float array with columns in :data:`TRACE_COLUMNS` order."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != TRACE_COLUMNS:
            raise ValueError(f"{path}: unexpected trace header {header}")
        return np.array([[float(v) for v in row] for row in reader]).reshape(-1, len(TRACE_COLUMNS))


def run_cell(config: ExperimentConfig, cell: Cell, out: Path) -> dict:
    """Run one cell; never raises, failures are reported in the returned record."""
    start = time.perf_counter()
    rel = f"{TRACE_DIR}/{cell.cell_id}.csv"
    record = {"cell_id": cell.cell_id, "algorithm": cell.algorithm, "epsilon": cell.epsilon,
              "gamma_scale": cell.gamma_scale, "seed": cell.seed, "file": rel}
    try:
        ds = load_dataset(config.environment, config.T)
        env = BiddingEnvironment(ds, BidGrid(cell.epsilon))
        lc = LearnerConfig(algorithm=cell.algorithm, gamma_scale=cell.gamma_scale, horizon=config.T,
                           feedback_mode=config.feedback_mode, policy_mode=config.policy_mode,
                           reg_bound=config.reg_bound, loss_lr=config.loss_lr, graph_lr=config.graph_lr)
        result = run(Learner(lc, env, cell.seed), env, T=config.T)
        write_trace(out / rel, trace_rows(result))
        # DEC variant behind the policy and the restart check
        record["dec_mode"] = lc.dec_mode
        record["restarts"] = result.restarts
        record["status"] = "ok"
    except Exception as exc:
        log.error("cell %s failed: %s", cell.cell_id, exc)
        record["status"] = "failed"
        record["error"] = "".join(traceback.format_exception_only(type(exc), exc)).strip()
        record["file"] = None
    record["wall_ms"] = round(1000 * (time.perf_counter() - start))
    return record


def _run_cell_args(args):
    return run_cell(*args)


def run_matrix(config: ExperimentConfig, out, jobs: int = 1) -> dict:
    """Run all cells, write traces, ``config.json``, ``dataset.json`` and the manifest."""
    config.validate()
    out = Path(out)
    (out / TRACE_DIR).mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(config.dumps())
    try:
        load_dataset(config.environment, config.T).write_metadata(out / "dataset.json")
    except (OSError, ValueError) as exc:
        log.error("cannot build environment: %s", exc)
    todo = cells(config)
    args = [(config, c, out) for c in todo]
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_cell_args, args))
    else:
        records = [run_cell(*a) for a in args]
    manifest = {"name": config.label, "T": config.T, "cells": records}
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest
