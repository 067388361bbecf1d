"""Aggregate trace CSVs across seeds and render SVG regret plots."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..graphs import BidGrid
from .runner import MANIFEST, fmt, read_trace

SUMMARY = "summary.csv"
SERIES_DIR = "series"
SUMMARY_COLUMNS = ("algorithm", "epsilon", "K", "gamma_scale", "n_seeds", "final_mean", "final_sd", "note")


class AggregateError(ValueError):
    pass


@dataclass
class Group:
    algorithm: str
    epsilon: float
    gamma_scale: float
    rounds: np.ndarray
    mean: np.ndarray
    sd: np.ndarray | None
    n: int

    @property
    def k(self) -> int:
        return BidGrid(self.epsilon).k

    @property
    def stem(self) -> str:
        return f"{self.algorithm}__K{self.k}__c{self.gamma_scale:g}"


def aggregate_traces(traces: dict) -> Group:
    """Mean and sample sd of normalized regret across seeds.

    ``traces`` maps seed to a trace array; seeds are processed in sorted
    order so the result does not depend on how they were listed.
    """
    seeds = sorted(traces)
    lengths = {len(traces[s]) for s in seeds}
    if len(lengths) != 1:
        raise AggregateError(f"mismatched horizons across seeds: {sorted(lengths)}")
    stack = np.stack([traces[s][:, 2] for s in seeds])
    rounds = traces[seeds[0]][:, 0]
    sd = stack.std(axis=0, ddof=1) if len(seeds) > 1 else None
    return Group("", 0.0, 0.0, rounds, stack.mean(axis=0), sd, len(seeds))


def load_groups(in_dir) -> list[Group]:
    in_dir = Path(in_dir)
    try:
        manifest = json.loads((in_dir / MANIFEST).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise AggregateError(f"cannot read manifest in {in_dir}: {exc}") from None
    buckets: dict = {}
    for rec in manifest["cells"]:
        if rec.get("status") != "ok":
            continue
        key = (rec["algorithm"], rec["epsilon"], rec["gamma_scale"])
        buckets.setdefault(key, {})[rec["seed"]] = read_trace(in_dir / rec["file"])
    if not buckets:
        raise AggregateError(f"no completed cells in {in_dir}")
    groups = []
    for (algo, eps, c), traces in buckets.items():
        try:
            g = aggregate_traces(traces)
        except AggregateError as exc:
            raise AggregateError(f"{algo} eps={eps} c={c}: {exc}") from None
        g.algorithm, g.epsilon, g.gamma_scale = algo, eps, c
        groups.append(g)
    return groups


def write_aggregate(groups: list[Group], out_dir) -> Path:
    out_dir = Path(out_dir)
    (out_dir / SERIES_DIR).mkdir(parents=True, exist_ok=True)
    for g in groups:
        with (out_dir / SERIES_DIR / f"{g.stem}.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("round", "mean_norm_regret", "sd_norm_regret"))
            for i, t in enumerate(g.rounds):
                w.writerow((int(t), fmt(g.mean[i]), "" if g.sd is None else fmt(g.sd[i])))
    path = out_dir / SUMMARY
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for g in groups:
            w.writerow((g.algorithm, fmt(g.epsilon), g.k, fmt(g.gamma_scale), g.n, fmt(g.mean[-1]),
                        "" if g.sd is None else fmt(g.sd[-1]), "single_seed" if g.sd is None else ""))
    return path


def aggregate(in_dir, out_dir=None) -> list[Group]:
    groups = load_groups(in_dir)
    write_aggregate(groups, out_dir or in_dir)
    return groups


# --------------------------------------------------------------------------
# plotting

PLOT_STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.2,
    "svg.hashsalt": "graphband",
    "svg.fonttype": "path",
}
SVG_METADATA = {"Date": None, "Creator": None}


def _series_label(g: Group, multi_c: bool) -> str:
    return f"{g.algorithm} (c={g.gamma_scale:g})" if multi_c else g.algorithm


def plot_groups(groups: list[Group], out_dir, label: str = "experiment") -> list[Path]:
    """Regret curves (one panel per epsilon) and the final-regret epsilon sweep."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    order = sorted(groups, key=lambda g: (g.algorithm, g.gamma_scale, -g.epsilon))
    epsilons = sorted({g.epsilon for g in groups}, reverse=True)
    multi_c = len({g.gamma_scale for g in groups}) > 1
    series = sorted({(g.algorithm, g.gamma_scale) for g in groups})
    colors = {s: f"C{i % 10}" for i, s in enumerate(series)}
    paths = []
    with plt.rc_context(PLOT_STYLE):
        fig, axes = plt.subplots(1, len(epsilons), figsize=(3.2 * len(epsilons), 2.6),
                                 sharey=True, squeeze=False)
        for ax, eps in zip(axes[0], epsilons):
            for g in (g for g in order if g.epsilon == eps):
                color = colors[(g.algorithm, g.gamma_scale)]
                ax.plot(g.rounds, g.mean, color=color, label=_series_label(g, multi_c))
                if g.sd is not None:
                    ax.fill_between(g.rounds, g.mean - g.sd, g.mean + g.sd, color=color, alpha=0.2,
                                    linewidth=0)
            ax.set_title(f"eps = 1/{round(1 / eps)}  (K = {BidGrid(eps).k})")
            ax.set_xlabel("round")
        axes[0][0].set_ylabel("normalized regret")
        axes[0][-1].legend(frameon=False)
        fig.tight_layout()
        path = out_dir / f"regret_{label}.svg"
        fig.savefig(path, format="svg", metadata=SVG_METADATA)
        plt.close(fig)
        paths.append(path)

        fig, ax = plt.subplots(figsize=(3.6, 2.6))
        for algo, c in series:
            pts = sorted((BidGrid(g.epsilon).k, g.mean[-1], 0.0 if g.sd is None else g.sd[-1])
                         for g in groups if (g.algorithm, g.gamma_scale) == (algo, c))
            ks, means, sds = (np.array(v) for v in zip(*pts))
            name = f"{algo} (c={c:g})" if multi_c else algo
            ax.errorbar(ks, means, yerr=sds, color=colors[(algo, c)], marker="o", markersize=3,
                        capsize=2, label=name)
        ax.set_xlabel("number of actions K")
        ax.set_ylabel("final normalized regret")
        ax.legend(frameon=False)
        fig.tight_layout()
        path = out_dir / f"epsilon_sweep_{label}.svg"
        fig.savefig(path, format="svg", metadata=SVG_METADATA)
        plt.close(fig)
        paths.append(path)
    return paths


def plot(in_dir, out_dir=None, label: str | None = None) -> list[Path]:
    in_dir = Path(in_dir)
    if label is None:
        try:
            label = json.loads((in_dir / MANIFEST).read_text()).get("name") or "experiment"
        except (OSError, json.JSONDecodeError):
            label = "experiment"
    return plot_groups(load_groups(in_dir), out_dir or in_dir, label)
