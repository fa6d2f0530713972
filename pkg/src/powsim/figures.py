"""Render figures from emitted CSV tables.

Each function takes the output directory of a command, reads the tables it
wrote, and saves PNG files next to them. The CSVs stay the canonical
output; figures are a convenience for eyeballing results.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _read(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def plot_simulation(out_dir) -> list[Path]:
    """Overall efficiency vs lambda (one series per protocol) plus the
    analytic overlay for coordinated runs."""
    out = Path(out_dir)
    rows = _read(out / "summary.csv")
    written = []
    fig, ax = plt.subplots(figsize=(6, 4))
    for protocol in sorted({r["protocol"] for r in rows}):
        sub = sorted(
            (r for r in rows if r["protocol"] == protocol),
            key=lambda r: float(r["lambda"]),
        )
        lam = [float(r["lambda"]) for r in sub]
        eta = [float(r["eta_mean"]) for r in sub]
        std = [float(r["eta_std"]) for r in sub]
        ax.errorbar(lam, eta, yerr=std, marker="o", capsize=3, label=protocol)
        if protocol == "coordinated":
            ana = [float(r["eta_analytic"]) for r in sub]
            ax.plot(lam, ana, "k--", label="coordinated (closed form)")
    if len({float(r["lambda"]) for r in rows}) > 1:
        ax.set_xscale("log")
    ax.set_xlabel("hardness / mean latency")
    ax.set_ylabel("overall efficiency")
    ax.set_ylim(0, 1.05)
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = out / "efficiency_vs_lambda.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)
    return written


def plot_compare(out_dir) -> list[Path]:
    """Mean P2P vs coordinated efficiency across lambda."""
    out = Path(out_dir)
    rows = sorted(_read(out / "compare_summary.csv"), key=lambda r: float(r["lambda"]))
    lam = [float(r["lambda"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(lam, [float(r["eta_p2p_mean"]) for r in rows], "o-", label="P2P")
    ax.plot(
        lam,
        [float(r["eta_coordinated_mean"]) for r in rows],
        "s-",
        label="coordinated",
    )
    ax.plot(
        lam,
        [float(r["eta_coordinated_analytic"]) for r in rows],
        "k--",
        label="coordinated (closed form)",
    )
    if len(set(lam)) > 1:
        ax.set_xscale("log")
    ax.set_xlabel("hardness / mean latency")
    ax.set_ylabel("overall efficiency")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = out / "compare.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return [path]


def plot_placement(out_dir) -> list[Path]:
    """Heatmap of coordinator-position efficiency with the optimum marked."""
    out = Path(out_dir)
    rows = _read(out / "placement_grid.csv")
    xs = sorted({float(r["x"]) for r in rows})
    ys = sorted({float(r["y"]) for r in rows})
    grid = np.full((len(ys), len(xs)), np.nan)
    xi = {x: i for i, x in enumerate(xs)}
    yi = {y: i for i, y in enumerate(ys)}
    for r in rows:
        grid[yi[float(r["y"])], xi[float(r["x"])]] = float(r["eta"])
    best = _read(out / "placement_best.csv")[0]
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    im = ax.pcolormesh(xs, ys, grid, shading="nearest")
    fig.colorbar(im, ax=ax, label="overall efficiency")
    ax.plot(float(best["x"]), float(best["y"]), "r*", markersize=14, label="optimum")
    ax.set_xlabel("x (latency units)")
    ax.set_ylabel("y (latency units)")
    ax.legend()
    fig.tight_layout()
    path = out / "placement.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return [path]


def plot_convergence(out_dir) -> list[Path]:
    """Running overall-efficiency estimate per seed vs chain length."""
    out = Path(out_dir)
    rows = [
        r
        for r in _read(out / "convergence.csv")
        if r["metric"] == "eta_overall"
    ]
    fig, ax = plt.subplots(figsize=(6, 4))
    for protocol in sorted({r["protocol"] for r in rows}):
        for seed in sorted({r["seed"] for r in rows if r["protocol"] == protocol}):
            sub = sorted(
                (
                    r
                    for r in rows
                    if r["seed"] == seed and r["protocol"] == protocol
                ),
                key=lambda r: int(r["chain_length"]),
            )
            ax.plot(
                [int(r["chain_length"]) for r in sub],
                [float(r["value"]) for r in sub],
                alpha=0.6,
                label=f"{protocol} seed {seed}",
            )
    ax.set_xlabel("chain length (blocks)")
    ax.set_ylabel("running overall efficiency")
    ax.grid(alpha=0.3)
    if len(rows) <= 60:
        ax.legend(fontsize=7)
    fig.tight_layout()
    path = out / "convergence.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return [path]


def plot_centrality(out_dir) -> list[Path]:
    """Scatter of individual efficiency against closeness centrality per lambda."""
    out = Path(out_dir)
    rows = _read(out / "centrality.csv")
    fig, ax = plt.subplots(figsize=(6, 4))
    for lam in sorted({float(r["lambda"]) for r in rows}):
        sub = [r for r in rows if float(r["lambda"]) == lam]
        ax.scatter(
            [float(r["centrality"]) for r in sub],
            [float(r["eta_mean"]) for r in sub],
            s=18,
            label=f"lambda={lam:g}",
        )
    ax.set_xlabel("closeness centrality")
    ax.set_ylabel("mean individual efficiency")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = out / "centrality.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return [path]
