"""Experiment runners: execute scenarios and produce figure-ready tables.

Each runner returns ``(tables, manifest)`` where ``tables`` maps a CSV file
name to a header plus rows, and the manifest records everything needed to
reproduce the run byte for byte (resolved configuration, seeds, code
version). Timestamps live only in the manifest, never in data files, so
reruns with the same manifest produce identical CSV bodies.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .analytic import best_coordinator_position, efficiency_coordinated
from .engine import (
    MainChain,
    SimTrace,
    StopCondition,
    finalize_chain,
    run_coordinated,
    run_coupled,
    run_p2p,
)
from .metrics import (
    closeness_centrality,
    correlations,
    efficiency_from_trace,
    gini,
    instability,
)
from .params import induced_matrix
from .scenarios import ScenarioConfig


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "nan" if math.isnan(x) else repr(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def rows_to_csv(header: list[str], rows: list[tuple]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    return "\n".join(lines) + "\n"


def _manifest(cfg: ScenarioConfig, command: str, extra: dict | None = None) -> dict:
    man = {
        "command": command,
        "code_version": __version__,
        "scenario": cfg.name,
        "protocol": cfg.protocol,
        "capacities": cfg.params.capacities.tolist(),
        "hardness": cfg.params.hardness,
        "stop": {cfg.stop.kind: cfg.stop.value},
        "seeds": list(cfg.seeds),
        "meta": dict(cfg.meta),
    }
    if cfg.matrix is not None:
        man["latency_matrix"] = cfg.matrix.entries.tolist()
    if cfg.vector is not None:
        man["coordinator_latencies"] = cfg.vector.entries.tolist()
    if extra:
        man.update(extra)
    return man


def _one_run(args) -> tuple[SimTrace, MainChain]:
    cfg, protocol, seed = args
    if protocol == "p2p":
        trace = run_p2p(cfg.params, cfg.matrix, cfg.stop, seed)
    else:
        trace = run_coordinated(cfg.params, cfg.vector, cfg.stop, seed)
    chain = finalize_chain(trace, seed)
    return trace, chain


def _run_seeds(cfg: ScenarioConfig, protocol: str, jobs: int = 1):
    """Run every seed of a scenario; results are ordered by seed regardless
    of the degree of parallelism."""
    work = [(cfg, protocol, seed) for seed in cfg.seeds]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_one_run, work))
    return [_one_run(w) for w in work]


def _protocols(cfg: ScenarioConfig) -> list[str]:
    return ["p2p", "coordinated"] if cfg.protocol == "both" else [cfg.protocol]


def simulate(cfg: ScenarioConfig, lambdas=None, jobs: int = 1):
    """Run a scenario (optionally swept over lambda) for all its seeds.

    Emits a long-format metrics table, a wide per-lambda summary, a
    per-miner summary, and instability statistics. Coordinated rows carry
    the matching closed-form efficiency for overlaying on plots.
    """
    gamma_h = cfg.meta.get("gamma_h", gini(cfg.params.capacities[cfg.params.miners()]))
    configs = [cfg] if lambdas is None else [cfg.with_lambda(l) for l in lambdas]

    long_rows = []
    summary_rows = []
    miner_rows = []
    instab_rows = []
    for c in configs:
        lam = c.lam
        for protocol in _protocols(c):
            analytic = None
            if protocol == "coordinated":
                analytic = efficiency_coordinated(c.params, c.vector)
            etas = []
            ginis = []
            per_miner = []
            for (trace, chain), seed in zip(
                _run_seeds(c, protocol, jobs), c.seeds
            ):
                rep = efficiency_from_trace(trace, chain, c.params)
                ins = instability(trace, chain)
                etas.append(rep.overall)
                ginis.append(rep.gini_efficiency)
                per_miner.append(rep.individual)
                long_rows.append(
                    (c.name, protocol, lam, gamma_h, seed, "eta_overall", "", rep.overall)
                )
                long_rows.append(
                    (c.name, protocol, lam, gamma_h, seed, "gini_efficiency", "",
                     rep.gini_efficiency)
                )
                long_rows.append(
                    (c.name, protocol, lam, gamma_h, seed, "chain_length", "",
                     chain.length)
                )
                long_rows.append(
                    (c.name, protocol, lam, gamma_h, seed, "blocks_minted", "",
                     int(trace.mined_counts.sum()))
                )
                long_rows.append(
                    (c.name, protocol, lam, gamma_h, seed, "stop_time", "",
                     trace.stop_time)
                )
                for i in range(c.params.n):
                    long_rows.append(
                        (c.name, protocol, lam, gamma_h, seed, "eta_individual", i,
                         rep.individual[i])
                    )
                for node in range(len(trace.views)):
                    name = node if node < c.params.n else "coordinator"
                    instab_rows.append(
                        (c.name, protocol, lam, seed, name,
                         int(ins.fork_count[node]), int(ins.max_fork_depth[node]),
                         ins.fork_rate[node])
                    )
            etas = np.array(etas)
            ginis = np.array(ginis)
            per_miner = np.array(per_miner)
            ddof = 1 if etas.size > 1 else 0
            summary_rows.append(
                (c.name, protocol, lam, gamma_h,
                 etas.mean(), etas.std(ddof=ddof),
                 analytic.overall if analytic else math.nan,
                 ginis.mean(), ginis.std(ddof=ddof))
            )
            for i in range(c.params.n):
                miner_rows.append(
                    (c.name, protocol, lam, i, c.params.capacities[i],
                     per_miner[:, i].mean(), per_miner[:, i].std(ddof=ddof),
                     analytic.individual[i] if analytic else math.nan)
                )

    tables = {
        "metrics.csv": (
            ["scenario", "protocol", "lambda", "gamma_h", "seed", "metric", "node",
             "value"],
            long_rows,
        ),
        "summary.csv": (
            ["scenario", "protocol", "lambda", "gamma_h", "eta_mean", "eta_std",
             "eta_analytic", "gini_eff_mean", "gini_eff_std"],
            summary_rows,
        ),
        "miner_summary.csv": (
            ["scenario", "protocol", "lambda", "miner", "capacity", "eta_mean",
             "eta_std", "eta_analytic"],
            miner_rows,
        ),
        "instability.csv": (
            ["scenario", "protocol", "lambda", "seed", "node", "fork_count",
             "max_fork_depth", "fork_rate"],
            instab_rows,
        ),
    }
    manifest = _manifest(cfg, "simulate", {"lambdas": list(lambdas or [])})
    return tables, manifest


def analytic_table(cfg: ScenarioConfig):
    """Closed-form coordinated efficiencies for one configuration."""
    if cfg.vector is None:
        raise ValueError(
            "no closed form exists for the P2P setting; "
            "this command needs a coordinated configuration"
        )
    res = efficiency_coordinated(cfg.params, cfg.vector)
    rows = [
        (cfg.name, i, cfg.params.capacities[i], cfg.vector.entries[i],
         res.win_probs[i], res.individual[i])
        for i in range(cfg.params.n)
    ]
    tables = {
        "analytic.csv": (
            ["scenario", "miner", "capacity", "coordinator_latency", "win_prob",
             "eta_individual"],
            rows,
        ),
        "analytic_overall.csv": (
            ["scenario", "taubar", "eta_overall"],
            [(cfg.name, res.taubar, res.overall)],
        ),
    }
    return tables, _manifest(cfg, "analytic"), res


def compare(cfg: ScenarioConfig, lambdas=None, horizon: float | None = None):
    """Coupled P2P-vs-coordinated runs; checks chain-length dominance.

    Both protocols share the same discovery streams per seed, so the
    coordinated chain can never be longer for any realization. Returns a
    per-seed table and a per-lambda summary with the verdict.
    """
    if cfg.matrix is None or cfg.vector is None:
        raise ValueError("compare needs both a latency matrix and a coordinator")
    configs = [cfg] if lambdas is None else [cfg.with_lambda(l) for l in lambdas]
    rows = []
    summary = []
    for c in configs:
        lam = c.lam
        if horizon is not None:
            T = horizon
        elif c.stop.kind == "horizon":
            T = c.stop.value
        else:
            # pick a horizon long enough for roughly the target chain length
            T = c.stop.value * c.params.hardness
        analytic = efficiency_coordinated(c.params, c.vector).overall
        lens_p2p = []
        lens_coord = []
        for seed in c.seeds:
            p2p, coord = run_coupled(c.params, c.matrix, c.vector, T, seed)
            lp = finalize_chain(p2p, seed).length
            lc = finalize_chain(coord, seed).length
            lens_p2p.append(lp)
            lens_coord.append(lc)
            rows.append(
                (c.name, lam, seed, T, lp, lc,
                 lp * c.params.hardness / T, lc * c.params.hardness / T,
                 int(lc <= lp))
            )
        mean_p2p = np.mean(lens_p2p) * c.params.hardness / T
        mean_coord = np.mean(lens_coord) * c.params.hardness / T
        summary.append(
            (c.name, lam, mean_p2p, mean_coord, analytic,
             int(all(b <= a for a, b in zip(lens_p2p, lens_coord))),
             int(mean_p2p >= analytic))
        )
    tables = {
        "compare.csv": (
            ["scenario", "lambda", "seed", "horizon", "chain_p2p", "chain_coordinated",
             "eta_p2p", "eta_coordinated", "dominance_ok"],
            rows,
        ),
        "compare_summary.csv": (
            ["scenario", "lambda", "eta_p2p_mean", "eta_coordinated_mean",
             "eta_coordinated_analytic", "dominance_all_seeds",
             "p2p_above_analytic"],
            summary,
        ),
    }
    return tables, _manifest(cfg, "compare", {"lambdas": list(lambdas or [])})


def place(cfg: ScenarioConfig, grid: int = 50):
    """Grid search for the best coordinator position over planar miners."""
    if cfg.positions is None:
        raise ValueError("placement search needs planar miner positions")
    miners = cfg.params.miners()
    pos, eta, heat = best_coordinator_position(
        cfg.positions[miners],
        cfg.params,
        distance_to_latency=lambda d: d,
        grid=grid,
    )
    tables = {
        "placement_grid.csv": (["x", "y", "eta"], heat),
        "placement_best.csv": (
            ["scenario", "x", "y", "eta"],
            [(cfg.name, pos[0], pos[1], eta)],
        ),
    }
    return tables, _manifest(cfg, "place", {"grid": grid}), (pos, eta)


def convergence(cfg: ScenarioConfig, checkpoints, jobs: int = 1):
    """Running efficiency estimates as the chain grows.

    The scenario is run once per seed to the last checkpoint; at each
    checkpoint the estimate uses the chain truncated to that length and the
    mint time of its last block.
    """
    checkpoints = [int(c) for c in checkpoints]
    if any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
        raise ValueError("checkpoints must be strictly increasing")
    c = ScenarioConfig(
        name=cfg.name,
        protocol=cfg.protocol,
        params=cfg.params,
        matrix=cfg.matrix,
        vector=cfg.vector,
        positions=cfg.positions,
        points=cfg.points,
        stop=StopCondition.blocks(checkpoints[-1]),
        seeds=cfg.seeds,
        meta=dict(cfg.meta),
    )
    rows = []
    for protocol in _protocols(c):
        for (trace, chain), seed in zip(_run_seeds(c, protocol, jobs), c.seeds):
            miners = c.params.miners()
            counts = np.zeros(c.params.n)
            k = 0
            it = iter(checkpoints)
            target = next(it)
            for bid in chain.block_ids[1:]:
                counts[trace.miner[bid]] += 1
                k += 1
                if k == target:
                    T = trace.mint_time[bid]
                    eta = k * c.params.hardness / T
                    rows.append((c.name, protocol, seed, k, T, "eta_overall", "", eta))
                    for i in miners:
                        eta_i = counts[i] * c.params.hardness / (
                            c.params.capacities[i] * T
                        )
                        rows.append(
                            (c.name, protocol, seed, k, T, "eta_individual", i, eta_i)
                        )
                    target = next(it, None)
                    if target is None:
                        break
    tables = {
        "convergence.csv": (
            ["scenario", "protocol", "seed", "chain_length", "time", "metric",
             "node", "value"],
            rows,
        ),
    }
    return tables, _manifest(cfg, "convergence", {"checkpoints": checkpoints})


def centrality_correlation(cfg: ScenarioConfig, lambdas, jobs: int = 1):
    """Correlation between closeness centrality and mean individual efficiency."""
    if cfg.matrix is None:
        raise ValueError("centrality analysis needs a P2P latency matrix")
    if cfg.params.n < 3:
        raise ValueError("centrality analysis needs at least 3 miners")
    cent = closeness_centrality(cfg.matrix)
    labels = [p.label for p in cfg.points] if cfg.points else [""] * cfg.params.n
    detail = []
    corr_rows = []
    for lam in lambdas:
        c = cfg.with_lambda(lam)
        per_miner = []
        for (trace, chain), seed in zip(_run_seeds(c, "p2p", jobs), c.seeds):
            rep = efficiency_from_trace(trace, chain, c.params)
            per_miner.append(rep.individual)
        mean_eta = np.array(per_miner).mean(axis=0)
        miners = c.params.miners()
        for i in miners:
            detail.append((c.name, lam, i, labels[i], cent[i], mean_eta[i]))
        if np.ptp(cent[miners]) == 0 or np.ptp(mean_eta[miners]) == 0:
            pearson, spearman = math.nan, math.nan
        else:
            pearson, spearman = correlations(cent[miners], mean_eta[miners])
        corr_rows.append((c.name, lam, pearson, spearman))
    tables = {
        "centrality.csv": (
            ["scenario", "lambda", "miner", "label", "centrality", "eta_mean"],
            detail,
        ),
        "correlation.csv": (
            ["scenario", "lambda", "pearson", "spearman"],
            corr_rows,
        ),
    }
    return tables, _manifest(cfg, "centrality", {"lambdas": list(lambdas)})
