"""Measurements over simulation traces: efficiency, inequality, instability.

Individual efficiency compares a miner's blocks in the finalized chain with
the number it would have contributed in a latency-free system over the same
interval. The Gini index summarizes inequality of any nonnegative vector
(capacities or efficiencies). Instability counts chain switches and the
depth of the deepest reorganization per node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .engine import MainChain, SimTrace
from .params import InvariantViolation, LatencyMatrix, SystemParams, TopologyError


@dataclass(frozen=True)
class EfficiencyReport:
    """Per-miner and overall efficiency of one finalized run.

    ``individual`` is NaN for zero-capacity observers (undefined). Gini of
    the efficiencies and of the capacities are computed over actual miners
    only.
    """

    individual: np.ndarray
    overall: float
    gini_efficiency: float
    gini_capacity: float


@dataclass(frozen=True)
class AggregateReport:
    """Mean and sample standard deviation of per-seed reports."""

    individual_mean: np.ndarray
    individual_std: np.ndarray
    overall_mean: float
    overall_std: float
    gini_efficiency_mean: float
    gini_efficiency_std: float


@dataclass(frozen=True)
class InstabilityReport:
    """Per-node fork statistics of one finalized run."""

    fork_count: np.ndarray
    max_fork_depth: np.ndarray
    fork_rate: np.ndarray  # fork_count / main-chain length


def gini(values) -> float:
    """Gini index of a vector of nonnegative values, in [0, 1].

    Half the mean absolute difference between all ordered pairs, relative
    to the mean. Zero for a constant vector; scale-invariant.
    """
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("gini needs a non-empty 1-d vector")
    if np.any(x < 0):
        raise InvariantViolation("gini is defined for nonnegative values only")
    total = x.sum()
    if total <= 0:
        raise InvariantViolation("gini undefined for an all-zero vector")
    n = x.size
    diff_sum = np.abs(x[:, None] - x[None, :]).sum()
    return float(diff_sum / (2.0 * n * total))


def efficiency_from_trace(
    trace: SimTrace, chain: MainChain, params: SystemParams
) -> EfficiencyReport:
    """Efficiency estimates from one finalized run.

    Miner i's estimate is its chain blocks divided by h_i * T / hardness,
    the latency-free expectation over the run's stop time T.
    """
    T = trace.stop_time
    if T <= 0:
        raise InvariantViolation("trace has zero duration")
    miners = params.miners()
    expected = params.capacities * T / params.hardness
    individual = np.full(params.n, np.nan)
    individual[miners] = chain.included_counts[miners] / expected[miners]
    overall = chain.length * params.hardness / T
    return EfficiencyReport(
        individual=individual,
        overall=overall,
        gini_efficiency=gini(individual[miners]),
        gini_capacity=gini(params.capacities[miners]),
    )


def aggregate(reports: list[EfficiencyReport]) -> AggregateReport:
    """Mean and sample standard deviation across seeds."""
    if not reports:
        raise ValueError("no reports to aggregate")
    ind = np.array([r.individual for r in reports])
    ov = np.array([r.overall for r in reports])
    ge = np.array([r.gini_efficiency for r in reports])
    ddof = 1 if len(reports) > 1 else 0
    return AggregateReport(
        individual_mean=ind.mean(axis=0),
        individual_std=ind.std(axis=0, ddof=ddof),
        overall_mean=float(ov.mean()),
        overall_std=float(ov.std(ddof=ddof)),
        gini_efficiency_mean=float(ge.mean()),
        gini_efficiency_std=float(ge.std(ddof=ddof)),
    )


def instability(trace: SimTrace, chain: MainChain) -> InstabilityReport:
    """Fork counts and maximum fork depth per node view."""
    n_views = len(trace.views)
    counts = np.zeros(n_views, dtype=np.int64)
    depths = np.zeros(n_views, dtype=np.int64)
    for k, view in enumerate(trace.views):
        counts[k] = len(view.switch_log)
        if view.switch_log:
            depths[k] = max(ev.orphaned_count for ev in view.switch_log)
    length = max(chain.length, 1)
    return InstabilityReport(
        fork_count=counts,
        max_fork_depth=depths,
        fork_rate=counts / length,
    )


def closeness_centrality(matrix: LatencyMatrix) -> np.ndarray:
    """Closeness centrality of each node: (n-1) over its summed distances."""
    n = matrix.n
    if n < 2:
        raise TopologyError("centrality undefined for fewer than 2 nodes")
    sums = matrix.entries.sum(axis=1)
    if np.any(sums <= 0):
        raise InvariantViolation("a node has zero total distance to all others")
    return (n - 1) / sums


def correlations(x, y) -> tuple[float, float]:
    """Pearson and Spearman correlation; NaN when either input is constant.

    Spearman uses average ranks for ties.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 3:
        raise ValueError("correlations need two equal-length vectors of size >= 3")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return (math.nan, math.nan)
    pearson = float(stats.pearsonr(x, y).statistic)
    spearman = float(stats.spearmanr(x, y).statistic)
    return (pearson, spearman)
