"""Closed-form results for the coordinated setting.

The coordinated chain grows as a renewal process: after each accepted block,
miner i restarts mining a round trip (2 l_i) after the acceptance instant,
and the next accepted block is the first submission back at the
coordinator. This module evaluates the expected renewal period, the
per-miner win probabilities, and the resulting overall and individual
efficiencies exactly, for arbitrary capacities and coordinator latencies.

All exponentials are grouped so their exponents are nonpositive; the naive
grouping (a product of a huge positive exponential and a tiny negative one)
overflows as soon as latencies are large relative to the hardness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import (
    InvariantViolation,
    LatencyVector,
    SystemParams,
    TopologyError,
)


@dataclass(frozen=True)
class AnalyticResult:
    """Exact coordinated-setting quantities for one parameter set.

    ``individual`` entries are NaN for zero-capacity observers, whose
    individual efficiency is undefined.
    """

    taubar: float
    win_probs: np.ndarray
    overall: float
    individual: np.ndarray


def _sorted_rates(params: SystemParams, vector: LatencyVector):
    """Sort miners by coordinator latency; returns (rates, round trips, order)."""
    if params.n != vector.n:
        raise TopologyError("capacity and latency dimensions disagree")
    order = np.argsort(vector.entries, kind="stable")
    h = params.effective_rates[order]
    lt = vector.round_trips[order]
    return h, lt, order


def taubar(params: SystemParams, vector: LatencyVector) -> float:
    """Expected time between two consecutive chain extensions.

    Always at least the hardness, with equality exactly when every
    coordinator latency is zero.
    """
    if params.n == 0:
        raise TopologyError("empty miner set")
    h, lt, _ = _sorted_rates(params, vector)
    n = h.size
    H = np.cumsum(h)  # H[i] = h_1 + ... + h_{i+1}
    # S[i] = sum_{j<=i} h_j * lt_j, so the i-th exponent pair is
    # -(H_i*lt - S_i) = -sum_{j<=i} h_j (lt - lt_j) <= 0 for lt >= lt_i
    S = np.cumsum(h * lt)
    total = 0.0
    for i in range(n):
        lo = lt[i]
        e_lo = np.exp(S[i] - H[i] * lo)
        term = (1.0 + H[i] * lo) * e_lo
        if i + 1 < n:
            hi = lt[i + 1]
            e_hi = np.exp(S[i] - H[i] * hi)
            term -= (1.0 + H[i] * hi) * e_hi
        # the i = n upper boundary is at infinity and contributes nothing
        total += term / H[i]
    return float(total)


def win_probabilities(params: SystemParams, vector: LatencyVector) -> np.ndarray:
    """Probability that a chain block was mined by each miner.

    Sums to one; reduces to the capacities when all latencies are equal.
    """
    if params.n == 0:
        raise TopologyError("empty miner set")
    h, lt, order = _sorted_rates(params, vector)
    n = h.size
    H = np.cumsum(h)
    S = np.cumsum(h * lt)
    # D[k] = exp(-sum_{j<=k} h_j (lt_k - lt_j)); A[k] same with lt_{k+1}
    D = np.exp(S - H * lt)
    A = np.empty(n)
    A[:-1] = np.exp(S[:-1] - H[:-1] * lt[1:])
    A[-1] = 0.0
    inner = (D - A) / H
    # p_i = h_i * sum_{k >= i} inner[k]
    tail = np.cumsum(inner[::-1])[::-1]
    p_sorted = h * tail
    p = np.empty(n)
    p[order] = p_sorted
    return p


def efficiency_coordinated(
    params: SystemParams, vector: LatencyVector
) -> AnalyticResult:
    """Overall and per-miner efficiencies in the coordinated setting.

    Overall efficiency is hardness / expected renewal period; miner i's
    efficiency is its win probability over its capacity share of the chain
    rate, undefined (NaN) for observers with zero capacity.
    """
    tb = taubar(params, vector)
    p = win_probabilities(params, vector)
    overall = params.hardness / tb
    with np.errstate(divide="ignore", invalid="ignore"):
        individual = p / (params.effective_rates * tb)
    individual = np.where(params.capacities > 0, individual, np.nan)
    return AnalyticResult(taubar=tb, win_probs=p, overall=overall, individual=individual)


def taubar_two_miners(params: SystemParams, vector: LatencyVector) -> float:
    """Specialized two-miner renewal period; cross-check for the general form."""
    if params.n != 2:
        raise TopologyError("two-miner formula needs exactly 2 miners")
    h, lt, _ = _sorted_rates(params, vector)
    gap = lt[1] - lt[0]
    return float(
        lt[0]
        + (1.0 - np.exp(-h[0] * gap)) / h[0]
        + np.exp(-h[0] * gap) / (h[0] + h[1])
    )


def win_probability_two_miners(
    params: SystemParams, vector: LatencyVector
) -> np.ndarray:
    """Specialized two-miner win probabilities; cross-check for the general form."""
    if params.n != 2:
        raise TopologyError("two-miner formula needs exactly 2 miners")
    h, lt, order = _sorted_rates(params, vector)
    gap = lt[1] - lt[0]
    p_near = 1.0 - (h[1] / (h[0] + h[1])) * np.exp(-h[0] * gap)
    p_sorted = np.array([p_near, 1.0 - p_near])
    p = np.empty(2)
    p[order] = p_sorted
    return p


def merge_equidistant(
    params: SystemParams, vector: LatencyVector, i: int, j: int
) -> tuple[SystemParams, LatencyVector]:
    """Merge two miners at the same distance from the coordinator.

    The merged system has one fewer miner with the capacities summed and
    exactly the same overall efficiency.
    """
    if i == j:
        raise ValueError("cannot merge a miner with itself")
    if vector.entries[i] != vector.entries[j]:
        raise InvariantViolation(
            f"miners {i} and {j} are not equidistant from the coordinator"
        )
    keep = [k for k in range(params.n) if k != j]
    caps = params.capacities[keep].copy()
    caps[keep.index(i)] += params.capacities[j]
    lats = vector.entries[keep]
    return (
        SystemParams(capacities=caps, hardness=params.hardness),
        LatencyVector(lats),
    )


def best_coordinator_position(
    miner_positions: np.ndarray,
    params: SystemParams,
    distance_to_latency,
    grid: int = 50,
    margin: float = 0.25,
    refine: bool = True,
):
    """Exhaustive grid search for the coordinator location maximizing efficiency.

    ``miner_positions`` is an (n, 2) array of planar points;
    ``distance_to_latency`` maps Euclidean distance to one-way delay in
    seconds. The bounding box of the miners, padded by ``margin`` of its
    span, is scanned at ``grid`` cells per axis; ties go to the first cell
    scanned (row-major), then one local pass at 10x resolution around the
    best cell. Returns ``(position, efficiency, heatmap_rows)`` where
    heatmap rows are ``(x, y, efficiency)`` for the coarse scan.
    """
    pts = np.asarray(miner_positions, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
        raise TopologyError("miner positions must be a non-empty (n, 2) array")
    if grid < 1:
        raise ValueError("empty grid")

    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-12)
    lo = lo - margin * span
    hi = hi + margin * span

    def efficiency_at(x, y):
        d = np.hypot(pts[:, 0] - x, pts[:, 1] - y)
        vec = LatencyVector(np.array([distance_to_latency(di) for di in d]))
        return efficiency_coordinated(params, vec).overall

    def scan(x0, y0, x1, y1, cells):
        xs = np.linspace(x0, x1, cells)
        ys = np.linspace(y0, y1, cells)
        best = (-np.inf, None)
        rows = []
        for y in ys:
            for x in xs:
                eta = efficiency_at(x, y)
                rows.append((x, y, eta))
                if eta > best[0]:
                    best = (eta, (x, y))
        return best, rows

    (eta, pos), rows = scan(lo[0], lo[1], hi[0], hi[1], grid)
    if refine:
        cell = (hi - lo) / max(grid - 1, 1)
        (eta2, pos2), _ = scan(
            pos[0] - cell[0],
            pos[1] - cell[1],
            pos[0] + cell[0],
            pos[1] + cell[1],
            21,
        )
        if eta2 > eta:
            eta, pos = eta2, pos2
    return np.array(pos), float(eta), rows
