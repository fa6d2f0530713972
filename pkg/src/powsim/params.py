"""System parameters and network topology types.

Capacities are relative (they sum to one), hardness is the mean time for the
whole unit-capacity system to mine a block, and all latencies are one-way
delays in seconds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NORMALIZATION_TOL = 1e-12
SHORTEST_PATH_TOL = 1e-9


class TopologyError(ValueError):
    """Raised for structural problems (dimension mismatch, bad shapes)."""


class InvariantViolation(ValueError):
    """Raised when a constructed object violates a model invariant."""


def normalize_capacities(raw) -> np.ndarray:
    """Normalize nonnegative weights so they sum to one.

    Scale-invariant: any positive rescaling of ``raw`` gives the same output.
    Zero entries are allowed (observers); an all-zero vector is an error.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 1 or raw.size == 0:
        raise TopologyError("capacities must be a non-empty 1-d vector")
    if np.any(raw < 0) or not np.all(np.isfinite(raw)):
        raise InvariantViolation("capacities must be finite and nonnegative")
    total = raw.sum()
    if total <= 0:
        raise InvariantViolation("at least one capacity must be positive")
    return raw / total


@dataclass(frozen=True)
class SystemParams:
    """Relative compute capacities and puzzle hardness.

    ``capacities`` are normalized at construction; downstream code assumes
    they sum to one. ``effective_rates`` is the per-miner exponential block
    discovery rate, capacities / hardness.
    """

    capacities: np.ndarray
    hardness: float
    effective_rates: np.ndarray = field(init=False)

    def __post_init__(self):
        caps = normalize_capacities(self.capacities)
        if not (np.isfinite(self.hardness) and self.hardness > 0):
            raise InvariantViolation("hardness must be positive and finite")
        object.__setattr__(self, "capacities", caps)
        object.__setattr__(self, "effective_rates", caps / self.hardness)
        self.capacities.setflags(write=False)
        self.effective_rates.setflags(write=False)

    @property
    def n(self) -> int:
        return self.capacities.size

    def miners(self) -> np.ndarray:
        """Indices of nodes with positive capacity (observers excluded)."""
        return np.flatnonzero(self.capacities > 0)


@dataclass(frozen=True)
class LatencyMatrix:
    """Symmetric matrix of one-way delays between nodes, in seconds.

    Entries must already encode shortest paths: triangle violations are
    reported by :func:`validate_topology` and rejected by consumers rather
    than repaired, since a violating matrix usually signals a configuration
    mistake. Construction only enforces shape, so that invalid matrices can
    still be validated and reported on.
    """

    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise TopologyError("latency matrix must be square")
        object.__setattr__(self, "entries", m)
        self.entries.setflags(write=False)

    def check(self) -> None:
        """Raise InvariantViolation if any matrix invariant fails."""
        problems = _matrix_violations(self.entries)
        if problems:
            raise InvariantViolation("; ".join(problems))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def mean_latency(self) -> float:
        """Mean of the strictly-upper-triangular entries."""
        n = self.n
        if n < 2:
            raise InvariantViolation("mean latency undefined for fewer than 2 nodes")
        iu = np.triu_indices(n, k=1)
        return float(self.entries[iu].mean())


@dataclass(frozen=True)
class LatencyVector:
    """One-way delays from each miner to the coordinator, in seconds."""

    entries: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.entries, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise TopologyError("latency vector must be a non-empty 1-d vector")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise InvariantViolation("coordinator latencies must be finite and >= 0")
        object.__setattr__(self, "entries", v)
        self.entries.setflags(write=False)

    @property
    def n(self) -> int:
        return self.entries.size

    @property
    def round_trips(self) -> np.ndarray:
        return 2.0 * self.entries


def _matrix_violations(m: np.ndarray) -> list[str]:
    out = []
    if not np.all(np.isfinite(m)):
        out.append("matrix has non-finite entries")
        return out
    if np.any(np.diag(m) != 0):
        bad = np.flatnonzero(np.diag(m) != 0)
        out.append(f"nonzero diagonal at {bad.tolist()}")
    asym = np.argwhere(np.abs(m - m.T) > 0)
    if asym.size:
        i, j = asym[0]
        out.append(f"asymmetric at ({i}, {j})")
    if np.any(m < 0):
        out.append("negative latency entries")
    # shortest-path check: m[i,j] <= m[i,k] + m[k,j] for all k
    n = m.shape[0]
    if n >= 3 and not out:
        through = (m[:, :, None] + m[None, :, :]).min(axis=1)
        viol = np.argwhere(m > through + SHORTEST_PATH_TOL)
        if viol.size:
            i, j = viol[0]
            out.append(f"shortest-path violation at ({i}, {j})")
    return out


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of a topology validation; empty ``violations`` means valid."""

    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_topology(
    params: SystemParams,
    matrix: LatencyMatrix | None = None,
    vector: LatencyVector | None = None,
) -> ValidationReport:
    """Cross-validate parameter and topology dimensions and invariants.

    Dimension mismatches raise TopologyError; invariant violations are
    collected and returned. The check is idempotent and the report order
    is fixed regardless of input construction order.
    """
    n = params.n
    if matrix is not None and matrix.n != n:
        raise TopologyError(
            f"matrix is {matrix.n}x{matrix.n} but there are {n} nodes"
        )
    if vector is not None and vector.n != n:
        raise TopologyError(f"vector has {vector.n} entries but there are {n} nodes")

    violations: list[str] = []
    if matrix is not None:
        violations.extend(_matrix_violations(matrix.entries))
    if matrix is not None and vector is not None:
        # the coordinator must not introduce a shorter path than the direct link
        m = matrix.entries
        through = vector.entries[:, None] + vector.entries[None, :]
        viol = np.argwhere(m > through + SHORTEST_PATH_TOL)
        viol = viol[viol[:, 0] < viol[:, 1]]
        for i, j in viol:
            violations.append(
                f"consistency violation at ({i}, {j}): "
                f"l_ij={m[i, j]:g} > l_i+l_j={through[i, j]:g}"
            )
    return ValidationReport(tuple(violations))


def lambda_ratio(params: SystemParams, matrix: LatencyMatrix) -> float:
    """Hardness-to-mean-latency ratio: hardness over the mean pairwise delay."""
    if matrix.n < 2:
        raise TopologyError("lambda undefined for fewer than 2 nodes")
    return params.hardness / matrix.mean_latency


def induced_matrix(vector: LatencyVector) -> LatencyMatrix:
    """Pairwise latency matrix induced by relaying through the coordinator."""
    v = vector.entries
    m = v[:, None] + v[None, :]
    np.fill_diagonal(m, 0.0)
    return LatencyMatrix(m)
