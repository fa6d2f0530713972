"""Deterministic discrete-event simulation of the two mining protocols.

Two protocols are supported:

* peer-to-peer: every miner broadcasts its freshly minted chain tip to every
  other node after the pairwise one-way delay; strictly longer chains are
  adopted, everything else is discarded and never re-advertised.
* coordinated: a central coordinator holds the unique chain; miners submit
  minted blocks, pause, and resume when the next coordinator broadcast
  reaches them. The first block extending the coordinator's tip wins; all
  other submissions at that height are silently dropped.

A third entry point runs both protocols on shared Poisson discovery streams
(a coupling), which makes the coordinated chain provably no longer than the
peer-to-peer chain realization by realization.

Every run is single-threaded and bit-reproducible given (parameters,
topology, stop condition, seed). Randomness is split from the master seed
into one independent stream per node, so adding observers never perturbs
miner randomness.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .params import (
    InvariantViolation,
    LatencyMatrix,
    LatencyVector,
    SystemParams,
    TopologyError,
    validate_topology,
)

GENESIS = 0
NO_MINER = -1

# event kinds; processed in (time, sequence) order
_MINT = 0
_ARRIVAL = 1  # p2p: chain tip reaches a node
_COORD_RECV = 2  # coordinated: submitted block reaches the coordinator
_BROADCAST = 3  # coordinated: accepted tip reaches a node


@dataclass(frozen=True)
class StopCondition:
    """Either a target main-chain length (blocks) or a wall-clock horizon."""

    kind: str  # "blocks" | "horizon"
    value: float

    @classmethod
    def blocks(cls, n: int) -> "StopCondition":
        if n < 1:
            raise ValueError("block target must be >= 1")
        return cls("blocks", float(n))

    @classmethod
    def horizon(cls, seconds: float) -> "StopCondition":
        if not seconds > 0:
            raise ValueError("horizon must be positive")
        return cls("horizon", float(seconds))


@dataclass(frozen=True)
class SwitchEvent:
    """A node abandoning held blocks for a strictly longer competing chain."""

    time: float
    old_tip: int
    new_tip: int
    orphaned_count: int


@dataclass
class NodeView:
    """A node's local chain state plus its log of chain switches."""

    node: int
    tip: int = GENESIS
    tip_height: int = 0
    switch_log: list[SwitchEvent] = field(default_factory=list)


@dataclass
class SimTrace:
    """Full record of one simulation run.

    Blocks are stored in parallel arrays indexed by block id; id 0 is the
    genesis block (height 0, no parent, no miner). ``views`` has one entry
    per node; in the coordinated protocol there is one extra trailing view
    for the coordinator. ``pending`` holds in-flight messages at the stop
    time, delivered during finalization.
    """

    protocol: str  # "p2p" | "coordinated"
    seed: int
    n_nodes: int
    parent: list[int]
    height: list[int]
    miner: list[int]
    mint_time: list[float]
    views: list[NodeView]
    mined_counts: np.ndarray  # blocks minted per miner (accepted or not)
    stop_time: float
    pending: list[tuple]  # (time, seq, kind, node, block_id)

    @property
    def n_blocks(self) -> int:
        """Number of non-genesis blocks minted."""
        return len(self.parent) - 1

    def path_to(self, tip: int) -> list[int]:
        """Block ids from genesis to ``tip`` inclusive."""
        path = []
        b = tip
        while b != GENESIS:
            path.append(b)
            b = self.parent[b]
        path.append(GENESIS)
        path.reverse()
        return path

    def export_blocks(self) -> str:
        """Newline-delimited ``block_id,parent_id,height,miner,mint_time``."""
        lines = ["block_id,parent_id,height,miner,mint_time"]
        for b in range(len(self.parent)):
            pid = "" if b == GENESIS else str(self.parent[b])
            lines.append(
                f"{b},{pid},{self.height[b]},{self.miner[b]},{self.mint_time[b]!r}"
            )
        return "\n".join(lines) + "\n"

    def export_switches(self) -> str:
        """Newline-delimited ``node,time,old_tip,new_tip,orphaned_count``."""
        lines = ["node,time,old_tip,new_tip,orphaned_count"]
        for view in self.views:
            for ev in view.switch_log:
                lines.append(
                    f"{view.node},{ev.time!r},{ev.old_tip},{ev.new_tip},"
                    f"{ev.orphaned_count}"
                )
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class MainChain:
    """The finalized longest chain and its per-miner block counts."""

    block_ids: tuple[int, ...]
    included_counts: np.ndarray

    @property
    def length(self) -> int:
        """Number of non-genesis blocks in the chain."""
        return len(self.block_ids) - 1


def _node_rngs(seed: int, n: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def _require_valid(params, matrix=None, vector=None):
    report = validate_topology(params, matrix, vector)
    if not report.ok:
        raise InvariantViolation("invalid topology: " + "; ".join(report.violations))


def _require_minting_possible(params: SystemParams, stop: StopCondition):
    if stop.kind == "blocks" and params.miners().size == 0:
        raise InvariantViolation(
            "block-target stop is unreachable: no miner has positive capacity"
        )


def _orphan_count(parent: list[int], height: list[int], old: int, new: int) -> int:
    """Blocks on the old tip's path that are not on the new tip's path."""
    orphans = 0
    while height[old] > height[new]:
        old = parent[old]
        orphans += 1
    while height[new] > height[old]:
        new = parent[new]
    while old != new:
        old = parent[old]
        new = parent[new]
        orphans += 1
    return orphans


def _adopt(view: NodeView, parent, height, tip: int, time: float) -> bool:
    """Adopt a strictly longer chain at a node; returns True on a switch."""
    if height[tip] <= view.tip_height:
        return False
    orphans = _orphan_count(parent, height, view.tip, tip)
    if orphans > 0:
        view.switch_log.append(SwitchEvent(time, view.tip, tip, orphans))
    view.tip = tip
    view.tip_height = height[tip]
    return True


def run_p2p(
    params: SystemParams,
    matrix: LatencyMatrix,
    stop: StopCondition,
    seed: int,
) -> SimTrace:
    """Simulate the peer-to-peer protocol.

    Each miner mints after an exponential delay at its effective rate,
    resampled whenever it switches chains; minted tips are announced to
    every other node after the pairwise delay; strictly longer chains are
    adopted, others discarded; received blocks are never re-advertised.
    """
    _require_valid(params, matrix)
    _require_minting_possible(params, stop)
    n = params.n
    rates = params.effective_rates
    lat = matrix.entries
    rngs = _node_rngs(seed, n)

    parent = [NO_MINER]
    height = [0]
    miner = [NO_MINER]
    mint_time = [0.0]
    views = [NodeView(i) for i in range(n)]
    mined = np.zeros(n, dtype=np.int64)
    epoch = [0] * n  # invalidates a miner's pending mint after a switch

    heap: list[tuple] = []
    seq = 0
    horizon = stop.value if stop.kind == "horizon" else np.inf
    target = stop.value if stop.kind == "blocks" else np.inf

    for i in params.miners():
        t = rngs[i].exponential(1.0 / rates[i])
        heapq.heappush(heap, (t, seq, _MINT, i, epoch[i]))
        seq += 1

    stop_time = horizon if np.isfinite(horizon) else 0.0
    pending: list[tuple] = []
    max_height = 0

    while heap:
        ev = heapq.heappop(heap)
        t, _, kind = ev[0], ev[1], ev[2]
        if t > horizon:
            if kind == _ARRIVAL:
                pending.append((ev[0], ev[1], ev[2], ev[3], ev[4]))
            # mints past the horizon never happen
            continue
        if kind == _MINT:
            i, ep = ev[3], ev[4]
            if ep != epoch[i]:
                continue
            view = views[i]
            bid = len(parent)
            parent.append(view.tip)
            height.append(view.tip_height + 1)
            miner.append(i)
            mint_time.append(t)
            mined[i] += 1
            view.tip = bid
            view.tip_height = height[bid]
            max_height = max(max_height, height[bid])
            for j in range(n):
                if j != i:
                    heapq.heappush(heap, (t + lat[i, j], seq, _ARRIVAL, j, bid))
                    seq += 1
            epoch[i] += 1
            dt = rngs[i].exponential(1.0 / rates[i])
            heapq.heappush(heap, (t + dt, seq, _MINT, i, epoch[i]))
            seq += 1
            if height[bid] >= target:
                stop_time = t
                break
        else:  # _ARRIVAL
            j, bid = ev[3], ev[4]
            switched = _adopt(views[j], parent, height, bid, t)
            if switched and rates[j] > 0:
                epoch[j] += 1
                dt = rngs[j].exponential(1.0 / rates[j])
                heapq.heappush(heap, (t + dt, seq, _MINT, j, epoch[j]))
                seq += 1

    # whatever announcements remain in flight are delivered at finalization
    for ev in heap:
        if ev[2] == _ARRIVAL:
            pending.append((ev[0], ev[1], ev[2], ev[3], ev[4]))
    pending.sort()

    return SimTrace(
        protocol="p2p",
        seed=seed,
        n_nodes=n,
        parent=parent,
        height=height,
        miner=miner,
        mint_time=mint_time,
        views=views,
        mined_counts=mined,
        stop_time=stop_time,
        pending=pending,
    )


def run_coordinated(
    params: SystemParams,
    vector: LatencyVector,
    stop: StopCondition,
    seed: int,
) -> SimTrace:
    """Simulate the coordinated protocol.

    A miner minting at time t submits its block (arriving t + l_i later) and
    pauses. The coordinator accepts the first block extending its tip, drops
    everything else at that height, and broadcasts the new tip to every node
    (arriving after l_j). A paused miner resumes, with a fresh exponential
    sample, on the first broadcast newer than the tip it mined on; a miner
    caught mid-mining by a broadcast cancels and resamples, which is
    statistically equivalent by memorylessness.
    """
    _require_valid(params, vector=vector)
    _require_minting_possible(params, stop)
    n = params.n
    rates = params.effective_rates
    lat = vector.entries
    rngs = _node_rngs(seed, n)

    parent = [NO_MINER]
    height = [0]
    miner = [NO_MINER]
    mint_time = [0.0]
    views = [NodeView(i) for i in range(n)]
    coord = NodeView(n)
    mined = np.zeros(n, dtype=np.int64)
    epoch = [0] * n
    paused = [False] * n

    heap: list[tuple] = []
    seq = 0
    horizon = stop.value if stop.kind == "horizon" else np.inf
    target = stop.value if stop.kind == "blocks" else np.inf

    for i in params.miners():
        t = rngs[i].exponential(1.0 / rates[i])
        heapq.heappush(heap, (t, seq, _MINT, i, epoch[i]))
        seq += 1

    stop_time = horizon if np.isfinite(horizon) else 0.0
    pending: list[tuple] = []
    done = False

    while heap and not done:
        ev = heapq.heappop(heap)
        t, kind = ev[0], ev[2]
        if t > horizon:
            if kind == _BROADCAST:
                pending.append((ev[0], ev[1], ev[2], ev[3], ev[4]))
            continue
        if kind == _MINT:
            i, ep = ev[3], ev[4]
            if ep != epoch[i]:
                continue
            view = views[i]
            bid = len(parent)
            parent.append(view.tip)
            height.append(view.tip_height + 1)
            miner.append(i)
            mint_time.append(t)
            mined[i] += 1
            paused[i] = True
            epoch[i] += 1
            heapq.heappush(heap, (t + lat[i], seq, _COORD_RECV, i, bid))
            seq += 1
        elif kind == _COORD_RECV:
            bid = ev[4]
            if parent[bid] == coord.tip:
                coord.tip = bid
                coord.tip_height = height[bid]
                for j in range(n):
                    heapq.heappush(heap, (t + lat[j], seq, _BROADCAST, j, bid))
                    seq += 1
                if coord.tip_height >= target:
                    stop_time = t
                    done = True
            # blocks not extending the coordinator's tip are dropped silently
        else:  # _BROADCAST
            j, bid = ev[3], ev[4]
            view = views[j]
            if height[bid] <= view.tip_height:
                continue
            view.tip = bid
            view.tip_height = height[bid]
            if rates[j] == 0:
                continue
            if paused[j]:
                paused[j] = False
            else:
                epoch[j] += 1  # cancel the in-progress attempt on a stale tip
            dt = rngs[j].exponential(1.0 / rates[j])
            heapq.heappush(heap, (t + dt, seq, _MINT, j, epoch[j]))
            seq += 1

    for ev in heap:
        if ev[2] == _BROADCAST:
            pending.append((ev[0], ev[1], ev[2], ev[3], ev[4]))
    pending.sort()

    return SimTrace(
        protocol="coordinated",
        seed=seed,
        n_nodes=n,
        parent=parent,
        height=height,
        miner=miner,
        mint_time=mint_time,
        views=views + [coord],
        mined_counts=mined,
        stop_time=stop_time,
        pending=pending,
    )


def finalize_chain(trace: SimTrace, seed: int) -> MainChain:
    """Deliver in-flight messages, then extract the longest chain.

    No further blocks are minted. Among the maximal-height tips across all
    node views the winner is drawn uniformly at random from ``seed``.
    """
    parent, height = trace.parent, trace.height
    for t, _, kind, j, bid in trace.pending:
        if kind in (_ARRIVAL, _BROADCAST):
            _adopt(trace.views[j], parent, height, bid, t)
    trace.pending = []

    best = max(v.tip_height for v in trace.views)
    tips = sorted({v.tip for v in trace.views if v.tip_height == best})
    if len(tips) == 1:
        tip = tips[0]
    else:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        tip = tips[rng.integers(len(tips))]

    path = trace.path_to(tip)
    counts = np.zeros(trace.mined_counts.size, dtype=np.int64)
    for b in path[1:]:
        counts[trace.miner[b]] += 1
    return MainChain(tuple(path), counts)


def _poisson_streams(
    params: SystemParams, horizon: float, seed: int
) -> list[np.ndarray]:
    """Independent Poisson point processes on [0, horizon], one per node."""
    rngs = _node_rngs(seed, params.n)
    streams = []
    for i in range(params.n):
        rate = params.effective_rates[i]
        if rate == 0:
            streams.append(np.empty(0))
            continue
        # draw in chunks until past the horizon
        pts = []
        t = 0.0
        expected = max(16, int(rate * horizon * 1.2) + 16)
        while t <= horizon:
            gaps = rngs[i].exponential(1.0 / rate, size=expected)
            arr = t + np.cumsum(gaps)
            pts.append(arr)
            t = arr[-1]
        pts = np.concatenate(pts)
        streams.append(pts[pts <= horizon])
    return streams


def _p2p_from_streams(
    params: SystemParams, matrix: LatencyMatrix, streams, horizon: float, seed: int
) -> SimTrace:
    """P2P run where every stream point is a block discovery.

    Using the next raw Poisson point instead of a fresh exponential sample
    after each restart is statistically equivalent by the Markov property.
    """
    n = params.n
    lat = matrix.entries
    parent = [NO_MINER]
    height = [0]
    miner = [NO_MINER]
    mint_time = [0.0]
    views = [NodeView(i) for i in range(n)]
    mined = np.zeros(n, dtype=np.int64)

    heap: list[tuple] = []
    seq = 0
    for i in range(n):
        for t in streams[i]:
            heapq.heappush(heap, (float(t), seq, _MINT, i, 0))
            seq += 1

    pending: list[tuple] = []
    while heap:
        t, s, kind, i, bid = heapq.heappop(heap)
        if kind == _MINT:
            view = views[i]
            nb = len(parent)
            parent.append(view.tip)
            height.append(view.tip_height + 1)
            miner.append(i)
            mint_time.append(t)
            mined[i] += 1
            view.tip = nb
            view.tip_height = height[nb]
            for j in range(n):
                if j != i:
                    heapq.heappush(heap, (t + lat[i, j], seq, _ARRIVAL, j, nb))
                    seq += 1
        else:
            if t > horizon:
                pending.append((t, s, kind, i, bid))
                continue
            _adopt(views[i], parent, height, bid, t)

    pending.sort()
    return SimTrace(
        protocol="p2p",
        seed=seed,
        n_nodes=n,
        parent=parent,
        height=height,
        miner=miner,
        mint_time=mint_time,
        views=views,
        mined_counts=mined,
        stop_time=horizon,
        pending=pending,
    )


def _coordinated_from_streams(
    params: SystemParams, vector: LatencyVector, streams, horizon: float, seed: int
) -> SimTrace:
    """Coordinated run thinning the shared streams during pause windows.

    The protocol is replayed chronologically on the raw discovery times;
    points falling between a miner's discovery and the next coordinator
    message it receives are deleted, exactly reproducing the coupling that
    proves the coordinated chain never beats the P2P one.
    """
    n = params.n
    lat = vector.entries
    parent = [NO_MINER]
    height = [0]
    miner = [NO_MINER]
    mint_time = [0.0]
    views = [NodeView(i) for i in range(n)]
    coord = NodeView(n)
    mined = np.zeros(n, dtype=np.int64)
    ptr = [0] * n  # next unconsumed stream point per miner
    mining = [False] * n  # whether a mint event for the miner is in the heap

    heap: list[tuple] = []
    seq = 0

    def schedule_next(i: int, resume: float) -> None:
        nonlocal seq
        s = streams[i]
        k = ptr[i]
        while k < len(s) and s[k] < resume:
            k += 1  # points during the pause window are deleted
        ptr[i] = k
        if k < len(s):
            heapq.heappush(heap, (float(s[k]), seq, _MINT, i, 0))
            seq += 1
            mining[i] = True

    for i in range(n):
        schedule_next(i, 0.0)

    pending: list[tuple] = []
    while heap:
        t, s_, kind, i, bid = heapq.heappop(heap)
        if kind == _MINT:
            view = views[i]
            nb = len(parent)
            parent.append(view.tip)
            height.append(view.tip_height + 1)
            miner.append(i)
            mint_time.append(t)
            mined[i] += 1
            ptr[i] += 1  # consume this point; miner now pauses
            mining[i] = False
            heapq.heappush(heap, (t + lat[i], seq, _COORD_RECV, i, nb))
            seq += 1
        elif kind == _COORD_RECV:
            if t > horizon:
                continue
            if parent[bid] == coord.tip:
                coord.tip = bid
                coord.tip_height = height[bid]
                for j in range(n):
                    heapq.heappush(heap, (t + lat[j], seq, _BROADCAST, j, bid))
                    seq += 1
        else:  # _BROADCAST
            if t > horizon:
                pending.append((t, s_, kind, i, bid))
                continue
            view = views[i]
            if height[bid] > view.tip_height:
                view.tip = bid
                view.tip_height = height[bid]
            # a broadcast is the "next message from the coordinator": a paused
            # miner resumes here; a mining miner keeps its scheduled point
            # (its eventual block simply extends the updated tip).
            if params.effective_rates[i] > 0 and not mining[i]:
                schedule_next(i, t)

    pending.sort()
    return SimTrace(
        protocol="coordinated",
        seed=seed,
        n_nodes=n,
        parent=parent,
        height=height,
        miner=miner,
        mint_time=mint_time,
        views=views + [coord],
        mined_counts=mined,
        stop_time=horizon,
        pending=pending,
    )


def run_coupled(
    params: SystemParams,
    matrix: LatencyMatrix,
    vector: LatencyVector,
    horizon: float,
    seed: int,
) -> tuple[SimTrace, SimTrace]:
    """Run both protocols on the same Poisson discovery streams.

    Requires the pairwise delays to be no larger than the relayed delays
    (l_ij <= l_i + l_j); refuses to run otherwise. The returned pair
    satisfies, for this realization, coordinated main-chain length <= P2P
    main-chain length; a violation raises, signalling an engine bug.
    """
    _require_valid(params, matrix, vector)
    if params.miners().size == 0:
        raise InvariantViolation("no miner has positive capacity")
    streams = _poisson_streams(params, horizon, seed)
    p2p = _p2p_from_streams(params, matrix, streams, horizon, seed)
    coord = _coordinated_from_streams(params, vector, streams, horizon, seed)
    len_p2p = finalize_chain(p2p, seed).length
    len_coord = finalize_chain(coord, seed).length
    if len_coord > len_p2p:
        raise AssertionError(
            f"coupling dominance violated: coordinated={len_coord} "
            f"> p2p={len_p2p} (engine bug)"
        )
    return p2p, coord
