"""Proof-of-work mining under network latency: simulation and exact analysis."""

__version__ = "0.1.0"

from .analytic import (
    AnalyticResult,
    best_coordinator_position,
    efficiency_coordinated,
    merge_equidistant,
    taubar,
    win_probabilities,
)
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
    EfficiencyReport,
    InstabilityReport,
    closeness_centrality,
    correlations,
    efficiency_from_trace,
    gini,
    instability,
)
from .params import (
    LatencyMatrix,
    LatencyVector,
    SystemParams,
    lambda_ratio,
    normalize_capacities,
    validate_topology,
)
from .scenarios import (
    GeoPoint,
    ScenarioConfig,
    build_bitcoin_approx,
    build_three_miner,
    build_two_miner,
    build_world_capitals,
    geodesic_latency,
    load_config,
)
