"""Named experiment configurations and geography-to-latency conversion.

Latency between two locations is the great-circle distance on a sphere,
divided by the signal speed in optical fiber (light slowed by the
refractive index of silica, 1.5). This is deliberately optimistic: it
ignores routing detours, queueing, and processing delays.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .engine import StopCondition
from .params import (
    InvariantViolation,
    LatencyMatrix,
    LatencyVector,
    SystemParams,
    TopologyError,
    induced_matrix,
    lambda_ratio,
    normalize_capacities,
    validate_topology,
)

EARTH_RADIUS_M = 6371.0e3
SPEED_OF_LIGHT_M_S = 299_792_458.0
REFRACTIVE_INDEX_GLASS = 1.5
FIBER_SPEED_M_S = SPEED_OF_LIGHT_M_S / REFRACTIVE_INDEX_GLASS

# mining hotspots used for the five-miner Bitcoin-like deployment
BITCOIN_CITIES = (
    ("Linthal", 46.9167, 8.9833),
    ("Moscow", 55.7558, 37.6173),
    ("Reykjavik", 64.1466, -21.9426),
    ("Sichuan", 30.5728, 104.0668),
    ("Washington D.C.", 38.9072, -77.0369),
)


class ConfigError(ValueError):
    """Raised for malformed scenario configuration files."""


@dataclass(frozen=True)
class GeoPoint:
    latitude: float
    longitude: float
    label: str = ""

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ConfigError(f"latitude out of range: {self.latitude}")
        if not -180.0 < self.longitude <= 180.0:
            raise ConfigError(f"longitude out of range: {self.longitude}")


def geodesic_latency(a: GeoPoint, b: GeoPoint) -> float:
    """One-way delay in seconds over an optimistic fiber path between points."""
    la1, lo1 = math.radians(a.latitude), math.radians(a.longitude)
    la2, lo2 = math.radians(b.latitude), math.radians(b.longitude)
    s = (
        math.sin((la2 - la1) / 2.0) ** 2
        + math.cos(la1) * math.cos(la2) * math.sin((lo2 - lo1) / 2.0) ** 2
    )
    distance = 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(s))
    return distance / FIBER_SPEED_M_S


def latency_matrix_from_points(points: list[GeoPoint]) -> LatencyMatrix:
    """Pairwise geodesic latency matrix over labeled points.

    Great-circle distances satisfy the triangle inequality; tiny violations
    from floating-point roundoff are clamped to the two-hop path.
    """
    n = len(points)
    m = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            m[i, j] = m[j, i] = geodesic_latency(points[i], points[j])
    if n >= 3:
        through = (m[:, :, None] + m[None, :, :]).min(axis=1)
        rel = np.where(through > 0, (m - through) / np.maximum(through, 1e-300), 0.0)
        if np.any(rel > 1e-9):
            raise InvariantViolation("geodesic matrix violates the triangle inequality")
        np.minimum(m, through, out=m)
        np.fill_diagonal(m, 0.0)
        m = (m + m.T) / 2.0
    return LatencyMatrix(m)


@dataclass
class ScenarioConfig:
    """A fully resolved experiment configuration.

    Either or both of ``matrix`` (P2P) and ``vector`` (coordinated) are set
    depending on the protocol. ``meta`` carries derived bookkeeping values
    (capacity Gini, mean latency, how lambda was computed) that runners copy
    into output manifests.
    """

    name: str
    protocol: str  # "p2p" | "coordinated" | "both"
    params: SystemParams
    matrix: LatencyMatrix | None = None
    vector: LatencyVector | None = None
    positions: np.ndarray | None = None  # planar miner coordinates, if any
    points: list[GeoPoint] | None = None
    stop: StopCondition = field(default_factory=lambda: StopCondition.blocks(100_000))
    seeds: tuple[int, ...] = tuple(range(10))
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.protocol not in ("p2p", "coordinated", "both"):
            raise ConfigError(f"unknown protocol {self.protocol!r}")
        if self.protocol in ("p2p", "both") and self.matrix is None:
            raise ConfigError("p2p protocol needs a latency matrix")
        if self.protocol in ("coordinated", "both") and self.vector is None:
            raise ConfigError("coordinated protocol needs coordinator latencies")
        report = validate_topology(self.params, self.matrix, self.vector)
        if not report.ok:
            raise InvariantViolation(
                "invalid scenario topology: " + "; ".join(report.violations)
            )

    @property
    def lam(self) -> float:
        """Hardness-to-mean-latency ratio of this scenario.

        For coordinated-only scenarios the mean latency comes from the
        matrix induced by relaying through the coordinator; this choice is
        recorded in ``meta['lambda_basis']``.
        """
        matrix = self.matrix
        if matrix is None:
            matrix = induced_matrix(self.vector)
        return lambda_ratio(self.params, matrix)

    def with_hardness(self, hardness: float) -> "ScenarioConfig":
        """Copy of this scenario with a different puzzle hardness."""
        return ScenarioConfig(
            name=self.name,
            protocol=self.protocol,
            params=SystemParams(self.params.capacities.copy(), hardness),
            matrix=self.matrix,
            vector=self.vector,
            positions=self.positions,
            points=self.points,
            stop=self.stop,
            seeds=self.seeds,
            meta=dict(self.meta),
        )

    def with_lambda(self, lam: float) -> "ScenarioConfig":
        """Copy with hardness chosen so the scenario's lambda equals ``lam``."""
        matrix = self.matrix if self.matrix is not None else induced_matrix(self.vector)
        return self.with_hardness(lam * matrix.mean_latency)


def _gamma_h(caps: np.ndarray) -> float:
    from .metrics import gini

    return gini(caps[caps > 0])


def build_two_miner(
    split,
    inter_latency: float,
    observers=None,
    coordinator_fraction: float = 0.5,
    hardness: float = 1.0,
    protocol: str = "both",
) -> ScenarioConfig:
    """Two miners a fixed delay apart, optional coordinator on the segment.

    ``observers`` are fractions along the segment from miner 1 to miner 2;
    each becomes a zero-capacity node. The coordinated variant places the
    coordinator at ``coordinator_fraction`` along the segment, so the two
    coordinator latencies sum to the inter-miner latency.
    """
    if inter_latency < 0:
        raise ConfigError("inter-miner latency must be >= 0")
    caps = list(normalize_capacities(split))
    if len(caps) != 2:
        raise ConfigError("exactly two capacity weights required")
    obs = list(observers or [])
    pos = np.array([0.0, inter_latency] + [f * inter_latency for f in obs])
    n = pos.size
    m = np.abs(pos[:, None] - pos[None, :])
    caps = np.array(caps + [0.0] * len(obs))
    cpos = coordinator_fraction * inter_latency
    vec = np.abs(pos - cpos)
    params = SystemParams(caps, hardness)
    return ScenarioConfig(
        name="two-miner",
        protocol=protocol,
        params=params,
        matrix=LatencyMatrix(m),
        vector=LatencyVector(vec),
        positions=np.column_stack([pos, np.zeros(n)]),
        meta={
            "gamma_h": _gamma_h(params.capacities),
            "lambda_basis": "p2p matrix",
        },
    )


def build_three_miner(
    weights,
    side: float = 1.0,
    edges=None,
    observers=None,
    hardness: float = 1.0,
    protocol: str = "both",
) -> ScenarioConfig:
    """Three miners on a triangle, coordinator at the circumcenter-free centroid.

    By default the triangle is equilateral with the given side; ``edges``
    overrides the three pairwise latencies (l12, l13, l23), in which case
    the miners are laid out in the plane accordingly.
    """
    caps = normalize_capacities(weights)
    if caps.size != 3:
        raise ConfigError("exactly three capacity weights required")
    if edges is None:
        edges = (side, side, side)
    l12, l13, l23 = (float(e) for e in edges)
    # planar embedding: m1 at origin, m2 on the x axis
    x3 = (l12**2 + l13**2 - l23**2) / (2.0 * l12) if l12 > 0 else 0.0
    y3sq = l13**2 - x3**2
    if y3sq < -1e-12 * max(l13, 1.0) ** 2:
        raise ConfigError("edge lengths do not embed in the plane")
    y3 = math.sqrt(max(y3sq, 0.0))
    pos = np.array([[0.0, 0.0], [l12, 0.0], [x3, y3]])
    n_obs = len(observers or [])
    if n_obs:
        raise ConfigError("observers are not supported in the three-miner layout")
    m = np.zeros((3, 3))
    for i in range(3):
        for j in range(i + 1, 3):
            m[i, j] = m[j, i] = float(np.hypot(*(pos[i] - pos[j])))
    centroid = pos.mean(axis=0)
    vec = np.hypot(*(pos - centroid).T)
    params = SystemParams(caps, hardness)
    return ScenarioConfig(
        name="three-miner",
        protocol=protocol,
        params=params,
        matrix=LatencyMatrix(m),
        vector=LatencyVector(vec),
        positions=pos,
        meta={
            "gamma_h": _gamma_h(params.capacities),
            "lambda_basis": "p2p matrix",
        },
    )


def build_bitcoin_approx(weights=None, hardness: float = 600.0) -> ScenarioConfig:
    """Five miners in real mining-hotspot cities with geodesic latencies."""
    if weights is None:
        weights = [1.0] * 5
    caps = normalize_capacities(weights)
    if caps.size != len(BITCOIN_CITIES):
        raise ConfigError(f"exactly {len(BITCOIN_CITIES)} capacity weights required")
    points = [GeoPoint(lat, lon, name) for name, lat, lon in BITCOIN_CITIES]
    matrix = latency_matrix_from_points(points)
    params = SystemParams(caps, hardness)
    return ScenarioConfig(
        name="bitcoin-approx",
        protocol="p2p",
        params=params,
        matrix=matrix,
        points=points,
        meta={
            "gamma_h": _gamma_h(params.capacities),
            "mean_latency_s": matrix.mean_latency,
            "lambda_basis": "p2p matrix",
        },
    )


def default_capitals_catalog() -> Path:
    return Path(str(resources.files("powsim").joinpath("data/capitals.csv")))


def load_catalog(path) -> list[GeoPoint]:
    """Parse a ``label,latitude,longitude`` CSV of locations."""
    points = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != [
            "label",
            "latitude",
            "longitude",
        ]:
            raise ConfigError(f"{path}: expected header 'label,latitude,longitude'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ConfigError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            label, lat, lon = row
            try:
                point = GeoPoint(float(lat), float(lon), label.strip())
            except (ValueError, ConfigError) as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
            points.append(point)
    if not points:
        raise ConfigError(f"{path}: catalog is empty")
    return points


def build_world_capitals(
    catalog=None, subset: int | None = None, hardness: float = 1.0
) -> ScenarioConfig:
    """Equal-capacity miners placed in world capital cities.

    ``subset`` keeps the first N catalog entries (catalog order is the
    deterministic selection rule).
    """
    path = catalog if catalog is not None else default_capitals_catalog()
    points = load_catalog(path)
    if subset is not None:
        if subset > len(points):
            raise ConfigError(
                f"subset {subset} exceeds catalog size {len(points)}"
            )
        points = points[:subset]
    matrix = latency_matrix_from_points(points)
    params = SystemParams(np.ones(len(points)), hardness)
    return ScenarioConfig(
        name=f"world-capitals-{len(points)}",
        protocol="p2p",
        params=params,
        matrix=matrix,
        points=points,
        meta={
            "gamma_h": 0.0,
            "mean_latency_s": matrix.mean_latency,
            "lambda_basis": "p2p matrix",
        },
    )


def _schema() -> dict:
    text = resources.files("powsim").joinpath("data/scenario.schema.json").read_text()
    return json.loads(text)


def load_config(path, strict: bool = True) -> ScenarioConfig:
    """Load and resolve a YAML scenario file.

    In strict mode (the default) unknown keys are rejected, which catches
    typos before they silently change an experiment.
    """
    with open(path, encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    schema = _schema()
    if not strict:
        schema = dict(schema)
        schema.pop("additionalProperties", None)
    try:
        jsonschema.validate(raw, schema)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"{path}: {exc.message}") from exc
    return resolve_config(raw)


def resolve_config(raw: dict) -> ScenarioConfig:
    """Turn a validated config mapping into a ScenarioConfig."""
    topo = raw["topology"]
    kind = topo["kind"]
    protocol = raw["protocol"]
    caps = raw["capacities"]
    hardness = raw.get("hardness", 1.0)

    if kind == "two_miner":
        cfg = build_two_miner(
            caps,
            topo.get("inter_latency", 1.0),
            observers=topo.get("observers"),
            coordinator_fraction=topo.get("coordinator_fraction", 0.5),
            hardness=hardness,
            protocol=protocol,
        )
    elif kind == "three_miner":
        cfg = build_three_miner(
            caps,
            side=topo.get("side", 1.0),
            edges=topo.get("edges"),
            hardness=hardness,
            protocol=protocol,
        )
    elif kind == "bitcoin":
        cfg = build_bitcoin_approx(caps, hardness=hardness)
    elif kind == "capitals":
        cfg = build_world_capitals(
            catalog=topo.get("catalog"),
            subset=topo.get("subset"),
            hardness=hardness,
        )
        if not np.allclose(caps, caps[0] if caps else 1.0):
            raise ConfigError("capital-city scenarios use equal capacities")
    elif kind == "geo":
        points = [
            GeoPoint(p["latitude"], p["longitude"], p["label"])
            for p in topo.get("points", [])
        ]
        if len(points) != len(caps):
            raise ConfigError("one capacity weight per geographic point required")
        matrix = latency_matrix_from_points(points)
        cfg = ScenarioConfig(
            name=raw["name"],
            protocol="p2p",
            params=SystemParams(normalize_capacities(caps), hardness),
            matrix=matrix,
            points=points,
            meta={"lambda_basis": "p2p matrix"},
        )
    elif kind == "matrix":
        entries = topo.get("entries")
        if entries is None:
            raise ConfigError("matrix topology needs 'entries'")
        matrix = LatencyMatrix(np.asarray(entries, dtype=float))
        vector = None
        if "coordinator_latencies" in raw:
            vector = LatencyVector(np.asarray(raw["coordinator_latencies"], float))
        cfg = ScenarioConfig(
            name=raw["name"],
            protocol=protocol,
            params=SystemParams(normalize_capacities(caps), hardness),
            matrix=matrix,
            vector=vector,
            meta={"lambda_basis": "p2p matrix"},
        )
    else:  # pragma: no cover - schema forbids this
        raise ConfigError(f"unknown topology kind {kind!r}")

    cfg.name = raw["name"]
    cfg.protocol = protocol
    if "coordinator_latencies" in raw and kind != "matrix":
        cfg.vector = LatencyVector(np.asarray(raw["coordinator_latencies"], float))
    if cfg.protocol in ("coordinated", "both") and cfg.vector is None:
        raise ConfigError("coordinated protocol needs 'coordinator_latencies'")

    if "lambda_target" in raw:
        if "hardness" in raw:
            raise ConfigError("'hardness' and 'lambda_target' are mutually exclusive")
        cfg = cfg.with_lambda(raw["lambda_target"])
        cfg.meta["lambda_target"] = raw["lambda_target"]
        if cfg.matrix is None:
            cfg.meta["lambda_basis"] = "matrix induced by coordinator latencies"

    stop = raw.get("stop", {"blocks": 100_000})
    if "blocks" in stop:
        cfg.stop = StopCondition.blocks(stop["blocks"])
    else:
        cfg.stop = StopCondition.horizon(stop["horizon"])

    seeds = raw.get("seeds", {"count": 10})
    if isinstance(seeds, dict):
        base = seeds.get("base", 0)
        cfg.seeds = tuple(range(base, base + seeds["count"]))
    else:
        cfg.seeds = tuple(seeds)

    cfg.__post_init__()  # re-validate protocol/topology after overrides
    return cfg
