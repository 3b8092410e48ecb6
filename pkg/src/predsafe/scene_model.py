"""Core domain types for the stratified evaluation harness.

Everything here is an immutable value object: driving scenes (agent tracks
plus an optional semantic map), prediction sample sets, the stratum index
(semantic condition x agent density x road geometry), and the per-agent /
per-stratum result records.  Construction either enforces an invariant
outright (raising ``ValueError``) or leaves it to :func:`validate_scene`,
which reports violations as data so callers can surface all of them at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import total_ordering
from typing import Iterable, Mapping, Sequence

import numpy as np

# Horizon defaults; configurable at the CLI, fixed here only as defaults.
DEFAULT_HISTORY_LEN = 4
DEFAULT_FUTURE_LEN = 6
DEFAULT_DT = 0.5
DEFAULT_K = 20

# Consecutive polyline points closer than this (metres) count as duplicates.
MIN_POINT_SEPARATION = 1e-9


@total_ordering
class _OrderedEnum(Enum):
    """Enum with a total order given by declaration order."""

    def __lt__(self, other):
        if self.__class__ is other.__class__:
            members = list(self.__class__)
            return members.index(self) < members.index(other)
        return NotImplemented

    @property
    def order(self) -> int:
        return list(self.__class__).index(self)


class SemanticCondition(_OrderedEnum):
    """Whether the model saw the semantic map when predicting."""

    WITH_MAP = "with_map"
    WITHOUT_MAP = "without_map"


class DensityLevel(_OrderedEnum):
    """Agent-count bins, ordered sparsest to densest."""

    SINGLE = "single"
    FEW = "few"
    MEDIUM = "medium"
    MANY = "many"


class GeometryType(_OrderedEnum):
    STRAIGHT = "straight"
    CURVED = "curved"


def condition_from_str(value: str) -> SemanticCondition:
    for member in SemanticCondition:
        if member.value == value:
            return member
    raise ValueError(f"unknown semantic condition {value!r}")


@dataclass(frozen=True)
class TrajPoint:
    """A planar position in metres, in a scene-consistent map frame."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"trajectory point must be finite, got ({self.x}, {self.y})")


def as_xy_array(points: Sequence[TrajPoint]) -> np.ndarray:
    """Convert a point sequence to an (N, 2) float64 array."""
    return np.asarray([(p.x, p.y) for p in points], dtype=np.float64).reshape(-1, 2)


def from_xy_array(coords: np.ndarray) -> tuple[TrajPoint, ...]:
    return tuple(TrajPoint(float(x), float(y)) for x, y in np.asarray(coords).reshape(-1, 2))


def _as_point_tuple(points: Iterable) -> tuple[TrajPoint, ...]:
    out = []
    for p in points:
        if isinstance(p, TrajPoint):
            out.append(p)
        else:
            x, y = p
            out.append(TrajPoint(float(x), float(y)))
    return tuple(out)


@dataclass(frozen=True)
class AgentTrack:
    """One agent's observed history and ground-truth future."""

    agent_id: str
    history: tuple[TrajPoint, ...]
    future: tuple[TrajPoint, ...]

    def __post_init__(self):
        object.__setattr__(self, "history", _as_point_tuple(self.history))
        object.__setattr__(self, "future", _as_point_tuple(self.future))


@dataclass(frozen=True)
class Lane:
    lane_id: str
    centerline: tuple[TrajPoint, ...]

    def __post_init__(self):
        object.__setattr__(self, "centerline", _as_point_tuple(self.centerline))


@dataclass(frozen=True)
class SemanticMap:
    lanes: tuple[Lane, ...]

    def __post_init__(self):
        object.__setattr__(self, "lanes", tuple(self.lanes))


@dataclass(frozen=True)
class Scene:
    """One evaluation sample: agent tracks plus an optional semantic map.

    Scene-level consistency rules (shared horizon lengths, unique agent ids,
    positive dt) are deliberately not enforced here so that
    :func:`validate_scene` can report them as violations.
    """

    scene_id: str
    dt: float
    agents: tuple[AgentTrack, ...]
    map: SemanticMap | None = None

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))

    @property
    def history_len(self) -> int:
        return len(self.agents[0].history) if self.agents else 0

    @property
    def future_len(self) -> int:
        return len(self.agents[0].future) if self.agents else 0

    def agent(self, agent_id: str) -> AgentTrack:
        for a in self.agents:
            if a.agent_id == agent_id:
                return a
        raise KeyError(agent_id)


@dataclass(frozen=True)
class StratumKey:
    """Index of one scenario subset: (semantic condition, density, geometry)."""

    sigma: SemanticCondition
    rho: DensityLevel
    tau: GeometryType

    def sort_key(self) -> tuple[int, int, int]:
        return (self.sigma.order, self.rho.order, self.tau.order)

    def __lt__(self, other: "StratumKey") -> bool:
        if not isinstance(other, StratumKey):
            return NotImplemented
        return self.sort_key() < other.sort_key()


@dataclass(frozen=True)
class PredictionSet:
    """K sampled future trajectories per agent, for one scene and condition.

    Enforced at construction: K >= 1 and identical across agents, and all
    samples within the set share one trajectory length.
    """

    scene_id: str
    model_id: str
    condition: SemanticCondition
    per_agent: Mapping[str, tuple[tuple[TrajPoint, ...], ...]]

    def __post_init__(self):
        converted: dict[str, tuple[tuple[TrajPoint, ...], ...]] = {}
        k = None
        horizon = None
        for agent_id, samples in self.per_agent.items():
            samples = tuple(_as_point_tuple(s) for s in samples)
            if len(samples) < 1:
                raise ValueError(f"agent {agent_id!r}: prediction set needs K >= 1 samples")
            if k is None:
                k = len(samples)
            elif len(samples) != k:
                raise ValueError(
                    f"agent {agent_id!r}: non-uniform K ({len(samples)} != {k})"
                )
            for s in samples:
                if horizon is None:
                    horizon = len(s)
                elif len(s) != horizon:
                    raise ValueError(
                        f"agent {agent_id!r}: sample length {len(s)} != {horizon}"
                    )
            converted[agent_id] = samples
        object.__setattr__(self, "per_agent", converted)

    @property
    def k(self) -> int:
        for samples in self.per_agent.values():
            return len(samples)
        return 0

    @property
    def horizon(self) -> int:
        for samples in self.per_agent.values():
            return len(samples[0])
        return 0


@dataclass(frozen=True)
class MetricRecord:
    """Per-agent displacement errors under one semantic condition."""

    scene_id: str
    agent_id: str
    condition: SemanticCondition
    ade: float
    fde: float

    def __post_init__(self):
        for name in ("ade", "fde"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class StratumReport:
    """One report row: a (density, geometry) group with both conditions side
    by side, as in the published tables.

    ``rho``/``tau`` of ``None`` mean "aggregated over that axis"; the overall
    row has both ``None``.  A zero-sample row carries no metric values --
    absence is reported explicitly, never as silent zeros.
    """

    rho: DensityLevel | None
    tau: GeometryType | None
    sample_size: int
    ade_o: float | None = None
    ade_w: float | None = None
    fde_o: float | None = None
    fde_w: float | None = None
    mie_a: float | None = None
    mie_f: float | None = None

    def __post_init__(self):
        if self.sample_size < 0:
            raise ValueError("sample_size must be >= 0")
        metric_fields = (self.ade_o, self.ade_w, self.fde_o, self.fde_w, self.mie_a, self.mie_f)
        if self.sample_size == 0:
            if any(v is not None for v in metric_fields):
                raise ValueError("zero-sample report rows must not carry metric values")
        else:
            if any(v is None for v in metric_fields):
                raise ValueError("non-empty report rows must carry all metric values")

    @property
    def group_label(self) -> str:
        if self.rho is None and self.tau is None:
            return "overall"
        if self.tau is None:
            return self.rho.value
        if self.rho is None:
            return self.tau.value
        return f"{self.rho.value}/{self.tau.value}"

    def sort_key(self) -> tuple[int, int]:
        return (
            -1 if self.rho is None else self.rho.order,
            -1 if self.tau is None else self.tau.order,
        )


@dataclass(frozen=True)
class Violation:
    """A named rule broken by a named field; data, not an exception."""

    field: str
    rule: str
    message: str

    def __str__(self) -> str:
        return f"{self.field}: {self.message} [{self.rule}]"


def validate_scene(
    scene: Scene,
    history_len: int = DEFAULT_HISTORY_LEN,
    future_len: int = DEFAULT_FUTURE_LEN,
) -> list[Violation]:
    """Check every Scene invariant, returning all violations found.

    An empty list means the scene is well formed for the given horizon
    lengths.  Violations are data so callers can report them in bulk.
    """
    out: list[Violation] = []
    if not (math.isfinite(scene.dt) and scene.dt > 0):
        out.append(Violation("dt", "dt_positive", f"dt must be > 0, got {scene.dt}"))
    if not scene.agents:
        out.append(Violation("agents", "min_agents", "scene must contain at least one agent"))

    seen_ids: set[str] = set()
    for i, agent in enumerate(scene.agents):
        prefix = f"agents[{i}]"
        if not agent.agent_id:
            out.append(Violation(f"{prefix}.agent_id", "agent_id_nonempty", "agent_id must be non-empty"))
        if agent.agent_id in seen_ids:
            out.append(
                Violation(
                    f"{prefix}.agent_id",
                    "agent_id_unique",
                    f"duplicate agent_id {agent.agent_id!r}",
                )
            )
        seen_ids.add(agent.agent_id)
        if len(agent.history) != history_len:
            out.append(
                Violation(
                    f"{prefix}.history",
                    "history_length",
                    f"history has {len(agent.history)} points, expected {history_len}",
                )
            )
        if len(agent.future) != future_len:
            out.append(
                Violation(
                    f"{prefix}.future",
                    "future_length",
                    f"future has {len(agent.future)} points, expected {future_len}",
                )
            )

    if scene.map is not None:
        seen_lanes: set[str] = set()
        for j, lane in enumerate(scene.map.lanes):
            prefix = f"map.lanes[{j}]"
            if lane.lane_id in seen_lanes:
                out.append(
                    Violation(
                        f"{prefix}.lane_id",
                        "lane_id_unique",
                        f"duplicate lane_id {lane.lane_id!r}",
                    )
                )
            seen_lanes.add(lane.lane_id)
            if len(lane.centerline) < 2:
                out.append(
                    Violation(
                        f"{prefix}.centerline",
                        "centerline_min_points",
                        f"centerline has {len(lane.centerline)} points, needs >= 2",
                    )
                )
            for p in range(1, len(lane.centerline)):
                a, b = lane.centerline[p - 1], lane.centerline[p]
                if math.hypot(b.x - a.x, b.y - a.y) <= MIN_POINT_SEPARATION:
                    out.append(
                        Violation(
                            f"{prefix}.centerline[{p}]",
                            "centerline_distinct_points",
                            "consecutive centerline points must be > 1e-9 m apart",
                        )
                    )
    return out
