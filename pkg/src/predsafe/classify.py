"""Scene classification: agent-density bins, road-geometry test, partition.

Geometry is decided by cumulative heading change: a polyline counts as
curved when the summed turn angle over some contiguous stretch of bounded
arc length exceeds a threshold.  This is robust to polyline sampling
density, unlike pointwise curvature estimates.  When a semantic map is
present the test runs on lane centerlines near the agents; otherwise it
falls back to the agents' own tracks, so map-free corpora partition the
same way.
"""

from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .scene_model import (
    DensityLevel,
    GeometryType,
    MIN_POINT_SEPARATION,
    Scene,
    TrajPoint,
    as_xy_array,
)

DEFAULT_DENSITY_BINS: tuple[tuple[int, int | None], ...] = ((1, 2), (2, 4), (4, 9), (9, None))
DEFAULT_CURVATURE_THRESHOLD_DEG = 15.0
DEFAULT_CURVATURE_WINDOW_M = 20.0
DEFAULT_ROI_RADIUS_M = 30.0


@dataclass(frozen=True)
class ClassifyConfig:
    """Parameters of the density and geometry classifiers.

    ``density_bins`` are four half-open integer ranges ``[lo, hi)`` over the
    agent count (``hi`` of ``None`` means unbounded); they must be ordered,
    disjoint, and cover every count >= 1.
    """

    density_bins: tuple[tuple[int, int | None], ...] = DEFAULT_DENSITY_BINS
    curvature_threshold_deg: float = DEFAULT_CURVATURE_THRESHOLD_DEG
    curvature_window_m: float = DEFAULT_CURVATURE_WINDOW_M
    roi_radius_m: float = DEFAULT_ROI_RADIUS_M

    def __post_init__(self):
        bins = tuple((int(lo), None if hi is None else int(hi)) for lo, hi in self.density_bins)
        object.__setattr__(self, "density_bins", bins)
        if len(bins) != len(DensityLevel):
            raise ValueError(f"need {len(DensityLevel)} density bins, got {len(bins)}")
        if bins[0][0] != 1:
            raise ValueError("density bins must start at agent count 1")
        for i, (lo, hi) in enumerate(bins):
            last = i == len(bins) - 1
            if last:
                if hi is not None:
                    raise ValueError("last density bin must be unbounded")
            else:
                if hi is None or hi <= lo:
                    raise ValueError(f"density bin {i} must satisfy lo < hi")
                if bins[i + 1][0] != hi:
                    raise ValueError("density bins must be contiguous")
        for name in ("curvature_threshold_deg", "curvature_window_m", "roi_radius_m"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class SceneClassification:
    """Per-scene classification record with the geometry diagnostic."""

    scene_id: str
    agent_count: int
    rho: DensityLevel
    tau: GeometryType
    heading_change_deg: float


@dataclass(frozen=True)
class Partition:
    """Disjoint assignment of every scene to one (density, geometry) cell."""

    cells: dict[tuple[DensityLevel, GeometryType], tuple[str, ...]]
    by_scene: dict[str, SceneClassification]

    @staticmethod
    def from_classifications(records: Iterable[SceneClassification]) -> "Partition":
        ordered = sorted(records, key=lambda r: r.scene_id)
        by_scene: dict[str, SceneClassification] = {}
        cells: dict[tuple[DensityLevel, GeometryType], list[str]] = {
            (rho, tau): [] for rho in DensityLevel for tau in GeometryType
        }
        for rec in ordered:
            if rec.scene_id in by_scene:
                raise ValueError(f"duplicate scene_id {rec.scene_id!r}")
            by_scene[rec.scene_id] = rec
            cells[(rec.rho, rec.tau)].append(rec.scene_id)
        return Partition(
            cells={key: tuple(ids) for key, ids in cells.items()},
            by_scene=by_scene,
        )

    def scene_ids(self, rho: DensityLevel | None = None, tau: GeometryType | None = None) -> tuple[str, ...]:
        """Scene ids in the cell(s) matching the given axes (None = all)."""
        out: list[str] = []
        for (r, t), ids in self.cells.items():
            if (rho is None or r == rho) and (tau is None or t == tau):
                out.extend(ids)
        return tuple(sorted(out))


def classify_density(scene: Scene, cfg: ClassifyConfig) -> DensityLevel:
    """Bin the scene by its agent count; bins cover every count >= 1."""
    count = len(scene.agents)
    levels = list(DensityLevel)
    for (lo, hi), level in zip(cfg.density_bins, levels):
        if count >= lo and (hi is None or count < hi):
            return level
    raise ValueError(f"agent count {count} not covered by density bins")


def _collapse_duplicates(coords: np.ndarray) -> np.ndarray:
    if len(coords) < 2:
        return coords
    keep = [0]
    for i in range(1, len(coords)):
        if np.hypot(*(coords[i] - coords[keep[-1]])) > MIN_POINT_SEPARATION:
            keep.append(i)
    return coords[keep]


def heading_change_deg(polyline: Sequence[TrajPoint] | np.ndarray, window_m: float) -> float:
    """Maximum absolute cumulative heading change inside an arc-length window.

    Consecutive duplicate points are collapsed first.  Over every contiguous
    run of segments whose summed length is <= ``window_m``, the signed turn
    angles at the run's interior vertices are accumulated; the largest
    absolute value over all runs is returned, in degrees.

    Raises ``ValueError`` for a degenerate polyline (< 2 distinct points).
    """
    if window_m <= 0:
        raise ValueError("window_m must be > 0")
    if isinstance(polyline, np.ndarray):
        coords = np.asarray(polyline, dtype=np.float64)
    else:
        seq = list(polyline)
        if seq and isinstance(seq[0], TrajPoint):
            coords = as_xy_array(seq)
        else:
            coords = np.asarray(seq, dtype=np.float64)
    coords = _collapse_duplicates(coords.reshape(-1, 2))
    if len(coords) < 2:
        raise ValueError("degenerate polyline: fewer than 2 distinct points")

    deltas = np.diff(coords, axis=0)
    lengths = np.hypot(deltas[:, 0], deltas[:, 1])
    m = len(deltas)
    if m == 1:
        return 0.0

    headings = np.arctan2(deltas[:, 1], deltas[:, 0])
    turns = np.diff(headings)
    turns = (turns + math.pi) % (2 * math.pi) - math.pi  # wrap to [-pi, pi)

    # cum[a..b] = A[b] - A[a]; run length = P[b+1] - P[a].
    cum_turn = np.concatenate(([0.0], np.cumsum(turns)))  # len m
    cum_len = np.concatenate(([0.0], np.cumsum(lengths)))  # len m + 1

    best = 0.0
    a_min = 0
    min_dq: deque[int] = deque()
    max_dq: deque[int] = deque()
    for b in range(m):
        while min_dq and cum_turn[min_dq[-1]] >= cum_turn[b]:
            min_dq.pop()
        min_dq.append(b)
        while max_dq and cum_turn[max_dq[-1]] <= cum_turn[b]:
            max_dq.pop()
        max_dq.append(b)
        while a_min <= b and cum_len[b + 1] - cum_len[a_min] > window_m:
            a_min += 1
        while min_dq and min_dq[0] < a_min:
            min_dq.popleft()
        while max_dq and max_dq[0] < a_min:
            max_dq.popleft()
        if min_dq:
            best = max(best, cum_turn[b] - cum_turn[min_dq[0]], cum_turn[max_dq[0]] - cum_turn[b])
    return math.degrees(best)


def _roi_lane_polylines(scene: Scene, cfg: ClassifyConfig) -> list[np.ndarray]:
    anchors = np.array([[a.history[-1].x, a.history[-1].y] for a in scene.agents if a.history])
    if scene.map is None or not scene.map.lanes or len(anchors) == 0:
        return []
    out = []
    for lane in scene.map.lanes:
        pts = as_xy_array(lane.centerline)
        d2 = ((pts[:, None, :] - anchors[None, :, :]) ** 2).sum(axis=2)
        if d2.min() <= cfg.roi_radius_m**2:
            out.append(pts)
    return out


def classify_geometry(scene: Scene, cfg: ClassifyConfig) -> tuple[GeometryType, float]:
    """Classify road geometry, returning (type, max heading change seen).

    With a map: every lane centerline having a point within ``roi_radius_m``
    of any agent's last observed position is tested.  Without a map, or when
    no lane falls in the ROI, each agent's concatenated history+future track
    is tested instead.  Curved means the diagnostic strictly exceeds the
    threshold; a tie classifies as straight.
    """
    polylines = _roi_lane_polylines(scene, cfg)
    if not polylines:
        polylines = [
            as_xy_array(tuple(a.history) + tuple(a.future))
            for a in scene.agents
            if len(a.history) + len(a.future) >= 2
        ]
    diagnostic = 0.0
    for poly in polylines:
        try:
            diagnostic = max(diagnostic, heading_change_deg(poly, cfg.curvature_window_m))
        except ValueError:
            continue  # stationary agent; contributes nothing
    tau = GeometryType.CURVED if diagnostic > cfg.curvature_threshold_deg else GeometryType.STRAIGHT
    return tau, diagnostic


def classify_scene(scene: Scene, cfg: ClassifyConfig) -> SceneClassification:
    rho = classify_density(scene, cfg)
    tau, diag = classify_geometry(scene, cfg)
    return SceneClassification(scene.scene_id, len(scene.agents), rho, tau, diag)


def partition(scenes: Sequence[Scene], cfg: ClassifyConfig) -> Partition:
    """Assign every scene to exactly one (density, geometry) cell.

    Scenes are processed in lexicographic scene_id order; duplicate ids are
    an error.  The result's cells are pairwise disjoint and their union is
    the input set.
    """
    ids = [s.scene_id for s in scenes]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"duplicate scene_id(s): {dupes}")
    ordered = sorted(scenes, key=lambda s: s.scene_id)
    return Partition.from_classifications(classify_scene(s, cfg) for s in ordered)


def classification_table(part: Partition) -> str:
    """Render the per-scene classification as CSV (full-precision diagnostic)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["scene_id", "agent_count", "rho", "tau", "heading_change_deg"])
    for scene_id in sorted(part.by_scene):
        rec = part.by_scene[scene_id]
        writer.writerow(
            [rec.scene_id, rec.agent_count, rec.rho.value, rec.tau.value, repr(rec.heading_change_deg)]
        )
    return buf.getvalue()
