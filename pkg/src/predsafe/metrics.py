"""Displacement-error metrics, aggregation policies, and the MIE metric.

A prediction is K sampled trajectories per agent; by default the best
sample counts (min over K, taken independently for ADE and FDE, the common
convention for multi-modal predictors).  MIE relates the error without a
semantic map (``error_o``) to the error with one (``error_w``)::

    MIE = (error_o - error_w) / sqrt(normalizing_error)

with the normalizing error chosen by config: the without-map error (the
canonical form) or the with-map error (which reproduces the published
per-stratum tables).  Positive values indicate map dependency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from itertools import groupby
from typing import Mapping, Sequence

import numpy as np

from .classify import Partition
from .scene_model import (
    AgentTrack,
    DensityLevel,
    GeometryType,
    MetricRecord,
    PredictionSet,
    Scene,
    SemanticCondition,
    StratumReport,
    TrajPoint,
    as_xy_array,
)


class KAggregation(Enum):
    MIN_OVER_K = "min_over_k"
    MEAN_OVER_K = "mean_over_k"


class Weighting(Enum):
    AGENT = "agent"
    SCENE = "scene"


class MieDenominator(Enum):
    WITHOUT_MAP = "without_map"
    WITH_MAP = "with_map"


class Grouping(Enum):
    OVERALL = "overall"
    DENSITY = "density"
    GEOMETRY = "geometry"
    FULL = "full"


@dataclass(frozen=True)
class MetricConfig:
    k_aggregation: KAggregation = KAggregation.MIN_OVER_K
    weighting: Weighting = Weighting.AGENT
    mie_denominator: MieDenominator = MieDenominator.WITHOUT_MAP


@dataclass(frozen=True)
class AggregateError:
    """Aggregated ADE/FDE with the sample count behind it (agents or scenes)."""

    ade: float
    fde: float
    n: int


def _to_array(points, name: str) -> np.ndarray:
    if isinstance(points, np.ndarray):
        arr = np.asarray(points, dtype=np.float64)
    else:
        seq = list(points)
        if seq and isinstance(seq[0], TrajPoint):
            arr = as_xy_array(seq)
        elif seq and isinstance(seq[0], (list, tuple, np.ndarray)) and len(seq[0]) and isinstance(seq[0][0], TrajPoint):
            arr = np.asarray([as_xy_array(s) for s in seq], dtype=np.float64)
        else:
            arr = np.asarray(seq, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return arr


def displacement_errors(samples, truth, cfg: MetricConfig = MetricConfig()) -> tuple[float, float]:
    """Compute (ADE, FDE) of K sampled trajectories against the ground truth.

    Per sample k: ADE_k is the mean over timesteps of the Euclidean distance
    to the truth, FDE_k the distance at the final timestep.  The configured
    aggregation (min or mean over k) is applied to ADE and FDE independently,
    so they may come from different samples.
    """
    pred = _to_array(samples, "samples")
    gt = _to_array(truth, "truth")
    if gt.ndim != 2 or gt.shape[1] != 2 or gt.shape[0] < 1:
        raise ValueError(f"truth must be a (T, 2) trajectory with T >= 1, got shape {gt.shape}")
    if pred.ndim != 3 or pred.shape[0] < 1 or pred.shape[2] != 2:
        raise ValueError(f"samples must have shape (K, T, 2) with K >= 1, got {pred.shape}")
    if pred.shape[1] != gt.shape[0]:
        raise ValueError(
            f"trajectory length mismatch: samples have T={pred.shape[1]}, truth T={gt.shape[0]}"
        )
    dists = np.hypot(*(pred - gt[None, :, :]).transpose(2, 0, 1))  # (K, T)
    ade_k = dists.mean(axis=1)
    fde_k = dists[:, -1]
    if cfg.k_aggregation is KAggregation.MIN_OVER_K:
        return float(ade_k.min()), float(fde_k.min())
    return float(ade_k.mean()), float(fde_k.mean())


def scene_metrics(scene: Scene, preds: PredictionSet, cfg: MetricConfig = MetricConfig()) -> list[MetricRecord]:
    """One MetricRecord per predicted agent, in sorted agent_id order."""
    truths: dict[str, AgentTrack] = {a.agent_id: a for a in scene.agents}
    out: list[MetricRecord] = []
    for agent_id in sorted(preds.per_agent):
        if agent_id not in truths:
            raise ValueError(
                f"scene {scene.scene_id!r}: prediction for unknown agent {agent_id!r}"
            )
        try:
            ade, fde = displacement_errors(preds.per_agent[agent_id], truths[agent_id].future, cfg)
        except ValueError as e:
            raise ValueError(f"scene {scene.scene_id!r}, agent {agent_id!r}: {e}") from e
        out.append(MetricRecord(scene.scene_id, agent_id, preds.condition, ade, fde))
    return out


def aggregate(records: Sequence[MetricRecord], cfg: MetricConfig = MetricConfig()) -> AggregateError:
    """Aggregate per-agent records into one (ADE, FDE) pair.

    Agent weighting is a flat mean over records; scene weighting averages
    per-scene means.  Records are summed in sorted (scene_id, agent_id)
    order so results are bit-identical regardless of input order.
    """
    if not records:
        raise ValueError("cannot aggregate an empty record list")
    conditions = {r.condition for r in records}
    if len(conditions) > 1:
        raise ValueError(f"mixed conditions in one aggregation: {sorted(c.value for c in conditions)}")
    ordered = sorted(records, key=lambda r: (r.scene_id, r.agent_id))
    if cfg.weighting is Weighting.AGENT:
        n = len(ordered)
        return AggregateError(
            ade=math.fsum(r.ade for r in ordered) / n,
            fde=math.fsum(r.fde for r in ordered) / n,
            n=n,
        )
    ade_means: list[float] = []
    fde_means: list[float] = []
    for _, group in groupby(ordered, key=lambda r: r.scene_id):
        rs = list(group)
        ade_means.append(math.fsum(r.ade for r in rs) / len(rs))
        fde_means.append(math.fsum(r.fde for r in rs) / len(rs))
    n = len(ade_means)
    return AggregateError(ade=math.fsum(ade_means) / n, fde=math.fsum(fde_means) / n, n=n)


def mie(error_o: float, error_w: float, cfg: MetricConfig = MetricConfig()) -> float:
    """Map information effectiveness of a without-map/with-map error pair.

    Equal errors give exactly 0.0 (no map effect), which also covers the
    zero-error stratum of a perfect predictor.  Otherwise the configured
    normalizing error must be strictly positive.
    """
    for name, v in (("error_o", error_o), ("error_w", error_w)):
        if not math.isfinite(v) or v < 0:
            raise ValueError(f"{name} must be finite and >= 0, got {v}")
    if error_o == error_w:
        return 0.0
    denom_src = error_o if cfg.mie_denominator is MieDenominator.WITHOUT_MAP else error_w
    if denom_src <= 0:
        raise ValueError(
            f"non-positive normalizing error ({cfg.mie_denominator.value}={denom_src})"
        )
    return (error_o - error_w) / math.sqrt(denom_src)


_GROUP_AXES: dict[Grouping, tuple[bool, bool]] = {
    Grouping.OVERALL: (False, False),
    Grouping.DENSITY: (True, False),
    Grouping.GEOMETRY: (False, True),
    Grouping.FULL: (True, True),
}


def stratified_report(
    part: Partition,
    records_by_condition: Mapping[SemanticCondition, Sequence[MetricRecord]],
    cfg: MetricConfig = MetricConfig(),
    grouping: Grouping = Grouping.FULL,
) -> list[StratumReport]:
    """Build report rows for one grouping (overall, by density, by geometry,
    or the full density x geometry grid).

    Every group cell is emitted, including empty ones (sample_size 0, no
    metrics).  A cell with records under only one condition is an error:
    a one-sided stratum cannot support a map-dependency claim.
    """
    recs_o = list(records_by_condition.get(SemanticCondition.WITHOUT_MAP, ()))
    recs_w = list(records_by_condition.get(SemanticCondition.WITH_MAP, ()))
    for expected, recs in ((SemanticCondition.WITHOUT_MAP, recs_o), (SemanticCondition.WITH_MAP, recs_w)):
        for r in recs:
            if r.condition is not expected:
                raise ValueError(
                    f"record for {r.scene_id!r}/{r.agent_id!r} has condition"
                    f" {r.condition.value}, filed under {expected.value}"
                )
            if r.scene_id not in part.by_scene:
                raise ValueError(f"record references scene {r.scene_id!r} absent from the partition")

    by_scene_o: dict[str, list[MetricRecord]] = {}
    by_scene_w: dict[str, list[MetricRecord]] = {}
    for r in recs_o:
        by_scene_o.setdefault(r.scene_id, []).append(r)
    for r in recs_w:
        by_scene_w.setdefault(r.scene_id, []).append(r)

    use_rho, use_tau = _GROUP_AXES[grouping]
    rho_values: Sequence[DensityLevel | None] = list(DensityLevel) if use_rho else [None]
    tau_values: Sequence[GeometryType | None] = list(GeometryType) if use_tau else [None]

    out: list[StratumReport] = []
    for rho in rho_values:
        for tau in tau_values:
            ids = part.scene_ids(rho, tau)
            cell_o = [r for sid in ids for r in by_scene_o.get(sid, ())]
            cell_w = [r for sid in ids for r in by_scene_w.get(sid, ())]
            label = StratumReport(rho, tau, 0).group_label
            if not cell_o and not cell_w:
                out.append(StratumReport(rho, tau, 0))
                continue
            if not cell_o or not cell_w:
                missing = SemanticCondition.WITHOUT_MAP if not cell_o else SemanticCondition.WITH_MAP
                raise ValueError(
                    f"stratum {label!r} has records only under one condition"
                    f" (missing {missing.value})"
                )
            agg_o = aggregate(cell_o, cfg)
            agg_w = aggregate(cell_w, cfg)
            sample_size = len({(r.scene_id, r.agent_id) for r in cell_o + cell_w})
            try:
                mie_a = mie(agg_o.ade, agg_w.ade, cfg)
                mie_f = mie(agg_o.fde, agg_w.fde, cfg)
            except ValueError as e:
                raise ValueError(f"stratum {label!r}: {e}") from e
            out.append(
                StratumReport(
                    rho,
                    tau,
                    sample_size,
                    ade_o=agg_o.ade,
                    ade_w=agg_w.ade,
                    fde_o=agg_o.fde,
                    fde_w=agg_w.fde,
                    mie_a=mie_a,
                    mie_f=mie_f,
                )
            )
    out.sort(key=lambda r: r.sort_key())
    return out
