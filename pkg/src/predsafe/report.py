"""Report rendering, failure-case flagging, and plot-data export.

Tables print with 4 decimals; empty strata render "-" rather than a fake
zero.  Plot bundles are structured JSON documents with everything an
external plotter needs to recreate per-scene overlays (lanes, ground truth,
sampled predictions per condition, per-agent errors); no images are drawn
here.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Mapping, Sequence

from . import ingest
from .scene_model import (
    AgentTrack,
    DensityLevel,
    GeometryType,
    Lane,
    MetricRecord,
    PredictionSet,
    Scene,
    SemanticCondition,
    StratumReport,
    TrajPoint,
    condition_from_str,
)

TABLE_COLUMNS = ("group", "sample_size", "ADE_o", "ADE_w", "FDE_o", "FDE_w", "MIE_A", "MIE_F")

DEFAULT_FAILURE_THRESHOLD_M = 10.0
DEFAULT_FAILURE_TOP_N = 20


def _fmt(v: float | None) -> str:
    return "-" if v is None else f"{v:.4f}"


def render_table(reports: Sequence[StratumReport], fmt: str = "csv") -> str:
    """Render report rows as CSV or markdown; byte-identical across runs."""
    rows = [
        (
            r.group_label,
            str(r.sample_size),
            _fmt(r.ade_o),
            _fmt(r.ade_w),
            _fmt(r.fde_o),
            _fmt(r.fde_w),
            _fmt(r.mie_a),
            _fmt(r.mie_f),
        )
        for r in sorted(reports, key=lambda r: r.sort_key())
    ]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TABLE_COLUMNS)
        writer.writerows(rows)
        return buf.getvalue()
    if fmt == "markdown":
        lines = [
            "| " + " | ".join(TABLE_COLUMNS) + " |",
            "|" + "|".join(" --- " for _ in TABLE_COLUMNS) + "|",
        ]
        lines.extend("| " + " | ".join(row) + " |" for row in rows)
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown table format {fmt!r}")


@dataclass(frozen=True)
class FailureCase:
    """An agent-level prediction flagged as failure-prone, ranked by FDE."""

    scene_id: str
    agent_id: str
    condition: SemanticCondition
    fde: float
    ade: float
    rho: DensityLevel | None
    tau: GeometryType | None
    rank: int


def flag_failures(
    records: Sequence[MetricRecord],
    threshold_m: float | None = DEFAULT_FAILURE_THRESHOLD_M,
    top_n: int | None = DEFAULT_FAILURE_TOP_N,
    strata: Mapping[str, tuple[DensityLevel, GeometryType]] | None = None,
) -> list[FailureCase]:
    """Flag the union of records above the FDE threshold and the top-N by FDE.

    Results sort by FDE descending with a (scene_id, agent_id, condition)
    tie-break; ranks are 1-based positions in that order.  ``strata`` maps
    scene_id to its (density, geometry) cell when known.
    """
    if (threshold_m is None or threshold_m <= 0) and (top_n is None or top_n < 1):
        raise ValueError("need threshold_m > 0 or top_n >= 1")
    ordered = sorted(
        records, key=lambda r: (-r.fde, r.scene_id, r.agent_id, r.condition.value)
    )
    selected = set()
    if threshold_m is not None and threshold_m > 0:
        selected.update(i for i, r in enumerate(ordered) if r.fde > threshold_m)
    if top_n is not None and top_n >= 1:
        selected.update(range(min(top_n, len(ordered))))
    out = []
    for rank, i in enumerate(sorted(selected), start=1):
        r = ordered[i]
        rho, tau = (strata or {}).get(r.scene_id, (None, None))
        out.append(FailureCase(r.scene_id, r.agent_id, r.condition, r.fde, r.ade, rho, tau, rank))
    return out


def failures_csv(cases: Sequence[FailureCase]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["rank", "scene_id", "agent_id", "condition", "fde", "ade", "rho", "tau"])
    for c in cases:
        writer.writerow(
            [
                c.rank,
                c.scene_id,
                c.agent_id,
                c.condition.value,
                f"{c.fde:.4f}",
                f"{c.ade:.4f}",
                "-" if c.rho is None else c.rho.value,
                "-" if c.tau is None else c.tau.value,
            ]
        )
    return buf.getvalue()


@dataclass(frozen=True)
class PlotBundle:
    """Everything needed to redraw one scene: geometry, truth, samples, errors."""

    scene_id: str
    lanes: tuple[Lane, ...]
    truth: tuple[AgentTrack, ...]
    samples: dict[SemanticCondition, dict[str, tuple[tuple[TrajPoint, ...], ...]]]
    errors: tuple[MetricRecord, ...]


def export_plot_bundle(
    scene: Scene,
    preds_with: PredictionSet | None,
    preds_without: PredictionSet | None,
    records: Sequence[MetricRecord],
) -> PlotBundle:
    """Assemble the plot bundle for one scene.

    Prediction sets may be absent per condition; ``records`` is filtered to
    this scene.  Callers are expected to have run validate_pair on the
    supplied prediction sets.
    """
    samples: dict[SemanticCondition, dict[str, tuple[tuple[TrajPoint, ...], ...]]] = {
        SemanticCondition.WITH_MAP: {},
        SemanticCondition.WITHOUT_MAP: {},
    }
    for preds in (preds_with, preds_without):
        if preds is None:
            continue
        if preds.scene_id != scene.scene_id:
            raise ValueError(
                f"prediction set for {preds.scene_id!r} passed with scene {scene.scene_id!r}"
            )
        samples[preds.condition] = {aid: preds.per_agent[aid] for aid in sorted(preds.per_agent)}
    errors = tuple(
        sorted(
            (r for r in records if r.scene_id == scene.scene_id),
            key=lambda r: (r.agent_id, r.condition.value),
        )
    )
    lanes = scene.map.lanes if scene.map is not None else ()
    return PlotBundle(scene.scene_id, tuple(lanes), tuple(scene.agents), samples, errors)


def write_plot_bundle(bundle: PlotBundle) -> str:
    """Serialize a plot bundle as one JSON document (full float precision)."""
    def points(ps):
        return [[p.x, p.y] for p in ps]

    obj = {
        "scene_id": bundle.scene_id,
        "lanes": [{"lane_id": l.lane_id, "centerline": points(l.centerline)} for l in bundle.lanes],
        "truth": [
            {"agent_id": a.agent_id, "history": points(a.history), "future": points(a.future)}
            for a in bundle.truth
        ],
        "samples": {
            cond.value: {
                agent_id: [points(s) for s in samples]
                for agent_id, samples in sorted(bundle.samples[cond].items())
            }
            for cond in (SemanticCondition.WITH_MAP, SemanticCondition.WITHOUT_MAP)
        },
        "errors": [
            {"agent_id": r.agent_id, "condition": r.condition.value, "ade": r.ade, "fde": r.fde}
            for r in bundle.errors
        ],
    }
    return json.dumps(obj, ensure_ascii=False, allow_nan=False, separators=(",", ":"))


def parse_plot_bundle(text: str, source: str | None = None, line: int | None = None) -> PlotBundle:
    """Strict parse of a plot-bundle document; inverse of write_plot_bundle."""
    ctx = (source, line)
    raw = ingest._load_json(text, ctx)
    root = ingest._expect_object(
        raw, "$", ctx, required=("scene_id", "lanes", "truth", "samples", "errors")
    )
    scene_id = ingest._expect_str(root["scene_id"], "$.scene_id", ctx)
    lanes = []
    for j, entry in enumerate(ingest._expect_list(root["lanes"], "$.lanes", ctx)):
        path = f"$.lanes[{j}]"
        obj = ingest._expect_object(entry, path, ctx, required=("lane_id", "centerline"))
        lanes.append(
            Lane(
                ingest._expect_str(obj["lane_id"], f"{path}.lane_id", ctx),
                ingest._expect_points(obj["centerline"], f"{path}.centerline", ctx),
            )
        )
    truth = []
    for i, entry in enumerate(ingest._expect_list(root["truth"], "$.truth", ctx)):
        path = f"$.truth[{i}]"
        obj = ingest._expect_object(entry, path, ctx, required=("agent_id", "history", "future"))
        truth.append(
            AgentTrack(
                ingest._expect_str(obj["agent_id"], f"{path}.agent_id", ctx),
                ingest._expect_points(obj["history"], f"{path}.history", ctx),
                ingest._expect_points(obj["future"], f"{path}.future", ctx),
            )
        )
    samples_obj = ingest._expect_object(
        root["samples"], "$.samples", ctx, required=("with_map", "without_map")
    )
    samples: dict[SemanticCondition, dict[str, tuple]] = {}
    for cond in (SemanticCondition.WITH_MAP, SemanticCondition.WITHOUT_MAP):
        group = samples_obj[cond.value]
        if not isinstance(group, dict):
            ingest._raise_schema("expected object of agent samples", f"$.samples.{cond.value}", ctx)
        per_agent = {}
        for agent_id, sample_list in group.items():
            path = f"$.samples.{cond.value}.{agent_id}"
            arr = ingest._expect_list(sample_list, path, ctx)
            per_agent[agent_id] = tuple(
                ingest._expect_points(s, f"{path}[{j}]", ctx) for j, s in enumerate(arr)
            )
        samples[cond] = per_agent
    errors = []
    for i, entry in enumerate(ingest._expect_list(root["errors"], "$.errors", ctx)):
        path = f"$.errors[{i}]"
        obj = ingest._expect_object(entry, path, ctx, required=("agent_id", "condition", "ade", "fde"))
        errors.append(
            MetricRecord(
                scene_id,
                ingest._expect_str(obj["agent_id"], f"{path}.agent_id", ctx),
                condition_from_str(ingest._expect_str(obj["condition"], f"{path}.condition", ctx)),
                ingest._expect_number(obj["ade"], f"{path}.ade", ctx),
                ingest._expect_number(obj["fde"], f"{path}.fde", ctx),
            )
        )
    return PlotBundle(scene_id, tuple(lanes), tuple(truth), samples, tuple(errors))
