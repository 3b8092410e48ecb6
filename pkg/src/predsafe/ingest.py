"""Interchange-format parsing and serialization.

Scenes and prediction sets travel as line-delimited JSON (one document per
line, UTF-8, LF endings): scenes in ``*.scenes.jsonl``, predictions in
``*.preds.jsonl``.  Parsing is strict (unknown fields rejected) and total:
every input yields either a value or a structured :class:`DocumentError`
subclass carrying the error kind, the field path inside the document, and
the file/line it came from.

Document schemas::

    {"scene_id": str, "dt": number,
     "agents": [{"agent_id": str, "history": [[x,y]*H], "future": [[x,y]*T]}],
     "map": {"lanes": [{"lane_id": str, "centerline": [[x,y]...]}]} | null}

    {"scene_id": str, "model_id": str, "condition": "with_map"|"without_map",
     "predictions": [{"agent_id": str, "samples": [[[x,y]*T]*K]}]}

An optional ``"format": 1`` field is tolerated on either document type.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .scene_model import (
    AgentTrack,
    Lane,
    PredictionSet,
    Scene,
    SemanticCondition,
    SemanticMap,
    TrajPoint,
    Violation,
    DEFAULT_FUTURE_LEN,
    DEFAULT_HISTORY_LEN,
    validate_scene,
)

FORMAT_VERSION = 1


class DocumentError(Exception):
    """A structured parse failure; machine readable via attributes/to_dict."""

    kind = "error"

    def __init__(self, message: str, *, path: str = "$", source: str | None = None, line: int | None = None):
        self.message = message
        self.path = path
        self.source = source
        self.line = line
        super().__init__(str(self))

    def __str__(self) -> str:
        where = ""
        if self.source is not None:
            where = f"{self.source}:{self.line if self.line is not None else '?'}: "
        return f"{where}[{self.kind}] {self.path}: {self.message}"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "path": self.path,
            "message": self.message,
            "source": self.source,
            "line": self.line,
        }


class JsonSyntaxError(DocumentError):
    kind = "syntax"


class SchemaError(DocumentError):
    kind = "schema"


class SemanticError(DocumentError):
    kind = "semantic"


class CorpusError(Exception):
    """Cross-document inconsistency (duplicate ids, unresolved references)."""


def _raise_schema(msg, path, ctx):
    raise SchemaError(msg, path=path, source=ctx[0], line=ctx[1])


def _raise_semantic(msg, path, ctx):
    raise SemanticError(msg, path=path, source=ctx[0], line=ctx[1])


def _reject_duplicate_keys(pairs):
    seen = set()
    for key, _ in pairs:
        if key in seen:
            raise ValueError(f"duplicate object key {key!r}")
        seen.add(key)
    return dict(pairs)


def _load_json(text: str, ctx) -> object:
    try:
        return json.loads(text, object_pairs_hook=_reject_duplicate_keys)
    except json.JSONDecodeError as e:
        raise JsonSyntaxError(
            f"invalid JSON at column {e.colno}: {e.msg}",
            source=ctx[0],
            line=ctx[1],
        ) from None
    except RecursionError:
        raise JsonSyntaxError("JSON nesting too deep", source=ctx[0], line=ctx[1]) from None
    except ValueError as e:
        raise JsonSyntaxError(str(e), source=ctx[0], line=ctx[1]) from None


def _expect_object(value, path, ctx, required: Sequence[str], optional: Sequence[str] = ()) -> dict:
    if not isinstance(value, dict):
        _raise_schema(f"expected object, got {type(value).__name__}", path, ctx)
    allowed = set(required) | set(optional) | {"format"}
    for key in value:
        if key not in allowed:
            _raise_schema(f"unknown field {key!r}", f"{path}.{key}", ctx)
    for key in required:
        if key not in value:
            _raise_schema(f"missing field {key!r}", path, ctx)
    if "format" in value and value["format"] != FORMAT_VERSION:
        _raise_schema(f"unsupported format {value['format']!r}", f"{path}.format", ctx)
    return value


def _expect_list(value, path, ctx) -> list:
    if not isinstance(value, list):
        _raise_schema(f"expected array, got {type(value).__name__}", path, ctx)
    return value


def _expect_str(value, path, ctx) -> str:
    if not isinstance(value, str):
        _raise_schema(f"expected string, got {type(value).__name__}", path, ctx)
    return value


_NONFINITE_STRINGS = {"nan", "inf", "-inf", "+inf", "infinity", "-infinity", "+infinity"}


def _expect_number(value, path, ctx) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        # A string spelling a non-finite float is called out as the semantic
        # problem it is; any other wrong type is a schema problem.
        if isinstance(value, str) and value.strip().lower() in _NONFINITE_STRINGS:
            _raise_semantic(f"non-finite number {value!r}", path, ctx)
        _raise_schema(f"expected number, got {type(value).__name__}", path, ctx)
    try:
        out = float(value)
    except OverflowError:
        _raise_semantic("number too large for a double", path, ctx)
    if not math.isfinite(out):
        _raise_semantic(f"non-finite number {out!r}", path, ctx)
    return out


def _expect_point(value, path, ctx) -> TrajPoint:
    arr = _expect_list(value, path, ctx)
    if len(arr) != 2:
        _raise_schema(f"expected [x, y] pair, got {len(arr)} elements", path, ctx)
    x = _expect_number(arr[0], f"{path}[0]", ctx)
    y = _expect_number(arr[1], f"{path}[1]", ctx)
    return TrajPoint(x, y)


def _expect_points(value, path, ctx, expected_len: int | None = None) -> tuple[TrajPoint, ...]:
    arr = _expect_list(value, path, ctx)
    if expected_len is not None and len(arr) != expected_len:
        _raise_schema(f"expected {expected_len} points, got {len(arr)}", path, ctx)
    return tuple(_expect_point(v, f"{path}[{i}]", ctx) for i, v in enumerate(arr))


def parse_scene(
    text: str,
    history_len: int = DEFAULT_HISTORY_LEN,
    future_len: int = DEFAULT_FUTURE_LEN,
    source: str | None = None,
    line: int | None = None,
) -> Scene:
    """Parse one scene document; the result always passes validate_scene."""
    ctx = (source, line)
    try:
        raw = _load_json(text, ctx)
    except DocumentError:
        raise
    root = _expect_object(raw, "$", ctx, required=("scene_id", "dt", "agents", "map"))

    scene_id = _expect_str(root["scene_id"], "$.scene_id", ctx)
    dt = _expect_number(root["dt"], "$.dt", ctx)
    if dt <= 0:
        _raise_semantic(f"dt must be > 0, got {dt}", "$.dt", ctx)

    agents = []
    seen_ids: set[str] = set()
    for i, entry in enumerate(_expect_list(root["agents"], "$.agents", ctx)):
        path = f"$.agents[{i}]"
        obj = _expect_object(entry, path, ctx, required=("agent_id", "history", "future"))
        agent_id = _expect_str(obj["agent_id"], f"{path}.agent_id", ctx)
        if not agent_id:
            _raise_semantic("agent_id must be non-empty", f"{path}.agent_id", ctx)
        if agent_id in seen_ids:
            _raise_semantic(f"duplicate agent_id {agent_id!r}", f"{path}.agent_id", ctx)
        seen_ids.add(agent_id)
        history = _expect_points(obj["history"], f"{path}.history", ctx, history_len)
        future = _expect_points(obj["future"], f"{path}.future", ctx, future_len)
        agents.append(AgentTrack(agent_id, history, future))
    if not agents:
        _raise_semantic("scene must contain at least one agent", "$.agents", ctx)

    semantic_map = None
    if root["map"] is not None:
        map_obj = _expect_object(root["map"], "$.map", ctx, required=("lanes",))
        lanes = []
        seen_lanes: set[str] = set()
        for j, entry in enumerate(_expect_list(map_obj["lanes"], "$.map.lanes", ctx)):
            path = f"$.map.lanes[{j}]"
            obj = _expect_object(entry, path, ctx, required=("lane_id", "centerline"))
            lane_id = _expect_str(obj["lane_id"], f"{path}.lane_id", ctx)
            if lane_id in seen_lanes:
                _raise_semantic(f"duplicate lane_id {lane_id!r}", f"{path}.lane_id", ctx)
            seen_lanes.add(lane_id)
            centerline = _expect_points(obj["centerline"], f"{path}.centerline", ctx)
            if len(centerline) < 2:
                _raise_schema("centerline needs >= 2 points", f"{path}.centerline", ctx)
            for p in range(1, len(centerline)):
                a, b = centerline[p - 1], centerline[p]
                if math.hypot(b.x - a.x, b.y - a.y) <= 1e-9:
                    _raise_semantic(
                        "consecutive centerline points must be > 1e-9 m apart",
                        f"{path}.centerline[{p}]",
                        ctx,
                    )
            lanes.append(Lane(lane_id, centerline))
        semantic_map = SemanticMap(tuple(lanes))

    scene = Scene(scene_id, dt, tuple(agents), semantic_map)
    leftover = validate_scene(scene, history_len, future_len)
    if leftover:  # safety net; the checks above should have caught everything
        v = leftover[0]
        _raise_semantic(v.message, f"$.{v.field}", ctx)
    return scene


def parse_predictions(
    text: str,
    future_len: int = DEFAULT_FUTURE_LEN,
    source: str | None = None,
    line: int | None = None,
) -> PredictionSet:
    """Parse one prediction document, enforcing uniform K across agents."""
    ctx = (source, line)
    raw = _load_json(text, ctx)
    root = _expect_object(
        raw, "$", ctx, required=("scene_id", "model_id", "condition", "predictions")
    )
    scene_id = _expect_str(root["scene_id"], "$.scene_id", ctx)
    model_id = _expect_str(root["model_id"], "$.model_id", ctx)
    cond_str = _expect_str(root["condition"], "$.condition", ctx)
    try:
        condition = SemanticCondition(cond_str)
    except ValueError:
        _raise_schema(
            f"condition must be 'with_map' or 'without_map', got {cond_str!r}",
            "$.condition",
            ctx,
        )

    per_agent: dict[str, tuple[tuple[TrajPoint, ...], ...]] = {}
    k = None
    for i, entry in enumerate(_expect_list(root["predictions"], "$.predictions", ctx)):
        path = f"$.predictions[{i}]"
        obj = _expect_object(entry, path, ctx, required=("agent_id", "samples"))
        agent_id = _expect_str(obj["agent_id"], f"{path}.agent_id", ctx)
        if not agent_id:
            _raise_semantic("agent_id must be non-empty", f"{path}.agent_id", ctx)
        if agent_id in per_agent:
            _raise_semantic(f"duplicate agent_id {agent_id!r}", f"{path}.agent_id", ctx)
        samples_raw = _expect_list(obj["samples"], f"{path}.samples", ctx)
        if not samples_raw:
            _raise_schema("samples must contain K >= 1 trajectories", f"{path}.samples", ctx)
        if k is None:
            k = len(samples_raw)
        elif len(samples_raw) != k:
            _raise_semantic(
                f"non-uniform K: agent {agent_id!r} has {len(samples_raw)} samples, expected {k}",
                f"{path}.samples",
                ctx,
            )
        samples = tuple(
            _expect_points(s, f"{path}.samples[{j}]", ctx, future_len)
            for j, s in enumerate(samples_raw)
        )
        per_agent[agent_id] = samples

    return PredictionSet(scene_id, model_id, condition, per_agent)


def validate_pair(scene: Scene, preds: PredictionSet) -> list[Violation]:
    """Cross-check a prediction set against its scene."""
    out: list[Violation] = []
    if scene.scene_id != preds.scene_id:
        out.append(
            Violation(
                "scene_id",
                "scene_id_match",
                f"prediction scene_id {preds.scene_id!r} != scene {scene.scene_id!r}",
            )
        )
    known = {a.agent_id for a in scene.agents}
    for agent_id in preds.per_agent:
        if agent_id not in known:
            out.append(
                Violation(
                    f"predictions[{agent_id}]",
                    "agent_known",
                    f"prediction for unknown agent {agent_id!r}",
                )
            )
    if preds.per_agent and scene.agents and preds.horizon != scene.future_len:
        out.append(
            Violation(
                "predictions",
                "horizon_match",
                f"prediction horizon {preds.horizon} != scene future length {scene.future_len}",
            )
        )
    return out


def _fmt_float(v: float) -> str:
    # repr() of a double round-trips exactly and is stable across platforms.
    return repr(float(v))


def _point_json(p: TrajPoint) -> str:
    return f"[{_fmt_float(p.x)},{_fmt_float(p.y)}]"


def _points_json(points: Sequence[TrajPoint]) -> str:
    return "[" + ",".join(_point_json(p) for p in points) + "]"


def write_scene(scene: Scene) -> str:
    """Serialize one scene document (no trailing newline).

    Round-trip guarantee: ``parse_scene(write_scene(s)) == s``.
    """
    agents = ",".join(
        "{"
        + f'"agent_id":{json.dumps(a.agent_id, ensure_ascii=False)},'
        + f'"history":{_points_json(a.history)},'
        + f'"future":{_points_json(a.future)}'
        + "}"
        for a in scene.agents
    )
    if scene.map is None:
        map_json = "null"
    else:
        lanes = ",".join(
            "{"
            + f'"lane_id":{json.dumps(l.lane_id, ensure_ascii=False)},'
            + f'"centerline":{_points_json(l.centerline)}'
            + "}"
            for l in scene.map.lanes
        )
        map_json = '{"lanes":[' + lanes + "]}"
    return (
        "{"
        + f'"scene_id":{json.dumps(scene.scene_id, ensure_ascii=False)},'
        + f'"dt":{_fmt_float(scene.dt)},'
        + f'"agents":[{agents}],'
        + f'"map":{map_json}'
        + "}"
    )


def write_predictions(preds: PredictionSet) -> str:
    """Serialize one prediction document; agents emitted in sorted order."""
    entries = ",".join(
        "{"
        + f'"agent_id":{json.dumps(agent_id, ensure_ascii=False)},'
        + '"samples":['
        + ",".join(_points_json(s) for s in preds.per_agent[agent_id])
        + "]}"
        for agent_id in sorted(preds.per_agent)
    )
    return (
        "{"
        + f'"scene_id":{json.dumps(preds.scene_id, ensure_ascii=False)},'
        + f'"model_id":{json.dumps(preds.model_id, ensure_ascii=False)},'
        + f'"condition":{json.dumps(preds.condition.value)},'
        + f'"predictions":[{entries}]'
        + "}"
    )


def iter_document_lines(path: str | Path) -> Iterator[tuple[int, str]]:
    """Yield (line_number, text) for non-blank lines; bad bytes become errors."""
    data = Path(path).read_bytes()
    for i, raw in enumerate(data.split(b"\n"), start=1):
        if not raw.strip():
            continue
        try:
            yield i, raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise JsonSyntaxError(f"invalid UTF-8: {e}", source=str(path), line=i) from None


@dataclass(frozen=True)
class CorpusManifest:
    """Which files a corpus was loaded from, predictions keyed by (model, condition)."""

    scene_files: tuple[str, ...]
    prediction_files: Mapping[tuple[str, SemanticCondition], tuple[str, ...]]


@dataclass
class Corpus:
    """A loaded corpus: scenes in lexicographic scene_id order, predictions
    grouped by (model_id, condition) then scene_id."""

    scenes: dict[str, Scene]
    predictions: dict[tuple[str, SemanticCondition], dict[str, PredictionSet]]
    manifest: CorpusManifest

    def ordered_scenes(self) -> list[Scene]:
        return list(self.scenes.values())


def load_scenes(
    paths: Sequence[str | Path],
    history_len: int = DEFAULT_HISTORY_LEN,
    future_len: int = DEFAULT_FUTURE_LEN,
) -> dict[str, Scene]:
    """Load scene files; duplicate scene_ids are a corpus error.

    The returned dict iterates in lexicographic scene_id order, which is the
    deterministic ordering every downstream reduction uses.
    """
    scenes: dict[str, Scene] = {}
    origin: dict[str, str] = {}
    for path in paths:
        for line_no, text in iter_document_lines(path):
            scene = parse_scene(text, history_len, future_len, source=str(path), line=line_no)
            if scene.scene_id in scenes:
                raise CorpusError(
                    f"{path}:{line_no}: duplicate scene_id {scene.scene_id!r}"
                    f" (first seen in {origin[scene.scene_id]})"
                )
            scenes[scene.scene_id] = scene
            origin[scene.scene_id] = f"{path}:{line_no}"
    return dict(sorted(scenes.items()))


def _load_prediction_groups(
    paths: Sequence[str | Path],
    future_len: int,
) -> tuple[
    dict[tuple[str, SemanticCondition], dict[str, PredictionSet]],
    dict[tuple[str, SemanticCondition], tuple[str, ...]],
]:
    groups: dict[tuple[str, SemanticCondition], dict[str, PredictionSet]] = {}
    files: dict[tuple[str, SemanticCondition], list[str]] = {}
    for path in paths:
        for line_no, text in iter_document_lines(path):
            preds = parse_predictions(text, future_len, source=str(path), line=line_no)
            key = (preds.model_id, preds.condition)
            bucket = groups.setdefault(key, {})
            if preds.scene_id in bucket:
                raise CorpusError(
                    f"{path}:{line_no}: duplicate prediction for scene {preds.scene_id!r}"
                    f" under model {preds.model_id!r}, condition {preds.condition.value}"
                )
            bucket[preds.scene_id] = preds
            sources = files.setdefault(key, [])
            if str(path) not in sources:
                sources.append(str(path))
    ordered_keys = sorted(groups, key=lambda k: (k[0], k[1].value))
    return (
        {key: dict(sorted(groups[key].items())) for key in ordered_keys},
        {key: tuple(files[key]) for key in ordered_keys},
    )


def load_prediction_sets(
    paths: Sequence[str | Path],
    future_len: int = DEFAULT_FUTURE_LEN,
) -> dict[tuple[str, SemanticCondition], dict[str, PredictionSet]]:
    groups, _ = _load_prediction_groups(paths, future_len)
    return groups


def load_corpus(
    scene_paths: Sequence[str | Path],
    prediction_paths: Sequence[str | Path],
    history_len: int = DEFAULT_HISTORY_LEN,
    future_len: int = DEFAULT_FUTURE_LEN,
) -> Corpus:
    """Load scenes and predictions together, checking referential integrity."""
    scenes = load_scenes(scene_paths, history_len, future_len)
    predictions, pred_files = _load_prediction_groups(prediction_paths, future_len)
    for (model_id, condition), bucket in predictions.items():
        for scene_id in bucket:
            if scene_id not in scenes:
                raise CorpusError(
                    f"prediction for scene {scene_id!r} (model {model_id!r},"
                    f" condition {condition.value}) does not resolve to a loaded scene"
                )
    manifest = CorpusManifest(
        scene_files=tuple(str(p) for p in scene_paths),
        prediction_files=pred_files,
    )
    return Corpus(scenes=scenes, predictions=predictions, manifest=manifest)


def write_jsonl(path: str | Path, lines: Iterable[str]) -> None:
    """Write documents one per line with LF endings."""
    text = "\n".join(lines)
    if text:
        text += "\n"
    Path(path).write_text(text, encoding="utf-8", newline="\n")
