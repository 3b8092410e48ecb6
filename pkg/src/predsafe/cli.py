"""Command-line driver: evaluate, classify, synth, and report subcommands.

Configuration comes from a simple ``key = value`` text file (path given by
--config or the PREDSAFE_CONFIG environment variable) with ``--set
key=value`` flag overrides; flags win.  Exit codes are a stable contract:
0 success, 1 usage error, 2 data validation error, 3 internal error.
Output files are written to a temporary name and renamed on success, so a
failed run never leaves a partially written file.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

from . import __version__
from .classify import ClassifyConfig, Partition, SceneClassification, classification_table, partition
from .ingest import (
    CorpusError,
    DocumentError,
    write_predictions,
    write_scene,
)
from .metrics import (
    Grouping,
    KAggregation,
    MetricConfig,
    MieDenominator,
    Weighting,
    scene_metrics,
    stratified_report,
)
from .report import (
    DEFAULT_FAILURE_THRESHOLD_M,
    DEFAULT_FAILURE_TOP_N,
    export_plot_bundle,
    failures_csv,
    flag_failures,
    render_table,
    write_plot_bundle,
)
from .scene_model import (
    DensityLevel,
    GeometryType,
    MetricRecord,
    SemanticCondition,
    condition_from_str,
    validate_scene,
)
from .synth import PRESET_NAMES, gen_corpus

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

CONFIG_ENV_VAR = "PREDSAFE_CONFIG"


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


@dataclass
class RunConfig:
    """Every knob of the pipeline; unknown config keys are rejected."""

    history_len: int = 4
    future_len: int = 6
    dt: float = 0.5
    k: int = 20
    density_bins: str = "1,2,4,9"
    curvature_threshold_deg: float = 15.0
    curvature_window_m: float = 20.0
    roi_radius_m: float = 30.0
    k_aggregation: str = "min_over_k"
    weighting: str = "agent"
    mie_denominator: str = "without_map"
    failure_threshold_m: float = DEFAULT_FAILURE_THRESHOLD_M
    failure_top_n: int = DEFAULT_FAILURE_TOP_N
    format: str = "csv"
    jobs: int = 1
    seed: int = 0
    noise_sigma_m: float = 0.0
    preset: str = "mixed_grid"

    def classify_config(self) -> ClassifyConfig:
        try:
            bounds = tuple(int(p) for p in self.density_bins.split(","))
        except ValueError:
            raise UsageError(f"density_bins must be comma-separated integers, got {self.density_bins!r}")
        if len(bounds) != 4:
            raise UsageError("density_bins needs exactly 4 bin lower bounds")
        bins = tuple(
            (bounds[i], bounds[i + 1] if i + 1 < len(bounds) else None) for i in range(len(bounds))
        )
        try:
            return ClassifyConfig(
                density_bins=bins,
                curvature_threshold_deg=self.curvature_threshold_deg,
                curvature_window_m=self.curvature_window_m,
                roi_radius_m=self.roi_radius_m,
            )
        except ValueError as e:
            raise UsageError(str(e))

    def metric_config(self) -> MetricConfig:
        try:
            return MetricConfig(
                k_aggregation=KAggregation(self.k_aggregation),
                weighting=Weighting(self.weighting),
                mie_denominator=MieDenominator(self.mie_denominator),
            )
        except ValueError as e:
            raise UsageError(str(e))


_CONFIG_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, value: str):
    kind = _CONFIG_TYPES[key]
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        return value
    except ValueError:
        raise UsageError(f"config key {key!r}: cannot parse {value!r} as {kind}")


def parse_config_file(path: str | Path) -> dict:
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot read config file {path}: {e}")
    for i, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{i}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_TYPES:
            raise UsageError(f"{path}:{i}: unknown config key {key!r}")
        out[key] = _coerce(key, value)
    return out


def build_run_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    config_path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV_VAR)
    if config_path:
        cfg = replace(cfg, **parse_config_file(config_path))
    overrides = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in _CONFIG_TYPES:
            raise UsageError(f"--set: unknown config key {key!r}")
        overrides[key] = _coerce(key, value.strip())
    # Dedicated flags rank above --set and the file.
    for flag in ("jobs", "format", "seed", "preset"):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[flag] = value
    return replace(cfg, **overrides)


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8", newline="\n")
    os.replace(tmp, path)


def _records_csv(records: list[MetricRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["scene_id", "agent_id", "condition", "ade", "fde"])
    for r in sorted(records, key=lambda r: (r.scene_id, r.agent_id, r.condition.value)):
        writer.writerow([r.scene_id, r.agent_id, r.condition.value, repr(r.ade), repr(r.fde)])
    return buf.getvalue()


def _read_records_csv(path: Path) -> list[MetricRecord]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read records file {path}: {e}")
    reader = csv.DictReader(io.StringIO(text))
    expected = ["scene_id", "agent_id", "condition", "ade", "fde"]
    if reader.fieldnames != expected:
        raise DataError(f"{path}: expected header {expected}, got {reader.fieldnames}")
    out = []
    for i, row in enumerate(reader, start=2):
        try:
            out.append(
                MetricRecord(
                    row["scene_id"],
                    row["agent_id"],
                    condition_from_str(row["condition"]),
                    float(row["ade"]),
                    float(row["fde"]),
                )
            )
        except (ValueError, TypeError) as e:
            raise DataError(f"{path}:{i}: {e}")
    return out


def _read_classification_csv(path: Path) -> Partition:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read classification file {path}: {e}")
    reader = csv.DictReader(io.StringIO(text))
    expected = ["scene_id", "agent_count", "rho", "tau", "heading_change_deg"]
    if reader.fieldnames != expected:
        raise DataError(f"{path}: expected header {expected}, got {reader.fieldnames}")
    recs = []
    rho_by_value = {m.value: m for m in DensityLevel}
    tau_by_value = {m.value: m for m in GeometryType}
    for i, row in enumerate(reader, start=2):
        try:
            recs.append(
                SceneClassification(
                    row["scene_id"],
                    int(row["agent_count"]),
                    rho_by_value[row["rho"]],
                    tau_by_value[row["tau"]],
                    float(row["heading_change_deg"]),
                )
            )
        except (KeyError, ValueError, TypeError) as e:
            raise DataError(f"{path}:{i}: {e}")
    try:
        return Partition.from_classifications(recs)
    except ValueError as e:
        raise DataError(f"{path}: {e}")


def _load_condition_sets(
    paths: list[str], expected: SemanticCondition, cfg: RunConfig
) -> dict[str, "object"]:
    """Load one --preds-* flag group, enforcing its condition label."""
    from .ingest import load_prediction_sets

    try:
        groups = load_prediction_sets(paths, cfg.future_len)
    except (DocumentError, CorpusError) as e:
        raise DataError(str(e))
    merged: dict[str, object] = {}
    for (model_id, condition), bucket in groups.items():
        if condition is not expected:
            raise DataError(
                f"prediction files for {expected.value!r} contain"
                f" {condition.value!r} documents (model {model_id!r})"
            )
        for scene_id, preds in bucket.items():
            if scene_id in merged:
                raise DataError(
                    f"duplicate {expected.value} prediction for scene {scene_id!r}"
                )
            merged[scene_id] = preds
    if not merged:
        raise DataError(f"no predictions found for condition {expected.value!r}")
    return merged


def _check_model_uniformity(with_sets: dict, without_sets: dict) -> None:
    model_ids = sorted({p.model_id for p in with_sets.values()} | {p.model_id for p in without_sets.values()})
    if len(model_ids) > 1:
        raise DataError(
            f"predictions mix multiple model_ids {model_ids}; evaluate one model per run"
        )


def _validate_coverage(scenes: dict, with_sets: dict, without_sets: dict, cfg: RunConfig) -> None:
    from .ingest import validate_pair

    problems: list[str] = []
    for sets, label in ((with_sets, "with_map"), (without_sets, "without_map")):
        for scene_id in sets:
            if scene_id not in scenes:
                problems.append(
                    f"{label} prediction for scene {scene_id!r} does not resolve to a loaded scene"
                )
    for scene_id, scene in scenes.items():
        violations = validate_scene(scene, cfg.history_len, cfg.future_len)
        problems.extend(f"scene {scene_id!r}: {v}" for v in violations)
        has_with = scene_id in with_sets
        has_without = scene_id in without_sets
        if has_with != has_without:
            missing = "without_map" if has_with else "with_map"
            problems.append(f"scene {scene_id!r}: predictions missing for condition {missing!r}")
        for preds in (with_sets.get(scene_id), without_sets.get(scene_id)):
            if preds is not None:
                problems.extend(f"scene {scene_id!r}: {v}" for v in validate_pair(scene, preds))
    if problems:
        raise DataError("\n".join(problems))


def _compute_records(scenes: dict, pred_sets: dict, mcfg: MetricConfig, jobs: int) -> list[MetricRecord]:
    tasks = [(scenes[sid], pred_sets[sid]) for sid in sorted(pred_sets)]
    if jobs <= 1:
        chunks = [scene_metrics(s, p, mcfg) for s, p in tasks]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(lambda sp: scene_metrics(sp[0], sp[1], mcfg), tasks))
    return [r for chunk in chunks for r in chunk]


_GROUPING_FILES = (
    (Grouping.OVERALL, "report_overall"),
    (Grouping.DENSITY, "report_density"),
    (Grouping.GEOMETRY, "report_geometry"),
    (Grouping.FULL, "report_full"),
)


def _write_reports(
    out_dir: Path,
    part: Partition,
    records_by_condition: dict,
    cfg: RunConfig,
) -> list[Path]:
    mcfg = cfg.metric_config()
    ext = "md" if cfg.format == "markdown" else "csv"
    written = []
    for grouping, stem in _GROUPING_FILES:
        rows = stratified_report(part, records_by_condition, mcfg, grouping)
        path = out_dir / f"{stem}.{ext}"
        _write_atomic(path, render_table(rows, cfg.format))
        written.append(path)
    all_records = [r for recs in records_by_condition.values() for r in recs]
    strata = {sid: (rec.rho, rec.tau) for sid, rec in part.by_scene.items()}
    cases = flag_failures(all_records, cfg.failure_threshold_m, cfg.failure_top_n, strata)
    failures_path = out_dir / "failures.csv"
    _write_atomic(failures_path, failures_csv(cases))
    written.append(failures_path)
    return written


def run_evaluate(args: argparse.Namespace) -> int:
    cfg = build_run_config(args)
    if cfg.format not in ("csv", "markdown"):
        raise UsageError(f"format must be csv or markdown, got {cfg.format!r}")
    out_dir = Path(args.out)
    try:
        from .ingest import load_scenes

        scenes = load_scenes(args.scenes, cfg.history_len, cfg.future_len)
    except (DocumentError, CorpusError) as e:
        raise DataError(str(e))
    with_sets = _load_condition_sets(args.preds_with, SemanticCondition.WITH_MAP, cfg)
    without_sets = _load_condition_sets(args.preds_without, SemanticCondition.WITHOUT_MAP, cfg)
    _check_model_uniformity(with_sets, without_sets)
    _validate_coverage(scenes, with_sets, without_sets, cfg)

    try:
        part = partition(list(scenes.values()), cfg.classify_config())
    except ValueError as e:
        raise DataError(str(e))
    mcfg = cfg.metric_config()
    records_w = _compute_records(scenes, with_sets, mcfg, cfg.jobs)
    records_o = _compute_records(scenes, without_sets, mcfg, cfg.jobs)
    records_by_condition = {
        SemanticCondition.WITH_MAP: records_w,
        SemanticCondition.WITHOUT_MAP: records_o,
    }

    written = _write_reports(out_dir, part, records_by_condition, cfg)
    _write_atomic(out_dir / "records.csv", _records_csv(records_w + records_o))
    _write_atomic(out_dir / "classification.csv", classification_table(part))
    written += [out_dir / "records.csv", out_dir / "classification.csv"]

    if args.plots:
        all_records = records_w + records_o
        for scene_id in sorted(scenes):
            if scene_id not in with_sets and scene_id not in without_sets:
                continue
            bundle = export_plot_bundle(
                scenes[scene_id],
                with_sets.get(scene_id),
                without_sets.get(scene_id),
                all_records,
            )
            path = out_dir / "plots" / f"{scene_id}.plot.json"
            _write_atomic(path, write_plot_bundle(bundle) + "\n")
            written.append(path)

    print(
        f"evaluated {len(scenes)} scenes"
        f" ({len(records_w)} with-map records, {len(records_o)} without-map records)"
    )
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def run_classify(args: argparse.Namespace) -> int:
    cfg = build_run_config(args)
    try:
        from .ingest import load_scenes

        scenes = load_scenes(args.scenes, cfg.history_len, cfg.future_len)
    except (DocumentError, CorpusError) as e:
        raise DataError(str(e))
    try:
        part = partition(list(scenes.values()), cfg.classify_config())
    except ValueError as e:
        raise DataError(str(e))
    out_path = Path(args.out) / "classification.csv"
    _write_atomic(out_path, classification_table(part))
    print(f"classified {len(scenes)} scenes")
    print(f"wrote {out_path}")
    return EXIT_OK


def run_synth(args: argparse.Namespace) -> int:
    cfg = build_run_config(args)
    if cfg.preset not in PRESET_NAMES:
        raise UsageError(f"unknown preset {cfg.preset!r}; choose from {PRESET_NAMES}")
    scenes, preds_with, preds_without = gen_corpus(
        cfg.preset, cfg.seed, cfg.k, cfg.noise_sigma_m
    )
    out_dir = Path(args.out)
    jobs = (
        (f"{cfg.preset}.scenes.jsonl", [write_scene(s) for s in scenes]),
        (f"{cfg.preset}.with_map.preds.jsonl", [write_predictions(p) for p in preds_with]),
        (f"{cfg.preset}.without_map.preds.jsonl", [write_predictions(p) for p in preds_without]),
    )
    for name, lines in jobs:
        _write_atomic(out_dir / name, "\n".join(lines) + "\n")
        print(f"wrote {out_dir / name}")
    print(f"generated {len(scenes)} scenes with preset {cfg.preset!r}, seed {cfg.seed}")
    return EXIT_OK


def run_report(args: argparse.Namespace) -> int:
    cfg = build_run_config(args)
    if cfg.format not in ("csv", "markdown"):
        raise UsageError(f"format must be csv or markdown, got {cfg.format!r}")
    records = _read_records_csv(Path(args.records))
    part = _read_classification_csv(Path(args.classification))
    records_by_condition = {
        SemanticCondition.WITH_MAP: [r for r in records if r.condition is SemanticCondition.WITH_MAP],
        SemanticCondition.WITHOUT_MAP: [
            r for r in records if r.condition is SemanticCondition.WITHOUT_MAP
        ],
    }
    try:
        written = _write_reports(Path(args.out), part, records_by_condition, cfg)
    except ValueError as e:
        raise DataError(str(e))
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="predsafe", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"predsafe {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help=f"config file (default: ${CONFIG_ENV_VAR})")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")

    p_eval = sub.add_parser("evaluate", help="run the full pipeline and write reports")
    p_eval.add_argument("--scenes", action="append", required=True, help="*.scenes.jsonl file")
    p_eval.add_argument("--preds-with", action="append", required=True, help="with-map *.preds.jsonl")
    p_eval.add_argument("--preds-without", action="append", required=True, help="without-map *.preds.jsonl")
    p_eval.add_argument("--out", required=True, help="output directory")
    p_eval.add_argument("--jobs", type=int, help="worker threads (does not affect results)")
    p_eval.add_argument("--format", choices=("csv", "markdown"), help="report table format")
    p_eval.add_argument("--plots", action="store_true", help="also write plots/<scene_id>.plot.json")
    common(p_eval)
    p_eval.set_defaults(func=run_evaluate)

    p_cls = sub.add_parser("classify", help="write the per-scene classification table")
    p_cls.add_argument("--scenes", action="append", required=True)
    p_cls.add_argument("--out", required=True, help="output directory")
    common(p_cls)
    p_cls.set_defaults(func=run_classify)

    p_syn = sub.add_parser("synth", help="generate a synthetic corpus with reference predictions")
    p_syn.add_argument("--preset", choices=PRESET_NAMES)
    p_syn.add_argument("--seed", type=int)
    p_syn.add_argument("--out", required=True, help="output directory")
    common(p_syn)
    p_syn.set_defaults(func=run_synth)

    p_rep = sub.add_parser("report", help="re-render reports from cached metric records")
    p_rep.add_argument("--records", required=True, help="records.csv from a previous evaluate")
    p_rep.add_argument("--classification", required=True, help="classification.csv from a previous run")
    p_rep.add_argument("--out", required=True, help="output directory")
    p_rep.add_argument("--format", choices=("csv", "markdown"))
    common(p_rep)
    p_rep.set_defaults(func=run_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DocumentError, CorpusError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001 - contract: internal errors exit 3
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
