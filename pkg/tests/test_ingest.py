import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _support import random_prediction_set, random_scene
from predsafe.ingest import (
    CorpusError,
    DocumentError,
    JsonSyntaxError,
    SchemaError,
    SemanticError,
    load_corpus,
    load_scenes,
    parse_predictions,
    parse_scene,
    validate_pair,
    write_predictions,
    write_scene,
)
from predsafe.scene_model import SemanticCondition, validate_scene

MINIMAL_SCENE = {
    "scene_id": "s1",
    "dt": 0.5,
    "agents": [
        {
            "agent_id": "a1",
            "history": [[0, 0], [1, 0], [2, 0], [3, 0]],
            "future": [[4, 0], [5, 0], [6, 0], [7, 0], [8, 0], [9, 0]],
        }
    ],
    "map": None,
}


def scene_doc(**overrides):
    doc = json.loads(json.dumps(MINIMAL_SCENE))
    doc.update(overrides)
    return json.dumps(doc)


def preds_doc(n_agents=2, k=20, condition="with_map"):
    return json.dumps(
        {
            "scene_id": "s1",
            "model_id": "m1",
            "condition": condition,
            "predictions": [
                {
                    "agent_id": f"a{i}",
                    "samples": [[[float(t), float(j)] for t in range(6)] for j in range(k)],
                }
                for i in range(n_agents)
            ],
        }
    )


class TestParseScene:
    def test_minimal_document(self):
        scene = parse_scene(scene_doc())
        assert scene.scene_id == "s1"
        assert scene.map is None
        assert validate_scene(scene) == []

    def test_short_future_is_schema_error_naming_future(self):
        doc = json.loads(scene_doc())
        doc["agents"][0]["future"] = doc["agents"][0]["future"][:5]
        with pytest.raises(SchemaError) as exc:
            parse_scene(json.dumps(doc))
        assert "future" in exc.value.path

    def test_nan_coordinate_is_semantic_error(self):
        raw = scene_doc().replace("[4, 0]", "[NaN, 0]")
        with pytest.raises(SemanticError) as exc:
            parse_scene(raw)
        assert "future" in exc.value.path

    def test_nan_string_is_semantic_error(self):
        raw = scene_doc().replace("[4, 0]", '["NaN", 0]')
        with pytest.raises(SemanticError):
            parse_scene(raw)

    def test_dt_zero_is_semantic_error(self):
        with pytest.raises(SemanticError) as exc:
            parse_scene(scene_doc(dt=0))
        assert exc.value.path == "$.dt"

    def test_duplicate_agent_is_semantic_error(self):
        doc = json.loads(scene_doc())
        doc["agents"].append(doc["agents"][0])
        with pytest.raises(SemanticError, match="duplicate"):
            parse_scene(json.dumps(doc))

    def test_unknown_field_rejected(self):
        with pytest.raises(SchemaError, match="unknown field"):
            parse_scene(scene_doc(extra=1))

    def test_optional_format_field(self):
        assert parse_scene(scene_doc(format=1)).scene_id == "s1"
        with pytest.raises(SchemaError):
            parse_scene(scene_doc(format=2))

    def test_syntax_error_is_positioned(self):
        with pytest.raises(JsonSyntaxError):
            parse_scene("{nope")

    def test_error_carries_source_and_line(self):
        with pytest.raises(SchemaError) as exc:
            parse_scene(scene_doc(extra=1), source="x.scenes.jsonl", line=7)
        assert exc.value.source == "x.scenes.jsonl"
        assert exc.value.line == 7
        assert "x.scenes.jsonl:7" in str(exc.value)


class TestParsePredictions:
    def test_k20_document(self):
        preds = parse_predictions(preds_doc())
        assert preds.k == 20
        assert set(preds.per_agent) == {"a0", "a1"}

    def test_non_uniform_k(self):
        doc = json.loads(preds_doc(n_agents=2, k=20))
        doc["predictions"][1]["samples"] = doc["predictions"][1]["samples"][:19]
        with pytest.raises(SemanticError, match="non-uniform K"):
            parse_predictions(json.dumps(doc))

    def test_condition_mapping(self):
        assert parse_predictions(preds_doc(condition="with_map")).condition is SemanticCondition.WITH_MAP
        assert (
            parse_predictions(preds_doc(condition="without_map")).condition
            is SemanticCondition.WITHOUT_MAP
        )
        with pytest.raises(SchemaError):
            parse_predictions(preds_doc(condition="sometimes"))


class TestValidatePair:
    def test_matching_pair(self):
        scene = parse_scene(scene_doc())
        preds = parse_predictions(preds_doc(n_agents=1, k=2).replace('"a0"', '"a1"'))
        assert validate_pair(scene, preds) == []

    def test_unknown_agent_named(self):
        scene = parse_scene(scene_doc())
        preds = parse_predictions(preds_doc(n_agents=1, k=2).replace('"a0"', '"ghost"'))
        violations = validate_pair(scene, preds)
        assert len(violations) == 1
        assert "ghost" in violations[0].message

    def test_horizon_mismatch(self):
        scene = parse_scene(scene_doc())
        doc = json.loads(preds_doc(n_agents=1, k=2))
        doc["predictions"][0]["agent_id"] = "a1"
        doc["predictions"][0]["samples"] = [s[:5] for s in doc["predictions"][0]["samples"]]
        preds = parse_predictions(json.dumps(doc), future_len=5)
        violations = validate_pair(scene, preds)
        assert any(v.rule == "horizon_match" for v in violations)


class TestRoundTrip:
    def test_specific_coordinate_survives(self):
        doc = json.loads(scene_doc())
        doc["agents"][0]["history"][0] = [1.8558, -3.25]
        scene = parse_scene(json.dumps(doc))
        again = parse_scene(write_scene(scene))
        assert again.agents[0].history[0].x == 1.8558
        assert again == scene

    def test_empty_lane_list_distinct_from_null_map(self):
        with_empty = parse_scene(scene_doc(map={"lanes": []}))
        without = parse_scene(scene_doc(map=None))
        assert with_empty.map is not None and with_empty.map.lanes == ()
        assert without.map is None
        assert parse_scene(write_scene(with_empty)) == with_empty
        assert parse_scene(write_scene(without)) == without
        assert with_empty != without

    def test_randomized_scene_round_trip(self):
        rng = np.random.Generator(np.random.PCG64(2024))
        for _ in range(300):
            scene = random_scene(rng)
            assert parse_scene(write_scene(scene)) == scene

    def test_randomized_predictions_round_trip(self):
        rng = np.random.Generator(np.random.PCG64(2025))
        for _ in range(300):
            preds = random_prediction_set(rng)
            assert parse_predictions(write_predictions(preds)) == preds


class TestTotality:
    @given(st.text(max_size=200))
    @settings(max_examples=300)
    def test_arbitrary_text_never_crashes(self, text):
        for fn in (parse_scene, parse_predictions):
            try:
                fn(text)
            except DocumentError:
                pass

    @given(
        st.recursive(
            st.none() | st.booleans() | st.floats(allow_nan=False) | st.integers() | st.text(max_size=8),
            lambda inner: st.lists(inner, max_size=4)
            | st.dictionaries(st.text(max_size=8), inner, max_size=4),
            max_leaves=20,
        )
    )
    @settings(max_examples=300)
    def test_arbitrary_json_never_crashes(self, value):
        text = json.dumps(value)
        for fn in (parse_scene, parse_predictions):
            try:
                fn(text)
            except DocumentError:
                pass


class TestCorpus:
    def test_load_corpus_orders_and_links(self, tmp_path):
        rng = np.random.Generator(np.random.PCG64(3))
        scenes = [random_scene(rng) for _ in range(5)]
        ids = sorted({s.scene_id for s in scenes})
        scenes = [s for i, s in enumerate(scenes) if s.scene_id in ids[: i + 1]]
        scene_path = tmp_path / "c.scenes.jsonl"
        scene_path.write_text("".join(write_scene(s) + "\n" for s in scenes), encoding="utf-8")
        corpus = load_corpus([scene_path], [])
        assert list(corpus.scenes) == sorted(corpus.scenes)
        assert corpus.manifest.scene_files == (str(scene_path),)

    def test_duplicate_scene_id_rejected(self, tmp_path):
        path = tmp_path / "c.scenes.jsonl"
        path.write_text(scene_doc() + "\n" + scene_doc() + "\n", encoding="utf-8")
        with pytest.raises(CorpusError, match="duplicate scene_id"):
            load_scenes([path])

    def test_unresolved_prediction_rejected(self, tmp_path):
        scene_path = tmp_path / "c.scenes.jsonl"
        scene_path.write_text(scene_doc() + "\n", encoding="utf-8")
        preds_path = tmp_path / "c.preds.jsonl"
        preds_path.write_text(
            preds_doc().replace('"scene_id": "s1"', '"scene_id": "s9"') + "\n", encoding="utf-8"
        )
        with pytest.raises(CorpusError, match="does not resolve"):
            load_corpus([scene_path], [preds_path])

    def test_bad_bytes_become_structured_error(self, tmp_path):
        path = tmp_path / "c.scenes.jsonl"
        path.write_bytes(b'\xff\xfe{"scene_id"\n')
        with pytest.raises(JsonSyntaxError):
            load_scenes([path])
