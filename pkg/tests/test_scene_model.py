
import pytest

from predsafe.scene_model import (
    AgentTrack,
    DensityLevel,
    GeometryType,
    MetricRecord,
    PredictionSet,
    Scene,
    SemanticCondition,
    StratumKey,
    StratumReport,
    TrajPoint,
    validate_scene,
)


def make_track(agent_id="a1", h=4, t=6):
    return AgentTrack(
        agent_id,
        tuple(TrajPoint(float(i), 0.0) for i in range(h)),
        tuple(TrajPoint(float(h + i), 0.0) for i in range(t)),
    )


def test_validate_scene_well_formed():
    scene = Scene("s1", 0.5, (make_track(),))
    assert validate_scene(scene) == []


def test_validate_scene_short_history():
    scene = Scene("s1", 0.5, (make_track(h=3),))
    violations = validate_scene(scene)
    assert len(violations) == 1
    assert "history" in violations[0].field
    assert violations[0].rule == "history_length"


def test_validate_scene_duplicate_agent_id():
    scene = Scene("s1", 0.5, (make_track("a1"), make_track("a1")))
    violations = validate_scene(scene)
    assert len(violations) == 1
    assert violations[0].rule == "agent_id_unique"
    assert "a1" in violations[0].message


def test_validate_scene_collects_everything():
    scene = Scene("s1", -1.0, (make_track("", h=2, t=3),))
    rules = {v.rule for v in validate_scene(scene)}
    assert rules == {"dt_positive", "agent_id_nonempty", "history_length", "future_length"}


def test_trajpoint_rejects_non_finite():
    with pytest.raises(ValueError):
        TrajPoint(float("nan"), 0.0)
    with pytest.raises(ValueError):
        TrajPoint(0.0, float("inf"))


def test_metric_record_rejects_negative_and_non_finite():
    with pytest.raises(ValueError):
        MetricRecord("s", "a", SemanticCondition.WITH_MAP, -0.1, 1.0)
    with pytest.raises(ValueError):
        MetricRecord("s", "a", SemanticCondition.WITH_MAP, 1.0, float("nan"))


def test_prediction_set_rejects_non_uniform_k():
    traj = tuple(TrajPoint(float(i), 0.0) for i in range(6))
    with pytest.raises(ValueError, match="non-uniform K"):
        PredictionSet("s", "m", SemanticCondition.WITH_MAP, {"a": (traj,), "b": (traj, traj)})


def test_prediction_set_rejects_mixed_lengths():
    t6 = tuple(TrajPoint(float(i), 0.0) for i in range(6))
    t5 = t6[:5]
    with pytest.raises(ValueError, match="length"):
        PredictionSet("s", "m", SemanticCondition.WITH_MAP, {"a": (t6, t5)})


def test_enum_cardinality_and_order():
    assert [c.value for c in SemanticCondition] == ["with_map", "without_map"]
    assert [d.value for d in DensityLevel] == ["single", "few", "medium", "many"]
    assert [g.value for g in GeometryType] == ["straight", "curved"]
    assert DensityLevel.SINGLE < DensityLevel.FEW < DensityLevel.MEDIUM < DensityLevel.MANY
    assert GeometryType.STRAIGHT < GeometryType.CURVED


def test_stratum_key_total_order():
    keys = [
        StratumKey(s, r, t)
        for s in SemanticCondition
        for r in DensityLevel
        for t in GeometryType
    ]
    assert len(set(keys)) == 16
    shuffled = list(reversed(keys))
    assert sorted(shuffled) == keys  # declaration order: sigma, rho, tau
    assert sorted(shuffled) == sorted(list(keys))  # deterministic


def test_stratum_report_absence_contract():
    row = StratumReport(None, None, 0)
    assert row.ade_o is None and row.mie_f is None
    with pytest.raises(ValueError):
        StratumReport(None, None, 0, ade_o=1.0, ade_w=1.0, fde_o=1.0, fde_w=1.0, mie_a=0.0, mie_f=0.0)
    with pytest.raises(ValueError):
        StratumReport(None, None, 3)  # non-empty must carry metrics


def test_stratum_report_group_labels():
    assert StratumReport(None, None, 0).group_label == "overall"
    assert StratumReport(DensityLevel.FEW, None, 0).group_label == "few"
    assert StratumReport(None, GeometryType.CURVED, 0).group_label == "curved"
    assert StratumReport(DensityLevel.MANY, GeometryType.STRAIGHT, 0).group_label == "many/straight"
