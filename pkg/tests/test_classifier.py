import numpy as np
import pytest

from core.analytics import AnswerRecord
from core.classifier import DEFAULT_GROUPS, ClassifierSpec, ColumnGroup
from core.errors import ClassifierError, ValidationError
from core.features import FEATURE_NAMES, FeatureVector
from core.presets import (PRESETS, STANDARD_PRESETS, build_spec, get_all_presets_info, get_preset_info,
                          get_preset_names)


def record(paper=2, group="B", topic=3, correct=True, total=900.0):
    features = FeatureVector(total / 3, total / 3, total, 61.0, 120.0, 100.0, 20.0)
    return AnswerRecord("P01", paper, group, topic, 1, correct, 30000.0, features)


def test_standard_presets():
    assert STANDARD_PRESETS == ("eye", "topic", "all")
    assert set(STANDARD_PRESETS) <= set(get_preset_names())
    assert build_spec("eye").columns == list(FEATURE_NAMES)
    assert build_spec("topic").feature_names() == [
        "paperNumber=1", "paperNumber=2", "paperNumber=3", "paperNumber=4",
        "groupId=A", "groupId=B",
        "targetTopicNumber=1", "targetTopicNumber=2", "targetTopicNumber=3",
    ]
    assert len(build_spec("all").feature_names()) == len(FEATURE_NAMES) + 9 + 1


def test_unknown_preset():
    with pytest.raises(ValidationError):
        build_spec("psychic")
    assert get_preset_info("psychic") is None


def test_preset_info():
    info = get_preset_info("all")
    assert info["name"] == "All"
    assert "answer time" in info["groups"]
    assert len(get_all_presets_info()) == len(PRESETS)


def test_design_matrix_one_hot():
    spec = build_spec("topic")
    matrix = spec.design_matrix([record().columns(), record(paper=1, group="A", topic=1).columns()])
    assert matrix.shape == (2, 9)
    np.testing.assert_array_equal(matrix[0], [0, 1, 0, 0, 0, 1, 0, 0, 1])
    np.testing.assert_array_equal(matrix[1], [1, 0, 0, 0, 1, 0, 1, 0, 0])


def test_design_matrix_order_follows_priority():
    spec = build_spec("all")
    row = spec.design_matrix([record().columns()])[0]
    assert row[2] == 900.0
    assert row[-1] == 30000.0
    spec.set_group_priority("answer time", -1)
    assert spec.design_matrix([record().columns()])[0][0] == 30000.0


def test_design_matrix_errors():
    spec = build_spec("topic")
    bad = record().columns()
    bad["groupId"] = "Z"
    with pytest.raises(ClassifierError):
        spec.design_matrix([bad])
    missing = record().columns()
    del missing["paperNumber"]
    with pytest.raises(ClassifierError):
        spec.design_matrix([missing])
    for group in list(spec.groups):
        spec.set_group_enabled(group.name, False)
    with pytest.raises(ClassifierError):
        spec.design_matrix([record().columns()])


def test_empty_table_keeps_width():
    assert build_spec("eye").design_matrix([]).shape == (0, len(FEATURE_NAMES))


def test_group_editing():
    spec = ClassifierSpec("custom", [])
    spec.add_group(ColumnGroup("time", ("answerTimeMs",)))
    with pytest.raises(ValidationError):
        spec.add_group(ColumnGroup("time", ("answerTimeMs",)))
    assert spec.uses("answerTimeMs")
    assert not spec.set_group_enabled("absent", False)
    assert spec.remove_group("time")
    assert not spec.remove_group("time")
    assert spec.columns == []


def test_specs_do_not_share_groups():
    first, second = build_spec("eye"), build_spec("topic")
    first.set_group_enabled("question", True)
    assert not second.get_group("travel").enabled
    assert all(g.enabled for g in DEFAULT_GROUPS)


def test_spec_dict_round_trip():
    spec = build_spec("topic")
    again = ClassifierSpec.from_dict(spec.to_dict())
    assert again.feature_names() == spec.feature_names()
    with pytest.raises(ValidationError):
        ClassifierSpec.from_dict({"groups": []})
    with pytest.raises(ValidationError):
        ColumnGroup.from_dict({"columns": ["x"]})


def test_group_dict_carries_only_used_fields():
    for group in DEFAULT_GROUPS:
        assert set(group.to_dict()) == {"name", "columns", "levels", "enabled", "priority"}
        assert ColumnGroup.from_dict(group.to_dict()) == group
