"""
Preset classifier specifications.
Each preset names the column groups a classifier is trained on.
"""

from typing import Dict, List, Optional

from .classifier import DEFAULT_GROUPS, ClassifierSpec
from .errors import ValidationError


PRESETS: Dict[str, Dict] = {
    "eye": {
        "name": "Eye",
        "description": "Gaze features around the answer location",
        "groups": ["fixation durations", "eye distance", "travel"],
    },
    "topic": {
        "name": "Topic",
        "description": "Paper number, target topic group and target topic",
        "groups": ["question"],
    },
    "all": {
        "name": "All",
        "description": "Every table column: gaze, question and answer time",
        "groups": ["fixation durations", "eye distance", "travel", "question", "answer time"],
    },
    "durations": {
        "name": "Durations",
        "description": "Fixation durations only",
        "groups": ["fixation durations"],
    },
    "topic_durations": {
        "name": "Topic+Durations",
        "description": "Question data with fixation durations",
        "groups": ["fixation durations", "question"],
    },
}

# The three classifiers reported by an experiment run
STANDARD_PRESETS = ("eye", "topic", "all")


def get_preset_names() -> List[str]:
    return list(PRESETS.keys())


def get_preset_info(preset_id: str) -> Optional[Dict]:
    if preset_id in PRESETS:
        return {
            "id": preset_id,
            "name": PRESETS[preset_id]["name"],
            "description": PRESETS[preset_id]["description"],
            "groups": list(PRESETS[preset_id]["groups"]),
        }
    return None


def get_all_presets_info() -> List[Dict]:
    return [get_preset_info(p) for p in PRESETS.keys()]


def build_spec(preset_id: str) -> ClassifierSpec:
    """A classifier spec with only the preset's groups enabled."""
    if preset_id not in PRESETS:
        raise ValidationError(f"unknown classifier {preset_id!r} (known: {', '.join(PRESETS)})", "classifier")
    preset = PRESETS[preset_id]
    spec = ClassifierSpec(preset["name"], DEFAULT_GROUPS)
    for group in spec.groups:
        spec.set_group_enabled(group.name, group.name in preset["groups"])
    return spec
