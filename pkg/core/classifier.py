"""
Classifier specifications: which answer-table columns a classifier sees and
how they become a numeric design matrix.
"""

import copy
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ClassifierError, ValidationError
from .features import FEATURE_NAMES, GROUPS, PAPERS, TOPICS


@dataclass
class ColumnGroup:
    """A named set of table columns."""
    name: str
    columns: Tuple[str, ...]
    # categorical columns are one-hot encoded over these levels
    levels: Dict[str, Tuple] = field(default_factory=dict)
    enabled: bool = True
    priority: int = 0  # lower comes first in the design matrix

    def matches(self, column: str) -> bool:
        return self.enabled and column in self.columns

    def expanded_columns(self) -> List[str]:
        names = []
        for column in self.columns:
            if column in self.levels:
                names.extend(f"{column}={level}" for level in self.levels[column])
            else:
                names.append(column)
        return names

    def encode(self, row: Dict) -> List[float]:
        values: List[float] = []
        for column in self.columns:
            if column not in row:
                raise ClassifierError(f"record has no column {column!r}")
            value = row[column]
            if column in self.levels:
                if value not in self.levels[column]:
                    raise ClassifierError(f"{column}={value!r} is not one of {self.levels[column]}")
                values.extend(1.0 if value == level else 0.0 for level in self.levels[column])
            else:
                values.append(float(value))
        return values

    def to_dict(self) -> Dict:
        return {
            "name": self.name,
            "columns": list(self.columns),
            "levels": {k: list(v) for k, v in self.levels.items()},
            "enabled": self.enabled,
            "priority": self.priority,
        }

    @staticmethod
    def from_dict(data: Dict) -> "ColumnGroup":
        try:
            return ColumnGroup(
                name=data["name"],
                columns=tuple(data.get("columns", [])),
                levels={k: tuple(v) for k, v in data.get("levels", {}).items()},
                enabled=data.get("enabled", True),
                priority=data.get("priority", 50),
            )
        except (KeyError, TypeError, AttributeError) as e:
            raise ValidationError(f"bad column group: {e}", "groups") from None


# The answer table's columns, grouped
DEFAULT_GROUPS = [
    ColumnGroup(
        name="fixation durations",
        columns=FEATURE_NAMES[:3],
        priority=0,
    ),
    ColumnGroup(
        name="eye distance",
        columns=(FEATURE_NAMES[3],),
        priority=1,
    ),
    ColumnGroup(
        name="travel",
        columns=FEATURE_NAMES[4:],
        priority=2,
    ),
    ColumnGroup(
        name="question",
        columns=("paperNumber", "groupId", "targetTopicNumber"),
        levels={"paperNumber": PAPERS, "groupId": GROUPS, "targetTopicNumber": TOPICS},
        priority=3,
    ),
    ColumnGroup(
        name="answer time",
        columns=("answerTimeMs",),
        priority=4,
    ),
]


class ClassifierSpec:
    """A named classifier and the column groups it uses."""

    def __init__(self, name: str, groups: Optional[Sequence[ColumnGroup]] = None):
        self.name = name
        self.groups: List[ColumnGroup] = [copy.deepcopy(g) for g in (groups if groups is not None else DEFAULT_GROUPS)]
        self._sort_groups()

    def __repr__(self) -> str:
        return f"ClassifierSpec({self.name!r}, {[g.name for g in self.get_enabled_groups()]})"

    def add_group(self, group: ColumnGroup) -> ColumnGroup:
        if self.get_group(group.name) is not None:
            raise ValidationError(f"duplicate group {group.name!r}", "groups")
        self.groups.append(group)
        self._sort_groups()
        return group

    def remove_group(self, name: str) -> bool:
        for i, group in enumerate(self.groups):
            if group.name == name:
                del self.groups[i]
                return True
        return False

    def get_group(self, name: str) -> Optional[ColumnGroup]:
        for group in self.groups:
            if group.name == name:
                return group
        return None

    def set_group_enabled(self, name: str, enabled: bool) -> bool:
        group = self.get_group(name)
        if group:
            group.enabled = enabled
            return True
        return False

    def set_group_priority(self, name: str, priority: int) -> bool:
        group = self.get_group(name)
        if group:
            group.priority = priority
            self._sort_groups()
            return True
        return False

    def _sort_groups(self):
        self.groups.sort(key=lambda g: g.priority)

    def get_enabled_groups(self) -> List[ColumnGroup]:
        return [g for g in self.groups if g.enabled]

    @property
    def columns(self) -> List[str]:
        """Table columns in design-matrix order."""
        return [c for g in self.get_enabled_groups() for c in g.columns]

    def uses(self, column: str) -> bool:
        return any(g.matches(column) for g in self.groups)

    def feature_names(self) -> List[str]:
        """Design-matrix column names, with one-hot levels spelled out."""
        return [name for g in self.get_enabled_groups() for name in g.expanded_columns()]

    def design_matrix(self, rows: Sequence[Dict]) -> np.ndarray:
        """One row per record; `rows` are column -> value mappings."""
        groups = self.get_enabled_groups()
        if not groups:
            raise ClassifierError(f"classifier {self.name!r} has no enabled columns")
        matrix = np.array([[v for g in groups for v in g.encode(row)] for row in rows], dtype=float)
        if matrix.size and not np.all(np.isfinite(matrix)):
            raise ClassifierError("design matrix has non-finite values")
        return matrix.reshape(len(rows), len(self.feature_names()))

    def to_dict(self) -> Dict:
        return {"name": self.name, "groups": [g.to_dict() for g in self.groups]}

    @staticmethod
    def from_dict(data: Dict) -> "ClassifierSpec":
        if not isinstance(data, dict) or "name" not in data:
            raise ValidationError("expected a classifier spec", "classifier")
        return ClassifierSpec(data["name"], [ColumnGroup.from_dict(g) for g in data.get("groups", [])])
