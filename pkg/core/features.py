"""
Gaze features around answer locations.

Fixations here are page-space points (origin bottom left, y grows upward),
so moving down the page means a negative dy.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .errors import ValidationError
from .geometry import READING_ANGLE_DEG, DEFAULT_EYE_DISTANCE_CM, ViewGeometry, visual_span_points
from .model import Event, ReadingEvent, Rect, Tag, TagAnchor


GROUPS = ("A", "B")
PAPERS = (1, 2, 3, 4)
TOPICS = (1, 2, 3)
QUESTIONS = (1, 2, 3, 4)

FEATURE_NAMES = (
    "meanFixDurMs",
    "medianFixDurMs",
    "sumFixDurMs",
    "meanEyeDistanceCm",
    "totalTravelPts",
    "forwardTravelPts",
    "backwardTravelPts",
)


class ForwardRule(str, Enum):
    # rightward or downward saccades
    READING = "reading"
    # leftward or downward saccades
    LITERAL = "literal"


@dataclass(frozen=True)
class PageFixation:
    page_index: int
    x: float
    y: float
    duration_ms: float
    distance_cm: Optional[float] = None

    def to_list(self) -> List:
        return [self.page_index, self.x, self.y, self.duration_ms, self.distance_cm or 0.0]

    @staticmethod
    def from_list(raw: Sequence) -> "PageFixation":
        if not isinstance(raw, (list, tuple)) or len(raw) not in (4, 5):
            raise ValidationError("expected [page, x, y, durationMs, distanceCm]", "fixations")
        distance = raw[4] if len(raw) == 5 and raw[4] else None
        try:
            return PageFixation(int(raw[0]), float(raw[1]), float(raw[2]), float(raw[3]),
                                None if distance is None else float(distance))
        except (TypeError, ValueError):
            raise ValidationError("expected numbers", "fixations") from None


@dataclass(frozen=True)
class AnswerLocation:
    """The text box that answers one experiment question."""
    paper: int
    group: str
    target_topic: int
    question_index: int
    page_index: int
    rect: Rect
    answer_text: str = ""

    def __post_init__(self):
        if self.paper not in PAPERS:
            raise ValidationError(f"must be one of {PAPERS}", "paper")
        if self.group not in GROUPS:
            raise ValidationError(f"must be one of {GROUPS}", "group")
        if self.target_topic not in TOPICS:
            raise ValidationError(f"must be one of {TOPICS}", "targetTopic")
        if self.question_index not in QUESTIONS:
            raise ValidationError(f"must be one of {QUESTIONS}", "questionIndex")
        if self.rect.page_index != self.page_index:
            raise ValidationError("rect must lie on the answer page", "rect")

    @property
    def key(self) -> str:
        return f"{self.paper}{self.group}-{self.target_topic}-{self.question_index}"

    def as_tag(self) -> Tag:
        return Tag(f"answer:{self.key}", TagAnchor(self.page_index, self.rect, self.answer_text))

    def to_dict(self) -> Dict:
        return {
            "question": self.question_index,
            "page": self.page_index,
            "rect": [self.rect.x, self.rect.y, self.rect.width, self.rect.height],
            "text": self.answer_text,
        }


@dataclass(frozen=True)
class FeatureVector:
    mean_fix_dur_ms: float = 0.0
    median_fix_dur_ms: float = 0.0
    sum_fix_dur_ms: float = 0.0
    mean_eye_distance_cm: float = 0.0
    total_travel_pts: float = 0.0
    forward_travel_pts: float = 0.0
    backward_travel_pts: float = 0.0
    empty: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([
            self.mean_fix_dur_ms, self.median_fix_dur_ms, self.sum_fix_dur_ms,
            self.mean_eye_distance_cm, self.total_travel_pts,
            self.forward_travel_pts, self.backward_travel_pts,
        ], dtype=float)

    def to_dict(self) -> Dict:
        data = dict(zip(FEATURE_NAMES, (float(v) for v in self.as_array())))
        data["empty"] = self.empty
        return data

    @staticmethod
    def from_dict(data: Dict) -> "FeatureVector":
        try:
            values = [float(data[name]) for name in FEATURE_NAMES]
        except KeyError as e:
            raise ValidationError("missing feature", str(e.args[0])) from None
        except (TypeError, ValueError):
            raise ValidationError("features must be numbers", "features") from None
        if not all(math.isfinite(v) for v in values):
            raise ValidationError("features must be finite", "features")
        return FeatureVector(*values, empty=bool(data.get("empty", False)))


def _is_forward(dx: np.ndarray, dy: np.ndarray, rule: ForwardRule) -> np.ndarray:
    if rule == ForwardRule.LITERAL:
        return (dx < 0) | (dy < 0)
    return (dx > 0) | (dy < 0)


def extract_features(fixations: Sequence[PageFixation],
                     rule: ForwardRule = ForwardRule.READING,
                     default_distance_cm: float = DEFAULT_EYE_DISTANCE_CM) -> FeatureVector:
    """
    Duration, distance and travel features of a fixation sequence.

    Saccades between different pages have no page-space length and are
    left out of the travel sums. Unknown eye distances count as the default.
    """
    if not fixations:
        return FeatureVector(empty=True)
    durations = np.array([f.duration_ms for f in fixations], dtype=float)
    distances = np.array([f.distance_cm if f.distance_cm else default_distance_cm for f in fixations])
    pages = np.array([f.page_index for f in fixations])
    xs = np.array([f.x for f in fixations], dtype=float)
    ys = np.array([f.y for f in fixations], dtype=float)

    same_page = pages[1:] == pages[:-1]
    dx = np.diff(xs)[same_page]
    dy = np.diff(ys)[same_page]
    lengths = np.hypot(dx, dy)
    forward = _is_forward(dx, dy, rule)
    forward_travel = float(lengths[forward].sum())
    backward_travel = float(lengths[~forward].sum())

    return FeatureVector(
        mean_fix_dur_ms=float(durations.mean()),
        median_fix_dur_ms=float(np.median(durations)),
        sum_fix_dur_ms=float(durations.sum()),
        mean_eye_distance_cm=float(distances.mean()),
        total_travel_pts=forward_travel + backward_travel,
        forward_travel_pts=forward_travel,
        backward_travel_pts=backward_travel,
    )


def answer_radius(geometry: ViewGeometry = ViewGeometry()) -> float:
    return visual_span_points(READING_ANGLE_DEG, geometry) / 2.0


def fixations_near_answer(fixations: Iterable[PageFixation], answer: AnswerLocation,
                          geometry: ViewGeometry = ViewGeometry()) -> List[PageFixation]:
    """Fixations on the answer page within half the reading span of the answer box center."""
    radius = answer_radius(geometry)
    cx, cy = answer.rect.center
    return [f for f in fixations
            if f.page_index == answer.page_index and math.hypot(f.x - cx, f.y - cy) <= radius]


def fixations_from_events(events: Iterable[Event]) -> List[PageFixation]:
    """Chronological page fixations recorded in reading events."""
    rows = []
    for event in events:
        if not isinstance(event, ReadingEvent):
            continue
        for data in event.page_eye_data:
            for x, y, duration, start in zip(data.xs, data.ys, data.durations, data.start_times):
                rows.append((start, PageFixation(data.page_index, x, y, duration)))
    rows.sort(key=lambda row: row[0])
    return [f for _, f in rows]
