"""
Answer-correctness analytics: the answer table, linear SVMs evaluated with
leave-one-out cross-validation, ROC AUC, permutation tests and participant
rejection. Also the per-session refinder report.
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from .classifier import ClassifierSpec
from .errors import ClassifierError, ValidationError
from .features import GROUPS, PAPERS, QUESTIONS, TOPICS, AnswerLocation, FeatureVector
from .layout import DocumentLayout, Paragraph
from .model import ANNOTATION_CLASSES, Event, ReadingClass, ReadingEvent, Rect
from .paragraphs import ParagraphCount, class_proportions, count_paragraph_fixations, read_rects
from .presets import STANDARD_PRESETS, build_spec

logger = logging.getLogger(__name__)


DEFAULT_C = 1.0
DEFAULT_PERMUTATIONS = 1000

MIN_SESSION_MINUTES = 30.0
MAX_SESSION_MINUTES = 90.0
MAX_CALIBRATION_DEG = 1.0
MIN_CORRECT_PCT = 80.0


# --- records ----------------------------------------------------------------

@dataclass(frozen=True)
class AnswerRecord:
    """One row of the answer table: a participant's answer to one question."""
    participant_id: str
    paper: int
    group: str
    target_topic: int
    question_index: int
    correct: bool
    answer_time_ms: float
    features: FeatureVector = field(default_factory=FeatureVector)

    def __post_init__(self):
        if self.paper not in PAPERS:
            raise ValidationError(f"must be one of {PAPERS}", "paperNumber")
        if self.group not in GROUPS:
            raise ValidationError(f"must be one of {GROUPS}", "groupId")
        if self.target_topic not in TOPICS:
            raise ValidationError(f"must be one of {TOPICS}", "targetTopicNumber")
        if self.question_index not in QUESTIONS:
            raise ValidationError(f"must be one of {QUESTIONS}", "questionIndex")
        if not (math.isfinite(self.answer_time_ms) and self.answer_time_ms >= 0):
            raise ValidationError("must be a finite number >= 0", "answerTimeMs")

    def columns(self) -> Dict:
        """Column -> value, as classifier specs read them."""
        row = self.features.to_dict()
        row.pop("empty")
        row.update({
            "paperNumber": self.paper,
            "groupId": self.group,
            "targetTopicNumber": self.target_topic,
            "answerTimeMs": self.answer_time_ms,
        })
        return row

    def to_dict(self) -> Dict:
        return {
            "participant": self.participant_id,
            "paperNumber": self.paper,
            "groupId": self.group,
            "targetTopicNumber": self.target_topic,
            "questionIndex": self.question_index,
            "correctness": self.correct,
            "answerTimeMs": self.answer_time_ms,
            "gazeFeatures": self.features.to_dict(),
        }

    @staticmethod
    def from_dict(data: Dict) -> "AnswerRecord":
        try:
            return AnswerRecord(
                participant_id=str(data["participant"]),
                paper=int(data["paperNumber"]),
                group=str(data["groupId"]),
                target_topic=int(data["targetTopicNumber"]),
                question_index=int(data["questionIndex"]),
                correct=bool(data["correctness"]),
                answer_time_ms=float(data["answerTimeMs"]),
                features=FeatureVector.from_dict(data["gazeFeatures"]),
            )
        except KeyError as e:
            raise ValidationError("missing required field", str(e.args[0])) from None
        except (TypeError, ValueError, AttributeError) as e:
            raise ValidationError(f"bad answer record: {e}", "answers") from None


@dataclass(frozen=True)
class ParticipantRecord:
    participant_id: str
    session1_duration_min: float
    calibration_error_deg: float
    session2_correct_pct: float

    def rejection_reasons(self) -> List[str]:
        reasons = []
        if self.session1_duration_min < MIN_SESSION_MINUTES:
            reasons.append(f"session 1 shorter than {MIN_SESSION_MINUTES:g} minutes")
        if self.session1_duration_min > MAX_SESSION_MINUTES:
            reasons.append(f"session 1 longer than {MAX_SESSION_MINUTES:g} minutes")
        if self.calibration_error_deg > MAX_CALIBRATION_DEG:
            reasons.append(f"calibration error above {MAX_CALIBRATION_DEG:g} degree")
        if self.session2_correct_pct < MIN_CORRECT_PCT:
            reasons.append(f"fewer than {MIN_CORRECT_PCT:g}% correct")
        return reasons

    @property
    def valid(self) -> bool:
        return not self.rejection_reasons()

    def to_dict(self) -> Dict:
        return {
            "id": self.participant_id,
            "session1DurationMin": self.session1_duration_min,
            "calibrationErrorDeg": self.calibration_error_deg,
            "session2CorrectPct": self.session2_correct_pct,
            "valid": self.valid,
        }

    @staticmethod
    def from_dict(data: Dict) -> "ParticipantRecord":
        try:
            return ParticipantRecord(str(data["id"]), float(data["session1DurationMin"]),
                                     float(data["calibrationErrorDeg"]), float(data["session2CorrectPct"]))
        except KeyError as e:
            raise ValidationError("missing required field", str(e.args[0])) from None
        except (TypeError, ValueError) as e:
            raise ValidationError(f"bad participant record: {e}", "participants") from None


def reject_participants(participants: Iterable[ParticipantRecord]) -> List[ParticipantRecord]:
    """Participants passing the duration, calibration and accuracy rules."""
    kept = []
    for participant in participants:
        reasons = participant.rejection_reasons()
        if reasons:
            logger.info("rejected participant %s: %s", participant.participant_id, "; ".join(reasons))
        else:
            kept.append(participant)
    return kept


# --- ROC AUC ----------------------------------------------------------------

def compute_auc(scores: Sequence[float], labels: Sequence) -> float:
    """
    Area under the ROC curve as the Mann-Whitney statistic: the chance that a
    positive outscores a negative, ties counting one half. Labels are
    positive when > 0 (or True).
    """
    scores = np.asarray(scores, dtype=float)
    positive = np.asarray(labels) > 0
    if scores.ndim != 1 or scores.shape != positive.shape:
        raise ValidationError("scores and labels must be equal-length vectors", "labels")
    if not np.all(np.isfinite(scores)):
        raise ValidationError("scores must be finite", "scores")
    n_pos = int(positive.sum())
    n_neg = len(positive) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ClassifierError("AUC needs both classes")
    ranks = rankdata(scores)
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


# --- leave-one-out linear SVM ------------------------------------------------

class LooProblem:
    """
    Leave-one-out folds over a fixed design matrix.

    Fold k standardizes with the mean and standard deviation of every row
    but k, then trains an L2-regularized squared-hinge linear SVM (bias
    included in the regularized weights) on those rows. All folds are
    solved together by Newton's method with backtracking.
    """

    def __init__(self, X: np.ndarray, C: float = DEFAULT_C, tol: float = 1e-8, max_iter: int = 100):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] < 4:
            raise ClassifierError("need at least 4 records")
        if C <= 0:
            raise ValidationError("must be > 0", "C")
        self.X = X
        self.C = C
        self.tol = tol
        self.max_iter = max_iter
        n, d = X.shape
        total = X.sum(axis=0)
        total_sq = (X ** 2).sum(axis=0)
        mean = (total[None, :] - X) / (n - 1)
        var = np.maximum((total_sq[None, :] - X ** 2) / (n - 1) - mean ** 2, 0.0)
        sd = np.sqrt(var)
        sd[sd <= 1e-9 * (np.abs(mean) + 1.0)] = 1.0
        Z = (X[None, :, :] - mean[:, None, :]) / sd[:, None, :]
        self.Z = np.concatenate([Z, np.ones((n, n, 1))], axis=2)
        self.train = ~np.eye(n, dtype=bool)

    @property
    def size(self) -> int:
        return self.X.shape[0]

    def _objective(self, W: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        margins = np.einsum("kia,ka->ki", self.Z, W) * y[None, :]
        slack = np.where(self.train & (margins < 1.0), 1.0 - margins, 0.0)
        return 0.5 * (W ** 2).sum(axis=1) + self.C * (slack ** 2).sum(axis=1), slack

    def scores(self, labels: Sequence) -> np.ndarray:
        """Held-out decision values, one per record."""
        y = np.where(np.asarray(labels) > 0, 1.0, -1.0)
        if len(y) != self.size:
            raise ValidationError("one label per record", "labels")
        n, _, width = self.Z.shape
        W = np.zeros((n, width))
        identity = np.eye(width)
        for iteration in range(self.max_iter):
            objective, slack = self._objective(W, y)
            grad = W - 2.0 * self.C * np.einsum("ki,kia->ka", slack * y[None, :], self.Z)
            if np.max(np.linalg.norm(grad, axis=1)) <= self.tol * (1.0 + np.max(np.abs(objective))):
                break
            active = (slack > 0).astype(float)
            hessian = identity[None, :, :] + 2.0 * self.C * (
                np.transpose(self.Z * active[:, :, None], (0, 2, 1)) @ self.Z)
            step = np.linalg.solve(hessian, grad[:, :, None])[:, :, 0]
            decrease = (grad * step).sum(axis=1)
            t = np.ones(n)
            for _ in range(40):
                candidate, _ = self._objective(W - t[:, None] * step, y)
                ok = candidate <= objective - 1e-4 * t * decrease
                if ok.all():
                    break
                t = np.where(ok, t, t / 2.0)
            W = W - t[:, None] * step
        else:
            logger.warning("leave-one-out solver stopped after %d iterations", self.max_iter)
        held_out = self.Z[np.arange(n), np.arange(n)]
        return np.einsum("ka,ka->k", held_out, W)


def _liblinear_scores(X: np.ndarray, labels: Sequence, C: float) -> np.ndarray:
    from sklearn.model_selection import LeaveOneOut, cross_val_predict
    from sklearn.pipeline import make_pipeline
    from sklearn.preprocessing import StandardScaler
    from sklearn.svm import LinearSVC

    y = np.where(np.asarray(labels) > 0, 1, -1)
    model = make_pipeline(StandardScaler(), LinearSVC(C=C, loss="squared_hinge", dual=False, max_iter=10000))
    return cross_val_predict(model, X, y, cv=LeaveOneOut(), method="decision_function")


@dataclass
class LooResult:
    classifier: str
    auc: float
    scores: np.ndarray
    labels: np.ndarray


SOLVERS = ("newton", "liblinear")


def _check_labels(labels: np.ndarray):
    n_pos = int((labels > 0).sum())
    n_neg = len(labels) - n_pos
    if min(n_pos, n_neg) < 2:
        raise ClassifierError(f"need at least 2 records of each class (got {n_pos} correct, {n_neg} incorrect)")


def train_evaluate_loo(records: Sequence[AnswerRecord], spec: ClassifierSpec,
                       solver: str = "newton", C: float = DEFAULT_C) -> LooResult:
    """AUC of held-out decision values over leave-one-out folds."""
    if solver not in SOLVERS:
        raise ValidationError(f"must be one of {SOLVERS}", "solver")
    X = spec.design_matrix([r.columns() for r in records])
    labels = np.array([1 if r.correct else 0 for r in records])
    _check_labels(labels)
    if solver == "liblinear":
        scores = _liblinear_scores(X, labels, C)
    else:
        scores = LooProblem(X, C).scores(labels)
    return LooResult(spec.name, compute_auc(scores, labels), scores, labels)


# --- permutation test ---------------------------------------------------------

@dataclass
class PermutationResult:
    classifier: str
    observed_auc: float
    p_value: float
    permuted_aucs: np.ndarray

    @property
    def n_perm(self) -> int:
        return len(self.permuted_aucs)


def permutation_p_value(observed: float, permuted: Sequence[float]) -> float:
    """Share of permuted AUCs strictly greater than the observed one."""
    permuted = np.asarray(permuted, dtype=float)
    if permuted.size == 0:
        raise ValidationError("need at least one permutation", "nPerm")
    return float((permuted > observed).sum() / permuted.size)


def permutation_test(records: Sequence[AnswerRecord], spec: ClassifierSpec,
                     n_perm: int = DEFAULT_PERMUTATIONS, seed: int = 0,
                     solver: str = "newton", C: float = DEFAULT_C, workers: int = 1) -> PermutationResult:
    """
    Rerun the leave-one-out evaluation with correctness labels shuffled.

    Permutation k draws from its own generator seeded with (seed, k), so the
    result does not depend on `workers`.
    """
    if n_perm < 1:
        raise ValidationError("must be >= 1", "nPerm")
    observed = train_evaluate_loo(records, spec, solver, C)
    X = spec.design_matrix([r.columns() for r in records])
    problem = LooProblem(X, C) if solver == "newton" else None

    def run(k: int) -> float:
        shuffled = np.random.default_rng([seed, k]).permutation(observed.labels)
        if problem is not None:
            scores = problem.scores(shuffled)
        else:
            scores = _liblinear_scores(X, shuffled, C)
        return compute_auc(scores, shuffled)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            permuted = np.array(list(pool.map(run, range(n_perm))))
    else:
        permuted = np.array([run(k) for k in range(n_perm)])
    p_value = permutation_p_value(observed.auc, permuted)
    logger.info("%s: AUC %.3f, p = %.4f over %d permutations", spec.name, observed.auc, p_value, n_perm)
    return PermutationResult(spec.name, observed.auc, p_value, permuted)


@dataclass
class ClassifierResult:
    preset: str
    name: str
    columns: List[str]
    auc: float
    p_value: float
    n_perm: int
    n_records: int

    def to_dict(self) -> Dict:
        return {
            "preset": self.preset,
            "name": self.name,
            "columns": self.columns,
            "auc": round(self.auc, 6),
            "p": round(self.p_value, 6),
            "nPerm": self.n_perm,
            "nRecords": self.n_records,
        }


def evaluate_classifiers(records: Sequence[AnswerRecord], presets: Sequence[str] = STANDARD_PRESETS,
                         n_perm: int = DEFAULT_PERMUTATIONS, seed: int = 0, solver: str = "newton",
                         workers: int = 1) -> List[ClassifierResult]:
    results = []
    for preset in presets:
        spec = build_spec(preset)
        outcome = permutation_test(records, spec, n_perm, seed, solver, workers=workers)
        results.append(ClassifierResult(preset, spec.name, spec.columns, outcome.observed_auc,
                                        outcome.p_value, outcome.n_perm, len(records)))
    return results


def format_results_table(results: Sequence[ClassifierResult]) -> str:
    lines = [f"{'classifier':<16}{'columns':>8}{'AUC':>8}{'p':>9}"]
    for r in results:
        lines.append(f"{r.name:<16}{len(r.columns):>8}{r.auc:>8.3f}{r.p_value:>9.4f}")
    return "\n".join(lines)


# --- question and answer-location files -----------------------------------------

@dataclass(frozen=True)
class Question:
    """An experiment question; the first answer is always the correct one."""
    paper: int
    group: str
    target_topic: int
    index: int
    text: str
    answers: Tuple[str, ...]

    def __post_init__(self):
        if not self.answers:
            raise ValidationError("a question needs at least one answer", "answers")

    @property
    def correct_answer(self) -> str:
        return self.answers[0]

    def is_correct(self, choice: str) -> bool:
        return choice == self.correct_answer


def load_questions(path: str) -> List[Question]:
    """Questions of one paper and topic group."""
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    try:
        paper, group = int(data["paper"]), str(data["group"])
        return [
            Question(paper, group, int(topic["topic"]), int(q["question"]), str(q["text"]),
                     tuple(str(a) for a in q["answers"]))
            for topic in data["topics"] for q in topic["questions"]
        ]
    except KeyError as e:
        raise ValidationError(f"{path}: missing field", str(e.args[0])) from None
    except (TypeError, ValueError) as e:
        raise ValidationError(f"{path}: {e}", "questions") from None


def write_questions(questions: Sequence[Question], path: str):
    heads = {(q.paper, q.group) for q in questions}
    if len(heads) != 1:
        raise ValidationError("a question file holds one paper and group", "questions")
    paper, group = heads.pop()
    topics: Dict[int, List[Dict]] = {}
    for q in sorted(questions, key=lambda q: (q.target_topic, q.index)):
        topics.setdefault(q.target_topic, []).append(
            {"question": q.index, "text": q.text, "answers": list(q.answers)})
    data = {"paper": paper, "group": group,
            "topics": [{"topic": t, "questions": qs} for t, qs in sorted(topics.items())]}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, ensure_ascii=False)


def load_answer_locations(path: str) -> List[AnswerLocation]:
    """Answer-location tags of one paper, group and target topic."""
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    try:
        paper, group, topic = int(data["paper"]), str(data["group"]), int(data["targetTopic"])
        locations = []
        for tag in data["tags"]:
            page = int(tag["page"])
            x, y, w, h = (float(v) for v in tag["rect"])
            locations.append(AnswerLocation(paper, group, topic, int(tag["question"]), page,
                                            Rect(x, y, w, h, page_index=page), str(tag.get("text", ""))))
        return locations
    except KeyError as e:
        raise ValidationError(f"{path}: missing field", str(e.args[0])) from None
    except (TypeError, ValueError) as e:
        raise ValidationError(f"{path}: {e}", "tags") from None


def write_answer_locations(locations: Sequence[AnswerLocation], path: str):
    heads = {(a.paper, a.group, a.target_topic) for a in locations}
    if len(heads) != 1:
        raise ValidationError("an answer-location file holds one paper, group and topic", "tags")
    paper, group, topic = heads.pop()
    data = {"paper": paper, "group": group, "targetTopic": topic,
            "tags": [a.to_dict() for a in sorted(locations, key=lambda a: a.question_index)]}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, ensure_ascii=False)


# --- refinder report ----------------------------------------------------------

@dataclass
class RefinderReport:
    session_id: str
    proportions: Dict[ReadingClass, float]
    paragraphs: List[ParagraphCount]
    fixation_count: int

    @property
    def read_paragraphs(self) -> List[Paragraph]:
        return [c.paragraph for c in self.paragraphs if c.read]

    def to_dict(self) -> Dict:
        return {
            "sessionId": self.session_id,
            "fixations": self.fixation_count,
            "proportions": {rc.name.lower(): round(v, 6) for rc, v in self.proportions.items()},
            "readParagraphs": [
                {"page": c.paragraph.page_index,
                 "rect": [c.paragraph.rect.x, c.paragraph.rect.y, c.paragraph.rect.width, c.paragraph.rect.height],
                 "fixations": c.fixations,
                 "text": c.paragraph.text}
                for c in self.paragraphs if c.read
            ],
        }

    def summary(self) -> str:
        lines = [f"session {self.session_id}: {self.fixation_count} fixations, "
                 f"{len(self.read_paragraphs)} paragraphs read"]
        for reading_class, value in self.proportions.items():
            lines.append(f"  {reading_class.name.lower():<10}{value:7.1%}")
        return "\n".join(lines)


def refinder_report(events: Sequence[Event], layout: DocumentLayout) -> RefinderReport:
    """
    Read paragraphs and per-class coverage of one session. A paragraph is
    read when it collected at least three fixations and carries no manual
    annotation.
    """
    if not events:
        raise ValidationError("no events", "events")
    sessions = {e.session_id for e in events}
    if len(sessions) != 1:
        raise ValidationError(f"events span {len(sessions)} sessions", "sessionId")
    points = []
    annotations: List[Rect] = []
    for event in events:
        annotations.extend(r for r in event.page_rects if r.reading_class in ANNOTATION_CLASSES)
        if isinstance(event, ReadingEvent):
            for data in event.page_eye_data:
                points.extend((data.page_index, x, y) for x, y in zip(data.xs, data.ys))
    counts = count_paragraph_fixations(layout, points, annotations)
    read = [c.paragraph for c in counts if c.read]
    proportions = class_proportions(layout, annotations + read_rects(read))
    return RefinderReport(sessions.pop(), proportions, counts, len(points))
