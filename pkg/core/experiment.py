"""
Synthetic answer-finding experiment.

Generates papers with answer locations, participants, and per-question gaze
data whose correctness depends on how closely an answer was read relative
to the topic's usual reading effort. Gaze alone and topic alone carry
little information about correctness; together they do.
"""

import json
import logging
import os
import uuid
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .analytics import (DEFAULT_PERMUTATIONS, AnswerRecord, ClassifierResult, ParticipantRecord, Question,
                        evaluate_classifiers, load_answer_locations, load_questions, reject_participants,
                        write_answer_locations, write_questions)
from .errors import ValidationError
from .features import (GROUPS, QUESTIONS, TOPICS, AnswerLocation, PageFixation, answer_radius,
                       extract_features, fixations_near_answer)
from .geometry import ViewGeometry
from .layout import LETTER_PAGE, TEXT_MARGIN, DocumentLayout, PageLayout, TextBlock, load_layout, save_layout
from .model import PageEyeData, ReadingEvent, Rect
from .presets import STANDARD_PRESETS
from .tracker import FIXATION_MEAN_MS, FIXATION_SD_MS, SACCADE_MS

logger = logging.getLogger(__name__)


ANSWER_LINE_HEIGHT = 14.0
ANSWER_LINE_SPACING = 30.0

_WORDS = (
    "asthma allergy airway cohort exposure prevalence smoking students survey risk "
    "treatment outcome sample clinical adult children symptom diagnosis national "
    "factor analysis trial health growth urban rural index measure report review"
).split()


@dataclass(frozen=True)
class ExperimentConfig:
    participants: int = 7
    rejected: int = 0
    papers: int = 4
    pages: int = 7
    blocks_per_page: int = 4
    correct_rate: float = 0.87
    fixations_mean: float = 32.0
    fixations_sd: float = 11.5
    attention_gain: float = 1.2
    question_noise_sd: float = 0.3
    difficulty_sd: float = 0.48
    max_distractors: int = 4
    answer_time_median_ms: float = 45000.0
    answer_time_sigma: float = 0.4

    def __post_init__(self):
        if self.participants < 1:
            raise ValidationError("must be >= 1", "participants")
        if self.rejected < 0:
            raise ValidationError("must be >= 0", "rejected")
        if not 1 <= self.papers <= 4:
            raise ValidationError("must be between 1 and 4", "papers")
        topics_per_paper = len(GROUPS) * len(TOPICS)
        if self.pages * self.blocks_per_page < topics_per_paper:
            raise ValidationError(f"need at least {topics_per_paper} text blocks per paper", "pages")
        if not 0.0 < self.correct_rate < 1.0:
            raise ValidationError("must lie strictly between 0 and 1", "correctRate")

    def to_dict(self) -> Dict:
        return asdict(self)

    @staticmethod
    def from_dict(data: Dict) -> "ExperimentConfig":
        known = set(ExperimentConfig.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown settings {sorted(unknown)}", "config")
        return ExperimentConfig(**data)


@dataclass(frozen=True)
class Trial:
    """A participant looking for the answer to one question."""
    participant_id: str
    session_id: str
    paper: int
    group: str
    target_topic: int
    question_index: int
    start_ms: int
    fixations: Tuple[PageFixation, ...]
    correct: bool
    answer_time_ms: float

    def to_dict(self) -> Dict:
        return {
            "participant": self.participant_id,
            "sessionId": self.session_id,
            "paperNumber": self.paper,
            "groupId": self.group,
            "targetTopicNumber": self.target_topic,
            "questionIndex": self.question_index,
            "startMs": self.start_ms,
            "fixations": [f.to_list() for f in self.fixations],
            "correctness": self.correct,
            "answerTimeMs": self.answer_time_ms,
        }

    @staticmethod
    def from_dict(data: Dict) -> "Trial":
        try:
            return Trial(
                participant_id=str(data["participant"]),
                session_id=str(data["sessionId"]),
                paper=int(data["paperNumber"]),
                group=str(data["groupId"]),
                target_topic=int(data["targetTopicNumber"]),
                question_index=int(data["questionIndex"]),
                start_ms=int(data["startMs"]),
                fixations=tuple(PageFixation.from_list(f) for f in data["fixations"]),
                correct=bool(data["correctness"]),
                answer_time_ms=float(data["answerTimeMs"]),
            )
        except KeyError as e:
            raise ValidationError("missing required field", str(e.args[0])) from None
        except (TypeError, ValueError) as e:
            raise ValidationError(f"bad trial: {e}", "trials") from None

    @property
    def answer_key(self) -> Tuple[int, str, int, int]:
        return self.paper, self.group, self.target_topic, self.question_index


@dataclass
class ExperimentData:
    config: ExperimentConfig
    seed: int
    documents: List[DocumentLayout]
    answers: List[AnswerLocation]
    questions: List[Question]
    participants: List[ParticipantRecord]
    trials: List[Trial] = field(default_factory=list)

    def answer_for(self, trial: Trial) -> AnswerLocation:
        for answer in self.answers:
            if (answer.paper, answer.group, answer.target_topic, answer.question_index) == trial.answer_key:
                return answer
        raise ValidationError(f"no answer location for {trial.answer_key}", "answers")

    def sessions(self) -> Dict[str, List[Trial]]:
        grouped: Dict[str, List[Trial]] = {}
        for trial in self.trials:
            grouped.setdefault(trial.session_id, []).append(trial)
        return grouped

    def reading_events(self, element_ids: Optional[Dict[int, int]] = None) -> List[ReadingEvent]:
        """
        One ReadingEvent per trial carrying its fixations. `element_ids`
        maps paper numbers to stored document ids.
        """
        events = []
        for trial in self.trials:
            layout = self.documents[trial.paper - 1]
            by_page: Dict[int, List[Tuple[float, PageFixation]]] = {}
            t = float(trial.start_ms)
            for fixation in trial.fixations:
                by_page.setdefault(fixation.page_index, []).append((t, fixation))
                t += fixation.duration_ms + SACCADE_MS
            pages = tuple(sorted(by_page))
            eye_data = tuple(
                PageEyeData(page,
                            xs=tuple(f.x for _, f in rows), ys=tuple(f.y for _, f in rows),
                            durations=tuple(f.duration_ms for _, f in rows),
                            pupil_sizes=tuple(0.0 for _ in rows),
                            start_times=tuple(start for start, _ in rows))
                for page, rows in sorted(by_page.items()))
            events.append(ReadingEvent(
                session_id=trial.session_id,
                start_time=trial.start_ms,
                end_time=int(round(t)),
                page_numbers=pages,
                page_labels=tuple(layout.page_label(p) for p in pages),
                plain_text_content=layout.visible_text([
                    Rect(0.0, 0.0, layout.pages[p].width, layout.pages[p].height, p) for p in pages]),
                page_eye_data=eye_data,
                targetted_resource_id=(element_ids or {}).get(trial.paper),
            ))
        return events


# --- documents ------------------------------------------------------------------

def _sentence(rng: np.random.Generator, words: int) -> str:
    return " ".join(_WORDS[i] for i in rng.integers(0, len(_WORDS), size=words))


def synthesize_paper(paper: int, config: ExperimentConfig,
                     rng: np.random.Generator) -> Tuple[DocumentLayout, List[AnswerLocation], List[Question]]:
    """A paper of paragraph blocks; six of them hold a target topic's four answers."""
    width, height = LETTER_PAGE
    usable = height - 2 * TEXT_MARGIN
    gap = 20.0
    block_height = (usable - gap * (config.blocks_per_page - 1)) / config.blocks_per_page
    pages = []
    for page_index in range(config.pages):
        blocks = []
        for b in range(config.blocks_per_page):
            top = height - TEXT_MARGIN - b * (block_height + gap)
            rect = Rect(TEXT_MARGIN, top - block_height, width - 2 * TEXT_MARGIN, block_height, page_index)
            text = f"Paper {paper}, page {page_index + 1}, paragraph {b + 1}. " + _sentence(rng, 40)
            blocks.append(TextBlock(rect, text, paragraph_break_above=b > 0))
        pages.append(PageLayout(width, height, str(page_index + 1), tuple(blocks)))
    layout = DocumentLayout(tuple(pages), title=f"Synthetic paper {paper}")

    slots = [(p, b) for p in range(config.pages) for b in range(config.blocks_per_page)]
    chosen = rng.choice(len(slots), size=len(GROUPS) * len(TOPICS), replace=False)
    answers, questions = [], []
    topic_slots = [(g, t) for g in GROUPS for t in TOPICS]
    for (group, topic), slot in zip(topic_slots, chosen):
        page_index, block_index = slots[int(slot)]
        block = layout.pages[page_index].text_blocks[block_index].rect
        for q in QUESTIONS:
            top = block.top - 10.0 - (q - 1) * ANSWER_LINE_SPACING
            rect = Rect(block.x + 20.0, top - ANSWER_LINE_HEIGHT, 300.0, ANSWER_LINE_HEIGHT, page_index)
            answer_text = _sentence(rng, 5)
            answers.append(AnswerLocation(paper, group, topic, q, page_index, rect, answer_text))
            options = (answer_text,) + tuple(_sentence(rng, 5) for _ in range(3))
            questions.append(Question(paper, group, topic, q,
                                      f"Paper {paper}, topic {group}{topic}, question {q}", options))
    return layout, answers, questions


def _topic_baselines(config: ExperimentConfig, rng: np.random.Generator) -> Dict[Tuple[int, str, int], float]:
    # additive paper + group + topic effects, rescaled to the configured mean and sd
    paper_effect = rng.normal(0.0, 1.0, size=config.papers)
    group_effect = rng.normal(0.0, 1.0, size=len(GROUPS))
    topic_effect = rng.normal(0.0, 1.0, size=len(TOPICS))
    keys = [(p, g, t) for p in range(1, config.papers + 1) for g in GROUPS for t in TOPICS]
    raw = np.array([paper_effect[p - 1] + group_effect[GROUPS.index(g)] + topic_effect[t - 1] for p, g, t in keys])
    spread = raw.std()
    z = (raw - raw.mean()) / (spread if spread > 0 else 1.0)
    return {k: config.fixations_mean + config.fixations_sd * v for k, v in zip(keys, z)}


def _participant(index: int, valid: bool, rng: np.random.Generator) -> ParticipantRecord:
    duration = rng.uniform(35.0, 85.0)
    calibration = rng.uniform(0.2, 0.9)
    correct_pct = rng.uniform(82.0, 100.0)
    if not valid:
        rule = int(rng.integers(0, 3))
        if rule == 0:
            duration = rng.choice([rng.uniform(15.0, 29.0), rng.uniform(91.0, 120.0)])
        elif rule == 1:
            calibration = rng.uniform(1.1, 2.0)
        else:
            correct_pct = rng.uniform(50.0, 79.0)
    prefix = "P" if valid else "R"
    return ParticipantRecord(f"{prefix}{index + 1:02d}", round(float(duration), 2),
                             round(float(calibration), 3), round(float(correct_pct), 1))


def _fixations_around(answer: AnswerLocation, layout: DocumentLayout, count: int, distance_cm: float,
                      distractors: int, radius: float, rng: np.random.Generator) -> List[PageFixation]:
    shape = (FIXATION_MEAN_MS / FIXATION_SD_MS) ** 2
    scale = FIXATION_SD_MS ** 2 / FIXATION_MEAN_MS
    out: List[PageFixation] = []
    cx, cy = answer.rect.center
    page = layout.pages[answer.page_index]
    for _ in range(distractors):
        # somewhere else on the page, outside the inclusion radius
        while True:
            x, y = rng.uniform(0.0, page.width), rng.uniform(0.0, page.height)
            if np.hypot(x - cx, y - cy) > 2 * radius:
                break
        out.append(PageFixation(answer.page_index, float(x), float(y),
                                float(max(1.0, rng.gamma(shape, scale))), distance_cm))
    for _ in range(count):
        angle = rng.uniform(0.0, 2 * np.pi)
        r = min(abs(rng.normal(0.0, radius / 3.0)), 0.95 * radius)
        out.append(PageFixation(answer.page_index, float(cx + r * np.cos(angle)), float(cy + r * np.sin(angle)),
                                float(max(1.0, rng.gamma(shape, scale))),
                                float(distance_cm + rng.normal(0.0, 0.5))))
    return out


def synthesize_experiment(config: ExperimentConfig = ExperimentConfig(), seed: int = 0,
                          geometry: ViewGeometry = ViewGeometry()) -> ExperimentData:
    """
    Build documents, participants and trials from one seed.

    Every (participant, paper) pair has an attention level; each question
    perturbs it. The number of fixations on the answer is the topic's
    baseline plus a small attention term, so raw gaze mostly reflects the
    topic. Correctness ranks attention minus topic difficulty plus noise,
    and the top `correct_rate` share of answers are correct.
    """
    rng = np.random.default_rng(seed)
    documents, answers, questions = [], [], []
    for paper in range(1, config.papers + 1):
        layout, paper_answers, paper_questions = synthesize_paper(paper, config, rng)
        documents.append(layout)
        answers.extend(paper_answers)
        questions.extend(paper_questions)

    baselines = _topic_baselines(config, rng)
    difficulty = {key: rng.normal(0.0, config.difficulty_sd) for key in baselines}
    participants = ([_participant(i, True, rng) for i in range(config.participants)]
                    + [_participant(i, False, rng) for i in range(config.rejected)])
    radius = answer_radius(geometry)
    lookup = {(a.paper, a.group, a.target_topic, a.question_index): a for a in answers}

    pending = []
    latent = []
    for participant in participants:
        order = rng.permutation(config.papers) + 1
        start = 0
        for paper in order:
            paper = int(paper)
            group = GROUPS[int(rng.integers(0, len(GROUPS)))]
            session_id = str(uuid.UUID(bytes=rng.bytes(16), version=4))
            attention = rng.normal(0.0, 1.0)
            distance = float(np.clip(rng.normal(60.0, 4.0), 45.0, 75.0))
            for topic in TOPICS:
                for q in QUESTIONS:
                    key = (paper, group, topic)
                    e_q = attention + rng.normal(0.0, config.question_noise_sd)
                    count = max(3, int(round(baselines[key] + config.attention_gain * e_q)))
                    distractors = int(rng.integers(0, config.max_distractors + 1))
                    fixations = _fixations_around(lookup[key + (q,)], documents[paper - 1], count, distance,
                                                  distractors, radius, rng)
                    answer_time = float(config.answer_time_median_ms * np.exp(rng.normal(0.0, config.answer_time_sigma)))
                    latent.append(2.0 * e_q - difficulty[key] + rng.normal(0.0, 1.0))
                    pending.append((participant.participant_id, session_id, paper, group, topic, q,
                                    start, tuple(fixations), round(answer_time, 1)))
                    start += int(sum(f.duration_ms + SACCADE_MS for f in fixations)) + 5000

    # exactly round(rate * n) correct answers among valid participants; rejected ones share the threshold
    latent = np.array(latent)
    valid_ids = {p.participant_id for p in participants if p.valid}
    valid_mask = np.array([row[0] in valid_ids for row in pending])
    valid_latent = latent[valid_mask]
    n_correct = int(round(config.correct_rate * len(valid_latent)))
    order = np.argsort(-valid_latent, kind="stable")
    threshold = valid_latent[order[n_correct - 1]] if n_correct > 0 else np.inf
    correct = np.zeros(len(latent), dtype=bool)
    valid_index = np.flatnonzero(valid_mask)
    correct[valid_index[order[:n_correct]]] = True
    correct[~valid_mask] = latent[~valid_mask] >= threshold

    trials = [Trial(*row[:8], correct=bool(c), answer_time_ms=row[8]) for row, c in zip(pending, correct)]
    logger.info("synthesized %d trials for %d participants (%d correct)", len(trials), len(participants),
                int(correct.sum()))
    return ExperimentData(config, seed, documents, answers, questions, participants, trials)


# --- answer table and runs ----------------------------------------------------------

def build_answer_table(data: ExperimentData, geometry: ViewGeometry = ViewGeometry(),
                       participants: Optional[Sequence[ParticipantRecord]] = None) -> List[AnswerRecord]:
    """Answer records of the given participants (default: those passing rejection)."""
    kept = {p.participant_id for p in (participants if participants is not None
                                       else reject_participants(data.participants))}
    records = []
    for trial in data.trials:
        if trial.participant_id not in kept:
            continue
        near = fixations_near_answer(trial.fixations, data.answer_for(trial), geometry)
        records.append(AnswerRecord(trial.participant_id, trial.paper, trial.group, trial.target_topic,
                                    trial.question_index, trial.correct, trial.answer_time_ms,
                                    extract_features(near)))
    return records


@dataclass
class ExperimentReport:
    seed: int
    participants: int
    participants_kept: int
    correct_rate: float
    results: List[ClassifierResult]

    @property
    def n_records(self) -> int:
        return self.results[0].n_records if self.results else 0

    def result(self, preset: str) -> ClassifierResult:
        for r in self.results:
            if r.preset == preset:
                return r
        raise KeyError(preset)

    def to_dict(self) -> Dict:
        return {
            "seed": self.seed,
            "participants": self.participants,
            "participantsKept": self.participants_kept,
            "records": self.n_records,
            "correctRate": round(self.correct_rate, 6),
            "classifiers": [r.to_dict() for r in self.results],
        }

    @staticmethod
    def from_dict(data: Dict) -> "ExperimentReport":
        try:
            results = [ClassifierResult(c["preset"], c["name"], list(c["columns"]), float(c["auc"]),
                                        float(c["p"]), int(c["nPerm"]), int(c["nRecords"]))
                       for c in data["classifiers"]]
            return ExperimentReport(int(data["seed"]), int(data["participants"]), int(data["participantsKept"]),
                                    float(data["correctRate"]), results)
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"bad results file: {e}", "results") from None


def run_experiment(data: ExperimentData, presets: Sequence[str] = STANDARD_PRESETS,
                   n_perm: int = DEFAULT_PERMUTATIONS, seed: Optional[int] = None,
                   solver: str = "newton", geometry: ViewGeometry = ViewGeometry(),
                   workers: int = 1) -> ExperimentReport:
    """Reject participants, build the answer table and evaluate each classifier."""
    kept = reject_participants(data.participants)
    records = build_answer_table(data, geometry, kept)
    if not records:
        raise ValidationError("no answers left after participant rejection", "participants")
    seed = data.seed if seed is None else seed
    results = evaluate_classifiers(records, presets, n_perm, seed, solver, workers)
    rate = sum(r.correct for r in records) / len(records)
    return ExperimentReport(seed, len(data.participants), len(kept), rate, results)


def write_report(report: ExperimentReport, path: str):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def load_report(path: str) -> ExperimentReport:
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except ValueError as e:
            raise ValidationError(f"malformed results JSON: {e}", "results") from None
    return ExperimentReport.from_dict(data)


# --- files ------------------------------------------------------------------------------

def write_experiment(data: ExperimentData, directory: str):
    """
    Lay an experiment out on disk:

        experiment.json              config and seed
        participants.json
        trials.jsonl                 one trial per line
        documents/paperN.json        layouts
        questions/paperNG.json
        answer_locations/paperNG_topicT.json
    """
    for sub in ("documents", "questions", "answer_locations"):
        os.makedirs(os.path.join(directory, sub), exist_ok=True)
    with open(os.path.join(directory, "experiment.json"), "w", encoding="utf-8") as f:
        json.dump({"seed": data.seed, "config": data.config.to_dict()}, f, indent=2, sort_keys=True)
    with open(os.path.join(directory, "participants.json"), "w", encoding="utf-8") as f:
        json.dump([p.to_dict() for p in data.participants], f, indent=2, sort_keys=True)
    with open(os.path.join(directory, "trials.jsonl"), "w", encoding="utf-8") as f:
        for trial in data.trials:
            f.write(json.dumps(trial.to_dict(), sort_keys=True) + "\n")
    for index, layout in enumerate(data.documents, 1):
        save_layout(layout, os.path.join(directory, "documents", f"paper{index}.json"))
    for paper in range(1, len(data.documents) + 1):
        for group in GROUPS:
            chosen = [q for q in data.questions if q.paper == paper and q.group == group]
            if chosen:
                write_questions(chosen, os.path.join(directory, "questions", f"paper{paper}{group}.json"))
            for topic in TOPICS:
                located = [a for a in data.answers
                           if a.paper == paper and a.group == group and a.target_topic == topic]
                if located:
                    name = f"paper{paper}{group}_topic{topic}.json"
                    write_answer_locations(located, os.path.join(directory, "answer_locations", name))
    logger.info("experiment written to %s", directory)


def load_experiment(directory: str) -> ExperimentData:
    path = os.path.join(directory, "experiment.json")
    if not os.path.exists(path):
        raise ValidationError(f"{directory} holds no experiment.json", "data")
    with open(path, "r", encoding="utf-8") as f:
        head = json.load(f)
    config = ExperimentConfig.from_dict(head["config"])
    with open(os.path.join(directory, "participants.json"), "r", encoding="utf-8") as f:
        participants = [ParticipantRecord.from_dict(p) for p in json.load(f)]
    trials = []
    with open(os.path.join(directory, "trials.jsonl"), "r", encoding="utf-8") as f:
        for number, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                trials.append(Trial.from_dict(json.loads(line)))
            except ValueError as e:
                raise ValidationError(f"trials.jsonl line {number}: {e}", "trials") from None
    documents = [load_layout(os.path.join(directory, "documents", f"paper{p}.json"))
                 for p in range(1, config.papers + 1)]
    answers, questions = [], []
    for name in sorted(os.listdir(os.path.join(directory, "answer_locations"))):
        answers.extend(load_answer_locations(os.path.join(directory, "answer_locations", name)))
    for name in sorted(os.listdir(os.path.join(directory, "questions"))):
        questions.extend(load_questions(os.path.join(directory, "questions", name)))
    return ExperimentData(config, int(head["seed"]), documents, answers, questions, participants, trials)
