"""
Reading-session engine.

Turns interaction notifications and gaze into ReadingEvents and one closing
SummaryReadingEvent. Timers are deadlines checked against each incoming
timestamp, so a trace replayed on a virtual clock gives identical events.
"""

import json
import logging
import queue
import random
import threading
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from statemachine import State, StateMachine

from .clock import WallClock
from .errors import SessionClosedError, ValidationError
from .geometry import (EyeRectangle, ViewGeometry, ViewportState, compute_viewport, default_max_height,
                       point_to_paragraph_rect, split_and_crop, unite_colliding_rects)
from .layout import DocumentLayout
from .model import (ANNOTATION_CLASSES, ClassSource, Event, PageEyeData, ReadingClass, ReadingEvent, Rect,
                    ScientificDocument, SearchRecord, SummaryReadingEvent)
from .paragraphs import READ_FIXATION_THRESHOLD, class_proportions, read_paragraphs, read_rects
from .tracker import FixationEvent, FixationQueue, screen_to_page

logger = logging.getLogger(__name__)


class NotificationKind(str, Enum):
    WINDOW_STARTED_MOVING = "windowStartedMoving"
    WINDOW_STOPPED_MOVING = "windowStoppedMoving"
    SCROLL_STARTED = "scrollStarted"
    SCROLL_ENDED = "scrollEnded"
    FOCUS_GAINED = "focusGained"
    FOCUS_LOST = "focusLost"
    OCCLUDED = "occluded"
    REVEALED = "revealed"
    DOCUMENT_OPENED = "documentOpened"
    DOCUMENT_CLOSED = "documentClosed"
    GAZE_LOST = "gazeLost"
    GAZE_REGAINED = "gazeRegained"
    # session-level inputs carried on the same trace
    SEARCH = "search"
    MARK = "mark"


STOP_KINDS = frozenset({
    NotificationKind.WINDOW_STARTED_MOVING,
    NotificationKind.SCROLL_STARTED,
    NotificationKind.FOCUS_LOST,
    NotificationKind.OCCLUDED,
})

START_KINDS = frozenset({
    NotificationKind.WINDOW_STOPPED_MOVING,
    NotificationKind.SCROLL_ENDED,
    NotificationKind.FOCUS_GAINED,
    NotificationKind.REVEALED,
    NotificationKind.DOCUMENT_OPENED,
})


@dataclass(frozen=True)
class Notification:
    kind: NotificationKind
    t_ms: int
    scroll: Optional[Tuple[float, float]] = None
    window: Optional[Tuple[float, float]] = None
    query: Optional[str] = None
    mark: Optional[Rect] = None

    @staticmethod
    def from_trace(data: Dict, epoch_ms: int = 0) -> "Notification":
        """Build from a trace line: {"kind", "t" (seconds), "payload"}."""
        if not isinstance(data, dict):
            raise ValidationError("expected an object", "trace")
        try:
            kind = NotificationKind(data.get("kind"))
        except ValueError:
            raise ValidationError(f"unknown notification {data.get('kind')!r}", "kind") from None
        t = data.get("t")
        if isinstance(t, bool) or not isinstance(t, (int, float)):
            raise ValidationError("expected seconds", "t")
        payload = data.get("payload") or {}
        if not isinstance(payload, dict):
            raise ValidationError("expected an object", "payload")
        mark = None
        if "mark" in payload:
            raw = payload["mark"]
            if not isinstance(raw, dict) or "rect" not in raw:
                raise ValidationError("mark needs a rect", "mark")
            r = raw["rect"]
            if not isinstance(r, list) or len(r) != 5:
                raise ValidationError("mark rect must be [page, x, y, w, h]", "mark")
            mark = Rect(r[1], r[2], r[3], r[4], r[0],
                        raw.get("readingClass", int(ReadingClass.IMPORTANT)),
                        raw.get("classSource", int(ClassSource.MANUAL_SELECTION)))
        return Notification(
            kind=kind,
            t_ms=int(round(t * 1000)) + epoch_ms,
            scroll=_pair(payload.get("scroll"), "scroll"),
            window=_pair(payload.get("window"), "window"),
            query=payload.get("query"),
            mark=mark,
        )


def _pair(value, name) -> Optional[Tuple[float, float]]:
    if value is None:
        return None
    if (not isinstance(value, list) or len(value) != 2
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)):
        raise ValidationError("expected [a, b]", name)
    return float(value[0]), float(value[1])


def load_trace(path: str, epoch_ms: int = 0) -> List[Notification]:
    """Read a notification trace (JSON lines)."""
    result = []
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                result.append(Notification.from_trace(json.loads(line), epoch_ms))
            except ValueError as e:
                raise ValidationError(f"line {number}: {e}", "trace") from None
    return result


def viewport_timeline(notifications: Sequence[Notification], layout: DocumentLayout,
                      zoom: float = 1.0) -> Callable[[int], ViewportState]:
    """The window's scroll position and size at any time of a trace."""
    scroll = (0.0, 0.0)
    window = (layout.document_width, layout.pages[0].height)
    changes: List[Tuple[int, Tuple[float, float], Tuple[float, float]]] = []
    for n in sorted(notifications, key=lambda n: n.t_ms):
        if n.scroll is None and n.window is None:
            continue
        scroll = n.scroll or scroll
        window = n.window or window
        changes.append((n.t_ms, scroll, window))
    initial = ViewportState(0.0, 0.0, layout.document_width, layout.pages[0].height, zoom)

    def at(t_ms: int) -> ViewportState:
        state = initial
        for t, s, w in changes:
            if t > t_ms:
                break
            state = ViewportState(s[0], s[1], w[0], w[1], zoom)
        return state

    return at


@dataclass(frozen=True)
class TimerConfig:
    """Reading-period timers in seconds."""
    min_read_time: float = 2.0
    max_read_time: float = 60.0
    exit_when_untracked: bool = False

    def __post_init__(self):
        if not 0 < self.min_read_time < self.max_read_time:
            raise ValidationError("need 0 < minReadTime < maxReadTime", "timers")

    @property
    def min_ms(self) -> int:
        return int(round(self.min_read_time * 1000))

    @property
    def max_ms(self) -> int:
        return int(round(self.max_read_time * 1000))


class ReadingPhases(StateMachine):
    """Phases of one reading session."""
    idle = State(initial=True)
    pending_entry = State()
    reading = State()
    exited = State(final=True)

    arm_entry = idle.to(pending_entry) | pending_entry.to.itself()
    cancel_entry = pending_entry.to(idle)
    begin_reading = pending_entry.to(reading)
    stop_reading = reading.to(idle)
    close_session = idle.to(exited) | pending_entry.to(exited) | reading.to(exited)


def uuid_factory(seed: Optional[int] = None) -> Callable[[], str]:
    """Session-id generator; seeded generators repeat their sequence."""
    if seed is None:
        return lambda: str(uuid.uuid4())
    rng = random.Random(seed)
    return lambda: str(uuid.UUID(int=rng.getrandbits(128), version=4))


@dataclass
class GazeSample:
    """A fixation already mapped into page space."""
    page_index: int
    x: float
    y: float
    duration_ms: float
    pupil: float
    t_ms: int


@dataclass
class SessionState:
    entry_deadline: Optional[int] = None
    reading_since: Optional[int] = None
    gaze_lost_since: Optional[int] = None
    last_gaze: Optional[int] = None
    focused: bool = True
    visible: bool = True
    scroll: Tuple[float, float] = (0.0, 0.0)
    window: Tuple[float, float] = (0.0, 0.0)
    buffer: List[GazeSample] = field(default_factory=list)


class ReadingSession:
    """
    One document-open to document-close session.

    Not thread-safe: drive it from a single lane (see SessionLane).
    Emitted events go to `sink` as they are produced and are kept in
    `events`.
    """

    def __init__(self, document: ScientificDocument, layout: DocumentLayout,
                 timers: TimerConfig = TimerConfig(), geometry: ViewGeometry = ViewGeometry(),
                 sink: Optional[Callable[[Event], None]] = None,
                 id_factory: Optional[Callable[[], str]] = None,
                 zoom: float = 1.0, max_height: Optional[float] = None):
        if document.content_hash != layout.content_hash:
            raise ValidationError("document does not match the layout", "contentHash")
        self.document = document
        self.layout = layout
        self.timers = timers
        self.geometry = geometry
        self.zoom = zoom
        self.max_height = max_height or default_max_height(geometry)
        self.sink = sink
        self.session_id = (id_factory or uuid_factory())()
        self.phases = ReadingPhases()
        self.state = SessionState(window=(layout.document_width, layout.pages[0].height))
        self.events: List[Event] = []
        self.searches: List[SearchRecord] = []
        self.marks: List[Rect] = []
        self._unsent_marks: List[Rect] = []
        self._viewports: List[Rect] = []
        self._gaze: List[Tuple[int, float, float]] = []
        self._opened_at: Optional[int] = None
        self._last_t: Optional[int] = None
        logger.debug("session %s opened for %s", self.session_id, document.app_id)

    # --- inspection --------------------------------------------------------

    @property
    def phase(self) -> str:
        return self.phases.current_state.id

    @property
    def closed(self) -> bool:
        return self.phase == "exited"

    def viewport_state(self) -> ViewportState:
        return ViewportState(self.state.scroll[0], self.state.scroll[1],
                             self.state.window[0], self.state.window[1], self.zoom)

    # --- inputs ------------------------------------------------------------

    def handle(self, notification: Notification) -> List[Event]:
        """Apply one notification; returns the events it caused."""
        t = notification.t_ms
        emitted = self._advance(t)
        kind = notification.kind
        s = self.state
        if self._opened_at is None:
            self._opened_at = t

        if kind in STOP_KINDS:
            if kind == NotificationKind.FOCUS_LOST:
                s.focused = False
            elif kind == NotificationKind.OCCLUDED:
                s.visible = False
            emitted += self._stop_reading(t)
            self._apply_viewport(notification)
        elif kind in START_KINDS:
            if kind == NotificationKind.FOCUS_GAINED:
                s.focused = True
            elif kind == NotificationKind.REVEALED:
                s.visible = True
            # a period that saw the old viewport ends before the new one applies
            if self.phase == "reading" and self._moves_viewport(notification):
                emitted += self._flush(t)
            self._apply_viewport(notification)
            if self.phase != "reading":
                self._arm(t)
        elif kind == NotificationKind.GAZE_LOST:
            if s.gaze_lost_since is None:
                s.gaze_lost_since = t
        elif kind == NotificationKind.GAZE_REGAINED:
            s.gaze_lost_since = None
            s.last_gaze = t
            if self.phase != "reading":
                self._arm(t)
        elif kind == NotificationKind.SEARCH:
            self.record_search(notification.query or "")
        elif kind == NotificationKind.MARK:
            if notification.mark is None:
                raise ValidationError("mark notification without a rect", "mark")
            self.mark(notification.mark)
        elif kind == NotificationKind.DOCUMENT_CLOSED:
            if self.phase == "reading":
                emitted += self._flush(t)
            emitted.append(self._summarize(t))
        return emitted

    def tick(self, t_ms: int) -> List[Event]:
        """Fire timers due by t_ms without any notification."""
        return self._advance(t_ms)

    def add_fixations(self, fixations: Iterable[FixationEvent]) -> List[Event]:
        """Buffer screen-space fixations that fall inside the current reading period."""
        emitted: List[Event] = []
        for fixation in fixations:
            emitted += self._advance(fixation.t_ms)
            self.state.last_gaze = fixation.t_ms
            if self.phase != "reading":
                continue
            hit = screen_to_page((fixation.x, fixation.y), self.viewport_state(), self.layout)
            if hit is None:
                continue
            page_index, x, y = hit
            self.state.buffer.append(GazeSample(page_index, x, y, fixation.duration_ms,
                                                fixation.pupil, fixation.t_ms))
        return emitted

    def eye_state_changed(self, lost: bool, t_ms: int) -> List[Event]:
        kind = NotificationKind.GAZE_LOST if lost else NotificationKind.GAZE_REGAINED
        return self.handle(Notification(kind, t_ms))

    def record_search(self, query: str) -> SearchRecord:
        """Remember a search performed in this document and its hits."""
        self._check_open()
        hits, pages = self.layout.count_hits(query)
        record = SearchRecord(query, hits, tuple(pages))
        self.searches.append(record)
        logger.debug("search %r: %d hits", query, hits)
        return record

    def mark(self, rect: Rect) -> Rect:
        """Add a manual annotation (important or critical)."""
        self._check_open()
        if rect.reading_class not in ANNOTATION_CLASSES:
            raise ValidationError("annotations must be important or critical", "readingClass")
        if rect.class_source not in (ClassSource.CLICK, ClassSource.MANUAL_SELECTION):
            raise ValidationError("annotations come from a click or a manual selection", "classSource")
        if not self.layout.has_page(rect.page_index):
            raise ValidationError(f"no page {rect.page_index}", "pageIndex")
        self.marks.append(rect)
        self._unsent_marks.append(rect)
        return rect

    def close(self, t_ms: int) -> SummaryReadingEvent:
        """Close the session and return its summary."""
        events = self.handle(Notification(NotificationKind.DOCUMENT_CLOSED, t_ms))
        return events[-1]

    # --- timers ------------------------------------------------------------

    def _check_open(self):
        if self.closed:
            raise SessionClosedError(f"session {self.session_id} is closed")

    def _advance(self, t: int) -> List[Event]:
        self._check_open()
        if self._last_t is not None and t < self._last_t:
            raise ValidationError(f"timestamp {t} precedes {self._last_t}", "t")
        self._last_t = t
        emitted: List[Event] = []
        while True:
            due = self._next_timer()
            if due is None or due[0] > t:
                return emitted
            at, _, action = due
            if action == "enter":
                self.phases.begin_reading()
                self.state.entry_deadline = None
                self.state.reading_since = at
                self.state.buffer.clear()
                logger.debug("reading from %d", at)
            elif action == "gaze_exit" and self.phase == "pending_entry":
                self._cancel()
            else:
                logger.debug("exit timer (%s) at %d", action, at)
                emitted += self._flush(at)

    def _next_timer(self) -> Optional[Tuple[int, int, str]]:
        # at equal times an exit wins over entry, so no zero-length period is opened
        s = self.state
        candidates = []
        if s.gaze_lost_since is not None and self.phase in ("pending_entry", "reading"):
            candidates.append((s.gaze_lost_since + self.timers.max_ms, 0, "gaze_exit"))
        if self.phase == "pending_entry":
            candidates.append((s.entry_deadline, 2, "enter"))
        if self.phase == "reading" and self.timers.exit_when_untracked:
            last = max(s.reading_since, s.last_gaze or s.reading_since)
            candidates.append((last + self.timers.max_ms, 1, "untracked_exit"))
        return min(candidates) if candidates else None

    def _arm(self, t: int):
        s = self.state
        if not (s.focused and s.visible):
            return
        self.phases.arm_entry()
        s.entry_deadline = t + self.timers.min_ms

    def _cancel(self):
        self.phases.cancel_entry()
        self.state.entry_deadline = None

    def _stop_reading(self, t: int) -> List[Event]:
        if self.phase == "pending_entry":
            self._cancel()
            return []
        if self.phase == "reading":
            return self._flush(t)
        return []

    def _moves_viewport(self, n: Notification) -> bool:
        s = self.state
        return (n.scroll is not None and n.scroll != s.scroll) or (n.window is not None and n.window != s.window)

    def _apply_viewport(self, n: Notification):
        if n.scroll is not None:
            self.state.scroll = n.scroll
        if n.window is not None:
            self.state.window = n.window

    # --- capture -----------------------------------------------------------

    def _flush(self, end: int) -> List[Event]:
        start = self.state.reading_since
        self.phases.stop_reading()
        self.state.reading_since = None
        event = self.capture_reading_event(start, end)
        self.state.buffer.clear()
        if event is None:
            return []
        return [self._emit(event)]

    def capture_reading_event(self, start: int, end: int) -> Optional[ReadingEvent]:
        """Snapshot the current viewport and gaze buffer as a ReadingEvent."""
        viewport = compute_viewport(self.state.scroll, self.state.window, self.layout, self.zoom)
        if not viewport:
            return None
        pages = sorted({r.page_index for r in viewport})
        samples = [g for g in self.state.buffer if g.page_index in pages]
        eye_rects = self._eye_rects(samples)
        marks = [m for m in self._unsent_marks if m.page_index in pages]
        self._unsent_marks = [m for m in self._unsent_marks if m.page_index not in pages]
        eye_data = []
        for page in pages:
            on_page = [g for g in samples if g.page_index == page]
            if not on_page:
                continue
            eye_data.append(PageEyeData(
                page_index=page,
                xs=tuple(g.x for g in on_page),
                ys=tuple(g.y for g in on_page),
                durations=tuple(g.duration_ms for g in on_page),
                pupil_sizes=tuple(g.pupil for g in on_page),
                start_times=tuple(float(g.t_ms - start) for g in on_page),
            ))
        self._viewports.extend(viewport)
        self._gaze.extend((g.page_index, g.x, g.y) for g in samples)
        return ReadingEvent(
            session_id=self.session_id,
            start_time=start,
            end_time=end,
            page_numbers=tuple(pages),
            page_labels=tuple(self.layout.page_label(p) for p in pages),
            page_rects=tuple(viewport) + tuple(eye_rects) + tuple(marks),
            plain_text_content=self.layout.visible_text(viewport),
            page_eye_data=tuple(eye_data),
            targetted_resource_id=self.document.id,
        )

    def _eye_rects(self, samples: Sequence[GazeSample]) -> List[Rect]:
        result: List[Rect] = []
        ys = [g.y for g in samples]
        for page in sorted({g.page_index for g in samples}):
            found = []
            for index, g in enumerate(samples):
                if g.page_index != page:
                    continue
                rect = point_to_paragraph_rect(g.x, g.y, page, self.layout, self.geometry)
                if rect is not None:
                    found.append(EyeRectangle(rect, (index,)))
            pieces = split_and_crop(unite_colliding_rects(found), self.max_height, ys)
            for piece in pieces:
                if not piece.fixation_indices:
                    continue
                reading_class = (ReadingClass.READ if len(piece.fixation_indices) >= READ_FIXATION_THRESHOLD
                                 else ReadingClass.UNKNOWN)
                result.append(piece.rect.classified(reading_class, ClassSource.EYE))
        return result

    def _summarize(self, t: int) -> SummaryReadingEvent:
        if self.phase == "pending_entry":
            self._cancel()
        self.phases.close_session()
        read = read_rects(read_paragraphs(self.layout, self._gaze, self.marks))
        rects = self._viewports + read + self.marks
        summary = SummaryReadingEvent(
            session_id=self.session_id,
            start_time=self._opened_at if self._opened_at is not None else t,
            end_time=t,
            search_queries=tuple(self.searches),
            proportions=class_proportions(self.layout, rects),
            page_rects=tuple(self.marks) + tuple(read),
            targetted_resource_id=self.document.id,
        )
        logger.info("session %s closed: %d events", self.session_id, len(self.events))
        return self._emit(summary)

    def _emit(self, event: Event) -> Event:
        self.events.append(event)
        if self.sink is not None:
            self.sink(event)
        return event


def open_session(document: ScientificDocument, layout: DocumentLayout, **kwargs) -> ReadingSession:
    """Start a session for a document; the session begins idle."""
    return ReadingSession(document, layout, **kwargs)


def run_trace(session: ReadingSession, notifications: Sequence[Notification],
              fixations: Sequence[FixationEvent] = (),
              eye_states: Sequence[Tuple[bool, int]] = ()) -> List[Event]:
    """
    Replay a trace deterministically, merging notifications, eye-state changes
    and fixations by timestamp. Notifications sort before gaze at equal times.
    """
    items: List[Tuple[int, int, int, object]] = []
    for i, n in enumerate(notifications):
        items.append((n.t_ms, 0, i, n))
    for i, (lost, t) in enumerate(eye_states):
        items.append((t, 1, i, (lost, t)))
    for i, f in enumerate(fixations):
        items.append((f.t_ms, 2, i, f))
    items.sort(key=lambda item: item[:3])
    emitted: List[Event] = []
    for _, order, _, item in items:
        if session.closed:
            break
        if order == 0:
            emitted += session.handle(item)
        elif order == 1:
            emitted += session.eye_state_changed(*item)
        else:
            emitted += session.add_fixations([item])
    return emitted


class EventPoster:
    """
    Background delivery of emitted events to the store.

    `post(event)` only enqueues; a worker thread sends, so the session lane
    never waits on the network.
    """

    def __init__(self, send: Callable[[Event], object], maxsize: int = 0):
        self._send = send
        self._queue: "queue.Queue[Optional[Event]]" = queue.Queue(maxsize)
        self.sent: List[object] = []
        self.failures: List[Tuple[Event, Exception]] = []
        self._thread = threading.Thread(target=self._worker, name="event-poster", daemon=True)
        self._thread.start()

    def post(self, event: Event):
        self._queue.put(event)

    def _worker(self):
        while True:
            event = self._queue.get()
            try:
                if event is None:
                    return
                try:
                    self.sent.append(self._send(event))
                except Exception as e:
                    logger.error("failed to post %s: %s", type(event).__name__, e)
                    self.failures.append((event, e))
            finally:
                self._queue.task_done()

    def flush(self):
        """Wait until everything queued so far has been sent."""
        self._queue.join()

    def close(self):
        self._queue.put(None)
        self._thread.join()


class SessionLane:
    """
    Single processing lane for a live session: notifications, fixations and
    eye-state changes from any thread are queued and applied in order on one
    worker, which also fires timers from the clock while idle.

    Fixations wait in a bounded FixationQueue; when the lane falls behind,
    the oldest are dropped and counted in `dropped_fixations`.
    """

    def __init__(self, session: ReadingSession, clock=None, poll_interval: float = 0.1,
                 max_pending_fixations: int = 1024):
        self.session = session
        self.clock = clock if clock is not None else WallClock()
        self.poll_interval = poll_interval
        self.errors: List[Exception] = []
        self._pending = FixationQueue(max_pending_fixations)
        self._queue: "queue.Queue" = queue.Queue()
        self._thread = threading.Thread(target=self._worker, name="session-lane", daemon=True)
        self._thread.start()

    def notify(self, kind: NotificationKind, **payload):
        self._queue.put(("notification", Notification(kind, self.clock.now_ms(), **payload)))

    def submit(self, notification: Notification):
        self._queue.put(("notification", notification))

    def fixations(self, batch: List[FixationEvent]):
        self._pending.put_many(batch)
        self._queue.put(("fixations", len(batch)))

    @property
    def dropped_fixations(self) -> int:
        return self._pending.dropped

    def eye_state(self, change: Tuple[bool, int]):
        self._queue.put(("eye", change))

    def attach(self, provider):
        """Route a provider's callbacks onto this lane."""
        provider.subscribe(on_fixations=self.fixations, on_eye_state=self.eye_state)

    def _worker(self):
        while True:
            try:
                kind, item = self._queue.get(timeout=self.poll_interval)
            except queue.Empty:
                if not self.session.closed:
                    self._guard(self.session.tick, self.clock.now_ms())
                continue
            if kind == "stop":
                return
            if kind == "notification":
                self._guard(self.session.handle, item)
            elif kind == "fixations":
                batch = [f for f in (self._pending.get(timeout=0) for _ in range(item)) if f is not None]
                if batch:
                    self._guard(self.session.add_fixations, batch)
            elif kind == "eye":
                self._guard(self.session.eye_state_changed, *item)

    def _guard(self, fn, *args):
        try:
            fn(*args)
        except Exception as e:
            logger.warning("session lane: %s", e)
            self.errors.append(e)

    def close(self, timeout: Optional[float] = None):
        """Close the session (if open) and stop the lane."""
        if not self.session.closed:
            self.notify(NotificationKind.DOCUMENT_CLOSED)
        self._queue.put(("stop", None))
        self._thread.join(timeout)
