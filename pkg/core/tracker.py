"""
Eye-data providers: pluggable fixation sources that signal fixations,
eyes-lost state and connection changes to the session engine.

Every provider is a QObject; callbacks are Qt signals connected directly,
so they run on the provider's own thread without an event loop.
"""

import json
import logging
import math
import socket
import threading
from collections import deque
from dataclasses import dataclass
from typing import Callable, Deque, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from PyQt6.QtCore import QObject, Qt, pyqtSignal

from .errors import StreamError, ValidationError
from .geometry import ViewportState
from .layout import DocumentLayout
from .model import Rect

logger = logging.getLogger(__name__)


EYES_LOST_THRESHOLD_S = 8.0
SACCADE_MS = 30

# Fixation-duration distribution used by synthetic sources (ms)
FIXATION_MEAN_MS = 230.0
FIXATION_SD_MS = 60.0


@dataclass(frozen=True)
class FixationEvent:
    """One fixation in window-relative screen points (y grows downward)."""
    x: float
    y: float
    duration_ms: float
    t_ms: int
    pupil: float = 0.0
    distance_cm: Optional[float] = None

    def __post_init__(self):
        for name in ("x", "y", "duration_ms", "pupil"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValidationError("expected a finite number", name)
        if self.duration_ms <= 0:
            raise ValidationError("must be > 0", "durationMs")
        if isinstance(self.t_ms, bool) or not isinstance(self.t_ms, int):
            raise ValidationError("expected an integer", "tMs")
        if self.distance_cm is not None and not (self.distance_cm > 0 and math.isfinite(self.distance_cm)):
            object.__setattr__(self, "distance_cm", None)

    def to_wire(self) -> Dict:
        return {
            "x": self.x,
            "y": self.y,
            "durationMs": self.duration_ms,
            "pupil": self.pupil,
            "distanceCm": self.distance_cm if self.distance_cm is not None else 0,
            "tMs": self.t_ms,
        }

    @staticmethod
    def from_wire(data: Dict) -> "FixationEvent":
        if not isinstance(data, dict):
            raise ValidationError("expected an object", "fixation")
        try:
            distance = data.get("distanceCm")
            return FixationEvent(
                x=data["x"],
                y=data["y"],
                duration_ms=data["durationMs"],
                t_ms=data["tMs"],
                pupil=data.get("pupil", 0.0) or 0.0,
                distance_cm=float(distance) if isinstance(distance, (int, float)) and not isinstance(distance, bool) else None,
            )
        except KeyError as e:
            raise ValidationError("missing required field", e.args[0]) from None

    @staticmethod
    def from_line(line: str) -> "FixationEvent":
        try:
            data = json.loads(line)
        except (ValueError, RecursionError) as e:
            raise ValidationError(f"malformed fixation line: {e}", "fixation") from None
        return FixationEvent.from_wire(data)


def load_fixations(path: str) -> List[FixationEvent]:
    """Read a fixation JSON-lines file."""
    result = []
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, 1):
            if line.strip():
                try:
                    result.append(FixationEvent.from_line(line))
                except ValidationError as e:
                    raise ValidationError(f"line {number}: {e}", e.field) from None
    return result


def write_fixations(fixations: Iterable[FixationEvent], path: str):
    with open(path, "w", encoding="utf-8") as f:
        for fixation in fixations:
            f.write(json.dumps(fixation.to_wire(), sort_keys=True) + "\n")


# --- coordinate mapping -----------------------------------------------------

def screen_to_page(point: Tuple[float, float], viewport: ViewportState,
                   layout: DocumentLayout) -> Optional[Tuple[int, float, float]]:
    """Map a window point to (pageIndex, x, y) in page space, None on a miss."""
    sx, sy = point
    if not (0.0 <= sx <= viewport.width and 0.0 <= sy <= viewport.height):
        return None
    dx, dy = viewport.screen_to_document(sx, sy)
    return layout.document_to_page(dx, dy)


def page_to_screen(page_index: int, x: float, y: float, viewport: ViewportState,
                   layout: DocumentLayout) -> Tuple[float, float]:
    dx, dy = layout.page_to_document(page_index, x, y)
    return viewport.document_to_screen(dx, dy)


# --- provider contract ------------------------------------------------------

@dataclass
class ProviderState:
    available: bool = False
    eyes_lost: bool = False
    source_name: str = ""


class EyeDataProvider(QObject):
    """
    Base fixation source.

    Subclasses implement `_run()` and hand fixations to `_deliver()`. The base
    class enforces the contract: nothing is signalled before start() or after
    stop(), fixations arrive in timestamp order, and eyes-lost changes are
    edge-triggered.
    """
    fixations_ready = pyqtSignal(object)     # List[FixationEvent]
    eye_state_changed = pyqtSignal(object)   # (lost: bool, t_ms: int)
    connection_changed = pyqtSignal(bool)
    stream_error = pyqtSignal(str)
    finished = pyqtSignal()

    source_name = "provider"

    def __init__(self, eyes_lost_threshold: float = EYES_LOST_THRESHOLD_S):
        super().__init__()
        self.state = ProviderState(source_name=self.source_name)
        self.eyes_lost_threshold_ms = int(eyes_lost_threshold * 1000)
        self.delivered = 0
        self.dropped = 0
        self._last_t: Optional[int] = None
        self._running = False
        self._lock = threading.RLock()
        self._stop_event = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def subscribe(self, on_fixations: Optional[Callable] = None, on_eye_state: Optional[Callable] = None,
                  on_connection: Optional[Callable] = None, on_error: Optional[Callable] = None,
                  on_finished: Optional[Callable] = None):
        """Connect plain callables; they run on the provider's thread."""
        direct = Qt.ConnectionType.DirectConnection
        for signal, slot in ((self.fixations_ready, on_fixations), (self.eye_state_changed, on_eye_state),
                             (self.connection_changed, on_connection), (self.stream_error, on_error),
                             (self.finished, on_finished)):
            if slot is not None:
                signal.connect(slot, direct)

    @property
    def running(self) -> bool:
        return self._running

    def start(self, threaded: bool = True):
        """Begin delivery; with threaded=False the source runs to completion here."""
        with self._lock:
            if self._running:
                return
            self._running = True
            self._stop_event.clear()
        logger.debug("%s started", self.source_name)
        if threaded:
            self._thread = threading.Thread(target=self._main, name=f"{self.source_name}-source", daemon=True)
            self._thread.start()
        else:
            self._main()

    def stop(self):
        with self._lock:
            was_running = self._running
            self._running = False
            self._stop_event.set()
        if was_running:
            logger.debug("%s stopped (delivered=%d dropped=%d)", self.source_name, self.delivered, self.dropped)

    def join(self, timeout: Optional[float] = None):
        if self._thread is not None:
            self._thread.join(timeout)

    def _main(self):
        try:
            self._run()
        except StreamError as e:
            self._error(str(e))
        finally:
            with self._lock:
                was_running = self._running
                self._running = False
            if was_running:
                self.finished.emit()

    def _run(self):
        raise NotImplementedError

    # signals go out after the lock is released

    def _error(self, message: str):
        logger.warning("%s: %s", self.source_name, message)
        with self._lock:
            running = self._running
        if running:
            self.stream_error.emit(message)

    def _set_available(self, available: bool):
        with self._lock:
            if not self._running or self.state.available == available:
                return
            self.state.available = available
            if not available:
                self.state.eyes_lost = False
        self.connection_changed.emit(available)

    def _eye_state(self, lost: bool, t_ms: int) -> Optional[Tuple[bool, int]]:
        # caller holds the lock
        if self.state.eyes_lost == lost:
            return None
        self.state.eyes_lost = lost
        return lost, t_ms

    def _deliver(self, batch: Sequence[FixationEvent]) -> int:
        """Signal in-order fixations; out-of-order ones are dropped and counted."""
        pending: List[Tuple[str, object]] = []
        accepted: List[FixationEvent] = []
        with self._lock:
            if not self._running:
                return 0
            for fixation in batch:
                if self._last_t is not None and fixation.t_ms < self._last_t:
                    self.dropped += 1
                    continue
                gap = self._last_t is not None and fixation.t_ms - self._last_t > self.eyes_lost_threshold_ms
                if gap or self.state.eyes_lost:
                    if accepted:
                        pending.append(("fixations", accepted))
                        accepted = []
                    changes = [self._eye_state(True, self._last_t + self.eyes_lost_threshold_ms)] if gap else []
                    changes.append(self._eye_state(False, fixation.t_ms))
                    pending.extend(("eyes", c) for c in changes if c is not None)
                accepted.append(fixation)
                self._last_t = fixation.t_ms
            if accepted:
                pending.append(("fixations", accepted))
            total = sum(len(payload) for kind, payload in pending if kind == "fixations")
            self.delivered += total
        for kind, payload in pending:
            if kind == "fixations":
                self.fixations_ready.emit(payload)
            else:
                self.eye_state_changed.emit(payload)
        return total


class ReplaySource(EyeDataProvider):
    """Replays a fixation JSON-lines file; speed=inf replays as fast as possible."""
    source_name = "replay"

    def __init__(self, path: Optional[str] = None, lines: Optional[Iterable[str]] = None,
                 speed: float = math.inf, eyes_lost_threshold: float = EYES_LOST_THRESHOLD_S):
        super().__init__(eyes_lost_threshold)
        if not speed > 0:
            raise ValidationError("must be > 0", "speed")
        self.path = path
        self.lines = lines
        self.speed = speed

    def _iter_lines(self):
        if self.lines is not None:
            yield from self.lines
            return
        with open(self.path, "r", encoding="utf-8") as f:
            yield from f

    def _run(self):
        self._set_available(True)
        previous = None
        for number, line in enumerate(self._iter_lines(), 1):
            if self._stop_event.is_set():
                return
            if not line.strip():
                continue
            try:
                fixation = FixationEvent.from_line(line)
            except ValidationError as e:
                raise StreamError(f"line {number}: {e}") from None
            if previous is not None and math.isfinite(self.speed):
                delay = max(0, fixation.t_ms - previous) / 1000.0 / self.speed
                if self._stop_event.wait(delay):
                    return
            previous = fixation.t_ms
            self._deliver([fixation])


class SocketSource(EyeDataProvider):
    """
    Reads fixation JSON lines from a TCP endpoint.

    Reconnects with bounded exponential backoff; unreadable or out-of-order
    lines are dropped so received == delivered + dropped.
    """
    source_name = "socket"

    def __init__(self, host: str, port: int, max_retries: int = 5, backoff: float = 0.2,
                 max_backoff: float = 5.0, reconnect: bool = True,
                 eyes_lost_threshold: float = EYES_LOST_THRESHOLD_S):
        super().__init__(eyes_lost_threshold)
        self.host = host
        self.port = port
        self.max_retries = max_retries
        self.backoff = backoff
        self.max_backoff = max_backoff
        self.reconnect = reconnect
        self.received = 0
        self._socket: Optional[socket.socket] = None

    def stop(self):
        super().stop()
        sock = self._socket
        if sock is not None:
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass

    def _run(self):
        failures = 0
        delay = self.backoff
        while not self._stop_event.is_set():
            try:
                sock = socket.create_connection((self.host, self.port), timeout=5.0)
            except OSError as e:
                failures += 1
                logger.info("connection to %s:%d failed (%s), attempt %d", self.host, self.port, e, failures)
                if failures > self.max_retries:
                    raise StreamError(f"cannot connect to {self.host}:{self.port}") from None
                if self._stop_event.wait(delay):
                    return
                delay = min(delay * 2, self.max_backoff)
                continue
            failures, delay = 0, self.backoff
            self._socket = sock
            self._set_available(True)
            try:
                self._read(sock)
            finally:
                self._socket = None
                sock.close()
                self._set_available(False)
            if not self.reconnect:
                return

    def _read(self, sock: socket.socket):
        sock.settimeout(None)
        with sock.makefile("r", encoding="utf-8", errors="replace") as stream:
            try:
                for line in stream:
                    if self._stop_event.is_set():
                        return
                    if not line.strip():
                        continue
                    self.received += 1
                    try:
                        fixation = FixationEvent.from_line(line)
                    except ValidationError as e:
                        self.dropped += 1
                        logger.debug("dropped line: %s", e)
                        continue
                    self._deliver([fixation])
            except OSError:
                return


# --- synthetic source -------------------------------------------------------

@dataclass(frozen=True)
class DwellStep:
    """Dwell on one rect for a number of fixations, optionally at a set time."""
    page_index: int
    rect: Rect
    fixations: int
    at_ms: Optional[int] = None


@dataclass(frozen=True)
class PauseStep:
    """No gaze for a while (eyes away)."""
    duration_ms: int


def parse_script(data: Sequence[Dict], layout: DocumentLayout) -> List:
    """
    Build and validate a dwell script.

    Each step is {"page": i, "block": k, "fixations": n} or
    {"page": i, "rect": [x, y, w, h], "fixations": n}, optionally with "at"
    (seconds), or {"pause": seconds}.
    """
    if not isinstance(data, list):
        raise ValidationError("script must be an array", "script")
    steps: List = []
    for number, raw in enumerate(data):
        where = f"script[{number}]"
        if not isinstance(raw, dict):
            raise ValidationError("expected an object", where)
        if "pause" in raw:
            steps.append(PauseStep(int(float(raw["pause"]) * 1000)))
            continue
        page = raw.get("page")
        if isinstance(page, bool) or not isinstance(page, int) or not layout.has_page(page):
            raise ValidationError(f"unknown page {page!r}", where)
        if "block" in raw:
            blocks = layout.pages[page].text_blocks
            index = raw["block"]
            if isinstance(index, bool) or not isinstance(index, int) or not 0 <= index < len(blocks):
                raise ValidationError(f"page {page} has no block {index!r}", where)
            rect = blocks[index].rect
        elif isinstance(raw.get("rect"), list) and len(raw["rect"]) == 4:
            rect = Rect(*raw["rect"], page_index=page)
            box = layout.pages[page]
            if rect.x < 0 or rect.y < 0 or rect.right > box.width or rect.top > box.height:
                raise ValidationError("rect outside the page", where)
        else:
            raise ValidationError("step needs a block or a rect", where)
        count = raw.get("fixations", 3)
        if isinstance(count, bool) or not isinstance(count, int) or count < 1:
            raise ValidationError("fixations must be a positive integer", where)
        at = raw.get("at")
        steps.append(DwellStep(page, rect, count, None if at is None else int(float(at) * 1000)))
    return steps


class SyntheticSource(EyeDataProvider):
    """
    Seeded fixation generator dwelling on scripted rects.

    Durations follow a gamma distribution; positions are uniform inside the
    target rect plus gaussian saccade noise, clipped back into the rect.
    `viewport_at(t_ms)` gives the window position used to convert page
    points into screen points.
    """
    source_name = "synthetic"

    def __init__(self, layout: DocumentLayout, script: Sequence, seed: Optional[int] = None,
                 viewport_at: Optional[Callable[[int], ViewportState]] = None,
                 start_ms: int = 0, duration_mean_ms: float = FIXATION_MEAN_MS,
                 duration_sd_ms: float = FIXATION_SD_MS, noise_pts: float = 4.0,
                 pupil: float = 3.5, distance_cm: Optional[float] = 60.0,
                 eyes_lost_threshold: float = EYES_LOST_THRESHOLD_S):
        super().__init__(eyes_lost_threshold)
        self.layout = layout
        self.steps = script if script and not isinstance(script[0], dict) else parse_script(list(script), layout)
        self.seed = seed
        if viewport_at is None:
            whole = ViewportState(0.0, 0.0, layout.document_width, layout.document_height)
            viewport_at = lambda t: whole  # noqa: E731
        self.viewport_at = viewport_at
        self.start_ms = start_ms
        self.duration_mean_ms = duration_mean_ms
        self.duration_sd_ms = duration_sd_ms
        self.noise_pts = noise_pts
        self.pupil = pupil
        self.distance_cm = distance_cm

    def generate(self) -> List[Tuple[FixationEvent, int, float, float]]:
        """The full stream as (screen fixation, page, page x, page y)."""
        rng = np.random.default_rng(self.seed)
        shape = (self.duration_mean_ms / self.duration_sd_ms) ** 2
        scale = self.duration_sd_ms ** 2 / self.duration_mean_ms
        t = self.start_ms
        out = []
        for step in self.steps:
            if isinstance(step, PauseStep):
                t += step.duration_ms
                continue
            if step.at_ms is not None:
                t = max(t, self.start_ms + step.at_ms)
            r = step.rect
            margin_x = min(1e-6, r.width / 2)
            margin_y = min(1e-6, r.height / 2)
            for _ in range(step.fixations):
                px = rng.uniform(r.x, r.right) + rng.normal(0.0, self.noise_pts)
                py = rng.uniform(r.y, r.top) + rng.normal(0.0, self.noise_pts)
                px = float(np.clip(px, r.x + margin_x, r.right - margin_x))
                py = float(np.clip(py, r.y + margin_y, r.top - margin_y))
                duration = float(max(1.0, rng.gamma(shape, scale)))
                sx, sy = page_to_screen(step.page_index, px, py, self.viewport_at(t), self.layout)
                fixation = FixationEvent(sx, sy, round(duration, 3), int(t), self.pupil, self.distance_cm)
                out.append((fixation, step.page_index, px, py))
                t += int(round(duration)) + SACCADE_MS
        return out

    def _run(self):
        self._set_available(True)
        for fixation, _, _, _ in self.generate():
            if self._stop_event.is_set():
                return
            self._deliver([fixation])


class FixationQueue:
    """
    Bounded hand-off between a provider lane and the session lane.

    When full, the oldest fixation is discarded and counted; with
    block=True producers wait for room instead (deterministic replay).
    """

    def __init__(self, maxsize: int = 1024, block: bool = False):
        if maxsize < 1:
            raise ValidationError("must be >= 1", "maxsize")
        self.maxsize = maxsize
        self.block = block
        self.dropped = 0
        self._items: Deque = deque()
        self._cond = threading.Condition()

    def put(self, item, timeout: Optional[float] = None) -> bool:
        with self._cond:
            if len(self._items) >= self.maxsize:
                if self.block:
                    if not self._cond.wait_for(lambda: len(self._items) < self.maxsize, timeout):
                        return False
                else:
                    self._items.popleft()
                    self.dropped += 1
            self._items.append(item)
            self._cond.notify_all()
            return True

    def put_many(self, items: Iterable):
        for item in items:
            self.put(item)

    def get(self, timeout: Optional[float] = None):
        """Next item, or None on timeout."""
        with self._cond:
            if not self._cond.wait_for(lambda: self._items, timeout):
                return None
            item = self._items.popleft()
            self._cond.notify_all()
            return item

    def drain(self) -> List:
        with self._cond:
            items = list(self._items)
            self._items.clear()
            self._cond.notify_all()
            return items

    def __len__(self) -> int:
        with self._cond:
            return len(self._items)
