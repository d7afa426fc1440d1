import json

import pytest

from core.clock import VirtualClock
from core.errors import SessionClosedError, ValidationError
from core.model import ClassSource, ReadingClass, ReadingEvent, Rect, SummaryReadingEvent, serialize_event
from core.session import (EventPoster, Notification, NotificationKind, SessionLane, TimerConfig, load_trace,
                          open_session, run_trace, uuid_factory, viewport_timeline)
from core.tracker import FixationEvent

K = NotificationKind

# two read periods, the second ended by a long gaze loss
FIXTURE_TRACE = [
    {"kind": "documentOpened", "t": 0},
    {"kind": "scrollStarted", "t": 10},
    {"kind": "scrollEnded", "t": 11, "payload": {"scroll": [0, 100]}},
    {"kind": "gazeLost", "t": 20},
    {"kind": "documentClosed", "t": 100},
]


def write_trace(path, lines):
    path.write_text("\n".join(json.dumps(line) for line in lines) + "\n", encoding="utf-8")
    return str(path)


def stored_document(layout, store):
    return store.post_element(layout.as_element())


def new_session(layout, store, **kwargs):
    kwargs.setdefault("id_factory", uuid_factory(7))
    return open_session(stored_document(layout, store), layout, **kwargs)


def fixation(t_ms, page_y, x=100.0, duration=220.0):
    # default window shows page 0 from the top, so screen y = 792 - page y
    return FixationEvent(x, 792.0 - page_y, duration, t_ms, pupil=3.2, distance_cm=60.0)


def test_fixture_trace_gives_two_periods_and_summary(tmp_path, layout, store):
    notifications = load_trace(write_trace(tmp_path / "trace.jsonl", FIXTURE_TRACE))
    session = new_session(layout, store)
    events = run_trace(session, notifications)
    reading = [e for e in events if isinstance(e, ReadingEvent)]
    summaries = [e for e in events if isinstance(e, SummaryReadingEvent)]
    assert [(e.start_time, e.end_time) for e in reading] == [(2000, 10000), (13000, 80000)]
    assert [(s.start_time, s.end_time) for s in summaries] == [(0, 100000)]
    assert session.closed
    assert all(e.session_id == session.session_id for e in events)


def test_replay_is_bit_identical(tmp_path, layout, store):
    notifications = load_trace(write_trace(tmp_path / "trace.jsonl", FIXTURE_TRACE), epoch_ms=1_500_000_000_000)
    first = [serialize_event(e) for e in run_trace(new_session(layout, store), notifications)]
    second = [serialize_event(e) for e in run_trace(new_session(layout, store), notifications)]
    assert first == second


def test_events_without_tracker_have_viewport_but_no_gaze(layout, store):
    session = new_session(layout, store)
    events = run_trace(session, [Notification(K.DOCUMENT_OPENED, 0), Notification(K.SCROLL_STARTED, 5000)])
    (event,) = events
    assert event.page_eye_data == ()
    assert event.page_numbers == (0,)
    assert event.page_labels == ("1",)
    assert [r.class_source for r in event.page_rects] == [ClassSource.VIEWPORT]
    assert "Eye tracking in reading" in event.plain_text_content
    assert event.targetted_resource_id == session.document.id


def test_fixations_fill_eye_data_and_rects(layout, store):
    session = new_session(layout, store)
    fixations = [fixation(1000, 495), fixation(2500, 495), fixation(2800, 490), fixation(3100, 500)]
    events = run_trace(session, [Notification(K.DOCUMENT_OPENED, 0), Notification(K.SCROLL_STARTED, 5000)],
                       fixations)
    (event,) = events
    (eye,) = event.page_eye_data
    # the fixation before the entry deadline is not buffered
    assert len(eye) == 3
    assert eye.start_times == (500.0, 800.0, 1100.0)
    assert eye.ys == pytest.approx((495, 490, 500))
    eye_rects = [r for r in event.page_rects if r.class_source == ClassSource.EYE]
    assert len(eye_rects) == 1
    assert eye_rects[0].reading_class == ReadingClass.READ
    assert (eye_rects[0].y, eye_rects[0].height) == (486, 28)


def test_summary_reports_read_paragraphs_and_marks(layout, store):
    session = new_session(layout, store)
    mark = Rect(72, 600, 100, 14, 0, ReadingClass.IMPORTANT, ClassSource.MANUAL_SELECTION)
    run_trace(session, [Notification(K.DOCUMENT_OPENED, 0), Notification(K.MARK, 100, mark=mark),
                        Notification(K.SEARCH, 200, query="reading")],
              [fixation(2500 + 300 * i, 495) for i in range(3)])
    summary = session.close(9000)
    assert summary.search_queries[0].hits == 2
    assert mark in summary.page_rects
    assert any(r.reading_class == ReadingClass.READ for r in summary.page_rects)
    assert set(summary.proportions) >= {ReadingClass.VIEWPORT, ReadingClass.READ, ReadingClass.IMPORTANT}
    reading = [e for e in session.events if isinstance(e, ReadingEvent)]
    assert reading and mark in reading[0].page_rects


def test_stop_before_deadline_cancels_entry(layout, store):
    session = new_session(layout, store)
    events = run_trace(session, [Notification(K.DOCUMENT_OPENED, 0), Notification(K.SCROLL_STARTED, 1500),
                                 Notification(K.SCROLL_ENDED, 1600), Notification(K.WINDOW_STARTED_MOVING, 3000)])
    assert events == []
    assert session.phase == "idle"


def test_unfocused_window_never_reads(layout, store):
    session = new_session(layout, store)
    events = run_trace(session, [Notification(K.FOCUS_LOST, 0), Notification(K.SCROLL_ENDED, 10),
                                 Notification(K.DOCUMENT_CLOSED, 60000)])
    assert [type(e) for e in events] == [SummaryReadingEvent]


def test_scroll_during_reading_starts_a_new_period(layout, store):
    session = new_session(layout, store)
    events = run_trace(session, [Notification(K.DOCUMENT_OPENED, 0),
                                 Notification(K.SCROLL_ENDED, 4000, scroll=(0, 300)),
                                 Notification(K.DOCUMENT_CLOSED, 9000)])
    reading = [(e.start_time, e.end_time) for e in events if isinstance(e, ReadingEvent)]
    assert reading == [(2000, 4000), (6000, 9000)]
    # each period keeps the viewport it was read in
    first, second = (e.page_rects[0] for e in events if isinstance(e, ReadingEvent))
    assert (first.y, first.height) == (0, 792)
    assert (second.y, second.height) == (0, 492)


def test_untracked_exit_timer(layout, store):
    timers = TimerConfig(2.0, 60.0, exit_when_untracked=True)
    session = new_session(layout, store, timers=timers)
    events = run_trace(session, [Notification(K.DOCUMENT_OPENED, 0), Notification(K.DOCUMENT_CLOSED, 100000)])
    reading = [(e.start_time, e.end_time) for e in events if isinstance(e, ReadingEvent)]
    assert reading == [(2000, 62000)]


def test_gaze_regained_keeps_reading(layout, store):
    session = new_session(layout, store)
    run_trace(session, [Notification(K.DOCUMENT_OPENED, 0), Notification(K.GAZE_LOST, 3000),
                        Notification(K.GAZE_REGAINED, 30000)])
    session.tick(90000)
    assert session.phase == "reading"


def test_time_cannot_go_back(layout, store):
    session = new_session(layout, store)
    session.handle(Notification(K.DOCUMENT_OPENED, 1000))
    with pytest.raises(ValidationError):
        session.handle(Notification(K.SCROLL_STARTED, 999))


def test_closed_session_rejects_input(layout, store):
    session = new_session(layout, store)
    session.close(10)
    with pytest.raises(SessionClosedError):
        session.handle(Notification(K.SCROLL_ENDED, 20))
    with pytest.raises(SessionClosedError):
        session.record_search("x")


def test_marks_must_be_annotations(layout, store):
    session = new_session(layout, store)
    with pytest.raises(ValidationError):
        session.mark(Rect(0, 0, 1, 1, 0, ReadingClass.READ, ClassSource.CLICK))
    with pytest.raises(ValidationError):
        session.mark(Rect(0, 0, 1, 1, 0, ReadingClass.CRITICAL, ClassSource.EYE))
    with pytest.raises(ValidationError):
        session.mark(Rect(0, 0, 1, 1, 5, ReadingClass.CRITICAL, ClassSource.CLICK))


def test_timer_config_bounds():
    with pytest.raises(ValidationError):
        TimerConfig(5.0, 2.0)
    with pytest.raises(ValidationError):
        TimerConfig(0.0, 2.0)


def test_seeded_session_ids_repeat():
    a, b = uuid_factory(3), uuid_factory(3)
    assert [a(), a()] == [b(), b()]
    assert uuid_factory()() != uuid_factory()()


@pytest.mark.parametrize("line", [
    {"kind": "teleported", "t": 1},
    {"kind": "scrollEnded", "t": "1"},
    {"kind": "scrollEnded", "t": 1, "payload": {"scroll": [1]}},
    {"kind": "mark", "t": 1, "payload": {"mark": {"rect": [0, 1, 2]}}},
])
def test_bad_trace_lines(tmp_path, line):
    with pytest.raises(ValidationError):
        load_trace(write_trace(tmp_path / "bad.jsonl", [line]))


def test_trace_mark_payload(tmp_path):
    (n,) = load_trace(write_trace(tmp_path / "t.jsonl", [
        {"kind": "mark", "t": 1.5, "payload": {"mark": {"rect": [1, 10, 20, 30, 40], "readingClass": 30}}}]))
    assert n.t_ms == 1500
    assert n.mark == Rect(10, 20, 30, 40, 1, ReadingClass.CRITICAL, ClassSource.MANUAL_SELECTION)


def test_viewport_timeline(layout):
    at = viewport_timeline([Notification(K.SCROLL_ENDED, 1000, scroll=(0, 200)),
                            Notification(K.WINDOW_STOPPED_MOVING, 2000, window=(500, 300))], layout)
    assert (at(0).scroll_y, at(0).height) == (0, 792)
    assert (at(1500).scroll_y, at(1500).height) == (200, 792)
    assert (at(2500).scroll_y, at(2500).width) == (200, 500)


def test_event_poster_delivers_in_order(layout, store):
    poster = EventPoster(store.post_event)
    session = new_session(layout, store, sink=poster.post)
    run_trace(session, load_trace_lines(FIXTURE_TRACE))
    poster.flush()
    poster.close()
    assert poster.failures == []
    assert [e.id for e in poster.sent] == [1, 2, 3]
    assert len(store.session_events(session.session_id)) == 3


def test_event_poster_records_failures(layout, store):
    def refuse(event):
        raise ValidationError("nope", "event")

    poster = EventPoster(refuse)
    session = new_session(layout, store, sink=poster.post)
    session.close(0)
    poster.flush()
    poster.close()
    assert len(poster.failures) == 1


def test_session_lane_on_virtual_clock(layout, store):
    clock = VirtualClock(0)
    session = new_session(layout, store)
    # no idle ticks: every timestamp comes from a notification
    lane = SessionLane(session, clock, poll_interval=60)
    lane.notify(K.DOCUMENT_OPENED)
    clock.advance_to(3000)
    lane.notify(K.SCROLL_STARTED)
    lane.close(timeout=5)
    assert lane.errors == []
    assert [(type(e), e.start_time, e.end_time) for e in session.events] == [
        (ReadingEvent, 2000, 3000), (SummaryReadingEvent, 0, 3000)]


def load_trace_lines(lines):
    return [Notification.from_trace(line) for line in lines]


def test_session_lane_buffers_fixations(layout, store):
    clock = VirtualClock(0)
    session = new_session(layout, store)
    lane = SessionLane(session, clock, poll_interval=60)
    lane.notify(K.DOCUMENT_OPENED)
    clock.advance_to(2500)
    lane.fixations([fixation(2500, 495), fixation(2800, 490), fixation(3100, 500)])
    clock.advance_to(5000)
    lane.notify(K.SCROLL_STARTED)
    lane.close(timeout=5)
    assert lane.errors == [] and lane.dropped_fixations == 0
    reading = [e for e in session.events if isinstance(e, ReadingEvent)]
    assert [(e.start_time, e.end_time) for e in reading] == [(2000, 5000)]
    assert len(reading[0].page_eye_data[0]) == 3


def test_session_lane_defaults_to_wall_clock(layout, store):
    session = new_session(layout, store)
    lane = SessionLane(session)
    lane.notify(K.DOCUMENT_OPENED)
    lane.close(timeout=5)
    assert [type(e) for e in session.events] == [SummaryReadingEvent]
