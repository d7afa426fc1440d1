import json
import socket
import threading

import pytest

from core.errors import ValidationError
from core.geometry import ViewportState
from core.tracker import (FixationEvent, FixationQueue, ReplaySource, SocketSource, SyntheticSource, load_fixations,
                          parse_script, screen_to_page, write_fixations)


def wire(t_ms, x=10.0, y=20.0, duration=200.0, **extra):
    data = {"x": x, "y": y, "durationMs": duration, "pupil": 3.0, "distanceCm": 60, "tMs": t_ms}
    data.update(extra)
    return json.dumps(data)


class Recorder:
    def __init__(self, provider):
        self.fixations, self.states, self.errors, self.connections = [], [], [], []
        self.finished = threading.Event()
        provider.subscribe(on_fixations=self.fixations.extend, on_eye_state=self.states.append,
                           on_connection=self.connections.append, on_error=self.errors.append,
                           on_finished=self.finished.set)


def test_fixation_validation():
    with pytest.raises(ValidationError):
        FixationEvent(0, 0, 0, 10)
    with pytest.raises(ValidationError):
        FixationEvent(0, float("nan"), 10, 10)
    with pytest.raises(ValidationError):
        FixationEvent(0, 0, 10, 10.5)
    assert FixationEvent(0, 0, 10, 10, distance_cm=0).distance_cm is None


def test_fixation_wire_format():
    f = FixationEvent.from_line(wire(5, distanceCm=0))
    assert f.distance_cm is None
    assert f.to_wire() == {"x": 10.0, "y": 20.0, "durationMs": 200.0, "pupil": 3.0, "distanceCm": 0, "tMs": 5}
    with pytest.raises(ValidationError):
        FixationEvent.from_line('{"x": 1}')
    with pytest.raises(ValidationError):
        FixationEvent.from_line("not json")


def test_fixation_file_round_trip(tmp_path):
    path = str(tmp_path / "fix.jsonl")
    fixations = [FixationEvent(1.5, 2.5, 180.0, t, 3.1, 58.0) for t in (0, 250, 600)]
    write_fixations(fixations, path)
    assert load_fixations(path) == fixations


def test_replay_delivers_in_order_and_drops_late_lines():
    source = ReplaySource(lines=[wire(0), wire(300), wire(200), wire(600)])
    rec = Recorder(source)
    source.start(threaded=False)
    assert [f.t_ms for f in rec.fixations] == [0, 300, 600]
    assert source.dropped == 1 and source.delivered == 3
    assert rec.connections == [True]
    assert rec.finished.is_set()


def test_replay_signals_eyes_lost_on_gap():
    source = ReplaySource(lines=[wire(0), wire(1000), wire(20000)], eyes_lost_threshold=8.0)
    rec = Recorder(source)
    source.start(threaded=False)
    assert rec.states == [(True, 9000), (False, 20000)]
    assert len(rec.fixations) == 3


def test_subscribers_run_without_the_provider_lock():
    source = ReplaySource(lines=[wire(0), wire(1000), wire(20000)], eyes_lost_threshold=8.0)
    free = []

    def lock_is_free(*_):
        # another thread must be able to take the lock while a slot runs
        result = []
        taker = threading.Thread(target=lambda: result.append(source._lock.acquire(timeout=1.0)))
        taker.start()
        taker.join()
        if result[0]:
            source._lock.release()
        free.append(result[0])

    source.subscribe(on_fixations=lock_is_free, on_eye_state=lock_is_free, on_connection=lock_is_free,
                     on_finished=lock_is_free)
    source.start(threaded=False)
    assert len(free) >= 4 and all(free)


def test_replay_reports_malformed_line():
    source = ReplaySource(lines=[wire(0), "{broken"])
    rec = Recorder(source)
    source.start(threaded=False)
    assert len(rec.fixations) == 1
    assert rec.errors and "line 2" in rec.errors[0]
    assert rec.finished.is_set()


def test_nothing_signalled_before_start_or_after_stop():
    source = ReplaySource(lines=[wire(0)])
    rec = Recorder(source)
    assert source._deliver([FixationEvent(0, 0, 10, 0)]) == 0
    source.start(threaded=False)
    source.stop()
    assert source._deliver([FixationEvent(0, 0, 10, 99)]) == 0
    assert len(rec.fixations) == 1


def test_replay_rejects_bad_speed():
    with pytest.raises(ValidationError):
        ReplaySource(lines=[], speed=0)


def serve_lines(lines):
    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    server.bind(("127.0.0.1", 0))
    server.listen(1)

    def run():
        conn, _ = server.accept()
        with conn:
            conn.sendall("".join(line + "\n" for line in lines).encode("utf-8"))
        server.close()

    threading.Thread(target=run, daemon=True).start()
    return server.getsockname()[1]


def test_socket_source_reads_stream():
    port = serve_lines([wire(0), "garbage", wire(100), wire(50), wire(400)])
    source = SocketSource("127.0.0.1", port, reconnect=False)
    rec = Recorder(source)
    source.start(threaded=True)
    assert rec.finished.wait(10)
    source.join(5)
    assert [f.t_ms for f in rec.fixations] == [0, 100, 400]
    assert source.received == 5
    # received == delivered + dropped
    assert source.delivered + source.dropped == source.received
    assert rec.connections == [True, False]


def test_socket_source_gives_up_after_retries():
    spare = socket.socket()
    spare.bind(("127.0.0.1", 0))
    port = spare.getsockname()[1]
    spare.close()
    source = SocketSource("127.0.0.1", port, max_retries=1, backoff=0.01, reconnect=False)
    rec = Recorder(source)
    source.start(threaded=False)
    assert rec.errors and "cannot connect" in rec.errors[0]


def test_synthetic_source_is_seeded(layout):
    script = [{"page": 0, "block": 1, "fixations": 4}, {"pause": 10}, {"page": 1, "block": 0, "fixations": 2}]
    a = SyntheticSource(layout, script, seed=11).generate()
    b = SyntheticSource(layout, script, seed=11).generate()
    c = SyntheticSource(layout, script, seed=12).generate()
    assert [x[0] for x in a] == [x[0] for x in b]
    assert [x[0] for x in a] != [x[0] for x in c]
    assert len(a) == 6
    # the pause opens a gap longer than the eyes-lost threshold
    assert a[4][0].t_ms - a[3][0].t_ms > 10000


def test_synthetic_fixations_land_in_their_rects(layout):
    script = [{"page": 0, "block": 3, "fixations": 20}]
    viewport = ViewportState(0, 0, 612, 792)
    source = SyntheticSource(layout, script, seed=1, viewport_at=lambda t: viewport)
    rect = layout.pages[0].text_blocks[3].rect
    for fixation, page, px, py in source.generate():
        assert page == 0 and rect.contains_point(px, py)
        hit = screen_to_page((fixation.x, fixation.y), viewport, layout)
        assert hit[0] == 0 and hit[1:] == pytest.approx((px, py))


def test_synthetic_scripted_time_is_relative_to_start(layout):
    script = [{"page": 0, "block": 0, "fixations": 1, "at": 5}]
    (first,) = SyntheticSource(layout, script, seed=0, start_ms=1_000_000).generate()
    assert first[0].t_ms == 1_005_000


def test_synthetic_source_delivers(layout):
    source = SyntheticSource(layout, [{"page": 0, "block": 0, "fixations": 5}], seed=3)
    rec = Recorder(source)
    source.start(threaded=False)
    assert len(rec.fixations) == 5
    assert all(f.distance_cm == 60.0 for f in rec.fixations)


@pytest.mark.parametrize("script", [
    {"page": 0},
    [{"page": 9, "block": 0}],
    [{"page": 0, "block": 99}],
    [{"page": 0, "rect": [0, 0, 10_000, 5]}],
    [{"page": 0, "block": 0, "fixations": 0}],
    [{"page": 0}],
])
def test_bad_scripts(layout, script):
    with pytest.raises(ValidationError):
        parse_script(script, layout)


def test_fixation_queue_drops_oldest():
    q = FixationQueue(maxsize=2)
    q.put_many([1, 2, 3])
    assert q.dropped == 1
    assert q.drain() == [2, 3]
    assert q.get(timeout=0.01) is None


def test_blocking_queue_times_out_when_full():
    q = FixationQueue(maxsize=1, block=True)
    assert q.put("a")
    assert not q.put("b", timeout=0.01)
    assert len(q) == 1
