"""
Command handlers. Each takes the parsed arguments and a ConfigManager and
returns an exit code; errors propagate to cli.app, which maps them.
"""

import argparse
import contextlib
import json
import logging
from typing import Dict, Iterator, List, Tuple
from urllib.parse import urlsplit

from config.settings import ConfigManager
from core.analytics import format_results_table, refinder_report
from core.errors import NotFoundError, ValidationError
from core.experiment import (ExperimentConfig, load_experiment, load_report, run_experiment,
                             synthesize_experiment, write_experiment, write_report)
from core.layout import load_layout
from core.model import ReadingEvent, Rect, Tag, TagAnchor, deserialize_event
from core.presets import PRESETS, STANDARD_PRESETS
from core.session import (EventPoster, TimerConfig, load_trace, open_session, run_trace, uuid_factory,
                          viewport_timeline)
from core.store import DimeStore
from core.tracker import ReplaySource, SocketSource, SyntheticSource
from core.urlproto import dispatch, parse_peyedf_url
from service.api import run_server
from service.client import DimeClient

from .output import emit

logger = logging.getLogger(__name__)


@contextlib.contextmanager
def open_store(args, config: ConfigManager) -> Iterator:
    """The local data directory with --local, otherwise the configured store service."""
    if getattr(args, "local", False):
        store = DimeStore(config.get_data_dir())
        try:
            yield store
        finally:
            store.close()
    else:
        client = DimeClient(config.get_store_url(), config.get_credentials())
        try:
            yield client
        finally:
            client.close()


def _event_summary(event) -> Dict:
    return {"id": event.id, "type": type(event).__name__, "sessionId": event.session_id,
            "start": event.start_time, "end": event.end_time}


# --- serve --------------------------------------------------------------------------

def cmd_serve(args, config: ConfigManager) -> int:
    parts = urlsplit(config.get_store_url())
    host = args.host or parts.hostname or "localhost"
    port = args.port if args.port is not None else (parts.port or 8080)
    store = DimeStore(config.get_data_dir())
    try:
        run_server(store, host, port, config.get_credentials(),
                   ready=lambda url: print(f"store started on {url}", flush=True))
    finally:
        store.close()
    return 0


# --- documents ------------------------------------------------------------------------

def cmd_document_register(args, config: ConfigManager) -> int:
    layout = load_layout(args.layout)
    with open_store(args, config) as store:
        stored = store.post_element(layout.as_element())
    emit(args, stored.to_dict(),
         lambda d: f"element {d['id']}: {d.get('title') or d.get('uri')} ({d['appId']})")
    return 0


def _parse_rect(raw: str, page: int) -> Rect:
    try:
        x, y, w, h = (float(v) for v in raw.strip("()").split(","))
    except ValueError:
        raise ValidationError("expected x,y,w,h", "rect") from None
    return Rect(x, y, w, h, page_index=page)


def cmd_document_tag(args, config: ConfigManager) -> int:
    layout = load_layout(args.layout)
    anchor = None
    if args.rect is not None:
        if args.page is None:
            raise ValidationError("--rect needs --page", "page")
        if not layout.has_page(args.page):
            raise ValidationError(f"no page {args.page}", "page")
        anchor = TagAnchor(args.page, _parse_rect(args.rect, args.page), args.text or "")
    element = layout.as_element(tags=[Tag(t, anchor) for t in args.tag])
    with open_store(args, config) as store:
        stored = store.post_element(element)
    emit(args, stored.to_dict(), lambda d: f"element {d['id']} tags: {', '.join(stored.tag_texts)}")
    return 0


# --- sessions ----------------------------------------------------------------------------

def _collect(provider) -> Tuple[List, List[Tuple[bool, int]], List[str]]:
    fixations: List = []
    states: List[Tuple[bool, int]] = []
    errors: List[str] = []
    provider.subscribe(on_fixations=fixations.extend, on_eye_state=states.append, on_error=errors.append)
    return fixations, states, errors


def _tracker_stream(spec: Tuple[str, str], layout, notifications, seed, config: ConfigManager, epoch_ms: int):
    kind, target = spec
    threshold = config.get_timers().eyes_lost_threshold
    if kind == "replay":
        provider = ReplaySource(target, eyes_lost_threshold=threshold)
    elif kind == "synthetic":
        with open(target, "r", encoding="utf-8") as f:
            try:
                script = json.load(f)
            except ValueError as e:
                raise ValidationError(f"malformed script JSON: {e}", "tracker") from None
        provider = SyntheticSource(layout, script, seed=seed, start_ms=epoch_ms,
                                   viewport_at=viewport_timeline(notifications, layout),
                                   eyes_lost_threshold=threshold)
    else:
        host, _, port = target.rpartition(":")
        provider = SocketSource(host, int(port), reconnect=False, eyes_lost_threshold=threshold)
    fixations, states, errors = _collect(provider)
    if kind == "socket":
        provider.start(threaded=True)
        provider.join()
    else:
        provider.start(threaded=False)
    if errors:
        raise ValidationError(errors[0], "tracker")
    logger.info("%s tracker delivered %d fixations", kind, len(fixations))
    return fixations, states


def cmd_session_run(args, config: ConfigManager) -> int:
    layout = load_layout(args.layout)
    notifications = load_trace(args.trace, args.epoch_ms)
    if not notifications:
        raise ValidationError("trace is empty", "trace")
    seed = config.get_seed()
    fixations, states = [], []
    if args.tracker is not None:
        fixations, states = _tracker_stream(args.tracker, layout, notifications, seed, config, args.epoch_ms)
    timers = config.get_timers()
    with open_store(args, config) as store:
        document = store.post_element(layout.as_element())
        poster = EventPoster(store.post_event)
        session = open_session(
            document, layout,
            timers=TimerConfig(timers.min_read_time, timers.max_read_time, args.exit_when_untracked),
            geometry=config.get_geometry(),
            sink=poster.post,
            id_factory=uuid_factory(seed),
        )
        run_trace(session, notifications, fixations, states)
        if not session.closed:
            last = max([n.t_ms for n in notifications] + [f.t_ms for f in fixations])
            session.close(last)
        poster.flush()
        poster.close()
    if poster.failures:
        _, error = poster.failures[0]
        raise error
    stored = poster.sent
    result = {"sessionId": session.session_id, "document": document.id,
              "events": [_event_summary(e) for e in stored]}
    emit(args, result, lambda d: "\n".join(
        [f"session {d['sessionId']}: {len(d['events'])} events"]
        + [f"  {e['id']:>5} {e['type']:<20} {e['start']} - {e['end']}" for e in d["events"]]))
    return 0


def cmd_session_report(args, config: ConfigManager) -> int:
    layout = load_layout(args.layout)
    with open_store(args, config) as store:
        events = store.session_events(args.session)
    if not events:
        raise NotFoundError(f"no session {args.session}")
    report = refinder_report(events, layout)
    emit(args, report.to_dict(), lambda _: report.summary())
    return 0


def cmd_extract_json(args, config: ConfigManager) -> int:
    with open_store(args, config) as store:
        events = [e for e in store.session_events(args.session) if isinstance(e, ReadingEvent)]
    if not events:
        raise NotFoundError(f"no reading events for session {args.session}")
    with open(args.output, "w", encoding="utf-8") as f:
        json.dump([e.to_dict() for e in events], f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")
    emit(args, {"sessionId": args.session, "events": len(events), "output": args.output},
         lambda d: f"wrote {d['events']} events to {d['output']}")
    return 0


def cmd_import_json(args, config: ConfigManager) -> int:
    with open(args.file, "r", encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except ValueError as e:
            raise ValidationError(f"malformed JSON: {e}", "file") from None
    if isinstance(raw, dict):
        raw = [raw]
    if not isinstance(raw, list):
        raise ValidationError("expected an array of events", "file")
    events = [deserialize_event(item) for item in raw]
    with open_store(args, config) as store:
        stored = [store.post_event(e) for e in events]
    emit(args, {"imported": len(stored), "ids": [e.id for e in stored]},
         lambda d: f"imported {d['imported']} events")
    return 0


# --- URLs -------------------------------------------------------------------------------

def cmd_url_parse(args, config: ConfigManager) -> int:
    request = parse_peyedf_url(args.url)
    emit(args, request.to_dict(), lambda d: "\n".join(f"{k}: {v}" for k, v in d.items()))
    return 0


def cmd_url_dispatch(args, config: ConfigManager) -> int:
    request = parse_peyedf_url(args.url)
    with open_store(args, config) as store:
        outcome = dispatch(request, store)

    def human(d: Dict) -> str:
        lines = [f"{d['targetKind']} {d['request']['target']}"]
        if "document" in d:
            lines.append(f"document {d['document']['id']}: {d['document']['title'] or d['document']['uri']}"
                         + (" (registered)" if d["registered"] else ""))
        if d["sessionId"]:
            lines.append(f"session {d['sessionId']}: {len(d['eventIds'])} events")
        if "focus" in d:
            lines.append(f"focus {d['focus']['kind']} on page {d['focus']['page']} {d['focus']['values']}")
        return "\n".join(lines)

    emit(args, outcome.to_dict(), human)
    return 0


# --- experiment ------------------------------------------------------------------------------

def cmd_experiment_synthesize(args, config: ConfigManager) -> int:
    seed = config.get_seed() or 0
    experiment_config = ExperimentConfig(participants=args.participants, rejected=args.rejected)
    data = synthesize_experiment(experiment_config, seed, config.get_geometry())
    write_experiment(data, args.out)
    posted = 0
    if args.post:
        with open_store(args, config) as store:
            ids = {}
            for paper, layout in enumerate(data.documents, 1):
                tags = [a.as_tag() for a in data.answers if a.paper == paper]
                ids[paper] = store.post_element(layout.as_element(tags=tags)).id
            for event in data.reading_events(ids):
                store.post_event(event)
                posted += 1
    result = {"out": args.out, "seed": seed, "participants": len(data.participants),
              "trials": len(data.trials), "posted": posted}
    emit(args, result, lambda d: f"{d['trials']} trials for {d['participants']} participants in {d['out']}")
    return 0


def cmd_experiment_run(args, config: ConfigManager) -> int:
    data = load_experiment(args.data)
    seed = config.get_seed()
    report = run_experiment(data, args.classifiers, args.permutations, seed, args.solver,
                            config.get_geometry(), args.workers)
    if args.output:
        write_report(report, args.output)
    emit(args, report.to_dict(), lambda _: _report_text(report))
    return 0


def cmd_experiment_report(args, config: ConfigManager) -> int:
    report = load_report(args.results)
    emit(args, report.to_dict(), lambda _: _report_text(report))
    return 0


def _report_text(report) -> str:
    head = (f"{report.participants_kept}/{report.participants} participants kept, "
            f"{report.n_records} answers, {report.correct_rate:.1%} correct")
    return head + "\n" + format_results_table(report.results)


def classifier_list(raw: str) -> List[str]:
    names = [name.strip().lower() for name in raw.split(",") if name.strip()]
    unknown = [n for n in names if n not in PRESETS]
    if unknown or not names:
        raise argparse.ArgumentTypeError(f"unknown classifiers {unknown} (known: {', '.join(PRESETS)})")
    return names


DEFAULT_CLASSIFIERS = ",".join(STANDARD_PRESETS)
