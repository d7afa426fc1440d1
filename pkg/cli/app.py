"""
Command-line entry point: the argparse tree and the error-to-exit-code mapping.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import logging
import sys
from typing import List, Optional, Tuple

from config.logs import configure_logging
from config.settings import ConfigManager
from core.analytics import DEFAULT_PERMUTATIONS
from core.errors import ReadingDataError, UrlError
from version import VERSION

from . import commands
from .output import fail

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

TRACKER_KINDS = ("replay", "synthetic", "socket")


def tracker_source(raw: str) -> Tuple[str, str]:
    """Parse replay:FILE, synthetic:SCRIPT or socket:HOST:PORT."""
    kind, sep, target = raw.partition(":")
    if not sep or kind not in TRACKER_KINDS or not target:
        raise argparse.ArgumentTypeError(f"expected one of {', '.join(k + ':...' for k in TRACKER_KINDS)}")
    if kind == "socket":
        host, _, port = target.rpartition(":")
        if not host or not port.isdigit() or not 0 < int(port) < 65536:
            raise argparse.ArgumentTypeError("expected socket:HOST:PORT")
    return kind, target


def positive_int(raw: str) -> int:
    try:
        value = int(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {raw!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="peyetrace",
        description="Headless eye-tracking reading data: store, sessions, URLs and experiments.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    parser.add_argument("--config", help="settings file (default: DATA_DIR/settings.json)")
    parser.add_argument("--data-dir", help="store data directory (default ~/.dime)")
    parser.add_argument("--store-url", help="store base URL (default http://localhost:8080)")
    parser.add_argument("--user", help="store user")
    parser.add_argument("--password", help="store password")
    parser.add_argument("--seed", type=int, help="seed for deterministic runs")
    parser.add_argument("--eye-distance-cm", type=float, help="eye-to-screen distance")
    parser.add_argument("--points-per-cm", type=float, help="screen points per centimetre")
    parser.add_argument("--min-read-time", type=float, help="seconds before a reading period starts")
    parser.add_argument("--max-read-time", type=float, help="seconds of lost gaze before exit")
    parser.add_argument("--eyes-lost-threshold", type=float, help="seconds without fixations before eyes are lost")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--json", action="store_true", help="machine-readable output")

    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    serve = sub.add_parser("serve", help="run the store service")
    serve.add_argument("--host", help="bind address (default: host of the store URL)")
    serve.add_argument("--port", type=int, help="port (default: port of the store URL)")
    serve.set_defaults(handler=commands.cmd_serve)

    # documents
    document = sub.add_parser("document", help="register and tag documents")
    doc_sub = document.add_subparsers(dest="document_command", metavar="ACTION")
    doc_sub.required = True
    register = doc_sub.add_parser("register", help="post the document of a layout file")
    register.add_argument("--layout", required=True)
    register.add_argument("--local", action="store_true", help="write to the data directory directly")
    register.set_defaults(handler=commands.cmd_document_register)
    tag = doc_sub.add_parser("tag", help="add tags to a document")
    tag.add_argument("--layout", required=True)
    tag.add_argument("--tag", action="append", required=True, help="tag text (repeatable)")
    tag.add_argument("--page", type=int, help="anchor page index")
    tag.add_argument("--rect", help="anchor rect x,y,w,h in page points")
    tag.add_argument("--text", help="anchored selected text")
    tag.add_argument("--local", action="store_true")
    tag.set_defaults(handler=commands.cmd_document_tag)

    # sessions
    session = sub.add_parser("session", help="reading sessions")
    session_sub = session.add_subparsers(dest="session_command", metavar="ACTION")
    session_sub.required = True
    run = session_sub.add_parser("run", help="replay a notification trace through a reading session")
    run.add_argument("--layout", required=True)
    run.add_argument("--trace", required=True, help="notification trace (JSON lines)")
    run.add_argument("--tracker", type=tracker_source,
                     help="fixation source: replay:FILE, synthetic:SCRIPT or socket:HOST:PORT")
    run.add_argument("--epoch-ms", type=int, default=0, help="virtual time of trace second 0")
    run.add_argument("--exit-when-untracked", action="store_true",
                     help="end reading periods without gaze after the max read time")
    run.add_argument("--local", action="store_true")
    run.set_defaults(handler=commands.cmd_session_run)
    report = session_sub.add_parser("report", help="read-paragraph report of a stored session")
    report.add_argument("--session", required=True)
    report.add_argument("--layout", required=True)
    report.add_argument("--local", action="store_true")
    report.set_defaults(handler=commands.cmd_session_report)

    extract = sub.add_parser("extract-json", help="export the reading events of a session")
    extract.add_argument("--session", required=True)
    extract.add_argument("-o", "--output", required=True)
    extract.add_argument("--local", action="store_true")
    extract.set_defaults(handler=commands.cmd_extract_json)

    import_json = sub.add_parser("import-json", help="post events from an exported JSON file")
    import_json.add_argument("file")
    import_json.add_argument("--local", action="store_true")
    import_json.set_defaults(handler=commands.cmd_import_json)

    # URLs
    url = sub.add_parser("url", help="peyedf:// URLs")
    url_sub = url.add_subparsers(dest="url_command", metavar="ACTION")
    url_sub.required = True
    parse = url_sub.add_parser("parse", help="print the parsed request")
    parse.add_argument("url")
    parse.set_defaults(handler=commands.cmd_url_parse)
    dispatch = url_sub.add_parser("dispatch", help="resolve the request against the store")
    dispatch.add_argument("url")
    dispatch.add_argument("--local", action="store_true")
    dispatch.set_defaults(handler=commands.cmd_url_dispatch)

    # experiment
    experiment = sub.add_parser("experiment", help="synthetic answer-prediction experiment")
    exp_sub = experiment.add_subparsers(dest="experiment_command", metavar="ACTION")
    exp_sub.required = True
    synth = exp_sub.add_parser("synthesize", help="generate documents, answers and trials")
    synth.add_argument("--out", required=True, help="output directory")
    synth.add_argument("--participants", type=positive_int, default=7)
    synth.add_argument("--rejected", type=int, default=0, help="extra participants failing the rejection rules")
    synth.add_argument("--post", action="store_true", help="also post documents and reading events")
    synth.add_argument("--local", action="store_true")
    synth.set_defaults(handler=commands.cmd_experiment_synthesize)
    exp_run = exp_sub.add_parser("run", help="train and evaluate the classifiers")
    exp_run.add_argument("--data", required=True, help="directory written by synthesize")
    exp_run.add_argument("-o", "--output", help="results JSON")
    exp_run.add_argument("--permutations", type=positive_int, default=DEFAULT_PERMUTATIONS)
    exp_run.add_argument("--solver", choices=("newton", "liblinear"), default="newton")
    exp_run.add_argument("--workers", type=positive_int, default=1)
    exp_run.add_argument("--classifiers", type=commands.classifier_list,
                         default=commands.classifier_list(commands.DEFAULT_CLASSIFIERS),
                         help=f"comma-separated presets (default {commands.DEFAULT_CLASSIFIERS})")
    exp_run.set_defaults(handler=commands.cmd_experiment_run)
    exp_report = exp_sub.add_parser("report", help="print a results file")
    exp_report.add_argument("--results", required=True)
    exp_report.set_defaults(handler=commands.cmd_experiment_report)

    return parser


def config_from_args(args, environ=None) -> ConfigManager:
    overrides = {
        "store_url": args.store_url,
        "user": args.user,
        "password": args.password,
        "data_dir": args.data_dir,
        "seed": args.seed,
        "eye_distance_cm": args.eye_distance_cm,
        "points_per_cm": args.points_per_cm,
        "min_read_time": args.min_read_time,
        "max_read_time": args.max_read_time,
        "eyes_lost_threshold": args.eyes_lost_threshold,
        "log_level": args.log_level,
    }
    return ConfigManager(args.config, overrides=overrides, environ=environ)


def main(argv: Optional[List[str]] = None, environ=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        config = config_from_args(args, environ)
        configure_logging(config.get_log_level())
        return args.handler(args, config)
    except UrlError as e:
        fail(str(e))
        return EXIT_USAGE
    except (ReadingDataError, OSError) as e:
        fail(str(e))
        return EXIT_FAILURE
    except ValueError as e:
        # malformed environment values
        fail(str(e))
        return EXIT_USAGE
    except KeyboardInterrupt:
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
