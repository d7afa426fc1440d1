"""Printing for the command line: human summaries or JSON with --json."""

import json
import sys
from typing import Any, Callable, Optional


def print_json(data: Any):
    json.dump(data, sys.stdout, indent=2, sort_keys=True, ensure_ascii=False)
    sys.stdout.write("\n")


def emit(args, data: Any, human: Optional[Callable[[Any], str]] = None):
    """JSON when --json was given (or no human form exists), else the human summary."""
    if getattr(args, "json", False) or human is None:
        print_json(data)
    else:
        print(human(data))


def fail(message: str):
    print(f"error: {message}", file=sys.stderr)
