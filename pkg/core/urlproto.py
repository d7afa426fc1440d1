"""
peyedf:// URLs: parsing, rendering, target classification and dispatch.

    peyedf://reader/<path|contentHash|appId|sessionId>?search=q&page=n&rect=(x,y,w,h)
    peyedf://refinder/<sessionId>?page=n&point=(x,y)

Page numbers are 0-based; rect and point are page-space points.
"""

import logging
import math
import os
import re
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple, Union
from urllib.parse import quote, unquote

from .errors import NotFoundError, UrlError, ValidationError
from .layout import load_layout
from .model import APP_ID_PREFIX, Event, ScientificDocument, is_content_hash, strip_app_id

logger = logging.getLogger(__name__)


SCHEME = "peyedf://"
PARAMS = ("search", "page", "rect", "point")

_NUMBER = r"\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*"
_RECT_RE = re.compile(r"\(?" + ",".join([_NUMBER] * 4) + r"\)?")
_POINT_RE = re.compile(r"\(?" + ",".join([_NUMBER] * 2) + r"\)?")


class Mode(str, Enum):
    READER = "reader"
    REFINDER = "refinder"


class TargetKind(str, Enum):
    PATH = "path"
    CONTENT_HASH = "contentHash"
    APP_ID = "appId"
    SESSION_ID = "sessionId"


@dataclass(frozen=True)
class SearchSpec:
    query: str
    exact_phrase: bool = False

    def __post_init__(self):
        if not self.query:
            raise UrlError("empty search", "search")
        quoted = len(self.query) >= 2 and self.query.startswith('"') and self.query.endswith('"')
        if quoted and not self.exact_phrase:
            raise UrlError("a quoted query is an exact phrase", "search")


@dataclass(frozen=True)
class PeyeRequest:
    """A parsed peyedf:// URL."""
    mode: Mode
    target: str
    search: Optional[SearchSpec] = None
    page: Optional[int] = None
    rect: Optional[Tuple[float, float, float, float]] = None
    point: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if not self.target:
            raise UrlError("missing target", "target")
        if "/" in self.target and not self.target.startswith("/"):
            raise UrlError("paths must be absolute", "target")
        if self.rect is not None and self.point is not None:
            raise UrlError("rect and point are mutually exclusive", "rect")
        if (self.rect is not None or self.point is not None) and self.page is None:
            raise UrlError("page is required with rect or point", "page")
        if self.page is not None and self.page < 0:
            raise UrlError("must be >= 0", "page")

    @property
    def is_path(self) -> bool:
        return self.target.startswith("/")

    def to_dict(self) -> Dict:
        data: Dict = {"mode": self.mode.value, "target": self.target}
        if self.search is not None:
            data["search"] = {"query": self.search.query, "exactPhrase": self.search.exact_phrase}
        if self.page is not None:
            data["page"] = self.page
        if self.rect is not None:
            data["rect"] = list(self.rect)
        if self.point is not None:
            data["point"] = list(self.point)
        return data


def _numbers(raw: str, pattern, name: str) -> Tuple[float, ...]:
    match = pattern.fullmatch(raw.strip())
    if match is None:
        raise UrlError(f"malformed tuple {raw!r}", name)
    values = tuple(float(v) for v in match.groups())
    if not all(math.isfinite(v) for v in values):
        raise UrlError("values must be finite", name)
    return values


def parse_peyedf_url(url: Union[str, bytes]) -> PeyeRequest:
    """Parse a peyedf:// URL. Every defect raises UrlError."""
    try:
        return _parse(url)
    except UrlError:
        raise
    except Exception as e:
        raise UrlError(f"unparseable URL: {e}") from None


def _parse(url: Union[str, bytes]) -> PeyeRequest:
    if isinstance(url, (bytes, bytearray)):
        url = bytes(url).decode("utf-8", errors="replace")
    if not isinstance(url, str):
        raise UrlError("expected a string")
    url = url.strip()
    if url[:len(SCHEME)].lower() != SCHEME:
        raise UrlError(f"URL must start with {SCHEME}", "scheme")
    rest = url[len(SCHEME):]
    if "#" in rest:
        raise UrlError("'#' must be percent-encoded", "target")
    location, _, query = rest.partition("?")
    mode_text, _, raw_target = location.partition("/")
    try:
        mode = Mode(mode_text.lower())
    except ValueError:
        raise UrlError(f"unknown mode {mode_text!r}", "mode") from None

    target = unquote(raw_target, errors="strict")
    if "/" in target and not target.startswith("/"):
        target = "/" + target

    values: Dict[str, str] = {}
    if query:
        for part in query.split("&"):
            if not part:
                continue
            key, eq, value = part.partition("=")
            key = unquote(key)
            if key not in PARAMS:
                raise UrlError(f"unknown parameter {key!r}", key)
            if key in values:
                raise UrlError("duplicate parameter", key)
            if not eq:
                raise UrlError("missing value", key)
            values[key] = unquote(value, errors="strict")

    search = None
    if "search" in values:
        text = values["search"]
        exact = len(text) >= 2 and text.startswith('"') and text.endswith('"')
        if exact:
            text = text[1:-1]
        if not text:
            raise UrlError("empty search", "search")
        search = SearchSpec(text, exact)
    page = None
    if "page" in values:
        if not values["page"].isdigit() or not values["page"].isascii():
            raise UrlError(f"not a page index: {values['page']!r}", "page")
        page = int(values["page"])
    rect = point = None
    if "rect" in values:
        rect = _numbers(values["rect"], _RECT_RE, "rect")
        if rect[2] < 0 or rect[3] < 0:
            raise UrlError("width and height must be >= 0", "rect")
    if "point" in values:
        point = _numbers(values["point"], _POINT_RE, "point")
    return PeyeRequest(mode, target, search, page, rect, point)


def _num(value: float) -> str:
    return str(int(value)) if float(value).is_integer() and abs(value) < 1e15 else repr(float(value))


def render_peyedf_url(request: PeyeRequest) -> str:
    """Inverse of parse_peyedf_url."""
    target = request.target
    if request.is_path and "/" in target[1:] and not target[1:].startswith("/"):
        raw = quote(target[1:], safe="/")
    elif request.is_path:
        raw = quote(target, safe="/")
    else:
        raw = quote(target, safe="")
    params: List[str] = []
    if request.search is not None:
        text = f'"{request.search.query}"' if request.search.exact_phrase else request.search.query
        params.append("search=" + quote(text, safe=""))
    if request.page is not None:
        params.append(f"page={request.page}")
    if request.rect is not None:
        params.append("rect=(" + ",".join(_num(v) for v in request.rect) + ")")
    if request.point is not None:
        params.append("point=(" + ",".join(_num(v) for v in request.point) + ")")
    url = f"{SCHEME}{request.mode.value}/{raw}"
    return url + ("?" + "&".join(params) if params else "")


def _is_uuid(value: str) -> bool:
    try:
        uuid.UUID(value)
    except ValueError:
        return False
    return True


def classify_target(raw: str, mode: Mode = Mode.READER, store=None) -> TargetKind:
    """
    Decide what a target names. Syntax decides first; anything left is looked
    up in the store, session ids before documents.
    """
    if raw.startswith("/"):
        return TargetKind.PATH
    if raw.startswith(APP_ID_PREFIX):
        return TargetKind.APP_ID
    if mode == Mode.REFINDER:
        # a stored document answers only when no session carries the name
        if store is not None and is_content_hash(raw) and not store.session_events(raw):
            if store.find_element(raw.lower()) is not None:
                return TargetKind.CONTENT_HASH
        return TargetKind.SESSION_ID
    if is_content_hash(raw):
        return TargetKind.CONTENT_HASH
    if _is_uuid(raw):
        return TargetKind.SESSION_ID
    if store is not None:
        if store.session_events(raw):
            return TargetKind.SESSION_ID
        if store.find_element(raw.lower()) is not None:
            return TargetKind.CONTENT_HASH
    raise NotFoundError(f"cannot resolve target {raw!r}")


@dataclass(frozen=True)
class FocusInstruction:
    """Where to scroll: a rect, a point, or the top of a page."""
    kind: str
    page: int
    values: Tuple[float, ...] = ()


@dataclass
class DispatchOutcome:
    request: PeyeRequest
    target_kind: TargetKind
    document: Optional[ScientificDocument] = None
    session_id: Optional[str] = None
    events: List[Event] = field(default_factory=list)
    focus: Optional[FocusInstruction] = None
    registered: bool = False

    def to_dict(self) -> Dict:
        data: Dict = {
            "request": self.request.to_dict(),
            "targetKind": self.target_kind.value,
            "registered": self.registered,
            "sessionId": self.session_id,
            "eventIds": [e.id for e in self.events],
        }
        if self.document is not None:
            data["document"] = {"id": self.document.id, "appId": self.document.app_id,
                                "title": self.document.title, "uri": self.document.uri}
        if self.focus is not None:
            data["focus"] = {"kind": self.focus.kind, "page": self.focus.page, "values": list(self.focus.values)}
        return data


def _document_for_events(store, events: List[Event]) -> Optional[ScientificDocument]:
    for event in events:
        if event.targetted_resource_id is not None:
            try:
                return store.get_element(event.targetted_resource_id)
            except NotFoundError:
                continue
    return None


def focus_for(request: PeyeRequest) -> Optional[FocusInstruction]:
    if request.page is None:
        return None
    if request.rect is not None:
        return FocusInstruction("rect", request.page, request.rect)
    if request.point is not None:
        return FocusInstruction("point", request.page, request.point)
    return FocusInstruction("pageTop", request.page)


def dispatch(request: PeyeRequest, store) -> DispatchOutcome:
    """
    Resolve a request against the store. Reader mode resolves a document,
    registering unknown files; refinder mode resolves a past session.
    `store` is a DimeStore or a DimeClient.
    """
    kind = classify_target(request.target, request.mode, store)
    outcome = DispatchOutcome(request, kind, focus=focus_for(request))

    if kind == TargetKind.SESSION_ID:
        events = store.session_events(request.target)
        if not events:
            raise NotFoundError(f"no session {request.target}")
        outcome.session_id = request.target
        outcome.events = events
        outcome.document = _document_for_events(store, events)
    elif kind == TargetKind.PATH:
        if not os.path.exists(request.target):
            raise NotFoundError(f"no such file: {request.target}")
        try:
            layout = load_layout(request.target)
        except (OSError, UnicodeDecodeError) as e:
            raise ValidationError(f"cannot read {request.target}: {e}", "target") from None
        document = store.find_element(layout.content_hash)
        if document is None:
            if request.mode != Mode.READER:
                raise NotFoundError(f"{request.target} was never read")
            document = store.post_element(layout.as_element())
            outcome.registered = True
            logger.info("registered %s as element %s", request.target, document.id)
        outcome.document = document
    else:
        content_hash = strip_app_id(request.target) if kind == TargetKind.APP_ID else request.target.lower()
        document = store.find_element(content_hash)
        if document is None:
            raise NotFoundError(f"unknown document {request.target}")
        outcome.document = document

    if request.mode == Mode.REFINDER and kind != TargetKind.SESSION_ID and outcome.document is not None:
        outcome.events = store.events(elemId=str(outcome.document.id))
    return outcome
