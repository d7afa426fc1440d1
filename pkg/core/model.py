"""
Shared data model: events, information elements, rects, gaze arrays, tags
and the content-derived identities that tie them together.

All types are frozen dataclasses; invariants are checked on construction so
an invalid value cannot exist. JSON field names follow the DiMe wire format.
"""

import hashlib
import json
import math
import re
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

from .errors import ValidationError


ONTOLOGY_PREFIX = "http://www.hiit.fi/ontologies/dime/"
READING_EVENT_TYPE = ONTOLOGY_PREFIX + "#ReadingEvent"
SUMMARY_READING_EVENT_TYPE = ONTOLOGY_PREFIX + "#SummaryReadingEvent"
SCIENTIFIC_DOCUMENT_TYPE = ONTOLOGY_PREFIX + "#ScientificDocument"

ACTOR = "PeyeDF"
APP_ID_PREFIX = "PeyeDF_"

_HASH_RE = re.compile(r"[0-9a-f]{64}")


class ReadingClass(IntEnum):
    """Importance of a rect; viewport is fixed at 10."""
    UNKNOWN = 0
    VIEWPORT = 10
    READ = 20
    IMPORTANT = 25
    CRITICAL = 30


class ClassSource(IntEnum):
    """Where a rect came from; viewport is fixed at 1."""
    UNKNOWN = 0
    VIEWPORT = 1
    CLICK = 2
    EYE = 3
    MANUAL_SELECTION = 4


# Classes that a user assigns by hand
ANNOTATION_CLASSES = (ReadingClass.IMPORTANT, ReadingClass.CRITICAL)


def normalize_type(value: str) -> str:
    """Expand short type names ("ReadingEvent", "#ReadingEvent") to full URIs."""
    if value.startswith(ONTOLOGY_PREFIX):
        return value
    name = value.lstrip("#")
    return f"{ONTOLOGY_PREFIX}#{name}"


# --- identities -------------------------------------------------------------

def compute_content_hash(text: str) -> str:
    """SHA-256 of the UTF-8 plain text, lowercase hex."""
    return hashlib.sha256(text.encode("utf-8", "surrogatepass")).hexdigest()


def is_content_hash(value: Any) -> bool:
    return isinstance(value, str) and _HASH_RE.fullmatch(value) is not None


def make_app_id(content_hash: str) -> str:
    """Prefix a content hash with the application marker."""
    if not is_content_hash(content_hash):
        raise ValidationError("not a 64-digit lowercase hex digest", "contentHash")
    return APP_ID_PREFIX + content_hash


def strip_app_id(app_id: str) -> str:
    """Inverse of make_app_id."""
    if not app_id.startswith(APP_ID_PREFIX) or not is_content_hash(app_id[len(APP_ID_PREFIX):]):
        raise ValidationError(f"not an appId: {app_id!r}", "appId")
    return app_id[len(APP_ID_PREFIX):]


# --- field checks -----------------------------------------------------------

def _check_number(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError("expected a number", name)
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError("must be finite", name)
    return value


def _check_int(value: Any, name: str, minimum: Optional[int] = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError("expected an integer", name)
    if minimum is not None and value < minimum:
        raise ValidationError(f"must be >= {minimum}", name)
    return value


def _check_str(value: Any, name: str, allow_empty: bool = True) -> str:
    if not isinstance(value, str):
        raise ValidationError("expected a string", name)
    if not allow_empty and not value:
        raise ValidationError("must not be empty", name)
    return value


def _check_enum(enum_cls, value: Any, name: str):
    if isinstance(value, enum_cls):
        return value
    code = _check_int(value, name)
    try:
        return enum_cls(code)
    except ValueError:
        raise ValidationError(f"unknown code {code}", name) from None


# --- page-space values ------------------------------------------------------

@dataclass(frozen=True)
class Rect:
    """A classified rectangle in page space (origin at page bottom-left, points)."""
    x: float
    y: float
    width: float
    height: float
    page_index: int
    reading_class: ReadingClass = ReadingClass.UNKNOWN
    class_source: ClassSource = ClassSource.UNKNOWN

    def __post_init__(self):
        for name in ("x", "y", "width", "height"):
            object.__setattr__(self, name, _check_number(getattr(self, name), name))
        if self.width < 0 or self.height < 0:
            raise ValidationError("width and height must be >= 0", "size")
        _check_int(self.page_index, "pageIndex", minimum=0)
        object.__setattr__(self, "reading_class", _check_enum(ReadingClass, self.reading_class, "readingClass"))
        object.__setattr__(self, "class_source", _check_enum(ClassSource, self.class_source, "classSource"))

    @property
    def right(self) -> float:
        return self.x + self.width

    @property
    def top(self) -> float:
        return self.y + self.height

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Tuple[float, float]:
        return self.x + self.width / 2.0, self.y + self.height / 2.0

    def contains_point(self, x: float, y: float) -> bool:
        """Inclusive containment test."""
        return self.x <= x <= self.right and self.y <= y <= self.top

    def contains_rect(self, other: "Rect", eps: float = 1e-9) -> bool:
        return (other.x >= self.x - eps and other.right <= self.right + eps
                and other.y >= self.y - eps and other.top <= self.top + eps)

    def overlaps(self, other: "Rect") -> bool:
        """True when the two rects share a region of positive area on the same page."""
        return (self.page_index == other.page_index
                and self.x < other.right and other.x < self.right
                and self.y < other.top and other.y < self.top)

    def intersection(self, other: "Rect") -> Optional["Rect"]:
        if not self.overlaps(other):
            return None
        x0, y0 = max(self.x, other.x), max(self.y, other.y)
        x1, y1 = min(self.right, other.right), min(self.top, other.top)
        return replace(self, x=x0, y=y0, width=x1 - x0, height=y1 - y0)

    def union(self, other: "Rect") -> "Rect":
        """Bounding box of both rects, keeping this rect's classification."""
        x0, y0 = min(self.x, other.x), min(self.y, other.y)
        x1, y1 = max(self.right, other.right), max(self.top, other.top)
        return replace(self, x=x0, y=y0, width=x1 - x0, height=y1 - y0)

    def classified(self, reading_class: ReadingClass, class_source: ClassSource) -> "Rect":
        return replace(self, reading_class=reading_class, class_source=class_source)

    def to_dict(self) -> Dict:
        return {
            "origin": {"x": self.x, "y": self.y},
            "size": {"width": self.width, "height": self.height},
            "pageIndex": self.page_index,
            "readingClass": int(self.reading_class),
            "classSource": int(self.class_source),
        }

    @staticmethod
    def from_dict(data: Any) -> "Rect":
        d = _as_dict(data, "rect")
        origin = _as_dict(_req(d, "origin"), "origin")
        size = _as_dict(_req(d, "size"), "size")
        return Rect(
            x=_req(origin, "x"),
            y=_req(origin, "y"),
            width=_req(size, "width"),
            height=_req(size, "height"),
            page_index=_req(d, "pageIndex"),
            reading_class=d.get("readingClass", 0),
            class_source=d.get("classSource", 0),
        )


@dataclass(frozen=True)
class PageEyeData:
    """In-order fixation arrays for one page (page-space points, milliseconds)."""
    page_index: int
    xs: Tuple[float, ...] = ()
    ys: Tuple[float, ...] = ()
    durations: Tuple[float, ...] = ()
    pupil_sizes: Tuple[float, ...] = ()
    start_times: Tuple[float, ...] = ()

    def __post_init__(self):
        _check_int(self.page_index, "pageIndex", minimum=0)
        lengths = set()
        for name, key in (("xs", "Xs"), ("ys", "Ys"), ("durations", "durations"),
                          ("pupil_sizes", "pupilSizes"), ("start_times", "startTimes")):
            values = getattr(self, name)
            if isinstance(values, (str, bytes)) or not hasattr(values, "__iter__"):
                raise ValidationError("expected an array", key)
            checked = tuple(_check_number(v, key) for v in values)
            object.__setattr__(self, name, checked)
            lengths.add(len(checked))
        if len(lengths) > 1:
            raise ValidationError("all arrays must have equal length", "pageEyeData")
        if any(b < a for a, b in zip(self.start_times, self.start_times[1:])):
            raise ValidationError("fixations must be in chronological order", "startTimes")
        if any(d < 0 for d in self.durations):
            raise ValidationError("durations must be >= 0", "durations")

    def __len__(self) -> int:
        return len(self.xs)

    def to_dict(self) -> Dict:
        return {
            "pageIndex": self.page_index,
            "Xs": list(self.xs),
            "Ys": list(self.ys),
            "durations": list(self.durations),
            "pupilSizes": list(self.pupil_sizes),
            "startTimes": list(self.start_times),
        }

    @staticmethod
    def from_dict(data: Any) -> "PageEyeData":
        d = _as_dict(data, "pageEyeData")
        return PageEyeData(
            page_index=_req(d, "pageIndex"),
            xs=_as_list(_req(d, "Xs"), "Xs"),
            ys=_as_list(_req(d, "Ys"), "Ys"),
            durations=_as_list(_req(d, "durations"), "durations"),
            pupil_sizes=_as_list(_req(d, "pupilSizes"), "pupilSizes"),
            start_times=_as_list(_req(d, "startTimes"), "startTimes"),
        )


@dataclass(frozen=True)
class TagAnchor:
    """Where a tag is attached: page, enclosing rect and the selected text."""
    page_index: int
    rect: Rect
    selected_text: str = ""

    def __post_init__(self):
        _check_int(self.page_index, "pageIndex", minimum=0)
        if not isinstance(self.rect, Rect):
            raise ValidationError("expected a rect", "rect")
        if self.rect.page_index != self.page_index:
            raise ValidationError("anchor rect must lie on the anchor page", "rect")
        _check_str(self.selected_text, "selectedText")


@dataclass(frozen=True)
class Tag:
    """A short user string, optionally anchored to a range of text."""
    text: str
    anchor: Optional[TagAnchor] = None

    def __post_init__(self):
        _check_str(self.text, "text", allow_empty=False)
        if self.anchor is not None and not isinstance(self.anchor, TagAnchor):
            raise ValidationError("expected a tag anchor", "anchor")

    def to_dict(self) -> Dict:
        data: Dict[str, Any] = {"text": self.text}
        if self.anchor is not None:
            data["anchor"] = {
                "pageIndex": self.anchor.page_index,
                "rect": self.anchor.rect.to_dict(),
                "selectedText": self.anchor.selected_text,
            }
        return data

    @staticmethod
    def from_dict(data: Any) -> "Tag":
        d = _as_dict(data, "tag")
        anchor = None
        if d.get("anchor") is not None:
            a = _as_dict(d["anchor"], "anchor")
            anchor = TagAnchor(
                page_index=_req(a, "pageIndex"),
                rect=Rect.from_dict(_req(a, "rect")),
                selected_text=a.get("selectedText", ""),
            )
        return Tag(text=_req(d, "text"), anchor=anchor)


@dataclass(frozen=True)
class SearchRecord:
    """One search performed during a session, with its hit statistics."""
    query: str
    hits: int
    pages: Tuple[int, ...] = ()

    def __post_init__(self):
        _check_str(self.query, "query")
        _check_int(self.hits, "hits", minimum=0)
        object.__setattr__(self, "pages", tuple(_check_int(p, "pages", 0) for p in self.pages))

    def to_dict(self) -> Dict:
        return {"query": self.query, "hits": self.hits, "pages": list(self.pages)}

    @staticmethod
    def from_dict(data: Any) -> "SearchRecord":
        d = _as_dict(data, "searchQueries")
        return SearchRecord(query=_req(d, "query"), hits=_req(d, "hits"),
                            pages=tuple(_as_list(d.get("pages", []), "pages")))


# --- events and elements ----------------------------------------------------

@dataclass(frozen=True)
class ReadingEvent:
    """One snapshot of an uninterrupted reading period."""
    session_id: str
    start_time: int
    end_time: int
    page_numbers: Tuple[int, ...] = ()
    page_labels: Tuple[str, ...] = ()
    page_rects: Tuple[Rect, ...] = ()
    plain_text_content: str = ""
    page_eye_data: Tuple[PageEyeData, ...] = ()
    targetted_resource_id: Optional[int] = None
    actor: str = ACTOR
    id: Optional[int] = None

    type_uri = READING_EVENT_TYPE

    def __post_init__(self):
        _check_identity(self)
        numbers = tuple(_check_int(p, "pageNumbers", minimum=0) for p in self.page_numbers)
        labels = tuple(_check_str(label, "pageLabels") for label in self.page_labels)
        if len(numbers) != len(labels):
            raise ValidationError("pageNumbers and pageLabels must have equal length", "pageLabels")
        object.__setattr__(self, "page_numbers", numbers)
        object.__setattr__(self, "page_labels", labels)
        rects = tuple(self.page_rects)
        for rect in rects:
            if not isinstance(rect, Rect):
                raise ValidationError("expected rects", "pageRects")
            if rect.page_index not in numbers:
                raise ValidationError(f"rect on page {rect.page_index} not in pageNumbers", "pageRects")
        object.__setattr__(self, "page_rects", rects)
        _check_str(self.plain_text_content, "plainTextContent")
        eye = tuple(self.page_eye_data)
        if any(not isinstance(e, PageEyeData) for e in eye):
            raise ValidationError("expected page eye data", "pageEyeData")
        object.__setattr__(self, "page_eye_data", eye)

    @property
    def duration_ms(self) -> int:
        return self.end_time - self.start_time

    def with_id(self, record_id: int) -> "ReadingEvent":
        return replace(self, id=record_id)

    def to_dict(self) -> Dict:
        data = _identity_dict(self)
        data.update({
            "pageNumbers": list(self.page_numbers),
            "pageLabels": list(self.page_labels),
            "pageRects": [r.to_dict() for r in self.page_rects],
            "plainTextContent": self.plain_text_content,
            "pageEyeData": [e.to_dict() for e in self.page_eye_data],
        })
        return data

    @staticmethod
    def from_dict(data: Any) -> "ReadingEvent":
        d = _as_dict(data, "event")
        return ReadingEvent(
            page_numbers=tuple(_as_list(d.get("pageNumbers", []), "pageNumbers")),
            page_labels=tuple(_as_list(d.get("pageLabels", []), "pageLabels")),
            page_rects=tuple(Rect.from_dict(r) for r in _as_list(d.get("pageRects", []), "pageRects")),
            plain_text_content=d.get("plainTextContent", ""),
            page_eye_data=tuple(PageEyeData.from_dict(e) for e in _as_list(d.get("pageEyeData", []), "pageEyeData")),
            **_identity_kwargs(d),
        )


@dataclass(frozen=True)
class SummaryReadingEvent:
    """Closing aggregate of a reading session."""
    session_id: str
    start_time: int
    end_time: int
    search_queries: Tuple[SearchRecord, ...] = ()
    proportions: Mapping[ReadingClass, float] = field(default_factory=dict)
    page_rects: Tuple[Rect, ...] = ()
    targetted_resource_id: Optional[int] = None
    actor: str = ACTOR
    id: Optional[int] = None

    type_uri = SUMMARY_READING_EVENT_TYPE

    def __post_init__(self):
        _check_identity(self)
        queries = tuple(self.search_queries)
        if any(not isinstance(q, SearchRecord) for q in queries):
            raise ValidationError("expected search records", "searchQueries")
        object.__setattr__(self, "search_queries", queries)
        proportions = {}
        for key, value in dict(self.proportions).items():
            reading_class = _check_enum(ReadingClass, key, "proportions")
            value = _check_number(value, "proportions")
            if not 0.0 <= value <= 1.0:
                raise ValidationError("proportions must lie in [0, 1]", "proportions")
            proportions[reading_class] = value
        object.__setattr__(self, "proportions", proportions)
        rects = tuple(self.page_rects)
        if any(not isinstance(r, Rect) for r in rects):
            raise ValidationError("expected rects", "pageRects")
        object.__setattr__(self, "page_rects", rects)

    def with_id(self, record_id: int) -> "SummaryReadingEvent":
        return replace(self, id=record_id)

    def to_dict(self) -> Dict:
        data = _identity_dict(self)
        data.update({
            "searchQueries": [q.to_dict() for q in self.search_queries],
            "proportions": {str(int(k)): v for k, v in sorted(self.proportions.items())},
            "pageRects": [r.to_dict() for r in self.page_rects],
        })
        return data

    @staticmethod
    def from_dict(data: Any) -> "SummaryReadingEvent":
        d = _as_dict(data, "event")
        raw_props = _as_dict(d.get("proportions", {}), "proportions")
        proportions = {}
        for key, value in raw_props.items():
            try:
                code = int(key)
            except ValueError:
                raise ValidationError(f"bad class key {key!r}", "proportions") from None
            proportions[_check_enum(ReadingClass, code, "proportions")] = value
        return SummaryReadingEvent(
            search_queries=tuple(SearchRecord.from_dict(q) for q in _as_list(d.get("searchQueries", []), "searchQueries")),
            proportions=proportions,
            page_rects=tuple(Rect.from_dict(r) for r in _as_list(d.get("pageRects", []), "pageRects")),
            **_identity_kwargs(d),
        )


Event = Union[ReadingEvent, SummaryReadingEvent]


@dataclass(frozen=True)
class ScientificDocument:
    """A document identity: the only InformationElement kind."""
    content_hash: str
    plain_text_content: str
    uri: str = ""
    title: str = ""
    tags: Tuple[Tag, ...] = ()
    app_id: str = ""
    id: Optional[int] = None

    type_uri = SCIENTIFIC_DOCUMENT_TYPE

    def __post_init__(self):
        _check_str(self.plain_text_content, "plainTextContent")
        if not is_content_hash(self.content_hash):
            raise ValidationError("not a 64-digit lowercase hex digest", "contentHash")
        if compute_content_hash(self.plain_text_content) != self.content_hash:
            raise ValidationError("does not match the digest of plainTextContent", "contentHash")
        expected = make_app_id(self.content_hash)
        if not self.app_id:
            object.__setattr__(self, "app_id", expected)
        elif self.app_id != expected:
            raise ValidationError("must be the prefixed contentHash", "appId")
        _check_str(self.uri, "uri")
        _check_str(self.title, "title")
        tags = tuple(self.tags)
        if any(not isinstance(t, Tag) for t in tags):
            raise ValidationError("expected tags", "tags")
        object.__setattr__(self, "tags", tags)
        if self.id is not None:
            _check_int(self.id, "id", minimum=1)

    @staticmethod
    def from_text(text: str, uri: str = "", title: str = "",
                  tags: Tuple[Tag, ...] = ()) -> "ScientificDocument":
        return ScientificDocument(content_hash=compute_content_hash(text), plain_text_content=text,
                                  uri=uri, title=title, tags=tuple(tags))

    @property
    def tag_texts(self) -> List[str]:
        return [t.text for t in self.tags]

    def with_id(self, record_id: int) -> "ScientificDocument":
        return replace(self, id=record_id)

    def with_tags(self, tags) -> "ScientificDocument":
        """Return a copy carrying the union of current and given tags (order kept)."""
        merged = list(self.tags)
        for tag in tags:
            if tag not in merged:
                merged.append(tag)
        return replace(self, tags=tuple(merged))

    def to_dict(self) -> Dict:
        data: Dict[str, Any] = {
            "@type": self.type_uri,
            "contentHash": self.content_hash,
            "appId": self.app_id,
            "uri": self.uri,
            "title": self.title,
            "plainTextContent": self.plain_text_content,
            "tags": [t.to_dict() for t in self.tags],
        }
        if self.id is not None:
            data["id"] = self.id
        return data

    @staticmethod
    def from_dict(data: Any) -> "ScientificDocument":
        d = _as_dict(data, "element")
        declared = d.get("@type", SCIENTIFIC_DOCUMENT_TYPE)
        if not isinstance(declared, str) or normalize_type(declared) != SCIENTIFIC_DOCUMENT_TYPE:
            raise ValidationError(f"unsupported element type {declared!r}", "@type")
        return ScientificDocument(
            content_hash=_req(d, "contentHash"),
            plain_text_content=_req(d, "plainTextContent"),
            uri=d.get("uri", ""),
            title=d.get("title", ""),
            tags=tuple(Tag.from_dict(t) for t in _as_list(d.get("tags", []), "tags")),
            app_id=d.get("appId", ""),
            id=d.get("id"),
        )


# --- shared identity handling ----------------------------------------------

def _check_identity(event) -> None:
    _check_str(event.session_id, "sessionId", allow_empty=False)
    _check_int(event.start_time, "start")
    _check_int(event.end_time, "end")
    if event.end_time < event.start_time:
        raise ValidationError("end must not precede start", "end")
    if event.targetted_resource_id is not None:
        _check_int(event.targetted_resource_id, "targettedResource", minimum=1)
    _check_str(event.actor, "actor", allow_empty=False)
    if event.id is not None:
        _check_int(event.id, "id", minimum=1)


def _identity_dict(event) -> Dict:
    data: Dict[str, Any] = {
        "@type": event.type_uri,
        "sessionId": event.session_id,
        "start": event.start_time,
        "end": event.end_time,
        "actor": event.actor,
    }
    if event.targetted_resource_id is not None:
        data["targettedResource"] = {"id": event.targetted_resource_id}
    if event.id is not None:
        data["id"] = event.id
    return data


def _identity_kwargs(d: Dict) -> Dict:
    target = d.get("targettedResource")
    target_id = None
    if target is not None:
        target_id = _req(_as_dict(target, "targettedResource"), "id")
    return {
        "session_id": _req(d, "sessionId"),
        "start_time": _req(d, "start"),
        "end_time": _req(d, "end"),
        "targetted_resource_id": target_id,
        "actor": d.get("actor", ACTOR),
        "id": d.get("id"),
    }


def _as_dict(value: Any, name: str) -> Dict:
    if not isinstance(value, dict):
        raise ValidationError("expected an object", name)
    return value


def _as_list(value: Any, name: str) -> List:
    if not isinstance(value, list):
        raise ValidationError("expected an array", name)
    return value


def _req(d: Dict, key: str) -> Any:
    if key not in d:
        raise ValidationError("missing required field", key)
    return d[key]


# --- canonical JSON ---------------------------------------------------------

def canonical_json(data: Dict) -> str:
    """Deterministic JSON text: sorted keys, no insignificant whitespace."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def _load_json(data: Union[str, bytes, Dict]) -> Dict:
    if isinstance(data, dict):
        return data
    try:
        loaded = json.loads(data)
    except (ValueError, TypeError, RecursionError) as e:
        raise ValidationError(f"malformed JSON: {e}", "body") from None
    return _as_dict(loaded, "body")


def event_from_dict(data: Dict) -> Event:
    """Build the event subtype named by the "@type" discriminator."""
    declared = _req(data, "@type")
    if not isinstance(declared, str):
        raise ValidationError("expected a string", "@type")
    kind = normalize_type(declared)
    if kind == READING_EVENT_TYPE:
        return ReadingEvent.from_dict(data)
    if kind == SUMMARY_READING_EVENT_TYPE:
        return SummaryReadingEvent.from_dict(data)
    raise ValidationError(f"unsupported event type {declared!r}", "@type")


def serialize_event(event: Event) -> str:
    return canonical_json(event.to_dict())


def deserialize_event(data: Union[str, bytes, Dict]) -> Event:
    """Parse an event; any defect raises ValidationError naming the field."""
    try:
        return event_from_dict(_load_json(data))
    except RecursionError:
        raise ValidationError("document nested too deeply", "body") from None


def serialize_element(element: ScientificDocument) -> str:
    return canonical_json(element.to_dict())


def deserialize_element(data: Union[str, bytes, Dict]) -> ScientificDocument:
    try:
        return ScientificDocument.from_dict(_load_json(data))
    except RecursionError:
        raise ValidationError("document nested too deeply", "body") from None
