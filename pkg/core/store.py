"""
Personal data store: events and information elements kept in an append-only
JSON-lines log, with in-memory indexes rebuilt from the log on startup.

Each log line is {"op": "put"|"delete", "kind": "event"|"element", "id": N,
"payload": {...}}. Writes are flushed and fsync'ed before returning.
"""

import json
import logging
import os
import shutil
import threading
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from .errors import ConflictError, NotFoundError, ValidationError
from .model import (Event, ScientificDocument, canonical_json, event_from_dict, normalize_type)
from .search import InvertedIndex

logger = logging.getLogger(__name__)


LOG_NAME = "records.jsonl"

EVENT_FILTERS = ("type", "actor", "sessionId", "elemId", "contentHash")
ELEMENT_FILTERS = ("contentHash", "type", "tag")


def _check_filters(filters: Mapping[str, str], allowed: Iterable[str]) -> Dict[str, str]:
    allowed = tuple(allowed)
    for key in filters:
        if key not in allowed:
            raise ValidationError(f"unknown parameter (allowed: {', '.join(allowed)})", key)
    return {k: v for k, v in filters.items() if v is not None}


class DimeStore:
    """Durable store for events and scientific documents."""

    def __init__(self, data_dir: str, fsync: bool = True):
        self.data_dir = os.path.expanduser(data_dir)
        self.log_path = os.path.join(self.data_dir, LOG_NAME)
        self.fsync = fsync
        self._lock = threading.RLock()
        self._reset()
        os.makedirs(self.data_dir, exist_ok=True)
        self._replay()
        self._log = open(self.log_path, "a", encoding="utf-8")

    def _reset(self):
        self._events: Dict[int, Event] = {}
        self._elements: Dict[int, ScientificDocument] = {}
        self._by_hash: Dict[str, int] = {}
        self._event_text = InvertedIndex()
        self._element_text = InvertedIndex()
        self._next_event_id = 1
        self._next_element_id = 1

    # --- log ---------------------------------------------------------------

    def _replay(self):
        if not os.path.exists(self.log_path):
            logger.info("store log created at %s", self.log_path)
            return
        count = 0
        with open(self.log_path, "r", encoding="utf-8") as f:
            lines = f.readlines()
        for number, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                self._apply(record)
                count += 1
            except (ValueError, KeyError) as e:
                if number == len(lines):
                    logger.warning("dropping torn last record in %s: %s", self.log_path, e)
                    with open(self.log_path, "w", encoding="utf-8") as f:
                        f.writelines(lines[:number - 1])
                    break
                raise ValidationError(f"corrupt store log at line {number}: {e}", "log") from None
        logger.info("store recovered %d records (%d events, %d elements)",
                    count, len(self._events), len(self._elements))

    def _apply(self, record: Dict):
        op, kind, record_id = record["op"], record["kind"], int(record["id"])
        if kind == "event":
            if op == "put":
                self._put_event(event_from_dict(record["payload"]))
            else:
                self._drop_event(record_id)
            self._next_event_id = max(self._next_event_id, record_id + 1)
        elif kind == "element":
            if op == "put":
                self._put_element(ScientificDocument.from_dict(record["payload"]))
            else:
                self._drop_element(record_id)
            self._next_element_id = max(self._next_element_id, record_id + 1)
        else:
            raise ValueError(f"unknown record kind {kind!r}")

    def _append(self, op: str, kind: str, record_id: int, payload: Optional[Dict] = None):
        record = {"op": op, "kind": kind, "id": record_id}
        if payload is not None:
            record["payload"] = payload
        self._log.write(canonical_json(record) + "\n")
        self._log.flush()
        if self.fsync:
            os.fsync(self._log.fileno())

    def close(self):
        with self._lock:
            if not self._log.closed:
                self._log.close()

    def wipe(self):
        """Delete the data directory contents and start empty."""
        with self._lock:
            self.close()
            shutil.rmtree(self.data_dir, ignore_errors=True)
            os.makedirs(self.data_dir, exist_ok=True)
            self._reset()
            self._log = open(self.log_path, "a", encoding="utf-8")
            logger.info("store wiped at %s", self.data_dir)

    # --- index maintenance ---------------------------------------------------

    def _put_event(self, event: Event):
        self._events[event.id] = event
        self._event_text.add(event.id, getattr(event, "plain_text_content", ""))

    def _drop_event(self, record_id: int):
        self._events.pop(record_id, None)
        self._event_text.remove(record_id)

    def _put_element(self, element: ScientificDocument):
        self._elements[element.id] = element
        self._by_hash[element.content_hash] = element.id
        self._element_text.add(element.id, element.plain_text_content)

    def _drop_element(self, record_id: int):
        element = self._elements.pop(record_id, None)
        if element is not None:
            self._by_hash.pop(element.content_hash, None)
        self._element_text.remove(record_id)

    # --- elements ----------------------------------------------------------

    def add_element(self, element: ScientificDocument) -> Tuple[ScientificDocument, bool]:
        """
        Upsert by contentHash. A known document keeps its id, gains the new
        tags and takes the latest uri and title. Returns (stored, created).
        """
        with self._lock:
            existing_id = self._by_hash.get(element.content_hash)
            if existing_id is None:
                stored = element.with_id(self._next_element_id)
                self._next_element_id += 1
                created = True
            else:
                current = self._elements[existing_id]
                stored = current.with_tags(element.tags)
                if element.uri or element.title:
                    stored = ScientificDocument(
                        content_hash=stored.content_hash,
                        plain_text_content=stored.plain_text_content,
                        uri=element.uri or stored.uri,
                        title=element.title or stored.title,
                        tags=stored.tags,
                        id=existing_id,
                    )
                created = False
                if stored == current:
                    return current, False
            self._append("put", "element", stored.id, stored.to_dict())
            self._put_element(stored)
            logger.debug("element %d %s", stored.id, "created" if created else "updated")
            return stored, created

    def get_element(self, record_id: int) -> ScientificDocument:
        with self._lock:
            try:
                return self._elements[record_id]
            except KeyError:
                raise NotFoundError(f"no information element {record_id}") from None

    def find_element(self, content_hash: str) -> Optional[ScientificDocument]:
        with self._lock:
            record_id = self._by_hash.get(content_hash)
            return None if record_id is None else self._elements[record_id]

    def delete_element(self, record_id: int):
        with self._lock:
            self.get_element(record_id)
            dependents = sum(1 for e in self._events.values() if e.targetted_resource_id == record_id)
            if dependents:
                raise ConflictError(f"information element {record_id} is referenced by {dependents} events")
            self._append("delete", "element", record_id)
            self._drop_element(record_id)

    def query_elements(self, filters: Mapping[str, str]) -> List[ScientificDocument]:
        """Elements matching every given filter (contentHash, type, tag)."""
        filters = _check_filters(filters, ELEMENT_FILTERS)
        with self._lock:
            return [e for e in self._elements.values() if self._element_matches(e, filters)]

    def _element_matches(self, element: ScientificDocument, filters: Mapping[str, str]) -> bool:
        if "contentHash" in filters and element.content_hash != filters["contentHash"]:
            return False
        if "type" in filters and normalize_type(filters["type"]) != element.type_uri:
            return False
        if "tag" in filters and filters["tag"] not in element.tag_texts:
            return False
        return True

    def search_elements(self, query: str, filters: Mapping[str, str] = None) -> List[ScientificDocument]:
        """Elements whose text matches the query, in insertion order."""
        filters = _check_filters(filters or {}, ELEMENT_FILTERS)
        if not query or not query.strip():
            raise ValidationError("must not be empty", "query")
        with self._lock:
            hits = self._element_text.search(query)
            return [e for i, e in self._elements.items() if i in hits and self._element_matches(e, filters)]

    # --- events ------------------------------------------------------------

    def add_event(self, event: Event) -> Event:
        """Append an event; it must reference a stored element."""
        with self._lock:
            target = event.targetted_resource_id
            if target is None or target not in self._elements:
                raise ValidationError(f"unknown information element {target!r}", "targettedResource")
            stored = event.with_id(self._next_event_id)
            self._next_event_id += 1
            self._append("put", "event", stored.id, stored.to_dict())
            self._put_event(stored)
            return stored

    def get_event(self, record_id: int) -> Event:
        with self._lock:
            try:
                return self._events[record_id]
            except KeyError:
                raise NotFoundError(f"no event {record_id}") from None

    def delete_event(self, record_id: int):
        with self._lock:
            self.get_event(record_id)
            self._append("delete", "event", record_id)
            self._drop_event(record_id)

    def query_events(self, filters: Mapping[str, str]) -> List[Event]:
        """Events matching every given filter (type, actor, sessionId, elemId, contentHash)."""
        filters = _check_filters(filters, EVENT_FILTERS)
        with self._lock:
            return [e for e in self._events.values() if self._event_matches(e, filters)]

    def _event_matches(self, event: Event, filters: Mapping[str, str]) -> bool:
        if "type" in filters and normalize_type(filters["type"]) != event.type_uri:
            return False
        if "actor" in filters and event.actor != filters["actor"]:
            return False
        if "sessionId" in filters and event.session_id != filters["sessionId"]:
            return False
        if "elemId" in filters:
            try:
                elem_id = int(filters["elemId"])
            except (TypeError, ValueError):
                raise ValidationError("expected an integer", "elemId") from None
            if event.targetted_resource_id != elem_id:
                return False
        if "contentHash" in filters:
            element_id = self._by_hash.get(filters["contentHash"])
            if element_id is None or event.targetted_resource_id != element_id:
                return False
        return True

    def search_events(self, query: str, filters: Mapping[str, str] = None) -> List[Event]:
        """Events whose visible text matches the query, in insertion order."""
        filters = _check_filters(filters or {}, EVENT_FILTERS)
        if not query or not query.strip():
            raise ValidationError("must not be empty", "query")
        with self._lock:
            hits = self._event_text.search(query)
            return [e for i, e in self._events.items() if i in hits and self._event_matches(e, filters)]

    def session_events(self, session_id: str) -> List[Event]:
        return self.query_events({"sessionId": session_id})

    def counts(self) -> Dict[str, int]:
        with self._lock:
            return {"events": len(self._events), "elements": len(self._elements)}

    # the same calls DimeClient offers, so callers can take either

    def post_element(self, element: ScientificDocument) -> ScientificDocument:
        return self.add_element(element)[0]

    def post_event(self, event: Event) -> Event:
        return self.add_event(event)

    def elements(self, **filters) -> List[ScientificDocument]:
        return self.query_elements(filters)

    def events(self, **filters) -> List[Event]:
        return self.query_events(filters)
