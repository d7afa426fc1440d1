"""
HTTP client for the store API. Status codes map back to the core errors.
"""

import logging
from typing import Dict, List, Optional, Tuple

import requests

from core.errors import AuthenticationError, ConflictError, NotFoundError, ReadingDataError, ValidationError
from core.model import (Event, ScientificDocument, event_from_dict, serialize_element, serialize_event)

logger = logging.getLogger(__name__)


class DimeClient:
    """Talks to a running store; one requests.Session per client."""

    def __init__(self, base_url: str, credentials: Tuple[str, str], timeout: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.session = requests.Session()
        self.session.auth = tuple(credentials)
        self.session.headers["Content-Type"] = "application/json"

    def close(self):
        self.session.close()

    def __enter__(self) -> "DimeClient":
        return self

    def __exit__(self, *exc):
        self.close()

    def _request(self, method: str, path: str, params: Optional[Dict] = None, data: Optional[str] = None):
        url = f"{self.base_url}{path}"
        try:
            response = self.session.request(method, url, params=params,
                                            data=data.encode("utf-8") if data is not None else None,
                                            timeout=self.timeout)
        except requests.RequestException as e:
            raise ReadingDataError(f"store unreachable at {self.base_url}: {e}") from e
        if response.status_code == 204:
            return None
        try:
            body = response.json()
        except ValueError:
            body = {"error": response.text}
        if response.ok:
            return body
        if not isinstance(body, dict):
            body = {}
        message = body.get("error") or response.reason
        if response.status_code == 400:
            field = body.get("field")
            if field and message.startswith(f"{field}: "):
                message = message[len(field) + 2:]
            raise ValidationError(message, field)
        if response.status_code == 401:
            raise AuthenticationError(message)
        if response.status_code == 404:
            raise NotFoundError(message)
        if response.status_code == 409:
            raise ConflictError(message)
        raise ReadingDataError(f"{method} {path}: HTTP {response.status_code}: {message}")

    def ping(self) -> Dict:
        return self._request("GET", "/api/ping")

    # elements

    def post_element(self, element: ScientificDocument) -> ScientificDocument:
        data = self._request("POST", "/api/data/informationelement", data=serialize_element(element))
        return ScientificDocument.from_dict(data)

    def get_element(self, record_id: int) -> ScientificDocument:
        return ScientificDocument.from_dict(self._request("GET", f"/api/data/informationelement/{record_id}"))

    def delete_element(self, record_id: int):
        self._request("DELETE", f"/api/data/informationelement/{record_id}")

    def elements(self, **filters) -> List[ScientificDocument]:
        return [ScientificDocument.from_dict(d)
                for d in self._request("GET", "/api/data/informationelements", params=filters)]

    def find_element(self, content_hash: str) -> Optional[ScientificDocument]:
        found = self.elements(contentHash=content_hash)
        return found[0] if found else None

    def search(self, query: str, **filters) -> List[ScientificDocument]:
        return [ScientificDocument.from_dict(d)
                for d in self._request("GET", "/api/search", params={"query": query, **filters})]

    # events

    def post_event(self, event: Event) -> Event:
        return event_from_dict(self._request("POST", "/api/data/event", data=serialize_event(event)))

    def get_event(self, record_id: int) -> Event:
        return event_from_dict(self._request("GET", f"/api/data/event/{record_id}"))

    def delete_event(self, record_id: int):
        self._request("DELETE", f"/api/data/event/{record_id}")

    def events(self, **filters) -> List[Event]:
        return [event_from_dict(d) for d in self._request("GET", "/api/data/events", params=filters)]

    def event_search(self, query: str, **filters) -> List[Event]:
        return [event_from_dict(d) for d in self._request("GET", "/api/eventsearch", params={"query": query, **filters})]

    def session_events(self, session_id: str) -> List[Event]:
        return self.events(sessionId=session_id)
