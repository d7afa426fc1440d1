import asyncio

import aiohttp
import pytest
from aiohttp.test_utils import TestClient, TestServer

from core.errors import AuthenticationError, ConflictError, NotFoundError, ValidationError
from core.model import ReadingEvent, Tag, serialize_element, serialize_event
from service.api import create_app
from service.client import DimeClient

from .conftest import CREDENTIALS

AUTH = aiohttp.BasicAuth(*CREDENTIALS)


def run_with_client(store, scenario):
    async def main():
        async with TestClient(TestServer(create_app(store, CREDENTIALS))) as client:
            return await scenario(client)

    return asyncio.run(main())


def test_requests_need_credentials(store):
    async def scenario(client):
        anonymous = await client.get("/api/ping")
        wrong = await client.get("/api/ping", auth=aiohttp.BasicAuth("Test1", "nope"))
        ok = await client.get("/api/ping", auth=AUTH)
        return anonymous.status, anonymous.headers.get("WWW-Authenticate"), wrong.status, ok.status, await ok.json()

    anonymous, challenge, wrong, ok, body = run_with_client(store, scenario)
    assert (anonymous, wrong, ok) == (401, 401, 200)
    assert challenge.startswith("Basic")
    assert body == {"ok": True, "events": 0, "elements": 0}


def test_post_and_query(store, layout):
    async def scenario(client):
        element = await client.post("/api/data/informationelement", data=serialize_element(layout.as_element()),
                                    auth=AUTH)
        doc = await element.json()
        event = ReadingEvent("s-9", 0, 100, plain_text_content="gaze words", targetted_resource_id=doc["id"])
        posted = await client.post("/api/data/event", data=serialize_event(event), auth=AUTH)
        listed = await client.get("/api/data/events", params={"sessionId": "s-9", "type": "#ReadingEvent"},
                                  auth=AUTH)
        found = await client.get("/api/eventsearch", params={"query": "gaze"}, auth=AUTH)
        single = await client.get("/api/data/informationelement/%d" % doc["id"], auth=AUTH)
        return doc, await posted.json(), await listed.json(), await found.json(), single.status

    doc, posted, listed, found, single = run_with_client(store, scenario)
    assert doc["id"] == 1 and doc["appId"] == "PeyeDF_" + layout.content_hash
    assert posted["id"] == 1
    assert [e["id"] for e in listed] == [1]
    assert [e["id"] for e in found] == [1]
    assert single == 200


def test_error_statuses(store, layout):
    async def scenario(client):
        bad_json = await client.post("/api/data/event", data="{", auth=AUTH)
        no_target = await client.post("/api/data/event", data=serialize_event(ReadingEvent("s", 0, 1)), auth=AUTH)
        missing = await client.get("/api/data/event/42", auth=AUTH)
        bad_id = await client.get("/api/data/event/abc", auth=AUTH)
        bad_filter = await client.get("/api/data/events", params={"colour": "red"}, auth=AUTH)
        return (bad_json.status, await bad_json.json(), no_target.status, missing.status, bad_id.status,
                bad_filter.status)

    bad_json, body, no_target, missing, bad_id, bad_filter = run_with_client(store, scenario)
    assert bad_json == 400 and body["field"] == "body"
    assert (no_target, missing, bad_id, bad_filter) == (400, 404, 400, 400)


def test_delete_conflict(store, layout):
    doc = store.post_element(layout.as_element())
    store.add_event(ReadingEvent("s", 0, 1, targetted_resource_id=doc.id))

    async def scenario(client):
        conflict = await client.delete(f"/api/data/informationelement/{doc.id}", auth=AUTH)
        gone = await client.delete("/api/data/event/1", auth=AUTH)
        deleted = await client.delete(f"/api/data/informationelement/{doc.id}", auth=AUTH)
        return conflict.status, gone.status, deleted.status

    assert run_with_client(store, scenario) == (409, 204, 204)


# --- client against a live server ----------------------------------------------

def test_client_round_trip(server, layout):
    with DimeClient(server.url, CREDENTIALS) as client:
        assert client.ping()["ok"] is True
        doc = client.post_element(layout.as_element(tags=[Tag("first")]))
        doc = client.post_element(layout.as_element(tags=[Tag("second")]))
        assert doc.tag_texts == ["first", "second"]
        assert client.find_element(layout.content_hash) == doc
        assert client.search("refinding") == [doc]
        event = client.post_event(ReadingEvent("s-1", 5, 10, plain_text_content="hello", targetted_resource_id=doc.id))
        assert client.get_event(event.id) == event
        assert client.session_events("s-1") == [event]
        assert client.event_search("hello") == [event]
        assert client.events(type="ReadingEvent", elemId=str(doc.id)) == [event]
        with pytest.raises(ConflictError):
            client.delete_element(doc.id)
        client.delete_event(event.id)
        with pytest.raises(NotFoundError):
            client.get_event(event.id)


def test_client_maps_errors(server):
    with DimeClient(server.url, ("Test1", "wrong")) as client:
        with pytest.raises(AuthenticationError):
            client.ping()
    with DimeClient(server.url, CREDENTIALS) as client:
        with pytest.raises(ValidationError) as info:
            client.post_event(ReadingEvent("s", 0, 1, targetted_resource_id=5))
        assert info.value.field == "targettedResource"
        with pytest.raises(ValidationError):
            client.events(colour="red")
