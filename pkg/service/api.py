"""
REST API over the data store: the /api/data, /api/eventsearch and
/api/search endpoints, HTTP Basic authentication and error mapping.
"""

import asyncio
import logging
import signal
import threading
from typing import Callable, Dict, Optional, Tuple

from aiohttp import BasicAuth, web

from core.errors import AuthenticationError, ConflictError, NotFoundError, ValidationError
from core.model import canonical_json, deserialize_element, deserialize_event
from core.store import DimeStore

logger = logging.getLogger(__name__)


STORE_KEY = web.AppKey("store", DimeStore)
CREDENTIALS_KEY = web.AppKey("credentials", tuple)
REALM = "dime"


def _json(data, status: int = 200) -> web.Response:
    return web.json_response(data, status=status, dumps=canonical_json)


def _record_id(request: web.Request) -> int:
    raw = request.match_info["id"]
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(f"not an id: {raw!r}", "id") from None


def _params(request: web.Request) -> Dict[str, str]:
    return {key: request.query[key] for key in request.query.keys()}


@web.middleware
async def error_middleware(request: web.Request, handler):
    try:
        return await handler(request)
    except AuthenticationError as e:
        return web.json_response({"error": str(e)}, status=401,
                                 headers={"WWW-Authenticate": f'Basic realm="{REALM}"'})
    except ValidationError as e:
        return _json({"error": str(e), "field": e.field}, status=400)
    except NotFoundError as e:
        return _json({"error": str(e)}, status=404)
    except ConflictError as e:
        return _json({"error": str(e)}, status=409)


@web.middleware
async def auth_middleware(request: web.Request, handler):
    header = request.headers.get("Authorization")
    if not header:
        raise AuthenticationError("credentials required")
    try:
        auth = BasicAuth.decode(header)
    except ValueError:
        raise AuthenticationError("malformed Authorization header") from None
    if (auth.login, auth.password) != request.app[CREDENTIALS_KEY]:
        raise AuthenticationError("bad credentials")
    return await handler(request)


async def handle_ping(request: web.Request) -> web.Response:
    return _json({"ok": True, **request.app[STORE_KEY].counts()})


async def post_event(request: web.Request) -> web.Response:
    event = deserialize_event(await request.read())
    stored = request.app[STORE_KEY].add_event(event)
    return _json(stored.to_dict())


async def post_element(request: web.Request) -> web.Response:
    element = deserialize_element(await request.read())
    stored, _ = request.app[STORE_KEY].add_element(element)
    return _json(stored.to_dict())


async def get_event(request: web.Request) -> web.Response:
    return _json(request.app[STORE_KEY].get_event(_record_id(request)).to_dict())


async def get_element(request: web.Request) -> web.Response:
    return _json(request.app[STORE_KEY].get_element(_record_id(request)).to_dict())


async def delete_event(request: web.Request) -> web.Response:
    request.app[STORE_KEY].delete_event(_record_id(request))
    return web.Response(status=204)


async def delete_element(request: web.Request) -> web.Response:
    request.app[STORE_KEY].delete_element(_record_id(request))
    return web.Response(status=204)


async def list_events(request: web.Request) -> web.Response:
    events = request.app[STORE_KEY].query_events(_params(request))
    return _json([e.to_dict() for e in events])


async def list_elements(request: web.Request) -> web.Response:
    elements = request.app[STORE_KEY].query_elements(_params(request))
    return _json([e.to_dict() for e in elements])


async def event_search(request: web.Request) -> web.Response:
    params = _params(request)
    query = params.pop("query", "")
    events = request.app[STORE_KEY].search_events(query, params)
    return _json([e.to_dict() for e in events])


async def element_search(request: web.Request) -> web.Response:
    params = _params(request)
    query = params.pop("query", "")
    elements = request.app[STORE_KEY].search_elements(query, params)
    return _json([e.to_dict() for e in elements])


def create_app(store: DimeStore, credentials: Tuple[str, str]) -> web.Application:
    app = web.Application(middlewares=[error_middleware, auth_middleware])
    app[STORE_KEY] = store
    app[CREDENTIALS_KEY] = tuple(credentials)
    app.router.add_get("/api/ping", handle_ping)
    app.router.add_post("/api/data/event", post_event)
    app.router.add_get("/api/data/event/{id}", get_event)
    app.router.add_delete("/api/data/event/{id}", delete_event)
    app.router.add_post("/api/data/informationelement", post_element)
    app.router.add_get("/api/data/informationelement/{id}", get_element)
    app.router.add_delete("/api/data/informationelement/{id}", delete_element)
    app.router.add_get("/api/data/events", list_events)
    app.router.add_get("/api/data/informationelements", list_elements)
    app.router.add_get("/api/eventsearch", event_search)
    app.router.add_get("/api/search", element_search)
    return app


async def serve(store: DimeStore, host: str, port: int, credentials: Tuple[str, str],
                stop: asyncio.Event, ready: Optional[Callable[[str], None]] = None):
    """Serve until `stop` is set. Raises OSError when the port is taken."""
    runner = web.AppRunner(create_app(store, credentials))
    await runner.setup()
    try:
        site = web.TCPSite(runner, host, port)
        await site.start()
        bound_port = runner.addresses[0][1]
        url = f"http://{host}:{bound_port}"
        logger.info("store started on %s", url)
        if ready is not None:
            ready(url)
        await stop.wait()
    finally:
        await runner.cleanup()
        logger.info("store stopped")


def run_server(store: DimeStore, host: str, port: int, credentials: Tuple[str, str],
               ready: Optional[Callable[[str], None]] = None):
    """Blocking server with graceful shutdown on SIGINT/SIGTERM."""

    async def main():
        stop = asyncio.Event()
        loop = asyncio.get_running_loop()
        for sig in (signal.SIGINT, signal.SIGTERM):
            try:
                loop.add_signal_handler(sig, stop.set)
            except (NotImplementedError, RuntimeError):
                pass
        await serve(store, host, port, credentials, stop, ready)

    asyncio.run(main())


class BackgroundServer:
    """The store service on a private event loop in a daemon thread."""

    def __init__(self, store: DimeStore, credentials: Tuple[str, str],
                 host: str = "127.0.0.1", port: int = 0):
        self.store = store
        self.credentials = credentials
        self.host = host
        self.port = port
        self.url: Optional[str] = None
        self._loop: Optional[asyncio.AbstractEventLoop] = None
        self._stop: Optional[asyncio.Event] = None
        self._ready = threading.Event()
        self._error: Optional[BaseException] = None
        self._thread = threading.Thread(target=self._run, name="store-server", daemon=True)

    def _run(self):
        async def main():
            self._loop = asyncio.get_running_loop()
            self._stop = asyncio.Event()
            await serve(self.store, self.host, self.port, self.credentials, self._stop, self._on_ready)

        try:
            asyncio.run(main())
        except BaseException as e:
            self._error = e
            self._ready.set()

    def _on_ready(self, url: str):
        self.url = url
        self._ready.set()

    def start(self, timeout: float = 10.0) -> str:
        self._thread.start()
        if not self._ready.wait(timeout):
            raise RuntimeError("store server did not start")
        if self._error is not None:
            raise self._error
        return self.url

    def stop(self, timeout: float = 10.0):
        if self._loop is not None and self._stop is not None:
            self._loop.call_soon_threadsafe(self._stop.set)
        self._thread.join(timeout)

    def __enter__(self) -> "BackgroundServer":
        self.start()
        return self

    def __exit__(self, *exc):
        self.stop()
