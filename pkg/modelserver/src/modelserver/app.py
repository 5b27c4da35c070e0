"""HTTP layer: JSON in, JSON out, wire schemas enforced on both sides.

The HTTP layer itself is concurrent; model serialization lives in the
service's per-model mutexes. Every error body, including the framework's
own 404/405, is ``{"error": <message>}``.
"""

from __future__ import annotations

import json

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from starlette.concurrency import run_in_threadpool
from starlette.exceptions import HTTPException as StarletteHTTPException

from . import __version__
from .config import ServerConfig
from .models import ModelSet, build_model_set
from .schemas import SchemaIndex, find_schema_dir
from .service import InferenceService, ModelFailure, RequestRejected

ENDPOINT_PATHS = {
    "tag": "/v1/tag",
    "generate": "/v1/generate",
    "detect": "/v1/detect",
    "segment": "/v1/segment",
}


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=status)


def create_app(config: ServerConfig, models: ModelSet | None = None) -> FastAPI:
    """Build the application; ``models`` overrides the registry lookup."""
    schemas = SchemaIndex(find_schema_dir(config.schema_dir))
    if models is None:
        models = build_model_set(config.models, config.device)
    service = InferenceService(models, schemas, config.record_dir)

    app = FastAPI(
        title="modelserver",
        version=__version__,
        docs_url=None,
        redoc_url=None,
        openapi_url=None,
    )

    @app.get("/v1/health")
    async def health() -> JSONResponse:
        try:
            return JSONResponse(service.health())
        except ModelFailure as exc:
            return _error(500, str(exc))

    def make_endpoint(method: str):
        async def endpoint(request: Request) -> JSONResponse:
            try:
                payload = json.loads(await request.body())
            except ValueError:
                return _error(400, "request body is not valid JSON")
            try:
                response = await run_in_threadpool(service.handle, method, payload)
            except RequestRejected as exc:
                return _error(400, str(exc))
            except ModelFailure as exc:
                return _error(500, str(exc))
            return JSONResponse(response)

        return endpoint

    for method, path in ENDPOINT_PATHS.items():
        app.add_api_route(path, make_endpoint(method), methods=["POST"])

    @app.exception_handler(StarletteHTTPException)
    async def http_exception(request: Request, exc: StarletteHTTPException):
        return _error(exc.status_code, str(exc.detail))

    @app.exception_handler(Exception)
    async def unhandled_exception(request: Request, exc: Exception):
        return _error(500, f"internal error: {exc}")

    return app
