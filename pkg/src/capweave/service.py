"""HTTP JSON API over the curation store, plus static hosting for the review UI.

Routes (consumed by the browser UI and scripts):

    GET  /api/items?status=&offset=&limit=     paged item list
    GET  /api/items/next?reviewer=&ttl=        next reviewable item or 204
    POST /api/items/{id}/review                review decision; 409 on version conflict
    GET  /api/items/{id}/frames/{k}            frame image bytes
    GET  /api/export?statuses=approved,edited  bench manifest JSONL
    GET  /api/summary                          counts by status and pre-flag

Auth is an optional shared token: when the service is started with one,
every /api route requires the X-Auth-Token header to match.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.responses import FileResponse, JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .curation import (
    ConflictError,
    CurationStore,
    EXPORT_STATUSES,
    NotFoundError,
    STATUSES,
    ValidationError,
)


class ReviewBody(BaseModel):
    decision: str
    expected_version: int
    actor: str
    edited_caption: str | None = None
    reason: str | None = None


def create_app(
    store: CurationStore,
    frontend_dir: Path | None = None,
    token: str | None = None,
) -> FastAPI:
    app = FastAPI(title="capweave curation service")

    if token:
        @app.middleware("http")
        async def require_token(request: Request, call_next):
            if request.url.path.startswith("/api") and request.headers.get("X-Auth-Token") != token:
                return JSONResponse({"detail": "missing or wrong X-Auth-Token"}, status_code=401)
            return await call_next(request)

    @app.exception_handler(ValidationError)
    async def on_validation(_req, exc: ValidationError):
        return JSONResponse({"detail": str(exc)}, status_code=400)

    @app.exception_handler(NotFoundError)
    async def on_not_found(_req, exc: NotFoundError):
        return JSONResponse({"detail": str(exc)}, status_code=404)

    @app.get("/api/items")
    def list_items(status: str | None = None, offset: int = 0, limit: int = 50):
        if status is not None and status not in STATUSES:
            raise ValidationError(f"unknown status {status!r}")
        items, total = store.list_items(status=status, offset=offset, limit=limit)
        return {"total": total, "items": [i.to_dict() for i in items]}

    @app.get("/api/items/next")
    def next_item(reviewer: str, ttl: float = 300.0):
        item = store.next_item(reviewer, lock_ttl_s=ttl)
        if item is None:
            return Response(status_code=204)
        return item.to_dict()

    @app.get("/api/items/{item_id}")
    def get_item(item_id: str):
        return store.get(item_id).to_dict()

    @app.post("/api/items/{item_id}/review")
    def review(item_id: str, body: ReviewBody):
        try:
            item = store.submit_review(
                item_id,
                decision=body.decision,
                edited_caption=body.edited_caption,
                reason=body.reason,
                expected_version=body.expected_version,
                actor=body.actor,
            )
        except ConflictError as e:
            return JSONResponse(
                {"detail": str(e), "item": e.current.to_dict()}, status_code=409
            )
        return item.to_dict()

    @app.get("/api/items/{item_id}/frames/{k}")
    def frame(item_id: str, k: int):
        item = store.get(item_id)
        if not 0 <= k < len(item.frame_refs):
            raise HTTPException(status_code=404, detail=f"no frame {k} on {item_id}")
        path = Path(item.frame_refs[k])
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"frame file missing: {path.name}")
        media = "image/png" if path.suffix.lower() == ".png" else "image/jpeg"
        return FileResponse(path, media_type=media)

    @app.get("/api/export")
    def export(statuses: str = "approved,edited"):
        wanted = frozenset(s.strip() for s in statuses.split(",") if s.strip()) or EXPORT_STATUSES
        return PlainTextResponse(
            store.export_bench(wanted), media_type="application/x-ndjson"
        )

    @app.get("/api/summary")
    def summary():
        return store.summary()

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="ui")

    return app


def serve(
    store: CurationStore,
    host: str = "127.0.0.1",
    port: int = 8040,
    frontend_dir: Path | None = None,
    token: str | None = None,
) -> None:
    import uvicorn

    app = create_app(store, frontend_dir=frontend_dir, token=token)
    uvicorn.run(app, host=host, port=port, log_level="warning")
