"""HTTP service exposing editing, mapping preview, and backend discovery.

A thin adapter over the engine: request bodies are JSON with base64 PNG
payloads, responses echo the seed so any edit can be reproduced exactly.
Edits run in worker threads; shared state (backend registry, schedules) is
read-only after startup, so concurrent requests cannot interleave.
"""

from __future__ import annotations

import asyncio
import base64
import secrets

from fastapi import Body, FastAPI, Request
from fastapi.responses import JSONResponse

from .bench import textured_square_image
from .core import (
    DegenerateGeometryError,
    EmptyRegionError,
    RegionDragError,
    ValidationError,
)
from .backends import BackendError
from .imageio import decode_png_bytes, encode_png_bytes
from .interface import (
    backend_names,
    map_preview,
    merged_config,
    parse_region_pairs,
    resolve_backend,
)
from .pipeline import PipelineError, run_edit

FIXTURE_IMAGES = {
    "square64": textured_square_image,
}


def _error(status: int, message: str, **extra) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message, **extra})


def create_app(default_backend: str | None = None,
               max_request_bytes: int = 16 * 1024 * 1024,
               request_timeout_s: float = 60.0,
               static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="regiondrag", version="0.1.0")

    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"],
    )

    @app.middleware("http")
    async def limit_body_size(request: Request, call_next):
        length = request.headers.get("content-length")
        if length is not None and int(length) > max_request_bytes:
            return _error(413, f"request exceeds {max_request_bytes} bytes")
        return await call_next(request)

    @app.get("/v1/health")
    async def health():
        return {"status": "ok"}

    @app.get("/v1/backends")
    async def backends():
        resolved = resolve_backend(default_backend)
        return {"backends": backend_names(), "default": resolved.name}

    @app.post("/v1/map")
    async def map_regions(payload: dict = Body(...)):
        try:
            pairs = parse_region_pairs(payload.get("regions"))
            scale = int(payload.get("latent_scale", 1))
            return map_preview(pairs, scale)
        except (DegenerateGeometryError, EmptyRegionError) as exc:
            return _error(422, str(exc))
        except (ValidationError, ValueError) as exc:
            return _error(400, str(exc))

    @app.post("/v1/edit")
    async def edit(payload: dict = Body(...)):
        try:
            if "image_b64" in payload:
                image = decode_png_bytes(base64.b64decode(payload["image_b64"]))
            elif "fixture" in payload:
                name = payload["fixture"]
                if name not in FIXTURE_IMAGES:
                    raise ValidationError(
                        f"unknown fixture {name!r}; available: {sorted(FIXTURE_IMAGES)}"
                    )
                image = FIXTURE_IMAGES[name]()
            else:
                raise ValidationError("request needs 'image_b64' or 'fixture'")

            pairs = parse_region_pairs(payload.get("regions"))
            overrides = dict(payload.get("config") or {})
            if "seed" in payload:
                overrides["seed"] = payload["seed"]
            if "seed" not in overrides or overrides["seed"] is None:
                overrides["seed"] = secrets.randbits(31)
            cfg = merged_config(overrides)
            backend = resolve_backend(payload.get("backend") or default_backend)
            prompt = str(payload.get("prompt", ""))
        except (DegenerateGeometryError, EmptyRegionError) as exc:
            return _error(422, str(exc))
        except (ValidationError, BackendError, ValueError) as exc:
            return _error(400, str(exc))

        loop = asyncio.get_event_loop()
        try:
            result = await asyncio.wait_for(
                loop.run_in_executor(None, lambda: run_edit(image, pairs, prompt, cfg, backend)),
                timeout=request_timeout_s,
            )
        except asyncio.TimeoutError:
            return _error(500, f"edit exceeded {request_timeout_s}s", stage="timeout")
        except (DegenerateGeometryError, EmptyRegionError) as exc:
            return _error(422, str(exc))
        except ValidationError as exc:
            return _error(400, str(exc))
        except PipelineError as exc:
            return _error(500, str(exc), stage=exc.stage, timestep=exc.timestep)
        except (BackendError, RegionDragError) as exc:
            return _error(500, str(exc), stage="backend")

        session = result.session
        return {
            "image_b64": base64.b64encode(encode_png_bytes(result.image)).decode(),
            "timings": session.timing_report(),
            "mapped_point_count": len(session.mapped_points),
            "warnings": session.warnings,
            "seed": cfg.seed,
            "backend": session.backend_name,
        }

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        # mounted last so /v1/* keeps precedence
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
