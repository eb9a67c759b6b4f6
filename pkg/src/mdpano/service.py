"""Pose-in, frame-out HTTP service around a loaded shell panorama.

Endpoints:
  GET  /health  liveness probe; never waits on rendering.
  GET  /meta    panorama dimensions, shell radii, recommended motion bound.
  POST /frame   render a posed frame as PNG, tagged with its frame id.

Frame ids must increase monotonically: a request whose id is at or below
the latest rendered one is dropped with 409 instead of rendered again, so
every id renders at most once and delivered ids are strictly increasing.
"""

from dataclasses import dataclass
import math
import threading
from typing import Literal, Optional

import numpy as np
from fastapi import FastAPI
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, Field

from .geometry import Extrinsics, Intrinsics, PanoMapping, quaternion_to_rotation
from .image_io import encode_png
from .mdp import Mdp
from .renderer import SoftZConfig, TargetCamera, render

__all__ = ["FrameLimits", "PoseRequest", "motion_bound", "create_app"]


@dataclass(frozen=True)
class FrameLimits:
    """Largest frame the server will render."""

    max_width: int = 1920
    max_height: int = 1080


class PoseRequest(BaseModel):
    """One frame request: where to stand, where to look, what to render.

    ``orientation`` is the camera-to-world unit quaternion (w, x, y, z);
    identity means the panorama's own frame. ``frame_id`` must increase
    from request to request.
    """

    position: list[float] = Field(min_length=3, max_length=3)
    orientation: list[float] = Field(min_length=4, max_length=4)
    mode: Literal["perspective", "panorama"] = "perspective"
    width: int = Field(default=640, ge=1)
    height: int = Field(default=360, ge=1)
    focal: Optional[float] = Field(default=None, gt=0)
    frame_id: int = Field(ge=0)


def motion_bound(mdp: Mdp) -> float:
    """Largest safe viewpoint radius: the inner bound of the innermost
    occupied shell. Crossing it can invert the shell compositing order."""
    for m, layer in enumerate(mdp.layers):
        if np.any(layer.alpha > 0):
            return float(mdp.partition.bounds(m)[0])
    return float(mdp.partition.boundaries[0])


def _target_from_request(req: PoseRequest, mdp: Mdp) -> TargetCamera:
    rot = quaternion_to_rotation(*req.orientation).T
    pose = Extrinsics(rotation=rot,
                      translation=-rot @ np.asarray(req.position, np.float64))
    if req.mode == "perspective":
        focal = req.focal if req.focal is not None else req.width / 2.0
        intr = Intrinsics(fx=focal, fy=focal,
                          cx=(req.width - 1) / 2.0, cy=(req.height - 1) / 2.0,
                          width=req.width, height=req.height)
        return TargetCamera.perspective(intr, pose)
    mapping = PanoMapping(width=req.width, height=req.height,
                          v_fov_slope=mdp.mapping.v_fov_slope)
    return TargetCamera.panorama(mapping, pose)


def create_app(mdp: Mdp, limits: FrameLimits | None = None,
               zcfg: SoftZConfig | None = None) -> FastAPI:
    """ASGI app serving ``mdp``. Rendering is serialized by one lock;
    /health and /meta answer from precomputed state and never take it."""
    limits = limits if limits is not None else FrameLimits()
    zcfg = zcfg if zcfg is not None else SoftZConfig()
    app = FastAPI(title="shell panorama frame service")
    app.state.render_lock = threading.Lock()
    app.state.last_frame_id = -1

    meta_doc = {
        "format": "shell-panorama",
        "layers": mdp.shell_count,
        "width": mdp.width,
        "height": mdp.height,
        "v_fov_slope": mdp.mapping.v_fov_slope,
        "shell_radii": [float(r) for r in mdp.partition.centers],
        "shell_boundaries": [float(b) for b in mdp.partition.boundaries],
        "motion_bound": motion_bound(mdp),
        "max_width": limits.max_width,
        "max_height": limits.max_height,
    }

    @app.exception_handler(RequestValidationError)
    async def _validation_to_400(request, exc):
        detail = exc.errors()[0] if exc.errors() else {}
        where = ".".join(str(p) for p in detail.get("loc", ())[1:])
        reason = detail.get("msg", "invalid request")
        return JSONResponse({"error": f"malformed pose request: "
                                      f"{where or 'body'}: {reason}"},
                            status_code=400)

    @app.get("/health")
    async def health():
        return {"status": "ok"}

    @app.get("/meta")
    async def meta():
        return meta_doc

    @app.post("/frame")
    def frame(req: PoseRequest):
        if not all(math.isfinite(v) for v in req.position + req.orientation):
            return JSONResponse({"error": "pose values must be finite"},
                                status_code=400)
        norm = math.sqrt(sum(v * v for v in req.orientation))
        if abs(norm - 1.0) > 1e-6:
            return JSONResponse(
                {"error": f"orientation must be a unit quaternion, "
                          f"norm was {norm:.8f}"}, status_code=400)
        if req.width > limits.max_width or req.height > limits.max_height:
            return JSONResponse(
                {"error": f"frame {req.width}x{req.height} exceeds the "
                          f"server limit {limits.max_width}x"
                          f"{limits.max_height}"}, status_code=413)
        target = _target_from_request(req, mdp)
        with app.state.render_lock:
            if req.frame_id <= app.state.last_frame_id:
                return JSONResponse(
                    {"error": "stale frame id", "frame_id": req.frame_id,
                     "latest": app.state.last_frame_id}, status_code=409)
            result = render(mdp, target, zcfg)
            app.state.last_frame_id = req.frame_id
        return Response(content=encode_png(result.image),
                        media_type="image/png",
                        headers={"X-Frame-Id": str(req.frame_id),
                                 "X-Ordering-Warning":
                                     "1" if result.ordering_warning else "0"})

    return app
