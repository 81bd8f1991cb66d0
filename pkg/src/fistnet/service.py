"""HTTP endpoints the style studio drives.

The loaded model is immutable for the process lifetime; every request is a
pure function of (model, request), so concurrent requests are safe and
identical requests return identical bytes. Errors are always JSON objects
of the form {code, field, message}.
"""
from __future__ import annotations

import json
import math

from fastapi import FastAPI, File, Form, Query, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response

from .errors import DecodeError, ValidationError
from .extrinsic_path import StylePipeline
from .image_pipeline import decode_image_bytes, encode_png
from .inference import semantic_directions, stylize_image
from .latent_semantics import directions_to_json

_PARAM_FIELDS = {"weights", "sigma", "gamma1", "gamma2", "direction_rank"}


def _error(status: int, code: str, field: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"code": code, "field": field,
                                 "message": message})


def _bad_param(field: str, message: str) -> JSONResponse:
    return _error(422, "validation_error", field, message)


def _is_unit_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) \
        and 0.0 <= v <= 1.0


def create_app(pipe: StylePipeline, config,
               checkpoint_hash: str = "") -> FastAPI:
    app = FastAPI(title="dual-path stylization service")
    # The browser studio is served as static files from wherever is handy,
    # so the API answers cross-origin. Headers only; responses unchanged.
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["GET", "POST"], allow_headers=["*"])
    num_layers = pipe.gen.num_layers

    @app.exception_handler(RequestValidationError)
    async def on_request_error(request, exc: RequestValidationError):
        # Framework-level failures (missing file, bad query type) get the
        # same error shape as our own checks.
        errors = exc.errors()
        field = str(errors[0]["loc"][-1]) if errors else "request"
        message = errors[0]["msg"] if errors else "invalid request"
        return _error(422, "validation_error", field, message)

    @app.get("/health")
    def health():
        return {"status": "ok", "checkpoint_hash": checkpoint_hash}

    @app.get("/config")
    def get_config():
        return config.to_dict()

    @app.get("/directions")
    def directions(top: int = Query(1)):
        try:
            dirs = semantic_directions(pipe, top)
        except ValidationError as exc:
            return _bad_param("top", str(exc))
        return directions_to_json(dirs)

    @app.post("/stylize")
    async def stylize(image: UploadFile = File(...),
                      params: str = Form("{}")):
        try:
            payload = json.loads(params)
        except json.JSONDecodeError as exc:
            return _error(422, "malformed_json", "params",
                          f"params is not valid JSON: {exc}")
        if not isinstance(payload, dict):
            return _error(422, "malformed_json", "params",
                          "params must be a JSON object")
        unknown = sorted(set(payload) - _PARAM_FIELDS)
        if unknown:
            return _bad_param(unknown[0],
                              f"unknown parameter {unknown[0]!r}")

        weights = payload.get("weights", 1.0)
        if isinstance(weights, list):
            if len(weights) != num_layers or not all(
                    _is_unit_number(v) for v in weights):
                return _bad_param(
                    "weights",
                    f"weights must be {num_layers} numbers in [0, 1]")
        elif not _is_unit_number(weights):
            return _bad_param(
                "weights", "weights must be a number in [0, 1] or a "
                f"list of {num_layers} such numbers")

        sigma = payload.get("sigma", 0.0)
        if not isinstance(sigma, (int, float)) or isinstance(sigma, bool) \
                or not math.isfinite(sigma):
            return _bad_param("sigma", "sigma must be a finite number")

        gammas: dict[str, float | None] = {}
        for name in ("gamma1", "gamma2"):
            value = payload.get(name)
            if value is not None and not _is_unit_number(value):
                return _bad_param(name, f"{name} must lie in [0, 1]")
            gammas[name] = value

        rank = payload.get("direction_rank")
        if rank is not None and (not isinstance(rank, int)
                                 or isinstance(rank, bool) or rank < 0):
            return _bad_param("direction_rank",
                              "direction_rank must be an integer >= 0")

        blob = await image.read()
        try:
            img = decode_image_bytes(blob, config.resolution)
        except DecodeError as exc:
            return _error(422, "decode_error", "image", str(exc))

        try:
            out = stylize_image(pipe, img, weights, sigma=float(sigma),
                                direction_rank=rank,
                                gamma1=gammas["gamma1"],
                                gamma2=gammas["gamma2"])
        except ValidationError as exc:
            return _bad_param("params", str(exc))
        return Response(content=encode_png(out), media_type="image/png")

    return app
