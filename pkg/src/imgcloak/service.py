"""Local HTTP service: sessions, attack jobs, and result retrieval under /v1.

The service backs the browser studio but is self-contained: upload an image,
read its pre-detections, submit attack jobs, poll, download results. Attack
execution runs on a single background worker; jobs are FIFO. Loopback-only by
default and stateless across restarts by design.
"""

from __future__ import annotations

import base64
import itertools
import math
import queue
import threading
from dataclasses import dataclass, field
from typing import Literal

from fastapi import FastAPI, HTTPException, Request
from pydantic import BaseModel, Field, field_validator

from .attack import MAX_EPSILON, AttackConfig, hide_all, hide_sensitive
from .detector import ToyDetector
from .detector.scenes import image_from_png_bytes, image_to_png_bytes, quantize_image
from .detector.types import Detection, ImageTensor
from .errors import ImgcloakError, InvalidInputError
from .metrics import psnr, ssim


class AttackRequest(BaseModel):
    mode: Literal["all", "sensitive"]
    sensitive_categories: list[str] = Field(default_factory=list)
    box_indices: list[int] = Field(default_factory=list)
    target_category: str | None = None
    epsilon: float | str = "3/255"
    threshold: float = 0.3
    max_iterations: int = 150

    @field_validator("epsilon")
    @classmethod
    def _parse_epsilon(cls, value):
        if isinstance(value, str):
            num, sep, den = value.partition("/")
            try:
                value = float(num) / float(den) if sep else float(num)
            except ValueError as exc:
                raise ValueError(f"epsilon {value!r} is neither decimal nor k/255") from exc
        if not 0.0 < value <= MAX_EPSILON:
            raise ValueError(f"epsilon must be in (0, {MAX_EPSILON:.4f}]")
        return value

    @field_validator("threshold")
    @classmethod
    def _check_threshold(cls, value):
        if not 0.0 < value < 1.0:
            raise ValueError("threshold must be in (0, 1)")
        return value

    @field_validator("max_iterations")
    @classmethod
    def _check_iterations(cls, value):
        if value < 1:
            raise ValueError("max_iterations must be >= 1")
        return value


@dataclass
class Job:
    job_id: str
    session_id: str
    request: AttackRequest
    state: str = "queued"  # queued -> running -> done | failed
    error: str | None = None
    trace: list[dict] = field(default_factory=list)
    result: dict | None = None


@dataclass
class Session:
    session_id: str
    image: ImageTensor
    png_bytes: bytes
    pre_detections: tuple[Detection, ...]
    job_ids: list[str] = field(default_factory=list)


def _detection_json(det: Detection, index: int, names) -> dict:
    return {
        "index": index,
        "box": [det.geometry.x_min, det.geometry.y_min, det.geometry.x_max, det.geometry.y_max],
        "category_index": det.category_index,
        "category": names[det.category_index],
        "score": det.score,
    }


def create_app(detector: ToyDetector, frontend_dir: str | None = None, queue_jobs: bool = True) -> FastAPI:
    app = FastAPI(title="imgcloak service", version="1")
    shape_names = detector.category_names[: detector.background_index]

    lock = threading.Lock()
    sessions: dict[str, Session] = {}
    jobs: dict[str, Job] = {}
    pending: "queue.Queue[str]" = queue.Queue()
    counter = itertools.count(1)

    def _error(status: int, message: str, field_name: str | None = None):
        detail = [{"loc": ["body", field_name], "msg": message}] if field_name else message
        raise HTTPException(status_code=status, detail=detail)

    def _category_index(name: str, field_name: str) -> int:
        if name not in shape_names:
            _error(422, f"unknown category {name!r}; expected one of {list(shape_names)}", field_name)
        return shape_names.index(name)

    def _execute(job: Job):
        session = sessions[job.session_id]
        req = job.request
        config = AttackConfig(
            epsilon=float(req.epsilon),
            threshold=req.threshold,
            max_iterations=req.max_iterations,
            mode=req.mode,
        )
        if req.mode == "all":
            result = hide_all(detector, session.image, config)
        else:
            sensitive = {_category_index(n, "sensitive_categories") for n in req.sensitive_categories}
            for idx in req.box_indices:
                if not 0 <= idx < len(session.pre_detections):
                    raise InvalidInputError(f"box index {idx} out of range")
                sensitive.add(session.pre_detections[idx].category_index)
            target = _category_index(req.target_category, "target_category")
            result = hide_sensitive(detector, session.image, sorted(sensitive), target, config)
        adv = quantize_image(result.adversarial_image)
        adv_dets = detector.detect(adv, config.threshold)
        quality = psnr(session.image, adv)
        job.trace = [{"i": e.iteration, "s_max": e.s_max, "loss": e.loss} for e in result.trace.entries]
        job.result = {
            "succeeded": result.succeeded,
            "iterations_used": result.iterations_used,
            "image_base64": base64.b64encode(image_to_png_bytes(adv)).decode(),
            "detections": [_detection_json(d, i, detector.category_names) for i, d in enumerate(adv_dets)],
            "psnr": None if math.isinf(quality) else quality,
            "ssim": ssim(session.image, adv),
        }

    def _worker():
        while True:
            job_id = pending.get()
            if job_id is None:
                return
            with lock:
                job = jobs[job_id]
                job.state = "running"
            try:
                _execute(job)
            except HTTPException as exc:
                job.error = str(exc.detail)
                job.state = "failed"
            except Exception as exc:  # job failures must not kill the worker
                job.error = str(exc)
                job.state = "failed"
            else:
                job.state = "done"
            pending.task_done()

    worker = threading.Thread(target=_worker, daemon=True, name="imgcloak-attack-worker")
    worker.start()

    @app.post("/v1/sessions", status_code=201)
    async def create_session(request: Request):
        body = await request.body()
        if not body:
            _error(422, "request body must contain PNG image bytes", "image")
        try:
            image = image_from_png_bytes(body)
        except Exception:
            _error(422, "body is not a decodable image", "image")
        try:
            dets = detector.detect(image, 0.3)
        except ImgcloakError as exc:
            _error(422, str(exc), "image")
        with lock:
            session_id = f"s{next(counter)}"
            sessions[session_id] = Session(session_id, image, bytes(body), tuple(dets))
        return {
            "session_id": session_id,
            "width": image.width,
            "height": image.height,
            "categories": list(shape_names),
            "detections": [_detection_json(d, i, detector.category_names) for i, d in enumerate(dets)],
        }

    @app.post("/v1/sessions/{session_id}/attacks", status_code=202)
    def submit_attack(session_id: str, request: AttackRequest):
        with lock:
            session = sessions.get(session_id)
            if session is None:
                _error(404, f"unknown session {session_id!r}")
            if request.mode == "sensitive":
                if not request.sensitive_categories and not request.box_indices:
                    _error(422, "sensitive mode requires sensitive_categories or box_indices", "sensitive_categories")
                if request.target_category is None:
                    _error(422, "sensitive mode requires target_category", "target_category")
                sensitive = {
                    _category_index(n, "sensitive_categories") for n in request.sensitive_categories
                }
                for idx in request.box_indices:
                    if not 0 <= idx < len(session.pre_detections):
                        _error(422, f"box index {idx} out of range", "box_indices")
                    sensitive.add(session.pre_detections[idx].category_index)
                if _category_index(request.target_category, "target_category") in sensitive:
                    _error(422, "target_category must not be a sensitive category", "target_category")
            if not queue_jobs:
                active = any(jobs[j].state in ("queued", "running") for j in session.job_ids)
                if active:
                    _error(409, "a job is already active for this session and queueing is disabled")
            job_id = f"j{next(counter)}"
            job = Job(job_id, session_id, request)
            jobs[job_id] = job
            session.job_ids.append(job_id)
            pending.put(job_id)
        return {"job_id": job_id}

    @app.get("/v1/jobs/{job_id}")
    def job_state(job_id: str):
        with lock:
            job = jobs.get(job_id)
            if job is None:
                _error(404, f"unknown job {job_id!r}")
            return {"job_id": job.job_id, "state": job.state, "trace": list(job.trace), "error": job.error}

    @app.get("/v1/jobs/{job_id}/result")
    def job_result(job_id: str):
        with lock:
            job = jobs.get(job_id)
            if job is None:
                _error(404, f"unknown job {job_id!r}")
            if job.state == "failed":
                _error(409, f"job failed: {job.error}")
            if job.state != "done":
                _error(409, f"job is {job.state}; result not available yet")
            return dict(job.result)

    if frontend_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="studio")

    return app
