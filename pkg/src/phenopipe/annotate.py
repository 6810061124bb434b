"""Human-in-the-loop labeling service.

Serves randomly ordered leaf crops over plain HTTP + JSON and appends the
operator's suitability/morphology labels to a JSONL store. Every append is
fsynced before the request is acknowledged; duplicate submissions for the
same (crop, task, annotator) key are rejected, never overwritten.

HTTP surface:
    GET  /api/next?task=suitability|morphology -> {crop_id, task, image_url} | {done: true}
    POST /api/labels  {crop_id, task, labels: {...}}
    GET  /api/progress -> per-task {labeled, total}
    GET  /api/contract -> the shared enum contract
    GET  /crops/<id>.png, and static UI assets at /
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .contracts import (
    COLOR_CLASSES,
    SHAPE_CLASSES,
    SPLOTCH_CLASSES,
    contract_dict,
)
from .errors import PhenoError

import numpy as np

TASKS = ("suitability", "morphology")

DEFAULT_ANNOTATOR = "default"


class ValidationFailure(PhenoError):
    """Submitted labels are illegal for the task (HTTP 422)."""


class Conflict(PhenoError):
    """A record for this (crop, task, annotator) already exists (HTTP 409)."""


class UnknownCrop(PhenoError):
    """The referenced crop does not exist (HTTP 404)."""


@dataclass
class LabelTask:
    crop_id: str
    task: str
    image_url: str


def validate_labels(task: str, labels) -> dict:
    if task == "suitability":
        if not isinstance(labels, dict) or not isinstance(labels.get("good"), bool):
            raise ValidationFailure("suitability labels must be {'good': true|false}")
        return {"good": labels["good"]}
    if task == "morphology":
        if not isinstance(labels, dict):
            raise ValidationFailure("morphology labels must be an object")
        for key, classes in (
            ("color", COLOR_CLASSES),
            ("shape", SHAPE_CLASSES),
            ("splotches", SPLOTCH_CLASSES),
        ):
            if labels.get(key) not in classes:
                raise ValidationFailure(f"illegal {key} value {labels.get(key)!r}")
        return {k: labels[k] for k in ("color", "shape", "splotches")}
    raise ValidationFailure(f"unknown task {task!r}")


class LabelStore:
    """Append-only JSONL file; one record per (crop_id, task, annotator)."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._keys: set[tuple[str, str, str]] = set()
        self.records: list[dict] = []
        if self.path.exists():
            for line in self.path.read_text("utf-8").splitlines():
                if not line.strip():
                    continue
                record = json.loads(line)
                self.records.append(record)
                self._keys.add(self._key(record))

    @staticmethod
    def _key(record) -> tuple[str, str, str]:
        return (record["crop_id"], record["task"], record.get("annotator", DEFAULT_ANNOTATOR))

    def labeled_ids(self, task: str) -> set[str]:
        return {r["crop_id"] for r in self.records if r["task"] == task}

    def append(self, crop_id: str, task: str, labels: dict, annotator: str) -> dict:
        record = {
            "crop_id": crop_id,
            "task": task,
            "labels": labels,
            "timestamp": time.time(),
            "annotator": annotator,
        }
        with self._lock:
            if self._key(record) in self._keys:
                raise Conflict(f"already labeled: {crop_id} / {task} / {annotator}")
            line = json.dumps(record, sort_keys=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self.records.append(record)
            self._keys.add(self._key(record))
        return record


class AnnotationService:
    """Dispenses crops without replacement (seeded order) and stores labels."""

    def __init__(self, crops_dir, store_path, seed: int = 0):
        self.crops_dir = Path(crops_dir)
        self.crop_ids = sorted(p.stem for p in self.crops_dir.glob("*.png"))
        if not self.crop_ids:
            raise PhenoError(f"no crops found in {crops_dir}")
        self.store = LabelStore(store_path)
        self._lock = threading.Lock()
        self._queues = {}
        rng = np.random.default_rng(seed)
        for task in TASKS:
            order = list(rng.permutation(len(self.crop_ids)))
            self._queues[task] = [self.crop_ids[i] for i in order]
        self._cursor = {task: 0 for task in TASKS}
        self._dispensed: dict[str, set[str]] = {task: set() for task in TASKS}

    def next_task(self, task: str) -> LabelTask | None:
        if task not in TASKS:
            raise ValidationFailure(f"unknown task {task!r}")
        with self._lock:
            labeled = self.store.labeled_ids(task)
            queue = self._queues[task]
            while self._cursor[task] < len(queue):
                crop_id = queue[self._cursor[task]]
                self._cursor[task] += 1
                if crop_id in labeled or crop_id in self._dispensed[task]:
                    continue
                self._dispensed[task].add(crop_id)
                return LabelTask(crop_id, task, f"/crops/{crop_id}.png")
            return None

    def submit(self, crop_id: str, task: str, labels, annotator: str = DEFAULT_ANNOTATOR) -> dict:
        clean = validate_labels(task, labels)
        if crop_id not in self.crop_ids:
            raise UnknownCrop(f"unknown crop {crop_id!r}")
        return self.store.append(crop_id, task, clean, annotator)

    def progress(self) -> dict:
        total = len(self.crop_ids)
        return {
            task: {"labeled": len(self.store.labeled_ids(task)), "total": total}
            for task in TASKS
        }


_FALLBACK_PAGE = b"""<!doctype html>
<title>phenopipe annotation</title>
<p>The annotation API is running. Build the web UI (see frontend/) and
serve it with --ui, or drive the JSON API directly.</p>
"""

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".png": "image/png",
    ".svg": "image/svg+xml",
    ".map": "application/json",
}


def make_server(service: AnnotationService, port: int = 8080, ui_dir=None) -> ThreadingHTTPServer:
    ui_root = Path(ui_dir).resolve() if ui_dir else None

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):  # tests and batch runs stay quiet
            pass

        def _send_json(self, payload, status=200):
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _send_bytes(self, body: bytes, content_type: str, status=200):
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            url = urlparse(self.path)
            if url.path == "/api/next":
                task = parse_qs(url.query).get("task", [""])[0]
                try:
                    item = service.next_task(task)
                except ValidationFailure as exc:
                    return self._send_json({"error": str(exc)}, 422)
                if item is None:
                    return self._send_json({"done": True})
                return self._send_json(
                    {"crop_id": item.crop_id, "task": item.task, "image_url": item.image_url}
                )
            if url.path == "/api/progress":
                return self._send_json(service.progress())
            if url.path == "/api/contract":
                return self._send_json(contract_dict())
            if url.path.startswith("/crops/"):
                name = Path(url.path[len("/crops/") :]).name
                crop = service.crops_dir / name
                if crop.suffix == ".png" and crop.exists():
                    return self._send_bytes(crop.read_bytes(), "image/png")
                return self._send_json({"error": "unknown crop"}, 404)
            return self._serve_static(url.path)

        def _serve_static(self, path):
            if ui_root is not None:
                rel = path.lstrip("/") or "index.html"
                target = (ui_root / rel).resolve()
                if str(target).startswith(str(ui_root)) and target.is_file():
                    ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
                    return self._send_bytes(target.read_bytes(), ctype)
            if path in ("/", "/index.html"):
                return self._send_bytes(_FALLBACK_PAGE, "text/html; charset=utf-8")
            return self._send_json({"error": "not found"}, 404)

        def do_POST(self):
            url = urlparse(self.path)
            if url.path != "/api/labels":
                return self._send_json({"error": "not found"}, 404)
            try:
                length = int(self.headers.get("Content-Length", "0"))
                body = json.loads(self.rfile.read(length) or b"{}")
            except (ValueError, json.JSONDecodeError):
                return self._send_json({"error": "invalid JSON body"}, 400)
            crop_id = body.get("crop_id")
            task = body.get("task")
            labels = body.get("labels")
            annotator = body.get("annotator", DEFAULT_ANNOTATOR)
            if not isinstance(crop_id, str) or not isinstance(task, str):
                return self._send_json({"error": "crop_id and task are required"}, 400)
            try:
                record = service.submit(crop_id, task, labels, annotator)
            except ValidationFailure as exc:
                return self._send_json({"error": str(exc)}, 422)
            except Conflict as exc:
                return self._send_json({"error": str(exc)}, 409)
            except UnknownCrop as exc:
                return self._send_json({"error": str(exc)}, 404)
            return self._send_json({"stored": True, "crop_id": record["crop_id"]})

    return ThreadingHTTPServer(("127.0.0.1", port), Handler)
