"""Label reading: a four-step augmentation ladder over a pluggable OCR
backend, stopping at the first stage whose text parses.

Stages, in order: the original image; rotated 45 degrees counterclockwise
(canvas expanded, black fill); adaptive mean-thresholded; thresholded then
rotated. A stage succeeds when the field parser extracts at least one
non-null field from its text.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from . import raster
from .labels import LabelRecord, parse_fields

THRESHOLD_BLOCK = 31
THRESHOLD_OFFSET = 10.0


class Stage(str, enum.Enum):
    original = "original"
    rotated45 = "rotated45"
    thresholded = "thresholded"
    rotated_and_thresholded = "rotated_and_thresholded"


LADDER = (Stage.original, Stage.rotated45, Stage.thresholded, Stage.rotated_and_thresholded)


class OcrBackend(Protocol):
    def recognize(self, image: np.ndarray) -> list[tuple[str, float]]:
        """Text fragments with confidences for an RGB raster."""
        ...


@dataclass
class OcrAttempt:
    stage: Stage
    fragments: list[str]
    succeeded: bool


@dataclass
class OcrResult:
    filename: str = ""
    raw_text: str = ""
    stage_used: Stage | None = None
    attempts: list[OcrAttempt] = field(default_factory=list)
    error: str | None = None


def adaptive_threshold(
    image: np.ndarray, block: int = THRESHOLD_BLOCK, offset: float = THRESHOLD_OFFSET
) -> np.ndarray:
    """Local-mean binary threshold; bright background becomes 255, text 0."""
    gray = raster.rgb_to_gray(image)
    binary = (gray > raster.box_mean(gray, block) - offset).astype(np.uint8) * 255
    return np.repeat(binary[:, :, None], 3, axis=2)


def augment(
    image: np.ndarray,
    stage: Stage,
    block: int = THRESHOLD_BLOCK,
    offset: float = THRESHOLD_OFFSET,
) -> np.ndarray:
    """The ladder's image transform for one stage."""
    if image.size == 0:
        raise ValueError("empty image")
    if stage == Stage.original:
        return image
    if stage == Stage.rotated45:
        return raster.rotate_image(image, 45.0)
    if stage == Stage.thresholded:
        return adaptive_threshold(image, block, offset)
    if stage == Stage.rotated_and_thresholded:
        return raster.rotate_image(adaptive_threshold(image, block, offset), 45.0)
    raise ValueError(f"unknown stage {stage!r}")


def read_label(
    image: np.ndarray,
    backend: OcrBackend,
    parser: Callable[[str], LabelRecord] = parse_fields,
    filename: str = "",
    threshold_block: int = THRESHOLD_BLOCK,
    threshold_offset: float = THRESHOLD_OFFSET,
) -> tuple[OcrResult, LabelRecord]:
    """Try the ladder stages in order; return at the first parsing success.

    A backend exception is recorded on the result instead of propagating,
    yielding the all-null record, so one bad image cannot abort a batch.
    """
    result = OcrResult(filename=filename)
    for stage in LADDER:
        try:
            fragments = backend.recognize(
                augment(image, stage, threshold_block, threshold_offset)
            )
        except Exception as exc:
            result.error = f"{type(exc).__name__}: {exc}"
            break
        raw = " ".join(text for text, _ in fragments)
        record = parser(raw)
        succeeded = record.any_field()
        result.attempts.append(
            OcrAttempt(stage, [text for text, _ in fragments], succeeded)
        )
        if succeeded:
            result.raw_text = raw
            result.stage_used = stage
            record.filename = filename
            return result, record
    empty = parser("")
    empty.filename = filename
    return result, empty


def read_labels_batch(
    image_paths: list,
    backend_for: Callable[[Path], OcrBackend],
    parser: Callable[[str], LabelRecord] = parse_fields,
    jobs: int = 1,
    threshold_block: int = THRESHOLD_BLOCK,
    threshold_offset: float = THRESHOLD_OFFSET,
) -> tuple[list[LabelRecord], list[OcrResult]]:
    """Run read_label over many files; per-file failures stay per-file."""

    def one(path: Path) -> tuple[OcrResult, LabelRecord]:
        name = Path(path).name
        try:
            image = raster.load_rgb(path)
            return read_label(
                image,
                backend_for(Path(path)),
                parser,
                filename=name,
                threshold_block=threshold_block,
                threshold_offset=threshold_offset,
            )
        except Exception as exc:
            result = OcrResult(filename=name, error=f"{type(exc).__name__}: {exc}")
            record = parser("")
            record.filename = name
            return result, record

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(one, image_paths))
    else:
        outcomes = [one(p) for p in image_paths]
    records = [record for _, record in outcomes]
    results = [result for result, _ in outcomes]
    return records, results


class SidecarStubBackend:
    """Scripted backend: expected text lives in a sidecar file.

    Keeps CI free of model weights. The same fragments are returned for
    every augmented version of the image, so the ladder resolves at the
    first stage whenever the sidecar parses at all.
    """

    def __init__(self, sidecar_path):
        self.sidecar_path = Path(sidecar_path)

    def recognize(self, image) -> list[tuple[str, float]]:
        if not self.sidecar_path.exists():
            return []
        text = self.sidecar_path.read_text("utf-8")
        return [(line, 1.0) for line in text.splitlines() if line.strip()]


def stub_backend_provider(stub_dir) -> Callable[[Path], OcrBackend]:
    stub_dir = Path(stub_dir)
    return lambda image_path: SidecarStubBackend(stub_dir / (image_path.stem + ".txt"))


class OnnxTextBackend:
    """Text recognizer loaded from an ONNX model file.

    Contract (see README): input float32 1x1x32xW (grayscale / 255, height
    fixed at 32, width scaled to keep aspect); output logits TxC or 1xTxC
    over a charset whose index 0 is the CTC blank. Greedy CTC decoding.
    """

    CHARSET = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ-_. "

    def __init__(self, model_path: str):
        try:
            import onnxruntime
        except ImportError as exc:  # pragma: no cover - optional dependency
            raise RuntimeError(
                "onnxruntime is required for the ONNX OCR backend; "
                "install the 'onnx' extra or use the stub backend"
            ) from exc
        self.session = onnxruntime.InferenceSession(model_path)

    def recognize(self, image):  # pragma: no cover - needs model weights
        from PIL import Image

        gray = raster.rgb_to_gray(image).astype(np.uint8)
        h, w = gray.shape
        new_w = max(16, int(round(w * 32 / h)))
        resized = np.asarray(
            Image.fromarray(gray).resize((new_w, 32), Image.BILINEAR), dtype=np.float32
        )
        tensor = (resized / 255.0)[None, None]
        name = self.session.get_inputs()[0].name
        logits = self.session.run(None, {name: tensor})[0]
        if logits.ndim == 3:
            logits = logits[0]
        ids = logits.argmax(axis=1)
        chars, prev = [], 0
        for i in ids:
            if i != 0 and i != prev and i - 1 < len(self.CHARSET):
                chars.append(self.CHARSET[i - 1])
            prev = i
        text = "".join(chars).strip()
        return [(text, 1.0)] if text else []


def model_backend_provider(model_path) -> Callable[[Path], OcrBackend]:
    backend = OnnxTextBackend(str(model_path))
    return lambda image_path: backend
