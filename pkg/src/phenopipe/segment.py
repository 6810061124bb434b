"""Point-prompted leaf masks, grayscale composites, and leaf isolation.

A MaskPredictor turns (image, prompt point) into a binary mask plus a
confidence score. Two backends: a weight-free HSV region grower, and an
ONNX encoder/decoder pair (see README for the model I/O contract).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import raster
from .errors import SegmentationError

SCORE_CUTOFF = 0.5
MIN_REGION_AREA = 64


class MaskPredictor(Protocol):
    def predict(self, image: np.ndarray, point: tuple[float, float]) -> tuple[np.ndarray, float]:
        """Binary mask with the image's dimensions, and a score in [0, 1]."""
        ...


@dataclass
class CompositeMask:
    """All of an image's leaf masks painted with distinct grayscale values."""

    raster: np.ndarray  # uint8, 0 = background
    leaf_ids: dict[int, int] = field(default_factory=dict)  # gray value -> candidate index
    errors: list[tuple[int, str]] = field(default_factory=list)  # (candidate index, message)


@dataclass
class IsolatedLeaf:
    """One leaf cropped, rotated long-axis-horizontal, background blacked out."""

    crop: np.ndarray
    mask_crop: np.ndarray
    source: tuple[str, int]  # (filename, leaf id)
    angle: float  # degrees of rotation applied


def _prompt_pixel(point, shape) -> tuple[int, int] | None:
    px = int(math.floor(point[0] + 0.5))
    py = int(math.floor(point[1] + 0.5))
    h, w = shape[:2]
    if 0 <= px < w and 0 <= py < h:
        return px, py
    return None


def segment_image(
    image: np.ndarray,
    candidates,
    predictor: MaskPredictor,
    seed: int = 0,
    filename: str = "",
) -> CompositeMask:
    """Predict one mask per candidate midpoint and paint the composite.

    Masks scoring below the cutoff or not containing their prompt are
    dropped. Overlaps go to the higher-scoring mask (first mask wins ties).
    A mask completely painted over by later winners is dropped from
    leaf_ids so grayscale values and leaves stay in bijection.
    """
    h, w = image.shape[:2]
    composite = CompositeMask(raster=np.zeros((h, w), dtype=np.uint8))
    surviving: list[tuple[int, np.ndarray, float]] = []
    for index, candidate in enumerate(candidates):
        try:
            mask, score = predictor.predict(image, candidate.midpoint)
        except Exception as exc:  # a single bad prediction must not kill the batch
            composite.errors.append((index, f"{type(exc).__name__}: {exc}"))
            continue
        if score < SCORE_CUTOFF:
            continue
        mask = np.asarray(mask, dtype=bool)
        pixel = _prompt_pixel(candidate.midpoint, image.shape)
        if pixel is None or not mask[pixel[1], pixel[0]]:
            continue
        surviving.append((index, mask, float(score)))

    if len(surviving) > 255:
        raise SegmentationError(
            f"too many leaves: {len(surviving)} masks for {filename or 'image'}"
        )

    ids = np.random.default_rng(seed).permutation(np.arange(1, 256, dtype=np.uint8))
    best_score = np.full((h, w), -np.inf)
    for slot, (index, mask, score) in enumerate(surviving):
        gray = int(ids[slot])
        claim = mask & (score > best_score)
        composite.raster[claim] = gray
        best_score[claim] = score
        composite.leaf_ids[gray] = index
    # masks that lost every pixel to overlaps drop out of the id map
    present = set(np.unique(composite.raster)) - {0}
    composite.leaf_ids = {g: i for g, i in composite.leaf_ids.items() if g in present}
    return composite


def isolate_leaf(
    image: np.ndarray, composite: CompositeMask, leaf_id: int, filename: str = ""
) -> IsolatedLeaf:
    """Crop + rotate one leaf so its long axis is horizontal; mask the rest."""
    if leaf_id not in composite.leaf_ids:
        raise SegmentationError(f"leaf id {leaf_id} not present in composite")
    mask = composite.raster == leaf_id
    points = np.argwhere(mask)[:, ::-1]  # (x, y)
    angle, _, _ = raster.min_area_rect(points)
    rotated_mask = raster.rotate_mask(mask, angle)
    if not rotated_mask.any():
        raise SegmentationError(f"leaf id {leaf_id} vanished under rotation")
    rotated_img = raster.rotate_image(image, angle)
    x, y, w, h = raster.component_bbox(rotated_mask)
    crop = rotated_img[y : y + h, x : x + w].copy()
    mask_crop = rotated_mask[y : y + h, x : x + w]
    crop[~mask_crop] = 0
    return IsolatedLeaf(crop=crop, mask_crop=mask_crop, source=(filename, leaf_id), angle=angle)


class RegionGrowPredictor:
    """Weight-free fallback: flood fill over pixels within an HSV tolerance
    of the seed pixel (4-connected). Score is 1 when the region reaches
    a minimum area, else 0.
    """

    def __init__(self, tolerance: float = 0.12):
        if tolerance <= 0:
            raise ValueError("tolerance must be positive")
        self.tolerance = tolerance

    def predict(self, image, point):
        h, w = image.shape[:2]
        pixel = _prompt_pixel(point, image.shape)
        if pixel is None:
            return np.zeros((h, w), dtype=bool), 0.0
        px, py = pixel
        hh, ss, vv = raster.rgb_to_hsv(image)
        dh = np.abs(hh - hh[py, px])
        dh = np.minimum(dh, 360.0 - dh) / 360.0
        within = (
            (dh <= self.tolerance)
            & (np.abs(ss - ss[py, px]) <= self.tolerance)
            & (np.abs(vv - vv[py, px]) <= self.tolerance)
        )
        labels, _ = raster.label_components(within, connectivity=4)
        region = labels == labels[py, px]
        score = 1.0 if region.sum() >= MIN_REGION_AREA else 0.0
        return region, score


def region_grow_predictor(tolerance: float = 0.12) -> MaskPredictor:
    return RegionGrowPredictor(tolerance)


class OnnxMaskPredictor:
    """Encoder/decoder mask model loaded from ONNX files.

    Contract (see README): the encoder takes a float32 1x3xSxS tensor
    (RGB / 255, S the encoder's fixed input side) and returns an embedding;
    the decoder takes the embedding plus prompt point coordinates scaled to
    encoder space and returns mask logits at image resolution, thresholded
    at 0. Extra SAM-style decoder inputs (point labels, mask_input,
    has_mask_input, orig_im_size) are filled in when the graph declares them.
    """

    def __init__(self, encoder_path: str, decoder_path: str, input_side: int = 1024):
        try:
            import onnxruntime
        except ImportError as exc:  # pragma: no cover - optional dependency
            raise RuntimeError(
                "onnxruntime is required for the ONNX mask predictor; "
                "install the 'onnx' extra or use the regiongrow predictor"
            ) from exc
        self._ort = onnxruntime
        self.encoder = onnxruntime.InferenceSession(encoder_path)
        self.decoder = onnxruntime.InferenceSession(decoder_path)
        self.input_side = input_side
        self._embedding_cache: tuple[int, object] | None = None

    def _encode(self, image):  # pragma: no cover - needs model weights
        key = hash(image.tobytes())
        if self._embedding_cache and self._embedding_cache[0] == key:
            return self._embedding_cache[1]
        side = self.input_side
        h, w = image.shape[:2]
        scale = side / max(h, w)
        new_h, new_w = int(round(h * scale)), int(round(w * scale))
        from PIL import Image

        resized = np.asarray(
            Image.fromarray(image).resize((new_w, new_h), Image.BILINEAR), dtype=np.float32
        )
        padded = np.zeros((side, side, 3), dtype=np.float32)
        padded[:new_h, :new_w] = resized / 255.0
        tensor = padded.transpose(2, 0, 1)[None]
        name = self.encoder.get_inputs()[0].name
        embedding = self.encoder.run(None, {name: tensor})[0]
        self._embedding_cache = (key, (embedding, scale))
        return embedding, scale

    def predict(self, image, point):  # pragma: no cover - needs model weights
        embedding, scale = self._encode(image)
        h, w = image.shape[:2]
        coords = np.array([[[point[0] * scale, point[1] * scale]]], dtype=np.float32)
        feed = {}
        names = {i.name for i in self.decoder.get_inputs()}
        first = self.decoder.get_inputs()[0].name
        feed[first] = embedding
        if "point_coords" in names:
            feed["point_coords"] = coords
        if "point_labels" in names:
            feed["point_labels"] = np.ones((1, 1), dtype=np.float32)
        if "mask_input" in names:
            feed["mask_input"] = np.zeros((1, 1, 256, 256), dtype=np.float32)
        if "has_mask_input" in names:
            feed["has_mask_input"] = np.zeros(1, dtype=np.float32)
        if "orig_im_size" in names:
            feed["orig_im_size"] = np.array([h, w], dtype=np.float32)
        outputs = self.decoder.run(None, feed)
        logits = outputs[0]
        scores = outputs[1] if len(outputs) > 1 else np.ones((1, logits.shape[1]))
        best = int(np.argmax(scores[0]))
        mask = logits[0, best] > 0
        if mask.shape != (h, w):
            from PIL import Image

            mask = (
                np.asarray(
                    Image.fromarray(mask.astype(np.uint8) * 255).resize((w, h), Image.NEAREST)
                )
                > 0
            )
        return mask, float(scores[0, best])
