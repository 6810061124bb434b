"""Approximate leaf locations: color filter, edge detection, dilation,
contour pruning, and bounding-box midpoints used as segmentation prompts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import raster


@dataclass(frozen=True)
class HsvRange:
    """Inclusive HSV window; hue wraparound is not supported."""

    h_lo: float = 35.0
    h_hi: float = 95.0
    s_lo: float = 0.15
    s_hi: float = 1.0
    v_lo: float = 0.15
    v_hi: float = 1.0

    def __post_init__(self):
        for lo, hi, name in (
            (self.h_lo, self.h_hi, "hue"),
            (self.s_lo, self.s_hi, "saturation"),
            (self.v_lo, self.v_hi, "value"),
        ):
            if lo > hi:
                raise ValueError(f"{name} range has lo > hi")


@dataclass(frozen=True)
class LocatorConfig:
    hsv: HsvRange = field(default_factory=HsvRange)
    edge_lo: float = 50.0
    edge_hi: float = 150.0
    dilate_kernel: int = 9
    dilate_iterations: int = 3
    min_frac: float = 0.05
    min_green: float = 100.0


@dataclass
class LeafCandidate:
    """A pruned contour with its prompt point."""

    contour: list[tuple[int, int]]
    bbox: tuple[int, int, int, int]  # x, y, w, h
    midpoint: tuple[float, float]
    mean_green: float
    area: int


def bbox_midpoint(bbox) -> tuple[float, float]:
    x, y, w, h = bbox
    return (x + w / 2, y + h / 2)


def hsv_filter(image: np.ndarray, hsv_range: HsvRange) -> np.ndarray:
    """Keep pixels inside the HSV window, set all others to black."""
    h, s, v = raster.rgb_to_hsv(image)
    keep = (
        (h >= hsv_range.h_lo)
        & (h <= hsv_range.h_hi)
        & (s >= hsv_range.s_lo)
        & (s <= hsv_range.s_hi)
        & (v >= hsv_range.v_lo)
        & (v <= hsv_range.v_hi)
    )
    out = np.zeros_like(image)
    out[keep] = image[keep]
    return out


def edge_map(image: np.ndarray, t_lo: float, t_hi: float) -> np.ndarray:
    """Canny-style edges: smooth, Sobel, non-max suppression, hysteresis."""
    if not 0 < t_lo < t_hi:
        raise ValueError("thresholds must satisfy 0 < t_lo < t_hi")
    gray = raster.rgb_to_gray(image) if image.ndim == 3 else image.astype(np.float64)
    smooth = raster.gaussian_blur(gray, sigma=1.4)
    gx, gy = raster.sobel_gradients(smooth)
    mag = np.hypot(gx, gy)

    # non-maximum suppression along the quantized gradient direction
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    sector = np.zeros(angle.shape, dtype=np.int8)
    sector[(angle >= 22.5) & (angle < 67.5)] = 1
    sector[(angle >= 67.5) & (angle < 112.5)] = 2
    sector[(angle >= 112.5) & (angle < 157.5)] = 3
    offsets = {0: (1, 0), 1: (1, 1), 2: (0, 1), 3: (-1, 1)}
    padded = np.pad(mag, 1)
    keep = np.zeros(mag.shape, dtype=bool)
    for sec, (dx, dy) in offsets.items():
        fwd = padded[1 + dy : 1 + dy + mag.shape[0], 1 + dx : 1 + dx + mag.shape[1]]
        bwd = padded[1 - dy : 1 - dy + mag.shape[0], 1 - dx : 1 - dx + mag.shape[1]]
        keep |= (sector == sec) & (mag >= fwd) & (mag >= bwd)
    nms = np.where(keep, mag, 0.0)

    weak = nms >= t_lo
    strong = nms >= t_hi
    if not strong.any():
        return np.zeros(mag.shape, dtype=np.uint8)
    labels, n = raster.label_components(weak, connectivity=8)
    connected = np.zeros(n + 1, dtype=bool)
    connected[labels[strong]] = True
    edges = connected[labels] & weak
    return edges.astype(np.uint8) * 255


def dilate(binary: np.ndarray, kernel_size: int, iterations: int) -> np.ndarray:
    """Binary dilation; accepts and returns {0, 255} rasters."""
    return raster.dilate_binary(binary > 0, kernel_size, iterations).astype(np.uint8) * 255


def find_candidates(image: np.ndarray, cfg: LocatorConfig | None = None) -> list[LeafCandidate]:
    """Full location pipeline; an empty list is a valid result."""
    cfg = cfg or LocatorConfig()
    img_h, img_w = image.shape[:2]
    filtered = hsv_filter(image, cfg.hsv)
    edges = edge_map(filtered, cfg.edge_lo, cfg.edge_hi)
    if not edges.any():
        return []
    dilated = dilate(edges, cfg.dilate_kernel, cfg.dilate_iterations)
    labels, n = raster.label_components(dilated > 0, connectivity=8)
    if n == 0:
        return []

    ys, xs = np.nonzero(labels)
    labs = labels[ys, xs]
    order = np.argsort(labs, kind="stable")
    ys, xs, labs = ys[order], xs[order], labs[order]
    starts = np.searchsorted(labs, np.arange(1, n + 2))
    green = image[:, :, 1].astype(np.float64)

    candidates = []
    for lab in range(1, n + 1):
        lo, hi = starts[lab - 1], starts[lab]
        if lo == hi:
            continue
        cx, cy = xs[lo:hi], ys[lo:hi]
        x0, x1 = int(cx.min()), int(cx.max())
        y0, y1 = int(cy.min()), int(cy.max())
        w, h = x1 - x0 + 1, y1 - y0 + 1
        if w < cfg.min_frac * img_w or h < cfg.min_frac * img_h:
            continue
        window = labels[y0 : y1 + 1, x0 : x0 + w] == lab
        filled = raster.fill_holes(window)
        mean_green = float(green[y0 : y1 + 1, x0 : x0 + w][filled].mean())
        if mean_green < cfg.min_green:
            continue
        boundary = raster.trace_boundary(window)
        contour = [(x + x0, y + y0) for x, y in boundary]
        bbox = (x0, y0, w, h)
        candidates.append(
            LeafCandidate(
                contour=contour,
                bbox=bbox,
                midpoint=bbox_midpoint(bbox),
                mean_green=mean_green,
                area=int(filled.sum()),
            )
        )
    candidates.sort(key=lambda c: (-c.area, c.bbox[0], c.bbox[1]))
    return candidates


def candidate_to_json(candidate: LeafCandidate) -> dict:
    return {
        "bbox": list(candidate.bbox),
        "midpoint": list(candidate.midpoint),
        "mean_green": candidate.mean_green,
        "area": candidate.area,
    }


def candidate_from_json(obj: dict) -> LeafCandidate:
    bbox = tuple(obj["bbox"])
    return LeafCandidate(
        contour=[],
        bbox=bbox,
        midpoint=tuple(obj.get("midpoint", bbox_midpoint(bbox))),
        mean_green=float(obj.get("mean_green", 255.0)),
        area=int(obj.get("area", 0)),
    )
