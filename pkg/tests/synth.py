"""Synthetic scene builders shared across test modules."""

from __future__ import annotations

import math

import numpy as np


def blank(w: int, h: int, color=(0, 0, 0)) -> np.ndarray:
    img = np.zeros((h, w, 3), dtype=np.uint8)
    img[:, :] = color
    return img


def ellipse_mask(w: int, h: int, center, axes, angle_deg: float = 0.0) -> np.ndarray:
    """Boolean mask of a filled ellipse; axes are semi-axes (a, b)."""
    cx, cy = center
    a, b = axes
    yy, xx = np.mgrid[0:h, 0:w]
    t = math.radians(angle_deg)
    c, s = math.cos(t), math.sin(t)
    xr = (xx - cx) * c + (yy - cy) * s
    yr = -(xx - cx) * s + (yy - cy) * c
    return (xr / a) ** 2 + (yr / b) ** 2 <= 1.0


def rect_mask(w: int, h: int, x0: int, y0: int, rw: int, rh: int) -> np.ndarray:
    mask = np.zeros((h, w), dtype=bool)
    mask[y0 : y0 + rh, x0 : x0 + rw] = True
    return mask


def rotated_rect_mask(w: int, h: int, center, rw: int, rh: int, angle_deg: float) -> np.ndarray:
    """Filled rectangle of rw x rh rotated by angle_deg about its center."""
    cx, cy = center
    yy, xx = np.mgrid[0:h, 0:w]
    t = math.radians(angle_deg)
    c, s = math.cos(t), math.sin(t)
    u = (xx - cx) * c + (yy - cy) * s
    v = -(xx - cx) * s + (yy - cy) * c
    return (np.abs(u) <= rw / 2) & (np.abs(v) <= rh / 2)


def paint(img: np.ndarray, mask: np.ndarray, color) -> np.ndarray:
    img[mask] = color
    return img


GREEN = (100, 170, 50)
DARK_GREEN = (90, 130, 40)
BROWN = (110, 70, 30)
WHITE = (250, 250, 250)
GRAY_BG = (90, 90, 90)

# leaf tones whose hue sits inside the default locator window
LEAF_TONES = ((140, 200, 60), (110, 180, 50), (100, 160, 45), (150, 190, 60))


def locator_scene(seed: int, w: int = 320, h: int = 240):
    """A seeded scene of separated green ellipse leaves plus distractors.

    Returns (image, leaf_masks). Leaves are spaced so the default dilation
    radius cannot merge their contours.
    """
    rng = np.random.default_rng(seed)
    img = blank(w, h, GRAY_BG)
    n_leaves = int(rng.integers(3, 7))
    placed = []  # (cx, cy, radius)
    masks = []

    def far_enough(cx, cy, r):
        return all(
            (cx - px) ** 2 + (cy - py) ** 2 >= (r + pr + 30) ** 2 for px, py, pr in placed
        )

    attempts = 0
    while len(masks) < n_leaves and attempts < 500:
        attempts += 1
        a = float(rng.uniform(14, 30))
        b = float(rng.uniform(12, min(26.0, a)))
        cx = float(rng.uniform(a + 18, w - a - 18))
        cy = float(rng.uniform(a + 18, h - a - 18))
        if not far_enough(cx, cy, a):
            continue
        angle = float(rng.uniform(0, 180))
        mask = ellipse_mask(w, h, (cx, cy), (a, b), angle)
        tone = LEAF_TONES[int(rng.integers(len(LEAF_TONES)))]
        paint(img, mask, tone)
        placed.append((cx, cy, a))
        masks.append(mask)

    # distractors: brown ellipses and a white label rectangle
    for _ in range(int(rng.integers(1, 3))):
        a = float(rng.uniform(12, 24))
        cx = float(rng.uniform(a, w - a))
        cy = float(rng.uniform(a, h - a))
        if far_enough(cx, cy, a):
            paint(img, ellipse_mask(w, h, (cx, cy), (a, a * 0.7)), BROWN)
            placed.append((cx, cy, a))
    rx = int(rng.integers(0, w - 40))
    ry = int(rng.integers(0, h - 24))
    if far_enough(rx + 20, ry + 12, 26):
        paint(img, rect_mask(w, h, rx, ry, 40, 24), WHITE)

    return img, masks
