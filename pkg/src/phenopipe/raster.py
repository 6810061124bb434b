"""Raster primitives shared by the image stages.

Conventions: RGB images are uint8 arrays of shape (H, W, 3), indexed
[y, x]. Points are (x, y) pairs. Binary rasters are uint8 {0, 255} at
module boundaries and bool internally. Hue is in degrees [0, 360),
saturation and value are fractions in [0, 1].
"""

from __future__ import annotations

import math

import numpy as np
from PIL import Image


def load_rgb(path) -> np.ndarray:
    """Read a JPEG/PNG file as an (H, W, 3) uint8 array."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def save_png(path, array: np.ndarray) -> None:
    """Write an RGB or grayscale uint8 array as PNG."""
    mode = "L" if array.ndim == 2 else "RGB"
    Image.fromarray(np.ascontiguousarray(array.astype(np.uint8)), mode=mode).save(
        path, format="PNG"
    )


def load_gray(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("L"), dtype=np.uint8)


def rgb_to_gray(image: np.ndarray) -> np.ndarray:
    """BT.601 luma as float64 in [0, 255]."""
    rgb = image.astype(np.float64)
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def rgb_to_hsv(image: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized RGB -> (hue degrees, saturation, value) arrays."""
    rgb = image.astype(np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = np.max(rgb, axis=-1)
    minc = np.min(rgb, axis=-1)
    delta = maxc - minc
    v = maxc
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)

    h = np.zeros_like(maxc)
    nonzero = delta > 0
    rmax = nonzero & (maxc == r)
    gmax = nonzero & (maxc == g) & ~rmax
    bmax = nonzero & ~rmax & ~gmax
    d = np.where(nonzero, delta, 1.0)
    h[rmax] = ((g - b)[rmax] / d[rmax]) % 6.0
    h[gmax] = (b - r)[gmax] / d[gmax] + 2.0
    h[bmax] = (r - g)[bmax] / d[bmax] + 4.0
    return (h * 60.0) % 360.0, s, v


def _convolve1d(a: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    r = len(kernel) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    padded = np.pad(a, pad, mode="reflect")
    out = np.zeros(a.shape, dtype=np.float64)
    for i, k in enumerate(kernel):
        sl = [slice(None), slice(None)]
        sl[axis] = slice(i, i + a.shape[axis])
        out += k * padded[tuple(sl)]
    return out


def gaussian_blur(gray: np.ndarray, sigma: float) -> np.ndarray:
    radius = max(1, int(math.ceil(3.0 * sigma)))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(xs**2) / (2.0 * sigma * sigma))
    kernel /= kernel.sum()
    return _convolve1d(_convolve1d(gray, kernel, 0), kernel, 1)


def sobel_gradients(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """3x3 Sobel responses (gx, gy), separable smooth [1,2,1] x diff [-1,0,1]."""
    smooth = np.array([1.0, 2.0, 1.0])
    diff = np.array([-1.0, 0.0, 1.0])
    gx = _convolve1d(_convolve1d(gray, smooth, 0), diff, 1)
    gy = _convolve1d(_convolve1d(gray, diff, 0), smooth, 1)
    return gx, gy


def box_mean(gray: np.ndarray, size: int) -> np.ndarray:
    """Local arithmetic mean over a size x size window, edge-replicated."""
    if size % 2 == 0 or size < 1:
        raise ValueError("window size must be odd and positive")
    r = size // 2
    padded = np.pad(gray.astype(np.float64), r, mode="edge")
    csum = np.cumsum(np.cumsum(padded, axis=0), axis=1)
    csum = np.pad(csum, ((1, 0), (1, 0)))
    h, w = gray.shape
    total = (
        csum[size : size + h, size : size + w]
        - csum[0:h, size : size + w]
        - csum[size : size + h, 0:w]
        + csum[0:h, 0:w]
    )
    return total / float(size * size)


def dilate_binary(mask: np.ndarray, kernel_size: int, iterations: int = 1) -> np.ndarray:
    """Morphological dilation by a square all-ones kernel, applied repeatedly."""
    if kernel_size < 3 or kernel_size % 2 == 0:
        raise ValueError("kernel size must be odd and >= 3")
    if iterations < 1:
        raise ValueError("iterations must be positive")
    out = mask.astype(bool)
    r = kernel_size // 2
    for _ in range(iterations):
        padded = np.pad(out, r)
        horiz = np.zeros_like(out)
        for dx in range(kernel_size):
            horiz |= padded[r:-r, dx : dx + out.shape[1]]
        padded = np.pad(horiz, r)
        vert = np.zeros_like(out)
        for dy in range(kernel_size):
            vert |= padded[dy : dy + out.shape[0], r:-r]
        out = vert
    return out


def label_components(mask: np.ndarray, connectivity: int = 8) -> tuple[np.ndarray, int]:
    """Union-find labeling over row runs. Returns (labels 1..n, n)."""
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    mask = mask.astype(bool)
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=np.int32)
    if not mask.any():
        return labels, 0

    padded = np.pad(mask, ((0, 0), (1, 1))).astype(np.int8)
    d = np.diff(padded, axis=1)
    sy, sx = np.nonzero(d == 1)
    _, ex = np.nonzero(d == -1)
    # nonzero is row-major, so the i-th start pairs with the i-th end

    parent = [0]

    def find(i: int) -> int:
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    reach = 1 if connectivity == 8 else 0
    run_label = np.empty(len(sx), dtype=np.int32)
    prev_start, prev_end = 0, 0  # run index window of the previous row
    row_start = 0
    i = 0
    n_runs = len(sx)
    while i < n_runs:
        y = sy[i]
        row_end = i
        while row_end < n_runs and sy[row_end] == y:
            row_end += 1
        if prev_end and sy[prev_start] != y - 1:
            prev_start = prev_end  # previous row had no runs adjacent to this one
        j = prev_start
        for cur in range(i, row_end):
            s, e = sx[cur], ex[cur]
            lo, hi = s - reach, e + reach
            while j < prev_end and ex[j] <= lo:
                j += 1
            lab = 0
            k = j
            while k < prev_end and sx[k] < hi:
                other = find(run_label[k])
                if lab == 0:
                    lab = other
                elif other != lab:
                    parent[other] = lab
                k += 1
            if lab == 0:
                parent.append(len(parent))
                lab = len(parent) - 1
            run_label[cur] = lab
        prev_start, prev_end = i, row_end
        i = row_end

    remap = np.zeros(len(parent), dtype=np.int32)
    count = 0
    for idx in range(1, len(parent)):
        root = find(idx)
        if remap[root] == 0:
            count += 1
            remap[root] = count
        remap[idx] = remap[root]
    for idx in range(n_runs):
        labels[sy[idx], sx[idx] : ex[idx]] = remap[find(run_label[idx])]
    return labels, count


# Clockwise Moore neighborhood starting East, in screen coordinates (y down).
_MOORE = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))
_MOORE_INDEX = {d: i for i, d in enumerate(_MOORE)}


def trace_boundary(mask: np.ndarray) -> list[tuple[int, int]]:
    """Ordered external boundary of the True region (Moore tracing).

    The region is assumed 8-connected. Returns (x, y) points; terminates by
    Jacob's criterion (re-entering the start with the same backtrack).
    """
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        raise ValueError("empty mask")
    top = int(ys.min())
    start = (int(xs[ys == top].min()), top)

    h, w = mask.shape

    def fg(p: tuple[int, int]) -> bool:
        return 0 <= p[0] < w and 0 <= p[1] < h and bool(mask[p[1], p[0]])

    start_back = (start[0] - 1, start[1])  # West neighbor is background by choice
    cur, back = start, start_back
    boundary = [start]
    for _ in range(4 * len(xs) + 8):
        di = _MOORE_INDEX[(back[0] - cur[0], back[1] - cur[1])]
        nxt = None
        for step in range(1, 9):
            d = (di + step) % 8
            cand = (cur[0] + _MOORE[d][0], cur[1] + _MOORE[d][1])
            if fg(cand):
                nxt = cand
                back = (cur[0] + _MOORE[(d - 1) % 8][0], cur[1] + _MOORE[(d - 1) % 8][1])
                break
        if nxt is None:
            return boundary  # isolated pixel
        if nxt == start and back == start_back:
            return boundary
        cur = nxt
        boundary.append(cur)
    return boundary


def fill_holes(mask: np.ndarray) -> np.ndarray:
    """Region plus any enclosed holes, via background labeling."""
    padded = np.pad(mask.astype(bool), 1)
    bg_labels, _ = label_components(~padded, connectivity=4)
    outside = bg_labels[0, 0]
    filled = bg_labels != outside
    return filled[1:-1, 1:-1]


def component_bbox(mask: np.ndarray) -> tuple[int, int, int, int]:
    """Tight (x, y, w, h) bounding rectangle of the True pixels."""
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        raise ValueError("empty mask")
    x0, x1 = int(xs.min()), int(xs.max())
    y0, y1 = int(ys.min()), int(ys.max())
    return x0, y0, x1 - x0 + 1, y1 - y0 + 1


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull; returns hull vertices as an (n, 2) array."""
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if len(pts) <= 2:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def hull_pixel_area(hull: np.ndarray) -> float:
    """Lattice-point count of a convex hull of integer points (Pick's theorem)."""
    if len(hull) == 0:
        return 0.0
    if len(hull) == 1:
        return 1.0
    if len(hull) == 2:
        d = np.abs(hull[1] - hull[0])
        return float(math.gcd(int(round(d[0])), int(round(d[1]))) + 1)
    x, y = hull[:, 0], hull[:, 1]
    area = 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))
    boundary = 0
    for i in range(len(hull)):
        dx = int(round(hull[(i + 1) % len(hull)][0] - hull[i][0]))
        dy = int(round(hull[(i + 1) % len(hull)][1] - hull[i][1]))
        boundary += math.gcd(abs(dx), abs(dy))
    return area + boundary / 2.0 + 1.0


def min_area_rect(points: np.ndarray) -> tuple[float, float, float]:
    """Minimum-area enclosing rectangle of a point set.

    Returns (angle_deg, long_side, short_side) where angle_deg is the screen
    angle of the rectangle's long axis, normalized to (-90, 90]. Sides are
    pixel extents (coordinate range + 1).
    """
    hull = convex_hull(points)
    if len(hull) == 1:
        return 0.0, 1.0, 1.0
    candidates = []
    n = len(hull)
    for i in range(n):
        p, q = hull[i], hull[(i + 1) % n]
        dx, dy = q[0] - p[0], q[1] - p[1]
        if dx == 0 and dy == 0:
            continue
        theta = math.atan2(dy, dx)
        c, s = math.cos(theta), math.sin(theta)
        u = hull[:, 0] * c + hull[:, 1] * s
        v = -hull[:, 0] * s + hull[:, 1] * c
        w = float(u.max() - u.min())
        h = float(v.max() - v.min())
        area = (w + 1.0) * (h + 1.0)
        if w >= h:
            angle = math.degrees(theta)
            long_side, short_side = w + 1.0, h + 1.0
        else:
            angle = math.degrees(theta) + 90.0
            long_side, short_side = h + 1.0, w + 1.0
        angle = (angle + 90.0) % 180.0 - 90.0
        if angle == -90.0:
            angle = 90.0
        candidates.append((area, abs(angle), angle, long_side, short_side))
    if not candidates:
        return 0.0, 1.0, 1.0
    candidates.sort(key=lambda t: (round(t[0], 9), t[1]))
    _, _, angle, long_side, short_side = candidates[0]
    return angle, long_side, short_side


def boundary_perimeter(boundary: list[tuple[int, int]]) -> float:
    """Perimeter of a closed pixel chain with Kulpa's bias correction."""
    if len(boundary) <= 1:
        return 4.0  # lone pixel: unit square
    straight = diagonal = 0
    n = len(boundary)
    for i in range(n):
        x0, y0 = boundary[i]
        x1, y1 = boundary[(i + 1) % n]
        if abs(x1 - x0) + abs(y1 - y0) == 1:
            straight += 1
        else:
            diagonal += 1
    return 0.948 * straight + 1.340 * diagonal


def rotated_canvas(w: int, h: int, angle_deg: float) -> tuple[int, int]:
    """Expanded canvas size holding a w x h raster rotated by angle_deg."""
    theta = math.radians(angle_deg)
    c, s = abs(math.cos(theta)), abs(math.sin(theta))
    return int(math.ceil(w * c + h * s)), int(math.ceil(w * s + h * c))


def rotate_image(image: np.ndarray, angle_deg: float, fill: int = 0) -> np.ndarray:
    """Rotate counterclockwise (screen direction) about the center.

    The canvas expands so no pixel is cropped; uncovered pixels take `fill`.
    Bilinear resampling; exact array rotation for multiples of 90 degrees.
    """
    angle_deg = angle_deg % 360.0
    if angle_deg % 90.0 == 0.0:
        return np.ascontiguousarray(np.rot90(image, int(angle_deg // 90)))
    h, w = image.shape[:2]
    out_w, out_h = rotated_canvas(w, h, angle_deg)
    theta = math.radians(angle_deg)
    c, s = math.cos(theta), math.sin(theta)
    yy, xx = np.mgrid[0:out_h, 0:out_w]
    xo = xx - (out_w - 1) / 2.0
    yo = yy - (out_h - 1) / 2.0
    # screen-CCW rotation in y-down coordinates; inverse map output -> source
    xs = c * xo - s * yo + (w - 1) / 2.0
    ys = s * xo + c * yo + (h - 1) / 2.0
    valid = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, w - 1)
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = np.clip(xs - x0, 0.0, 1.0)
    fy = np.clip(ys - y0, 0.0, 1.0)
    img = image.astype(np.float64)
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    out = top * (1 - fy) + bot * fy
    result = np.full(out.shape, float(fill))
    mask = valid if img.ndim == 2 else valid[..., None]
    np.copyto(result, out, where=np.broadcast_to(mask, out.shape))
    return np.clip(np.rint(result), 0, 255).astype(np.uint8)


def rotate_mask(mask: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate a boolean mask forward (pixel count never increases).

    Multiples of 90 degrees take the exact array path, preserving counts.
    """
    angle_deg = angle_deg % 360.0
    if angle_deg % 90.0 == 0.0:
        return np.ascontiguousarray(np.rot90(mask, int(angle_deg // 90)))
    mask = mask.astype(bool)
    h, w = mask.shape
    out_w, out_h = rotated_canvas(w, h, angle_deg)
    theta = math.radians(angle_deg)
    c, s = math.cos(theta), math.sin(theta)
    ys, xs = np.nonzero(mask)
    xi = xs - (w - 1) / 2.0
    yi = ys - (h - 1) / 2.0
    # forward screen-CCW map in y-down coordinates
    xr = c * xi + s * yi + (out_w - 1) / 2.0
    yr = -s * xi + c * yi + (out_h - 1) / 2.0
    xr = np.floor(xr + 0.5).astype(np.int64)
    yr = np.floor(yr + 0.5).astype(np.int64)
    keep = (xr >= 0) & (xr < out_w) & (yr >= 0) & (yr < out_h)
    out = np.zeros((out_h, out_w), dtype=bool)
    out[yr[keep], xr[keep]] = True
    return out
