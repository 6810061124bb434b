"""Leaf morphology: numeric features, suitability filtering, per-leaf
classification, and per-image mode aggregation.

The 14-feature vector is this module's own design: hue/saturation/green
statistics target color, silhouette statistics (aspect ratio, width
profile, solidity) target shape, and the brown-pixel fraction targets the
splotch level. Revise here if a retraining study changes the feature set.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import ml, raster
from .contracts import COLOR_CLASSES, SHAPE_CLASSES, SPLOTCH_CLASSES, SUITABILITY_CLASSES
from .errors import ModelError, PhenoError
from .segment import IsolatedLeaf

FEATURE_NAMES = (
    "area_frac",
    "aspect_ratio",
    "extent",
    "solidity",
    "compactness",
    "hue_mean",
    "hue_std",
    "sat_mean",
    "val_mean",
    "green_mean",
    "yellow_ratio",
    "brown_ratio",
    "width_profile_skew",
    "width_profile_peak_pos",
)

MORPH_TARGETS = ("color", "shape", "splotches")
_TARGET_CLASSES = {
    "color": COLOR_CLASSES,
    "shape": SHAPE_CLASSES,
    "splotches": SPLOTCH_CLASSES,
}


@dataclass(frozen=True)
class MorphologyLabel:
    color: str
    shape: str
    splotches: str

    def __post_init__(self):
        for value, classes, name in (
            (self.color, COLOR_CLASSES, "color"),
            (self.shape, SHAPE_CLASSES, "shape"),
            (self.splotches, SPLOTCH_CLASSES, "splotches"),
        ):
            if value not in classes:
                raise ValueError(f"illegal {name} value {value!r}")


def extract_features(leaf: IsolatedLeaf) -> np.ndarray:
    """The 14-feature vector, computed on the masked pixel set only."""
    mask = leaf.mask_crop.astype(bool)
    area = int(mask.sum())
    if area == 0:
        raise PhenoError("empty leaf mask")
    crop_h, crop_w = mask.shape
    area_frac = area / (crop_h * crop_w)

    points = np.argwhere(mask)[:, ::-1]
    _, long_side, short_side = raster.min_area_rect(points)
    aspect_ratio = long_side / short_side

    x, y, w, h = raster.component_bbox(mask)
    extent = area / (w * h)

    hull = raster.convex_hull(points)
    hull_px = raster.hull_pixel_area(hull)
    solidity = min(1.0, area / hull_px) if hull_px > 0 else 1.0

    perimeter = raster.boundary_perimeter(raster.trace_boundary(mask))
    compactness = perimeter * perimeter / (4.0 * math.pi * area)

    hh, ss, vv = raster.rgb_to_hsv(leaf.crop)
    hues = hh[mask]
    sats = ss[mask]
    vals = vv[mask]
    hue_mean = float(hues.mean())
    hue_std = float(hues.std())
    sat_mean = float(sats.mean())
    val_mean = float(vals.mean())
    green_mean = float(leaf.crop[:, :, 1][mask].mean())
    yellow_ratio = float(((hues >= 40.0) & (hues <= 70.0)).mean())
    brown_ratio = float(((hues >= 10.0) & (hues <= 40.0) & (vals < 0.6)).mean())

    profile = mask.sum(axis=0).astype(np.float64)
    if crop_w > 1:
        positions = np.arange(crop_w) / (crop_w - 1)
        peak_pos = float(np.argmax(profile) / (crop_w - 1))
        total = profile.sum()
        mean_pos = float((profile * positions).sum() / total)
        var = float((profile * (positions - mean_pos) ** 2).sum() / total)
        std = math.sqrt(var)
        if std > 1e-9:
            skew = float((profile * (positions - mean_pos) ** 3).sum() / (total * std**3))
        else:
            skew = 0.0
    else:
        peak_pos, skew = 0.5, 0.0

    return np.array(
        [
            area_frac,
            aspect_ratio,
            extent,
            solidity,
            compactness,
            hue_mean,
            hue_std,
            sat_mean,
            val_mean,
            green_mean,
            yellow_ratio,
            brown_ratio,
            skew,
            peak_pos,
        ]
    )


def suitability_encoder() -> ml.LabelEncoder:
    return ml.LabelEncoder(sorted(SUITABILITY_CLASSES))


def morphology_encoders() -> list[ml.LabelEncoder]:
    return [ml.LabelEncoder(sorted(_TARGET_CLASSES[t])) for t in MORPH_TARGETS]


def build_suitability_dataset(feature_rows, good_flags) -> ml.Dataset:
    encoder = suitability_encoder()
    targets = [encoder.encode("good" if flag else "bad") for flag in good_flags]
    return ml.Dataset(
        np.asarray(feature_rows, dtype=np.float64),
        np.asarray(targets),
        list(FEATURE_NAMES),
        ["suitability"],
    )


def build_morphology_dataset(feature_rows, labels: list[MorphologyLabel]) -> ml.Dataset:
    encoders = morphology_encoders()
    targets = [
        [
            encoders[0].encode(lab.color),
            encoders[1].encode(lab.shape),
            encoders[2].encode(lab.splotches),
        ]
        for lab in labels
    ]
    return ml.Dataset(
        np.asarray(feature_rows, dtype=np.float64),
        np.asarray(targets),
        list(FEATURE_NAMES),
        list(MORPH_TARGETS),
    )


def classify_suitability(features, model: ml.EnsembleModel) -> bool:
    """Ensemble verdict: True when the leaf is fit for morphology analysis."""
    if model.encoder is None or set(model.encoder.classes) != set(SUITABILITY_CLASSES):
        raise ModelError("model does not carry a suitability encoding")
    return model.encoder.decode(ml.predict(model, features)) == "good"


def classify_morphology(features, model: ml.MultiOutputModel) -> MorphologyLabel:
    """One prediction per target, decoded through the stored encoders."""
    names = [name for name, _ in model.targets]
    if names != list(MORPH_TARGETS):
        raise ModelError(f"expected targets {MORPH_TARGETS}, model has {names}")
    decoded = {}
    for name, sub in model.targets:
        if sub.encoder is None:
            raise ModelError(f"target {name} lacks a label encoding")
        value = sub.encoder.decode(ml.predict(sub, features))
        if value not in _TARGET_CLASSES[name]:
            raise ModelError(f"decoded {name} value {value!r} outside its enum")
        decoded[name] = value
    return MorphologyLabel(**decoded)


def aggregate_image(labels: list[MorphologyLabel]) -> MorphologyLabel | None:
    """Per-field mode; ties break by declared enum order. None marks
    an image with no eligible leaves (morphology cells stay null)."""
    if not labels:
        return None

    def mode(values, declared_order):
        counts = Counter(values)
        best = max(counts.values())
        for option in declared_order:
            if counts.get(option) == best:
                return option
        raise AssertionError("unreachable: mode not in declared order")

    return MorphologyLabel(
        color=mode([l.color for l in labels], COLOR_CLASSES),
        shape=mode([l.shape for l in labels], SHAPE_CLASSES),
        splotches=mode([l.splotches for l in labels], SPLOTCH_CLASSES),
    )


def label_for_image(
    leaves: list[IsolatedLeaf],
    suitability_model: ml.EnsembleModel,
    morphology_model: ml.MultiOutputModel,
) -> MorphologyLabel | None:
    """Classify every suitable leaf and aggregate to the image's label."""
    labels = []
    for leaf in leaves:
        features = extract_features(leaf)
        if classify_suitability(features, suitability_model):
            labels.append(classify_morphology(features, morphology_model))
    return aggregate_image(labels)
