"""Predict missing treatments from morphology columns.

Morphology becomes a 9-value feature row (one-hot color, one-hot shape,
ordinal splotch level); a bagged ensemble trained on rows whose treatment
was read fills in the rows where it was not. Read values are never
overwritten, and every row carries a provenance flag.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import ml
from .contracts import COLOR_CLASSES, SHAPE_CLASSES, TREATMENT_CLASSES
from .errors import ModelError
from .sheet import ResultsSheet, SheetRow

FEATURE_NAMES = (
    *(f"color_{c}" for c in COLOR_CLASSES),
    *(f"shape_{s}" for s in SHAPE_CLASSES),
    "splotch_level",
)


def treatment_encoder() -> ml.LabelEncoder:
    return ml.LabelEncoder(sorted(TREATMENT_CLASSES))


def encode_morphology_row(color: str, shape: str, splotches: str) -> np.ndarray:
    """9-value feature row for one sheet row's morphology cells."""
    color_bits = ml.one_hot([color], COLOR_CLASSES)[0]
    shape_bits = ml.one_hot([shape], SHAPE_CLASSES)[0]
    level = ml.ordinal_encode(splotches)
    return np.concatenate([color_bits, shape_bits, [level]]).astype(np.float64)


def _has_morphology(row: SheetRow) -> bool:
    return (
        row.leaf_color is not None
        and row.leaf_shape is not None
        and row.brown_splotches is not None
    )


def build_training_set(sheet: ResultsSheet) -> ml.Dataset:
    """Rows with a read treatment and full morphology become training pairs."""
    encoder = treatment_encoder()
    rows, targets = [], []
    for row in sheet:
        if row.treatment is not None and _has_morphology(row):
            rows.append(encode_morphology_row(row.leaf_color, row.leaf_shape, row.brown_splotches))
            targets.append(encoder.encode(row.treatment))
    if len(rows) < 2:
        raise ModelError(f"need at least 2 usable rows to train, found {len(rows)}")
    if len(set(targets)) < 2:
        raise ModelError("degenerate target: all usable rows share one treatment")
    return ml.Dataset(np.array(rows), np.array(targets), list(FEATURE_NAMES), ["treatment"])


def train_treatment_model(
    sheet: ResultsSheet, hyperparams: dict | None = None, seed: int = 0
) -> ml.EnsembleModel:
    return ml.fit(build_training_set(sheet), "bagged", hyperparams, seed, treatment_encoder())


def fill_treatments(sheet: ResultsSheet, model: ml.EnsembleModel) -> ResultsSheet:
    """Predict treatments for rows that lack one; flag provenance per row.

    Rows keep any treatment_source already set, so re-running is a no-op.
    Rows without morphology stay null rather than being fed zero vectors.
    """
    if model.encoder is None or set(model.encoder.classes) != set(TREATMENT_CLASSES):
        raise ModelError("model does not carry a treatment encoding")
    out = []
    for row in sheet:
        row = dataclasses.replace(row)
        if row.treatment is not None:
            if row.treatment_source is None:
                row.treatment_source = "ocr"
        elif _has_morphology(row):
            features = encode_morphology_row(
                row.leaf_color, row.leaf_shape, row.brown_splotches
            )
            row.treatment = model.encoder.decode(ml.predict(model, features))
            row.treatment_source = "predicted"
        out.append(row)
    return ResultsSheet(out)
