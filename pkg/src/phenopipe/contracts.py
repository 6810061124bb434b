"""Shared enum contract, loaded from the JSON file the web UI also consumes."""

from __future__ import annotations

import json
from importlib import resources

_raw = json.loads(
    resources.files("phenopipe").joinpath("contracts/label_enums.json").read_text("utf-8")
)

SUITABILITY_CLASSES: tuple[str, ...] = tuple(_raw["suitability"])
COLOR_CLASSES: tuple[str, ...] = tuple(_raw["color"])
SHAPE_CLASSES: tuple[str, ...] = tuple(_raw["shape"])
SPLOTCH_CLASSES: tuple[str, ...] = tuple(_raw["splotches"])
TREATMENT_CLASSES: tuple[str, ...] = tuple(_raw["treatment"])


def contract_dict() -> dict:
    return dict(_raw)
