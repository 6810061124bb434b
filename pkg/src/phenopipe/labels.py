"""Field extraction from raw label text.

Tags carry treatment (C or D), block, row, position, and genotype. Each
field parses independently; anything that does not match stays null.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

GENOTYPE_PATTERN = r"[A-Z]{2,}(-\d+)+(_\d+)*(_[A-Z]+)?"

_BLOCK_RE = re.compile(r"B(\d+)")
_ROW_RE = re.compile(r"R(\d+)")
_POS_RE = re.compile(r"P(\d+)")
_GENOTYPE_RE = re.compile(GENOTYPE_PATTERN)
_MASK_RE = re.compile(r"[BRP]\d+")

# OCR frequently glues punctuation onto the single-letter treatment token
_TOKEN_STRIP = ".,:;|"

TREATMENTS = ("C", "D")


@dataclass
class LabelRecord:
    """Parsed tag fields for one image; every field is independently nullable."""

    filename: str = ""
    treatment: str | None = None
    block: int | None = None
    row: int | None = None
    position: int | None = None
    genotype: str | None = None

    FIELDS = ("treatment", "block", "row", "position", "genotype")

    def any_field(self) -> bool:
        return any(getattr(self, name) is not None for name in self.FIELDS)

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, name) for name in self.FIELDS)


def parse_fields(raw_text: str) -> LabelRecord:
    """Extract all five fields from OCR output; unmatched fields stay null."""
    record = LabelRecord()

    m = _BLOCK_RE.search(raw_text)
    if m:
        record.block = int(m.group(1))
    m = _ROW_RE.search(raw_text)
    if m:
        record.row = int(m.group(1))
    m = _POS_RE.search(raw_text)
    if m:
        record.position = int(m.group(1))

    # mask every B/R/P-digit span so e.g. P32 cannot seed a genotype match
    masked = _MASK_RE.sub(lambda m: " " * len(m.group(0)), raw_text)
    m = _GENOTYPE_RE.search(masked)
    if m:
        record.genotype = m.group(0)

    for token in raw_text.split():
        token = token.strip(_TOKEN_STRIP)
        if token in TREATMENTS:
            record.treatment = token
            break

    return record


def genotype_matches(candidate: str) -> bool:
    """True iff the entire candidate is a well-formed genotype string."""
    return _GENOTYPE_RE.fullmatch(candidate) is not None


def render_label(record: LabelRecord) -> str:
    """Canonical text rendering of a record (inverse of parse_fields)."""
    parts: list[str] = []
    if record.treatment is not None:
        parts.append(record.treatment)
    if record.block is not None:
        parts.append(f"B{record.block}")
    if record.row is not None:
        parts.append(f"R{record.row}")
    if record.position is not None:
        parts.append(f"P{record.position}")
    if record.genotype is not None:
        parts.append(record.genotype)
    return " ".join(parts)
