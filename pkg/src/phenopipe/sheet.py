"""The evolving per-image results sheet: schema, CSV persistence, summaries.

CSV dialect: comma separator, quotes only when needed, LF line endings,
UTF-8 without BOM. Nulls are empty cells. Column order is fixed; files may
carry any header prefix of the full column list (later stages add columns).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, fields

from .contracts import COLOR_CLASSES, SHAPE_CLASSES, SPLOTCH_CLASSES, TREATMENT_CLASSES
from .errors import SchemaError

COLUMNS = (
    "filename",
    "treatment",
    "block",
    "row",
    "position",
    "genotype",
    "leaf_color",
    "leaf_shape",
    "brown_splotches",
    "treatment_source",
)

_INT_COLUMNS = {"block", "row", "position"}
_ENUM_COLUMNS = {
    "treatment": TREATMENT_CLASSES,
    "leaf_color": COLOR_CLASSES,
    "leaf_shape": SHAPE_CLASSES,
    "brown_splotches": SPLOTCH_CLASSES,
    "treatment_source": ("ocr", "predicted"),
}


@dataclass
class SheetRow:
    filename: str
    treatment: str | None = None
    block: int | None = None
    row: int | None = None
    position: int | None = None
    genotype: str | None = None
    leaf_color: str | None = None
    leaf_shape: str | None = None
    brown_splotches: str | None = None
    treatment_source: str | None = None

    def get(self, column: str):
        return getattr(self, column)

    def set(self, column: str, value) -> None:
        setattr(self, column, value)


assert tuple(f.name for f in fields(SheetRow)) == COLUMNS


class ResultsSheet:
    """Ordered rows keyed by unique filename."""

    def __init__(self, rows: list[SheetRow] | None = None):
        self.rows: list[SheetRow] = list(rows or [])
        self._check_unique()

    def _check_unique(self) -> None:
        seen = set()
        for i, row in enumerate(self.rows):
            if row.filename in seen:
                raise SchemaError(f"duplicate filename {row.filename!r} at row {i}")
            seen.add(row.filename)

    def append(self, row: SheetRow) -> None:
        if any(r.filename == row.filename for r in self.rows):
            raise SchemaError(f"duplicate filename {row.filename!r}")
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def by_filename(self) -> dict[str, SheetRow]:
        return {r.filename: r for r in self.rows}


def _cell_to_text(value) -> str:
    return "" if value is None else str(value)


def _text_to_cell(column: str, text: str, line: int):
    if text == "":
        if column == "filename":
            raise SchemaError(f"row {line}, column filename: must not be empty")
        return None
    if column in _INT_COLUMNS:
        if not text.isdigit():
            raise SchemaError(f"row {line}, column {column}: not an integer: {text!r}")
        return int(text)
    if column in _ENUM_COLUMNS and text not in _ENUM_COLUMNS[column]:
        raise SchemaError(f"row {line}, column {column}: illegal value {text!r}")
    return text


def write_sheet(sheet: ResultsSheet, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(dumps_sheet(sheet))


def dumps_sheet(sheet: ResultsSheet) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    writer.writerow(COLUMNS)
    for row in sheet.rows:
        writer.writerow([_cell_to_text(row.get(c)) for c in COLUMNS])
    return buf.getvalue()


def read_sheet(path) -> ResultsSheet:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return loads_sheet(fh.read())


def loads_sheet(text: str) -> ResultsSheet:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty file: missing header row") from None
    if tuple(header) != COLUMNS[: len(header)] or not header:
        raise SchemaError(f"header {header!r} is not a prefix of the sheet schema")
    rows = []
    for line, cells in enumerate(reader, start=1):
        if len(cells) != len(header):
            raise SchemaError(f"row {line}: expected {len(header)} cells, got {len(cells)}")
        row = SheetRow(filename="")
        for column, cell in zip(header, cells):
            row.set(column, _text_to_cell(column, cell, line))
        rows.append(row)
    sheet = ResultsSheet(rows)
    return sheet


def info_summary(sheet: ResultsSheet) -> dict[str, tuple[int, int]]:
    """Per-column (non-null count, total row count)."""
    total = len(sheet.rows)
    return {
        c: (sum(1 for r in sheet.rows if r.get(c) is not None), total) for c in COLUMNS
    }


def render_info(sheet: ResultsSheet, columns=COLUMNS) -> str:
    """Fixed-layout text block of per-column null statistics."""
    total = len(sheet.rows)
    summary = info_summary(sheet)
    name_width = max(len(c) for c in columns)
    count_width = max(len(f"{summary[c][0]} non-null") for c in columns)
    lines = [
        f"RangeIndex: {total} entries" + (f", 0 to {total - 1}" if total else ""),
        f"Data columns (total {len(columns)} columns):",
        f" #   {'Column'.ljust(name_width)}  {'Non-Null Count'.ljust(count_width)}  Dtype",
        f"---  {'-' * name_width}  {'-' * count_width}  -----",
    ]
    for i, column in enumerate(columns):
        dtype = "int64" if column in _INT_COLUMNS else "object"
        nn = f"{summary[column][0]} non-null"
        lines.append(f" {i:<3} {column.ljust(name_width)}  {nn.ljust(count_width)}  {dtype}")
    return "\n".join(lines) + "\n"
