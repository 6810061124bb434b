"""EXIF decoding straight off the TIFF/IFD byte layout, plus GPS export
and the leaf-size feasibility report.

Only the tags the pipeline consumes are decoded: image dimensions
(0x0100/0x0101), resolution (0x011A/0x011B), focal length (0x920A),
subject distance (0x9206), focal-plane resolution (0xA20E/0xA20F/0xA210)
and the GPS latitude/longitude tags (GPS IFD 0x0001-0x0004).
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import PhenoError

TAG_IMAGE_WIDTH = 0x0100
TAG_IMAGE_LENGTH = 0x0101
TAG_X_RESOLUTION = 0x011A
TAG_Y_RESOLUTION = 0x011B
TAG_EXIF_IFD = 0x8769
TAG_GPS_IFD = 0x8825
TAG_FOCAL_LENGTH = 0x920A
TAG_SUBJECT_DISTANCE = 0x9206
TAG_FOCAL_PLANE_X_RES = 0xA20E
TAG_FOCAL_PLANE_Y_RES = 0xA20F
TAG_FOCAL_PLANE_UNIT = 0xA210
TAG_GPS_LAT_REF = 0x0001
TAG_GPS_LAT = 0x0002
TAG_GPS_LON_REF = 0x0003
TAG_GPS_LON = 0x0004

_TYPE_SIZES = {1: 1, 2: 1, 3: 2, 4: 4, 5: 8, 7: 1, 9: 4, 10: 8}

# pixels-per-unit codes of FocalPlaneResolutionUnit
_UNIT_NAMES = {2: "inch", 3: "cm"}


@dataclass
class ExifRecord:
    """Decoded tags for one file; absent tags stay None."""

    filename: str = ""
    width_px: int | None = None
    height_px: int | None = None
    x_resolution: Fraction | None = None
    y_resolution: Fraction | None = None
    focal_length_mm: Fraction | None = None
    focal_plane_x_res: Fraction | None = None
    focal_plane_y_res: Fraction | None = None
    focal_plane_unit: str | None = None
    subject_distance_m: Fraction | None = None
    latitude_deg: float | None = None
    longitude_deg: float | None = None


class _MalformedExif(Exception):
    pass


class _TiffReader:
    def __init__(self, blob: bytes):
        if len(blob) < 8:
            raise _MalformedExif("TIFF header truncated")
        order = blob[:2]
        if order == b"II":
            self.endian = "<"
        elif order == b"MM":
            self.endian = ">"
        else:
            raise _MalformedExif(f"bad byte-order mark {order!r}")
        if self._unpack("H", blob[2:4]) != 42:
            raise _MalformedExif("bad TIFF magic")
        self.blob = blob

    def _unpack(self, fmt: str, data: bytes):
        return struct.unpack(self.endian + fmt, data)[0]

    def first_ifd_offset(self) -> int:
        return self._unpack("I", self.blob[4:8])

    def read_ifd(self, offset: int) -> dict[int, tuple[int, int, bytes]]:
        """Map tag -> (type, count, raw value bytes)."""
        blob = self.blob
        if offset + 2 > len(blob):
            raise _MalformedExif("IFD offset out of range")
        n = self._unpack("H", blob[offset : offset + 2])
        entries: dict[int, tuple[int, int, bytes]] = {}
        for i in range(n):
            base = offset + 2 + 12 * i
            if base + 12 > len(blob):
                raise _MalformedExif("IFD entry out of range")
            tag = self._unpack("H", blob[base : base + 2])
            typ = self._unpack("H", blob[base + 2 : base + 4])
            count = self._unpack("I", blob[base + 4 : base + 8])
            if typ not in _TYPE_SIZES:
                continue
            size = _TYPE_SIZES[typ] * count
            if size <= 4:
                raw = blob[base + 8 : base + 8 + size]
            else:
                value_offset = self._unpack("I", blob[base + 8 : base + 12])
                if value_offset + size > len(blob):
                    raise _MalformedExif("tag value out of range")
                raw = blob[value_offset : value_offset + size]
            entries[tag] = (typ, count, raw)
        return entries

    def integer(self, entry) -> int | None:
        typ, count, raw = entry
        if count < 1:
            return None
        if typ == 3:
            return self._unpack("H", raw[:2])
        if typ == 4:
            return self._unpack("I", raw[:4])
        if typ == 1:
            return raw[0]
        return None

    def rational(self, entry, index: int = 0) -> Fraction | None:
        typ, count, raw = entry
        if typ not in (5, 10) or index >= count:
            return None
        chunk = raw[index * 8 : index * 8 + 8]
        kind = "ii" if typ == 10 else "II"
        num, den = struct.unpack(self.endian + kind, chunk)
        if den == 0:
            return None
        return Fraction(num, den)

    def ascii(self, entry) -> str | None:
        typ, _, raw = entry
        if typ != 2:
            return None
        return raw.split(b"\x00", 1)[0].decode("ascii", errors="replace")


def _find_exif_blob(data: bytes) -> bytes | None:
    """Locate the TIFF blob: JPEG APP1 payload or a bare TIFF file."""
    if data[:2] in (b"II", b"MM") and len(data) >= 8:
        return data
    if data[:2] != b"\xff\xd8":
        return None
    pos = 2
    while pos + 4 <= len(data):
        if data[pos] != 0xFF:
            return None
        marker = data[pos + 1]
        if marker in (0xD8, 0xD9) or 0xD0 <= marker <= 0xD7:
            pos += 2
            continue
        if pos + 4 > len(data):
            return None
        length = struct.unpack(">H", data[pos + 2 : pos + 4])[0]
        if length < 2:
            return None
        segment = data[pos + 4 : pos + 2 + length]
        if marker == 0xE1 and segment[:6] == b"Exif\x00\x00":
            return segment[6:]
        if marker == 0xDA:  # start of scan: no APP1 will follow
            return None
        pos += 2 + length
    return None


def _gps_degrees(reader, entries, value_tag, ref_tag, negative_ref) -> float | None:
    if value_tag not in entries or ref_tag not in entries:
        return None
    ref = reader.ascii(entries[ref_tag])
    triple = [reader.rational(entries[value_tag], i) for i in range(3)]
    if ref is None or any(v is None for v in triple):
        return None
    d, m, s = triple
    decimal = d + m / 60 + s / 3600
    sign = -1 if ref.strip().upper() == negative_ref else 1
    return float(sign * decimal)


def read_exif(path) -> ExifRecord:
    """Decode the supported tags; files without EXIF give an all-null record."""
    with open(path, "rb") as fh:
        data = fh.read()
    record = ExifRecord(filename=str(path))
    blob = _find_exif_blob(data)
    if blob is None:
        return record
    try:
        reader = _TiffReader(blob)
        ifd0 = reader.read_ifd(reader.first_ifd_offset())
        record.width_px = reader.integer(ifd0[TAG_IMAGE_WIDTH]) if TAG_IMAGE_WIDTH in ifd0 else None
        record.height_px = (
            reader.integer(ifd0[TAG_IMAGE_LENGTH]) if TAG_IMAGE_LENGTH in ifd0 else None
        )
        if TAG_X_RESOLUTION in ifd0:
            record.x_resolution = reader.rational(ifd0[TAG_X_RESOLUTION])
        if TAG_Y_RESOLUTION in ifd0:
            record.y_resolution = reader.rational(ifd0[TAG_Y_RESOLUTION])

        if TAG_EXIF_IFD in ifd0:
            offset = reader.integer(ifd0[TAG_EXIF_IFD])
            exif = reader.read_ifd(offset) if offset is not None else {}
            if TAG_FOCAL_LENGTH in exif:
                record.focal_length_mm = reader.rational(exif[TAG_FOCAL_LENGTH])
            if TAG_SUBJECT_DISTANCE in exif:
                record.subject_distance_m = reader.rational(exif[TAG_SUBJECT_DISTANCE])
            if TAG_FOCAL_PLANE_X_RES in exif:
                record.focal_plane_x_res = reader.rational(exif[TAG_FOCAL_PLANE_X_RES])
            if TAG_FOCAL_PLANE_Y_RES in exif:
                record.focal_plane_y_res = reader.rational(exif[TAG_FOCAL_PLANE_Y_RES])
            if TAG_FOCAL_PLANE_UNIT in exif:
                unit = reader.integer(exif[TAG_FOCAL_PLANE_UNIT])
                record.focal_plane_unit = _UNIT_NAMES.get(unit)

        if TAG_GPS_IFD in ifd0:
            offset = reader.integer(ifd0[TAG_GPS_IFD])
            gps = reader.read_ifd(offset) if offset is not None else {}
            lat = _gps_degrees(reader, gps, TAG_GPS_LAT, TAG_GPS_LAT_REF, "S")
            lon = _gps_degrees(reader, gps, TAG_GPS_LON, TAG_GPS_LON_REF, "W")
            if lat is not None and not -90.0 <= lat <= 90.0:
                warnings.warn(f"{path}: latitude {lat} out of range, dropped")
                lat = None
            if lon is not None and not -180.0 <= lon <= 180.0:
                warnings.warn(f"{path}: longitude {lon} out of range, dropped")
                lon = None
            record.latitude_deg = lat
            record.longitude_deg = lon
    except _MalformedExif as exc:
        warnings.warn(f"{path}: malformed EXIF ({exc}); treating as absent")
        return ExifRecord(filename=str(path))
    return record


# tag-name checklist driving the feasibility report
_CHECKLIST = (
    ("width_px", "ImageWidth"),
    ("height_px", "ImageLength"),
    ("x_resolution", "XResolution"),
    ("y_resolution", "YResolution"),
    ("focal_length_mm", "FocalLength"),
    ("focal_plane_x_res", "FocalPlaneXResolution"),
    ("focal_plane_y_res", "FocalPlaneYResolution"),
    ("focal_plane_unit", "FocalPlaneResolutionUnit"),
    ("subject_distance_m", "SubjectDistance"),
    ("latitude_deg", "GPSLatitude"),
    ("longitude_deg", "GPSLongitude"),
)

_SIZE_FIELDS = (
    "focal_length_mm",
    "focal_plane_x_res",
    "focal_plane_y_res",
    "focal_plane_unit",
    "subject_distance_m",
)


def size_estimable(record: ExifRecord) -> bool:
    return all(getattr(record, f) is not None for f in _SIZE_FIELDS)


@dataclass
class ImageFeasibility:
    filename: str
    present: list[str]
    missing: list[str]
    size_estimable: bool


@dataclass
class FeasibilityReport:
    images: list[ImageFeasibility] = field(default_factory=list)
    missing_counts: dict[str, int] = field(default_factory=dict)


def build_feasibility_report(records: list[ExifRecord]) -> FeasibilityReport:
    report = FeasibilityReport(missing_counts={name: 0 for _, name in _CHECKLIST})
    for record in records:
        present, missing = [], []
        for attr, name in _CHECKLIST:
            if getattr(record, attr) is None:
                missing.append(name)
                report.missing_counts[name] += 1
            else:
                present.append(name)
        report.images.append(
            ImageFeasibility(record.filename, present, missing, size_estimable(record))
        )
    return report


def render_report(report: FeasibilityReport) -> str:
    lines = [
        "Leaf-size feasibility report",
        f"images scanned: {len(report.images)}",
        f"size-estimable images: {sum(1 for i in report.images if i.size_estimable)}",
        "",
        "missing-tag counts:",
    ]
    for name, count in report.missing_counts.items():
        lines.append(f"  {name}: {count}")
    lines += [
        "",
        "Size estimation needs FocalLength, FocalPlaneResolution (x, y, unit)",
        "and SubjectDistance together. In-frame reference objects such as the",
        "plant label are not used for measurement: they are routinely",
        "obstructed or tilted out of the leaf plane, so no scale can be",
        "derived from them reliably.",
        "",
    ]
    for image in report.images:
        status = "estimable" if image.size_estimable else "not estimable"
        missing = ", ".join(image.missing) if image.missing else "none"
        lines.append(f"{image.filename}: {status}; missing: {missing}")
    return "\n".join(lines) + "\n"


def estimate_leaf_size(record: ExifRecord, leaf_px: tuple[float, float]):
    """(width_cm, height_cm) from pixel extents, or None if tags are missing."""
    if not size_estimable(record):
        return None
    if record.focal_length_mm == 0:
        raise PhenoError("zero focal length")
    focal_cm = record.focal_length_mm / 10
    distance_cm = record.subject_distance_m * 100
    scale = (distance_cm - focal_cm) / focal_cm
    unit_cm = Fraction(254, 100) if record.focal_plane_unit == "inch" else Fraction(1)

    def axis(px, res):
        return float(px / res * unit_cm * scale)

    w, h = leaf_px
    return axis(w, record.focal_plane_x_res), axis(h, record.focal_plane_y_res)


def export_gps(records: list[ExifRecord]):
    """(rows, bbox): rows of (filename, lat, lon); bbox (lat0, lat1, lon0, lon1)."""
    rows = [
        (r.filename, r.latitude_deg, r.longitude_deg)
        for r in records
        if r.latitude_deg is not None and r.longitude_deg is not None
    ]
    if not rows:
        return rows, None
    lats = [r[1] for r in rows]
    lons = [r[2] for r in rows]
    return rows, (min(lats), max(lats), min(lons), max(lons))


def render_gps_csv(records: list[ExifRecord]) -> str:
    rows, bbox = export_gps(records)
    lines = ["filename,latitude,longitude"]
    for filename, lat, lon in rows:
        lines.append(f"{filename},{lat!r},{lon!r}")
    if bbox is None:
        lines.append("# bbox none")
    else:
        lines.append(f"# bbox {bbox[0]!r} {bbox[1]!r} {bbox[2]!r} {bbox[3]!r}")
    return "\n".join(lines) + "\n"
