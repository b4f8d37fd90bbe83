"""Data tooling: PGM I/O, JSON annotations, crop pipeline, synthetic pairs.

Annotations are a JSON array of records::

    [{"thermal": "t.pgm", "optical": "o.pgm" | null,
      "boxes": [{"x0": 1, "y0": 2, "x1": 30, "y1": 40, "class": 3}, ...]}, ...]

Paths are resolved relative to the annotation file. A null optical image
marks an unregistered sample: usable for inference and box scoring but not
for building training pairs. Box coordinates are inclusive, x over rows and
y over columns; classes 1..5 mean nature, animal, human, crowd and modern
infrastructure.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ThermofuseError, ValidationError
from .fusion import (
    RoiBox,
    as_gray8,
    build_training_target,
    resize_bilinear,
    round_half_away,
)

log = logging.getLogger(__name__)

CLASS_NAMES = {1: "nat", 2: "ani", 3: "hum", 4: "cro", 5: "inf"}

CROP_SIZE = 128


@dataclass
class AnnotatedSample:
    """A registered thermal/optical pair (optical may be missing) with ROIs."""

    thermal: np.ndarray
    optical: np.ndarray | None
    boxes: list[RoiBox] = field(default_factory=list)
    name: str = ""


@dataclass
class TrainingPair:
    """Unit-form input/target grids at the training extent."""

    input: np.ndarray
    target: np.ndarray


# -- PGM ---------------------------------------------------------------


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM ("P5", maxval 255) into a uint8 grid."""
    data = Path(path).read_bytes()
    pos = 0

    def token() -> bytes:
        nonlocal pos
        while pos < len(data):
            ch = data[pos : pos + 1]
            if ch == b"#":
                newline = data.find(b"\n", pos)
                pos = len(data) if newline < 0 else newline + 1
            elif ch.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            if data[pos : pos + 1] == b"#":
                break
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        return data[start:pos]

    magic = token()
    if magic != b"P5":
        raise FormatError(f"unsupported image magic {magic!r} (want binary P5)")
    try:
        width, height, maxval = (int(token()) for _ in range(3))
    except ValueError as exc:
        raise FormatError(f"malformed PGM header: {exc}") from None
    if width < 1 or height < 1:
        raise FormatError(f"invalid extents {width}x{height}")
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval} (want 255)")
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise FormatError("missing whitespace after PGM maxval")
    pos += 1
    if len(data) - pos < width * height:
        raise FormatError("truncated PGM pixel data")
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    return pixels.reshape(height, width).copy()


def write_pgm(img, path) -> None:
    """Write a uint8 grid as binary PGM: "P5\\n<w> <h>\\n255\\n" + raw rows."""
    arr = as_gray8(img)
    height, width = arr.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + arr.tobytes())


# -- annotations -------------------------------------------------------


def read_annotations(path) -> list[AnnotatedSample]:
    """Load and validate an annotation file; errors carry the record index."""
    path = Path(path)
    try:
        records = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read annotations {path}: {exc}") from exc
    if not isinstance(records, list):
        raise ValidationError("annotations must be a JSON array")
    samples = []
    for index, record in enumerate(records):
        try:
            samples.append(_parse_record(record, path.parent))
        except (ThermofuseError, OSError, KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"annotation record {index}: {exc}") from exc
    return samples


def _parse_record(record, base: Path) -> AnnotatedSample:
    if not isinstance(record, dict):
        raise ValueError("expected a JSON object")
    thermal_rel = record["thermal"]
    if not isinstance(thermal_rel, str):
        raise ValueError("'thermal' must be a path string")
    thermal = read_pgm(base / thermal_rel)
    height, width = thermal.shape

    optical_rel = record.get("optical")
    optical = None
    if optical_rel is not None:
        if not isinstance(optical_rel, str):
            raise ValueError("'optical' must be a path string or null")
        optical = read_pgm(base / optical_rel)
        if optical.shape != thermal.shape:
            raise ValueError(
                f"optical extent {optical.shape} differs from thermal {thermal.shape}"
            )

    boxes = []
    for j, raw in enumerate(record.get("boxes", ())):
        try:
            box = RoiBox(
                int(raw["x0"]), int(raw["y0"]), int(raw["x1"]), int(raw["y1"]),
                label=int(raw["class"]),
            )
            box.validate(height, width)
        except (ThermofuseError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"box {j}: {exc}") from exc
        boxes.append(box)
    return AnnotatedSample(thermal, optical, boxes, name=thermal_rel)


# -- crops -------------------------------------------------------------


def random_crops(
    sample: AnnotatedSample,
    per_box: int = 10,
    rng=None,
    crop_size: int = CROP_SIZE,
) -> list[TrainingPair]:
    """Per box, sample `per_box` windows containing it and build pairs.

    Windows are at least crop_size x crop_size, lie inside the image, and
    fully contain the box; sizes and positions are drawn uniformly per
    dimension. The target embeds only the generating box. Boxes too large
    for any valid window are skipped with a logged warning.
    """
    if sample.optical is None:
        raise ValidationError(
            "unregistered sample (no optical image) cannot produce training pairs"
        )
    if per_box < 1:
        raise ValidationError(f"per_box must be positive, got {per_box}")
    if rng is None:
        rng = np.random.default_rng()
    thermal = as_gray8(sample.thermal)
    optical = as_gray8(sample.optical)
    if thermal.shape != optical.shape:
        raise ValidationError("sample is not registered: extents differ")
    height, width = thermal.shape

    pairs: list[TrainingPair] = []
    for box in sample.boxes:
        box.validate(height, width)
        min_h = max(crop_size, box.height)
        min_w = max(crop_size, box.width)
        if min_h > height or min_w > width:
            log.warning(
                "sample %s: box (%d,%d)-(%d,%d) does not fit a %dx%d window; skipped",
                sample.name or "<unnamed>", box.x0, box.y0, box.x1, box.y1,
                crop_size, crop_size,
            )
            continue
        target = build_training_target(thermal, optical, [box])
        for _ in range(per_box):
            crop_h = int(rng.integers(min_h, height + 1))
            crop_w = int(rng.integers(min_w, width + 1))
            row_lo = max(0, box.x1 - crop_h + 1)
            row_hi = min(box.x0, height - crop_h)
            col_lo = max(0, box.y1 - crop_w + 1)
            col_hi = min(box.y0, width - crop_w)
            r0 = int(rng.integers(row_lo, row_hi + 1))
            c0 = int(rng.integers(col_lo, col_hi + 1))
            window = (slice(r0, r0 + crop_h), slice(c0, c0 + crop_w))
            pairs.append(
                TrainingPair(
                    input=resize_bilinear(thermal[window], crop_size, crop_size) / 255.0,
                    target=resize_bilinear(target[window], crop_size, crop_size) / 255.0,
                )
            )
    return pairs


# -- synthetic pairs ---------------------------------------------------


def synth_pairs(n: int, extent: int = 128, rng=None) -> list[AnnotatedSample]:
    """Generate registered thermal/optical samples with elliptical objects.

    Backgrounds are smooth random fields; each of 1-3 objects is an ellipse
    rendered hot in the thermal channel (levels 140-220) and dark in the
    optical channel (30-110), so annotated regions genuinely differ between
    the two. Boxes are the exact object bounding rectangles.
    """
    if extent < 128:
        raise ValidationError(f"synthetic extent must be at least 128, got {extent}")
    if rng is None:
        rng = np.random.default_rng()
    samples = []
    for i in range(n):
        thermal, optical, boxes = _synth_one(extent, rng)
        samples.append(AnnotatedSample(thermal, optical, boxes, name=f"synth-{i:04d}"))
    return samples


def _smooth_field(extent: int, rng) -> np.ndarray:
    coarse = rng.random((extent // 16 + 2, extent // 16 + 2))
    return resize_bilinear(coarse, extent, extent)


def _synth_one(extent: int, rng):
    thermal = 40.0 + 60.0 * _smooth_field(extent, rng)
    optical = 150.0 - 80.0 * _smooth_field(extent, rng)
    rows_grid, cols_grid = np.mgrid[0:extent, 0:extent]
    boxes = []
    for _ in range(int(rng.integers(1, 4))):
        semi_r = int(rng.integers(8, extent // 6 + 1))
        semi_c = int(rng.integers(8, extent // 6 + 1))
        center_r = int(rng.integers(semi_r, extent - semi_r))
        center_c = int(rng.integers(semi_c, extent - semi_c))
        mask = (
            ((rows_grid - center_r) / semi_r) ** 2
            + ((cols_grid - center_c) / semi_c) ** 2
        ) <= 1.0
        thermal[mask] = float(rng.integers(140, 221))
        optical[mask] = float(rng.integers(30, 111))
        rows, cols = np.nonzero(mask)
        boxes.append(
            RoiBox(
                int(rows.min()), int(cols.min()), int(rows.max()), int(cols.max()),
                label=int(rng.integers(1, 6)),
            )
        )
    to8 = lambda img: np.clip(round_half_away(img), 0, 255).astype(np.uint8)
    return to8(thermal), to8(optical), boxes
