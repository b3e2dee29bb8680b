"""Canonical bounding boxes, coordinate-convention conversion, and overlap measures.

All evaluation geometry lives here: boxes are axis-aligned rectangles in
normalized page coordinates (origin top-left, x and y in [0, 1]) so that
outputs from models with different native conventions are directly
comparable.  Overlap is measured two ways: IoU (intersection over union,
symmetric) and IoP (intersection over prediction area, asymmetric; credits
a tight box inside a larger annotated region).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

PIXELS = "pixels"
UNIT_INTERVAL = "unit_interval"
THOUSANDTHS = "thousandths"

CONVENTIONS = (PIXELS, UNIT_INTERVAL, THOUSANDTHS)


@dataclass(frozen=True)
class BBox:
    """Normalized rectangle with strictly positive area.

    Corners satisfy 0 <= x0 < x1 <= 1 and 0 <= y0 < y1 <= 1; anything that
    cannot satisfy that (zero width, inverted corners) must be represented
    as ``None`` by callers, never as a BBox.
    """

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self) -> None:
        for v in (self.x0, self.y0, self.x1, self.y1):
            if not math.isfinite(v):
                raise ValueError(f"non-finite coordinate in {self!r}")
        if not (0.0 <= self.x0 < self.x1 <= 1.0 and 0.0 <= self.y0 < self.y1 <= 1.0):
            raise ValueError(
                f"invalid box ({self.x0}, {self.y0}, {self.x1}, {self.y1}): "
                "corners must be ordered and within [0, 1]"
            )

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x1, self.y1)


def to_canonical(
    raw: tuple[float, float, float, float],
    convention: str,
    page: tuple[int, int] | None = None,
) -> BBox | None:
    """Convert a raw (x0, y0, x1, y1) quadruple to a canonical BBox.

    ``pixels`` divides by the page dimensions (required), ``thousandths``
    divides by 1000, ``unit_interval`` passes through.  Coordinates are
    clamped to [0, 1] after conversion; a result with zero area or inverted
    corners yields None, which callers treat as "no box".

    Raises ValueError on non-finite inputs or an unknown convention.
    """
    vals = tuple(float(v) for v in raw)
    if len(vals) != 4:
        raise ValueError(f"expected 4 coordinates, got {len(vals)}")
    for v in vals:
        if not math.isfinite(v):
            raise ValueError(f"non-finite coordinate {v!r}")

    if convention == PIXELS:
        if page is None:
            raise ValueError("pixel convention requires page dimensions")
        w, h = page
        if w <= 0 or h <= 0:
            raise ValueError(f"page dimensions must be positive, got {page}")
        x0, y0, x1, y1 = vals[0] / w, vals[1] / h, vals[2] / w, vals[3] / h
    elif convention == THOUSANDTHS:
        x0, y0, x1, y1 = (v / 1000.0 for v in vals)
    elif convention == UNIT_INTERVAL:
        x0, y0, x1, y1 = vals
    else:
        raise ValueError(f"unknown coordinate convention {convention!r}")

    clamp = lambda v: min(1.0, max(0.0, v))  # noqa: E731
    x0, y0, x1, y1 = clamp(x0), clamp(y0), clamp(x1), clamp(y1)
    if x0 >= x1 or y0 >= y1:
        return None
    return BBox(x0, y0, x1, y1)


def to_pixels(box: BBox, page: tuple[int, int]) -> tuple[float, float, float, float]:
    """Map a canonical box back to pixel coordinates on the given page."""
    w, h = page
    if w <= 0 or h <= 0:
        raise ValueError(f"page dimensions must be positive, got {page}")
    return (box.x0 * w, box.y0 * h, box.x1 * w, box.y1 * h)


def intersection_area(a: BBox, b: BBox) -> float:
    """Area of the overlap between two boxes; 0.0 when disjoint."""
    iw = min(a.x1, b.x1) - max(a.x0, b.x0)
    ih = min(a.y1, b.y1) - max(a.y0, b.y0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    return iw * ih


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; symmetric, 1.0 for identical boxes."""
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    # Union can never be smaller than either box; clamping guards the last
    # float ulp so iop >= iou stays true even for exact containment.
    union = max(a.area + b.area - inter, a.area, b.area)
    return inter / union


def iop(pred: BBox, gt: BBox) -> float:
    """Intersection over the prediction's own area.

    Always >= iou(pred, gt): the denominator is the prediction area, which
    never exceeds union area.  Equals 1.0 when the prediction lies entirely
    inside the ground-truth box.
    """
    return intersection_area(pred, gt) / pred.area


def best_match(
    pred: BBox, regions: list[BBox] | tuple[BBox, ...]
) -> tuple[int | None, float, float]:
    """Match a predicted box against candidate ground-truth regions.

    Returns (region_index, iou, iop) for the region maximizing IoU, ties
    broken by lowest index.  An empty region list yields (None, 0.0, 0.0).
    """
    best_idx: int | None = None
    best_iou = 0.0
    best_iop = 0.0
    for idx, region in enumerate(regions):
        score = iou(pred, region)
        if best_idx is None or score > best_iou:
            best_idx = idx
            best_iou = score
            best_iop = iop(pred, region)
    if best_idx is None:
        return None, 0.0, 0.0
    return best_idx, best_iou, best_iop
