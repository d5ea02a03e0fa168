"""Core geometric and document types shared by the whole toolkit.

Boxes are axis-aligned rectangles in whatever unit the source annotations
use; nothing here assumes pixels or any particular page size. All types are
frozen dataclasses and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class BBox:
    """Axis-aligned rectangle with x0 <= x1 and y0 <= y1."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        for name in ("x0", "y0", "x1", "y1"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"BBox.{name} must be finite, got {v!r}")
        if self.x1 < self.x0 or self.y1 < self.y0:
            raise ValueError(f"BBox corners out of order: {self}")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0


def area(b: BBox) -> float:
    """Rectangle area; zero for degenerate (line or point) boxes."""
    return b.width * b.height


def intersection_area(a: BBox, b: BBox) -> float:
    """Area of the axis-aligned intersection, 0 when disjoint."""
    w = min(a.x1, b.x1) - max(a.x0, b.x0)
    h = min(a.y1, b.y1) - max(a.y0, b.y0)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def coverage_fraction(target: BBox, other: BBox) -> float:
    """Fraction of `target`'s area covered by `other`.

    Degenerate targets (zero area) return 0 rather than dividing by zero;
    such boxes can still be matched through the opposite direction of the
    bidirectional rule in `confocr.alignment`.
    """
    t = area(target)
    if t == 0:
        return 0.0
    return intersection_area(target, other) / t


@dataclass(frozen=True)
class OcrBox:
    """One OCR prediction: geometry, transcribed text and engine confidence."""

    id: str
    bbox: BBox
    text: str
    confidence: float

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(
                f"OcrBox {self.id!r}: confidence must be in [0, 1], got {self.confidence!r}"
            )


@dataclass(frozen=True)
class GtBox:
    """One ground-truth box; order_index is its reading-order rank."""

    id: str
    bbox: BBox
    text: str
    order_index: int

    def __post_init__(self):
        if self.order_index < 0:
            raise ValueError(f"GtBox {self.id!r}: order_index must be >= 0")


@dataclass(frozen=True)
class Document:
    """A page/document pairing OCR output with its ground-truth annotation."""

    doc_id: str
    ocr_boxes: tuple[OcrBox, ...] = field(default_factory=tuple)
    gt_boxes: tuple[GtBox, ...] = field(default_factory=tuple)

    def __post_init__(self):
        # Tolerate lists from callers; store immutable tuples.
        object.__setattr__(self, "ocr_boxes", tuple(self.ocr_boxes))
        object.__setattr__(self, "gt_boxes", tuple(self.gt_boxes))
        ocr_ids = [b.id for b in self.ocr_boxes]
        gt_ids = [b.id for b in self.gt_boxes]
        if len(set(ocr_ids)) != len(ocr_ids):
            raise ValueError(f"document {self.doc_id!r}: duplicate OCR box ids")
        if len(set(gt_ids)) != len(gt_ids):
            raise ValueError(f"document {self.doc_id!r}: duplicate GT box ids")
        order = [b.order_index for b in self.gt_boxes]
        if len(set(order)) != len(order):
            raise ValueError(f"document {self.doc_id!r}: duplicate GT order_index values")
