"""Toolkit for OCR/ground-truth alignment, quality metrics and confidence-aware error detection."""

__version__ = "0.1.0"

from confocr.geometry import BBox, Document, GtBox, OcrBox

__all__ = ["BBox", "OcrBox", "GtBox", "Document", "__version__"]
