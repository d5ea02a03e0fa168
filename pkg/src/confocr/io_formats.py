"""Reading annotation/OCR files and persisting aligned datasets.

Ground-truth loaders normalize several public annotation schemas (FUNSD,
SROIE, CORD) plus a generic JSON form into GT-only `Document` skeletons;
OCR output always arrives through the generic JSON schema, since every
engine's export can be converted to it upstream. Aligned datasets, noised
corpora and reports are serialized canonically (UTF-8, sorted keys,
shortest round-trip floats) so identical inputs produce identical bytes.

Generic GT schema, one document:
    {"doc_id": "...", "boxes": [{"bbox": [x0, y0, x1, y1], "text": "..."}]}
Generic OCR schema adds a mandatory "confidence" in [0, 1] per box. A file
may hold one document object or a list of them; a directory is read as one
document per file, sorted by filename.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from confocr import __version__
from confocr.alignment import AlignedComponent, AlignmentResult
from confocr.errors import FormatError, InputError
from confocr.geometry import BBox, Document, GtBox, OcrBox

SCHEMA_VERSION = 1
GT_FORMATS = ("funsd_json", "sroie_txt", "cord_json", "generic_json")


def canonical_json(obj) -> str:
    """Deterministic JSON text: sorted keys, UTF-8, shortest-round-trip floats."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ": "), indent=1)


def canonical_json_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def _check_coord(value, path, where) -> float:
    v = float(value)
    if math.isnan(v) or math.isinf(v):
        raise FormatError(path, f"non-finite coordinate in {where}")
    if v < 0:
        raise FormatError(path, f"negative coordinate in {where}")
    return v


def _rect_from_corners(xs, ys, path, where) -> BBox:
    xs = [_check_coord(x, path, where) for x in xs]
    ys = [_check_coord(y, path, where) for y in ys]
    return BBox(min(xs), min(ys), max(xs), max(ys))


def _bbox_from_list(raw, path, where) -> BBox:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise FormatError(path, f"bbox must be [x0, y0, x1, y1] in {where}")
    x0, y0, x1, y1 = (_check_coord(v, path, where) for v in raw)
    if x1 < x0 or y1 < y0:
        raise FormatError(path, f"bbox corners out of order in {where}")
    return BBox(x0, y0, x1, y1)


def _iter_input_files(path: Path, suffix: str) -> list[Path]:
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix == suffix)
        if not files:
            raise InputError(f"no *{suffix} files under {path}")
        return files
    if not path.exists():
        raise InputError(f"no such file: {path}")
    return [path]


def _load_json(path: Path):
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(path, f"invalid JSON: {exc.msg}", location=f"line {exc.lineno}") from exc


# ---------------------------------------------------------------------------
# Ground-truth loaders
# ---------------------------------------------------------------------------

def _gt_document(doc_id: str, boxes: list[tuple[BBox, str]], path) -> Document:
    gt = tuple(
        GtBox(id=f"g{i}", bbox=bbox, text=str(text), order_index=i)
        for i, (bbox, text) in enumerate(boxes)
    )
    try:
        return Document(doc_id=doc_id, gt_boxes=gt)
    except ValueError as exc:
        raise FormatError(path, str(exc)) from exc


def _parse_generic_gt(payload, path: Path) -> list[Document]:
    records = payload if isinstance(payload, list) else [payload]
    docs = []
    for i, rec in enumerate(records):
        if not isinstance(rec, dict) or "boxes" not in rec:
            raise FormatError(path, "expected an object with a 'boxes' list", f"document {i}")
        doc_id = str(rec.get("doc_id", path.stem))
        boxes = []
        for j, b in enumerate(rec["boxes"]):
            where = f"document {doc_id!r} box {j}"
            if not isinstance(b, dict) or "bbox" not in b or "text" not in b:
                raise FormatError(path, f"box needs 'bbox' and 'text' in {where}")
            boxes.append((_bbox_from_list(b["bbox"], path, where), b["text"]))
        docs.append(_gt_document(doc_id, boxes, path))
    return docs


def _parse_funsd(payload, path: Path) -> Document:
    if not isinstance(payload, dict) or "form" not in payload:
        raise FormatError(path, "expected a FUNSD object with a 'form' list")
    boxes = []
    for i, entry in enumerate(payload["form"]):
        words = entry.get("words") or []
        for j, word in enumerate(words):
            where = f"form entry {i} word {j}"
            if "box" not in word or "text" not in word:
                raise FormatError(path, f"word needs 'box' and 'text' in {where}")
            boxes.append((_bbox_from_list(word["box"], path, where), word["text"]))
    return _gt_document(path.stem, boxes, path)


def _parse_sroie(path: Path) -> Document:
    boxes = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8-sig").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",", 8)
        if len(parts) < 9:
            raise FormatError(path, "expected 'x1,y1,...,x4,y4,transcript'", f"line {lineno}")
        try:
            coords = [float(v) for v in parts[:8]]
        except ValueError as exc:
            raise FormatError(path, f"bad coordinate: {exc}", f"line {lineno}") from exc
        bbox = _rect_from_corners(coords[0::2], coords[1::2], path, f"line {lineno}")
        boxes.append((bbox, parts[8]))
    return _gt_document(path.stem, boxes, path)


def _parse_cord(payload, path: Path) -> Document:
    if not isinstance(payload, dict) or "valid_line" not in payload:
        raise FormatError(path, "expected a CORD object with a 'valid_line' list")
    boxes = []
    for i, line in enumerate(payload["valid_line"]):
        for j, word in enumerate(line.get("words") or []):
            where = f"valid_line {i} word {j}"
            quad = word.get("quad")
            if not isinstance(quad, dict) or "text" not in word:
                raise FormatError(path, f"word needs 'quad' and 'text' in {where}")
            try:
                xs = [quad[k] for k in ("x1", "x2", "x3", "x4")]
                ys = [quad[k] for k in ("y1", "y2", "y3", "y4")]
            except KeyError as exc:
                raise FormatError(path, f"quad missing corner {exc} in {where}") from exc
            boxes.append((_rect_from_corners(xs, ys, path, where), word["text"]))
    return _gt_document(path.stem, boxes, path)


def load_gt(path, format_tag: str = "generic_json") -> list[Document]:
    """Load ground-truth annotations as GT-only Document skeletons."""
    if format_tag not in GT_FORMATS:
        raise InputError(f"unknown GT format {format_tag!r}; expected one of {GT_FORMATS}")
    path = Path(path)
    suffix = ".txt" if format_tag == "sroie_txt" else ".json"
    docs: list[Document] = []
    for file in _iter_input_files(path, suffix):
        if format_tag == "generic_json":
            docs.extend(_parse_generic_gt(_load_json(file), file))
        elif format_tag == "funsd_json":
            docs.append(_parse_funsd(_load_json(file), file))
        elif format_tag == "cord_json":
            docs.append(_parse_cord(_load_json(file), file))
        else:
            docs.append(_parse_sroie(file))
    seen = set()
    for d in docs:
        if d.doc_id in seen:
            raise FormatError(path, f"duplicate doc_id {d.doc_id!r} across input files")
        seen.add(d.doc_id)
    return docs


# ---------------------------------------------------------------------------
# OCR loader
# ---------------------------------------------------------------------------

def load_ocr(path) -> dict[str, list[OcrBox]]:
    """Load generic-JSON OCR output, keyed by doc_id.

    Every box must carry a confidence in [0, 1]; studying those confidences
    is the point of the toolkit, so their absence is an error rather than a
    default.
    """
    path = Path(path)
    out: dict[str, list[OcrBox]] = {}
    for file in _iter_input_files(path, ".json"):
        payload = _load_json(file)
        records = payload if isinstance(payload, list) else [payload]
        for i, rec in enumerate(records):
            if not isinstance(rec, dict) or "boxes" not in rec:
                raise FormatError(file, "expected an object with a 'boxes' list", f"document {i}")
            doc_id = str(rec.get("doc_id", file.stem))
            if doc_id in out:
                raise FormatError(file, f"duplicate doc_id {doc_id!r}")
            boxes = []
            ids = set()
            for j, b in enumerate(rec["boxes"]):
                where = f"document {doc_id!r} box {j}"
                if not isinstance(b, dict) or "bbox" not in b or "text" not in b:
                    raise FormatError(file, f"box needs 'bbox' and 'text' in {where}")
                if "confidence" not in b:
                    raise FormatError(file, f"missing confidence in {where}")
                conf = b["confidence"]
                if not isinstance(conf, (int, float)) or math.isnan(conf) or not 0 <= conf <= 1:
                    raise FormatError(file, f"confidence must be in [0, 1] in {where}")
                box_id = str(b.get("id", f"o{j}"))
                if box_id in ids:
                    raise FormatError(file, f"duplicate box id {box_id!r} in {where}")
                ids.add(box_id)
                boxes.append(
                    OcrBox(
                        id=box_id,
                        bbox=_bbox_from_list(b["bbox"], file, where),
                        text=str(b["text"]),
                        confidence=float(conf),
                    )
                )
            out[doc_id] = boxes
    return out


def attach_ocr(documents: Sequence[Document], ocr: dict[str, list[OcrBox]]) -> list[Document]:
    """Pair GT skeletons with their OCR boxes; docs without OCR get none."""
    return [
        Document(doc_id=d.doc_id, ocr_boxes=tuple(ocr.get(d.doc_id, ())), gt_boxes=d.gt_boxes)
        for d in documents
    ]


# ---------------------------------------------------------------------------
# Aligned dataset persistence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AlignedDataset:
    """The persisted interchange unit between alignment and detection."""

    threshold: float
    results: tuple[AlignmentResult, ...]
    sources: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "results", tuple(self.results))


def _component_payload(c: AlignedComponent) -> dict:
    return {
        "gt_ids": list(c.gt_ids),
        "ocr_ids": list(c.ocr_ids),
        "gt_text": c.gt_text,
        "ocr_text": c.ocr_text,
        "confidence": c.confidence,
        "is_error": c.is_error,
        "is_unmatched_gt": c.is_unmatched_gt,
    }


def emit_aligned(dataset: AlignedDataset, path) -> None:
    """Write the canonical aligned-dataset JSON; identical input, identical bytes."""
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "aligned_dataset",
        "toolkit_version": __version__,
        "threshold": dataset.threshold,
        "sources": dataset.sources,
        "config": dataset.config,
        "documents": [
            {
                "doc_id": r.doc_id,
                "unmatched_ocr_count": r.unmatched_ocr_count,
                "components": [_component_payload(c) for c in r.components],
            }
            for r in dataset.results
        ],
    }
    Path(path).write_text(canonical_json(payload) + "\n", encoding="utf-8")


def load_aligned(path) -> AlignedDataset:
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    payload = _load_json(path)
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise FormatError(path, f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    results = []
    for d, doc in enumerate(payload.get("documents", [])):
        components = []
        for j, c in enumerate(doc.get("components", [])):
            try:
                components.append(
                    AlignedComponent(
                        gt_ids=tuple(c["gt_ids"]),
                        ocr_ids=tuple(c["ocr_ids"]),
                        gt_text=c["gt_text"],
                        ocr_text=c["ocr_text"],
                        confidence=c["confidence"],
                        is_error=c["is_error"],
                        is_unmatched_gt=c["is_unmatched_gt"],
                    )
                )
            except KeyError as exc:
                raise FormatError(path, f"component missing field {exc}", f"document {d} component {j}") from exc
        results.append(
            AlignmentResult(
                doc_id=str(doc.get("doc_id", f"doc{d}")),
                components=tuple(components),
                unmatched_ocr_count=int(doc.get("unmatched_ocr_count", 0)),
            )
        )
    return AlignedDataset(
        threshold=float(payload.get("threshold", 0.0)),
        results=tuple(results),
        sources=payload.get("sources", {}),
        config=payload.get("config", {}),
    )


# ---------------------------------------------------------------------------
# Noised-corpus records (pretraining data)
# ---------------------------------------------------------------------------

def write_noised_corpus(path, vocab_tokens: Sequence[str], records: Iterable[dict], config: dict) -> None:
    """Line-delimited noised corpus: a header line, then one record per sequence.

    Records carry parallel lists: observed token ids, original ids,
    confidences and per-token noise labels.
    """
    header = {
        "schema_version": SCHEMA_VERSION,
        "kind": "noised_corpus",
        "toolkit_version": __version__,
        "config": config,
        "vocab": list(vocab_tokens),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json_line(header) + "\n")
        for rec in records:
            fh.write(canonical_json_line(rec) + "\n")


def read_noised_corpus(path) -> tuple[dict, list[dict]]:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise FormatError(path, "corrupt corpus header", "line 1") from exc
        if header.get("schema_version") != SCHEMA_VERSION or header.get("kind") != "noised_corpus":
            raise FormatError(path, "not a noised corpus file (bad header)")
        records = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise FormatError(path, "corrupt corpus record", f"line {lineno}") from exc
    return header, records


# ---------------------------------------------------------------------------
# Dataset splits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    """Either random fractions (seeded) or explicit doc_id lists."""

    fractions: tuple[float, float, float] | None = (0.8, 0.1, 0.1)
    explicit: dict[str, list[str]] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.explicit is None:
            if self.fractions is None:
                raise InputError("SplitSpec needs fractions or explicit lists")
            if abs(sum(self.fractions) - 1.0) > 1e-9:
                raise InputError(f"split fractions must sum to 1, got {self.fractions}")
            if any(f < 0 for f in self.fractions):
                raise InputError("split fractions must be nonnegative")
        else:
            missing = {"train", "val", "test"} - set(self.explicit)
            if missing:
                raise InputError(f"explicit split missing keys: {sorted(missing)}")


def split_dataset(
    results: Sequence[AlignmentResult], spec: SplitSpec
) -> tuple[list[AlignmentResult], list[AlignmentResult], list[AlignmentResult]]:
    """Document-level split; never splits inside a document, so no leakage.

    Random splits shuffle doc_ids with the spec seed, making the partition a
    pure function of (doc_id set, seed). Empty partitions warn, not fail.
    """
    by_id = {r.doc_id: r for r in results}
    if spec.explicit is not None:
        listed = [d for key in ("train", "val", "test") for d in spec.explicit[key]]
        unknown = [d for d in listed if d not in by_id]
        if unknown:
            raise InputError(f"explicit split names unknown doc_ids: {unknown[:5]}")
        if len(set(listed)) != len(listed):
            raise InputError("explicit split lists overlap")
        if set(listed) != set(by_id):
            raise InputError("explicit split lists do not cover every document")
        parts = tuple([by_id[d] for d in spec.explicit[key]] for key in ("train", "val", "test"))
    else:
        ids = sorted(by_id)
        order = np.random.default_rng(spec.seed).permutation(len(ids))
        shuffled = [ids[i] for i in order]
        n = len(ids)
        n_train = int(math.floor(spec.fractions[0] * n + 0.5))
        n_val = int(math.floor(spec.fractions[1] * n + 0.5))
        n_train = min(n_train, n)
        n_val = min(n_val, n - n_train)
        parts = (
            [by_id[d] for d in shuffled[:n_train]],
            [by_id[d] for d in shuffled[n_train : n_train + n_val]],
            [by_id[d] for d in shuffled[n_train + n_val :]],
        )
    for name, part in zip(("train", "val", "test"), parts):
        if not part:
            warnings.warn(f"split produced an empty {name} partition", stacklevel=2)
    return parts
