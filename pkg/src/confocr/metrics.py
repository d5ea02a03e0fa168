"""Quality and calibration metrics for aligned OCR datasets.

Character error rate (CER) measures edit distance against the ground truth,
box error rate (BER) the fraction of aligned components whose normalized
text differs, and expected calibration error (ECE) the bin-weighted gap
between stated confidence and empirical accuracy. Micro precision/recall/F1
score binary error detectors, with "error" as the positive class.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from confocr.alignment import AlignmentResult, normalize
from confocr.errors import MetricUndefinedError

DEFAULT_NUM_BINS = 10


def levenshtein(a: str, b: str) -> int:
    """Minimum number of single-character edits turning `a` into `b`.

    Computed over unicode scalar values with the classic row-by-row dynamic
    program; the insertion scan inside each row is vectorized through a
    prefix-minimum, so long documents stay fast.
    """
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    b_codes = np.fromiter((ord(c) for c in b), dtype=np.int64, count=len(b))
    m = len(b)
    jidx = np.arange(1, m + 1, dtype=np.int64)
    prev = np.arange(m + 1, dtype=np.int64)
    row = np.empty(m + 1, dtype=np.int64)
    for i, ca in enumerate(map(ord, a), start=1):
        # Candidate cost before insertions: substitution or deletion.
        cand = np.minimum(prev[:-1] + (b_codes != ca), prev[1:] + 1)
        # row[j] = min(cand[j], row[j-1] + 1) unrolls to a prefix minimum of
        # cand[k] - k, compared against the row[0] = i boundary.
        acc = np.minimum.accumulate(cand - jidx)
        row[0] = i
        row[1:] = jidx + np.minimum(acc, i)
        prev, row = row, prev
    return int(prev[m])


def cer(ocr_seq: str, gt_seq: str) -> float:
    """Edit distance divided by ground-truth length; undefined for empty GT."""
    if not gt_seq:
        raise MetricUndefinedError("CER is undefined for an empty ground-truth sequence")
    return levenshtein(ocr_seq, gt_seq) / len(gt_seq)


def document_cer(result: AlignmentResult, normalize_texts: bool = True) -> float:
    """CER over the document's full sequences, concatenated in component order."""
    if normalize_texts:
        ocr_seq = "".join(normalize(c.ocr_text) for c in result.components)
        gt_seq = "".join(normalize(c.gt_text) for c in result.components)
    else:
        ocr_seq = "".join(c.ocr_text for c in result.components)
        gt_seq = "".join(c.gt_text for c in result.components)
    if not gt_seq:
        raise MetricUndefinedError(
            f"document {result.doc_id!r} has no ground-truth characters; CER undefined"
        )
    return levenshtein(ocr_seq, gt_seq) / len(gt_seq)


def ber(results: Sequence[AlignmentResult]) -> float:
    """Fraction of components whose normalized OCR text differs from the GT text."""
    total = sum(len(r.components) for r in results)
    if total == 0:
        raise MetricUndefinedError("BER is undefined with zero components")
    errors = sum(1 for r in results for c in r.components if c.is_error)
    return errors / total


@dataclass(frozen=True)
class CalibrationBin:
    """One reliability-diagram bin over [lower, upper)."""

    lower: float
    upper: float
    count: int
    mean_confidence: float
    accuracy: float


def calibration_bins(
    pairs: Sequence[tuple[float, bool]], num_bins: int = DEFAULT_NUM_BINS
) -> list[CalibrationBin]:
    """Bin (confidence, correct) pairs into equal-width confidence bins.

    Bins are lower-inclusive and upper-exclusive, except the last bin which
    also includes confidence exactly 1.0. Empty bins report zero counts.
    """
    if num_bins < 1:
        raise ValueError(f"num_bins must be >= 1, got {num_bins}")
    if not pairs:
        raise MetricUndefinedError("calibration is undefined on an empty pair list")
    conf = np.asarray([p[0] for p in pairs], dtype=np.float64)
    correct = np.asarray([bool(p[1]) for p in pairs], dtype=np.float64)
    if conf.min() < 0.0 or conf.max() > 1.0:
        raise ValueError("confidences must lie in [0, 1]")
    edges = np.arange(1, num_bins) / num_bins
    idx = np.searchsorted(edges, conf, side="right")
    bins: list[CalibrationBin] = []
    for i in range(num_bins):
        mask = idx == i
        count = int(mask.sum())
        bins.append(
            CalibrationBin(
                lower=i / num_bins,
                upper=(i + 1) / num_bins,
                count=count,
                mean_confidence=float(conf[mask].mean()) if count else 0.0,
                accuracy=float(correct[mask].mean()) if count else 0.0,
            )
        )
    return bins


def ece(pairs: Sequence[tuple[float, bool]], num_bins: int = DEFAULT_NUM_BINS) -> float:
    """Expected calibration error: bin-weighted |accuracy - mean confidence|."""
    bins = calibration_bins(pairs, num_bins)
    n = sum(b.count for b in bins)
    return sum(b.count / n * abs(b.accuracy - b.mean_confidence) for b in bins if b.count)


class F1Score(NamedTuple):
    precision: float
    recall: float
    f1: float


def micro_f1(predictions: Sequence[bool], labels: Sequence[bool]) -> F1Score:
    """Pooled precision/recall/F1 with "error" (True) as the positive class.

    Zero denominators yield 0 by convention.
    """
    if len(predictions) != len(labels):
        raise ValueError(
            f"predictions and labels differ in length: {len(predictions)} vs {len(labels)}"
        )
    tp = fp = fn = 0
    for pred, label in zip(predictions, labels):
        if pred and label:
            tp += 1
        elif pred and not label:
            fp += 1
        elif not pred and label:
            fn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return F1Score(precision, recall, f1)


def calibration_pairs(results: Iterable[AlignmentResult]) -> list[tuple[float, bool]]:
    """(confidence, correct) pairs for all components that carry a confidence.

    Unmatched-GT components have no confidence and are excluded here, though
    they still count toward BER.
    """
    return [
        (c.confidence, not c.is_error)
        for r in results
        for c in r.components
        if c.confidence is not None
    ]


@dataclass(frozen=True)
class DatasetStats:
    """Aggregate quality metrics for one aligned dataset (fractions, not %)."""

    cer: float
    ber: float
    ece: float
    avg_components: float
    avg_unmatched_ocr: float


def dataset_stats(
    results: Sequence[AlignmentResult],
    pairs: Sequence[tuple[float, bool]],
    num_bins: int = DEFAULT_NUM_BINS,
    pooled_cer: bool = False,
) -> DatasetStats:
    """Dataset-level metric bundle.

    CER aggregation is the mean of per-document CERs by default; with
    pooled_cer=True it is the total edit distance over the total GT length
    instead (documents with empty GT then contribute only insertions).
    """
    if not results:
        raise MetricUndefinedError("dataset_stats requires at least one document")
    if pooled_cer:
        total_dist = 0
        total_chars = 0
        for r in results:
            ocr_seq = "".join(normalize(c.ocr_text) for c in r.components)
            gt_seq = "".join(normalize(c.gt_text) for c in r.components)
            total_dist += levenshtein(ocr_seq, gt_seq)
            total_chars += len(gt_seq)
        if total_chars == 0:
            raise MetricUndefinedError("no ground-truth characters in the dataset")
        cer_value = total_dist / total_chars
    else:
        cer_value = float(np.mean([document_cer(r) for r in results]))
    return DatasetStats(
        cer=cer_value,
        ber=ber(results),
        ece=ece(pairs, num_bins),
        avg_components=float(np.mean([len(r.components) for r in results])),
        avg_unmatched_ocr=float(np.mean([r.unmatched_ocr_count for r in results])),
    )
