"""Turning aligned components into model-ready token windows.

A window is [CLS] tokens-of-component [SEP] tokens-of-component [SEP] ...;
every token inherits its component's confidence, special tokens are fully
trusted (confidence 1.0) and components without a confidence — unmatched
ground truth — are fully untrusted (0.0). Documents whose token count
exceeds the window size split into several windows at component
boundaries, never inside a component.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from confocr.alignment import AlignedComponent
from confocr.detector.vocab import Vocab

SPECIAL_CONFIDENCE = 1.0
MISSING_CONFIDENCE = 0.0


@dataclass(frozen=True)
class EncodedWindow:
    """One model input sequence covering a contiguous run of components."""

    token_ids: tuple[int, ...]
    confidences: tuple[float, ...]
    spans: tuple[tuple[int, int], ...]  # [start, end) of each component's tokens
    component_indices: tuple[int, ...]  # positions in the original component list
    labels: tuple[bool, ...]  # is_error per component

    def __post_init__(self):
        if len(self.token_ids) != len(self.confidences):
            raise ValueError("token/confidence length mismatch")
        if not len(self.spans) == len(self.component_indices) == len(self.labels):
            raise ValueError("span/index/label length mismatch")


class _WindowBuilder:
    def __init__(self, vocab: Vocab):
        self.vocab = vocab
        self.reset()

    def reset(self):
        self.ids = [self.vocab.cls_id]
        self.confs = [SPECIAL_CONFIDENCE]
        self.spans: list[tuple[int, int]] = []
        self.indices: list[int] = []
        self.labels: list[bool] = []

    def add(self, index: int, token_ids: list[int], confidence: float, label: bool):
        start = len(self.ids)
        self.ids.extend(token_ids)
        self.confs.extend([confidence] * len(token_ids))
        self.ids.append(self.vocab.sep_id)
        self.confs.append(SPECIAL_CONFIDENCE)
        self.spans.append((start, start + len(token_ids)))
        self.indices.append(index)
        self.labels.append(label)

    def build(self) -> EncodedWindow:
        return EncodedWindow(
            token_ids=tuple(self.ids),
            confidences=tuple(self.confs),
            spans=tuple(self.spans),
            component_indices=tuple(self.indices),
            labels=tuple(self.labels),
        )


def encode_components(
    components: Sequence[AlignedComponent],
    vocab: Vocab,
    max_seq_len: int = 256,
) -> list[EncodedWindow]:
    """Encode ordered components into one or more windows.

    A component longer than an entire window is truncated to fit rather than
    dropped, so every component keeps a prediction.
    """
    if max_seq_len < 3:
        raise ValueError("max_seq_len must fit at least [CLS] token [SEP]")
    windows: list[EncodedWindow] = []
    builder = _WindowBuilder(vocab)
    for index, comp in enumerate(components):
        token_ids = vocab.encode_text(comp.ocr_text)
        token_ids = token_ids[: max_seq_len - 2]
        confidence = comp.confidence if comp.confidence is not None else MISSING_CONFIDENCE
        if len(builder.ids) + len(token_ids) + 1 > max_seq_len and builder.indices:
            windows.append(builder.build())
            builder.reset()
        builder.add(index, token_ids, confidence, comp.is_error)
    if builder.indices:
        windows.append(builder.build())
    return windows
