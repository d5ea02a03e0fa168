"""Synthetic documents with calibrated OCR noise, for experiments and tests.

Text comes from a seeded Markov chain over an invented word list, so token
context carries real signal; the OCR side replicates the ground-truth boxes
with small geometric jitter and corrupts words through the Beta(4, 1) noise
channel, so each box confidence is informative about its correctness by
construction. The result is a controllable stand-in for engine output where
both the text and the confidence carry usable evidence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from confocr.alignment import AlignmentResult, align_document
from confocr.geometry import BBox, Document, GtBox, OcrBox
from confocr.noise import make_rng, noise_tokens

_CONSONANTS = "bcdfghjklmnprstvz"
_VOWELS = "aeiou"

# Layout constants: word cells on a grid, sized so jittered OCR boxes still
# cover their own cell almost fully but never reach 10% of a neighbour.
_CELL_W, _CELL_H = 20.0, 8.0
_BOX_W, _BOX_H = 16.0, 6.0
_COLS = 6


def make_words(count: int, rng: np.random.Generator) -> list[str]:
    """Distinct pronounceable lowercase words (consonant-vowel syllables)."""
    words: list[str] = []
    seen = set()
    while len(words) < count:
        syllables = rng.integers(2, 4)
        word = "".join(
            _CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))]
            for _ in range(syllables)
        )
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


@dataclass(frozen=True)
class MarkovChain:
    """Peaked bigram model: each word has a few likely successors."""

    successors: np.ndarray  # (vocab, branching) word indices
    probs: np.ndarray  # (branching,) shared successor distribution

    @property
    def vocab_size(self) -> int:
        return self.successors.shape[0]

    def walk(self, length: int, rng: np.random.Generator) -> list[int]:
        state = int(rng.integers(self.vocab_size))
        out = [state]
        for _ in range(length - 1):
            branch = rng.choice(self.successors.shape[1], p=self.probs)
            state = int(self.successors[state, branch])
            out.append(state)
        return out


def make_chain(
    vocab_size: int,
    rng: np.random.Generator,
    branching: int = 3,
    probs: tuple[float, ...] | None = None,
) -> MarkovChain:
    successors = np.stack(
        [rng.choice(vocab_size, size=branching, replace=False) for _ in range(vocab_size)]
    )
    if probs is None:
        probs = (0.6, 0.3, 0.1)[:branching]
    probs_arr = np.asarray(probs, dtype=np.float64)
    if probs_arr.shape != (branching,):
        raise ValueError("probs must match the branching factor")
    return MarkovChain(successors=successors, probs=probs_arr / probs_arr.sum())


def make_text_corpus(
    n_lines: int, words: list[str], chain: MarkovChain, rng: np.random.Generator, line_len: int = 12
) -> list[str]:
    """Clean text lines for pretraining corpora."""
    return [" ".join(words[i] for i in chain.walk(line_len, rng)) for _ in range(n_lines)]


def _jittered(bbox: BBox, rng: np.random.Generator, jitter: float) -> BBox:
    dx0, dy0, dx1, dy1 = rng.uniform(-jitter, jitter, size=4)
    x0 = max(0.0, bbox.x0 + dx0)
    y0 = max(0.0, bbox.y0 + dy0)
    return BBox(x0, y0, max(x0, bbox.x1 + dx1), max(y0, bbox.y1 + dy1))


def make_document(
    doc_id: str,
    words: list[str],
    chain: MarkovChain,
    rng: np.random.Generator,
    words_per_doc: int = 24,
    merge_prob: float = 0.15,
    jitter: float = 0.4,
) -> Document:
    """One synthetic document: GT word boxes plus noised OCR boxes.

    Most OCR boxes cover exactly one word; with merge_prob an OCR box spans
    two neighbouring words on the same row, exercising component merging.
    """
    walk = chain.walk(words_per_doc, rng)
    gt_bbox = []
    for k in range(words_per_doc):
        col, row = k % _COLS, k // _COLS
        x0, y0 = col * _CELL_W, row * _CELL_H
        gt_bbox.append(BBox(x0, y0, x0 + _BOX_W, y0 + _BOX_H))
    gt_boxes = tuple(
        GtBox(id=f"g{k}", bbox=gt_bbox[k], text=words[walk[k]], order_index=k)
        for k in range(words_per_doc)
    )

    observed, confidences, _flags = noise_tokens(walk, len(words), rng)
    ocr_boxes = []
    k = 0
    while k < words_per_doc:
        same_row = (k % _COLS) != _COLS - 1 and k + 1 < words_per_doc
        span = 2 if same_row and rng.random() < merge_prob else 1
        covered = range(k, k + span)
        hull = BBox(
            min(gt_bbox[j].x0 for j in covered),
            min(gt_bbox[j].y0 for j in covered),
            max(gt_bbox[j].x1 for j in covered),
            max(gt_bbox[j].y1 for j in covered),
        )
        ocr_boxes.append(
            OcrBox(
                id=f"o{len(ocr_boxes)}",
                bbox=_jittered(hull, rng, jitter),
                text=" ".join(words[int(observed[j])] for j in covered),
                confidence=float(np.mean([confidences[j] for j in covered])),
            )
        )
        k += span
    return Document(doc_id=doc_id, ocr_boxes=tuple(ocr_boxes), gt_boxes=gt_boxes)


@dataclass(frozen=True)
class SyntheticDataset:
    documents: tuple[Document, ...]
    results: tuple[AlignmentResult, ...]
    words: tuple[str, ...]
    chain: MarkovChain
    corpus_lines: tuple[str, ...]


def make_synthetic_dataset(
    n_docs: int,
    seed: int,
    vocab_size: int = 120,
    words_per_doc: int = 24,
    merge_prob: float = 0.15,
    corpus_lines: int = 0,
    threshold: float = 0.10,
    chain_branching: int = 3,
    chain_probs: tuple[float, ...] | None = None,
) -> SyntheticDataset:
    """Documents, their alignments, and optionally a clean pretraining corpus,
    all reproducible from the seed."""
    rng = make_rng(seed)
    words = make_words(vocab_size, rng)
    chain = make_chain(vocab_size, rng, chain_branching, chain_probs)
    documents = tuple(
        make_document(f"doc{i:04d}", words, chain, rng, words_per_doc, merge_prob)
        for i in range(n_docs)
    )
    results = tuple(align_document(d, threshold) for d in documents)
    lines = tuple(make_text_corpus(corpus_lines, words, chain, rng)) if corpus_lines else ()
    return SyntheticDataset(
        documents=documents, results=results, words=tuple(words), chain=chain, corpus_lines=lines
    )
