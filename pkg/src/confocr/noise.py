"""Simulated OCR noise for pretraining corpora.

Each token draws a confidence p from Beta(4, 1), which skews toward high
values the way real engine confidences do, and is replaced by a uniformly
random other token whenever p < Uniform(0, 1). The marginal corruption rate
is therefore 1 - E[p] = 0.2, and lower-confidence tokens are more likely to
be wrong, so the attached confidences are calibrated by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator; a fixed seed reproduces the draw stream bit-for-bit."""
    return np.random.default_rng(seed)


def worker_rng(base_seed: int, worker_index: int) -> np.random.Generator:
    """Independent stream for a worker, derived from (base_seed, worker_index)."""
    return np.random.default_rng([base_seed, worker_index])


def sample_beta_4_1(rng: np.random.Generator) -> float:
    """One Beta(4, 1) draw via the closed-form inverse CDF U**(1/4)."""
    return float(rng.random() ** 0.25)


@dataclass(frozen=True)
class NoisedToken:
    original_id: int
    observed_id: int
    confidence: float
    was_noised: bool


def _allowed_replacements(vocab_size: int, special_ids: Sequence[int]) -> np.ndarray:
    if vocab_size < 2:
        raise ValueError(f"vocab_size must be >= 2, got {vocab_size}")
    allowed = np.setdiff1d(np.arange(vocab_size), np.asarray(list(special_ids), dtype=np.int64))
    if allowed.size < 2:
        raise ValueError("need at least two non-special tokens to sample replacements")
    return allowed


def noise_tokens(
    token_ids: Sequence[int],
    vocab_size: int,
    rng: np.random.Generator,
    special_ids: Sequence[int] = (),
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized noising of a token-id sequence.

    Returns (observed_ids, confidences, was_noised). Replacements are drawn
    uniformly over non-special tokens excluding the original, so a "noised"
    token always differs from the original. The draw order (all confidences,
    all comparison uniforms, then replacement indices) is fixed, making the
    output a pure function of the rng state.
    """
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= vocab_size):
        raise ValueError("token ids must lie in [0, vocab_size)")
    allowed = _allowed_replacements(vocab_size, special_ids)
    if ids.size == 0:
        empty = np.empty(0)
        return ids.copy(), empty, np.empty(0, dtype=bool)
    confidences = rng.random(ids.size) ** 0.25
    noised = confidences < rng.random(ids.size)
    observed = ids.copy()
    if noised.any():
        originals = ids[noised]
        pos = np.searchsorted(allowed, originals)
        in_allowed = (pos < allowed.size) & (allowed[np.minimum(pos, allowed.size - 1)] == originals)
        choices = rng.integers(0, allowed.size - in_allowed.astype(np.int64))
        # Skip over the original's slot so it can never be redrawn.
        choices = choices + (in_allowed & (choices >= pos))
        observed[noised] = allowed[choices]
    return observed, confidences, noised


def noise_sequence(
    token_ids: Sequence[int],
    vocab_size: int,
    rng: np.random.Generator,
    special_ids: Sequence[int] = (),
) -> list[NoisedToken]:
    """Per-token view of `noise_tokens` for record-oriented consumers."""
    observed, confidences, noised = noise_tokens(token_ids, vocab_size, rng, special_ids)
    return [
        NoisedToken(
            original_id=int(orig),
            observed_id=int(obs),
            confidence=float(conf),
            was_noised=bool(flag),
        )
        for orig, obs, conf, flag in zip(token_ids, observed, confidences, noised)
    ]
