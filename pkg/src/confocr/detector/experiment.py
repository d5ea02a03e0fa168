"""Repeated-training experiments: model variants, seeds, and the alpha sweep.

Each experiment repeats training with seeds seed, seed+1, ... so that two
variants compared over the same repeat index share initialization and data
order; significance between variants is then a Kolmogorov-Smirnov test over
the two F1 samples.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import torch

from confocr.alignment import AlignedComponent
from confocr.detector.baseline import BaselineModel, fit_baseline
from confocr.detector.encoding import EncodedWindow, encode_components
from confocr.detector.model import DetectorModel, EncoderConfig
from confocr.detector.training import TrainConfig, PretrainConfig, evaluate_detector, finetune, pretrain
from confocr.detector.vocab import Vocab
from confocr.metrics import F1Score
from confocr.stats import PearsonResult, pearson

MODEL_KINDS = ("baseline", "plain", "confbert")
DEFAULT_ALPHA_GRID = tuple(round(i / 10, 1) for i in range(11))


def encoder_config_for(
    kind: str,
    vocab_size: int,
    alpha: float | None = None,
    base: EncoderConfig | None = None,
) -> EncoderConfig:
    """Encoder configuration for a model variant.

    "plain" pins alpha to exactly 0 (no confidence path); "confbert" trains
    alpha from 0.5 unless a fixed value is requested, which also freezes it
    (the sweep regime).
    """
    if base is None:
        base = EncoderConfig(vocab_size=vocab_size)
    else:
        base = replace(base, vocab_size=vocab_size)
    if kind == "plain":
        return replace(base, alpha_init=0.0, alpha_trainable=False)
    if kind == "confbert":
        if alpha is None:
            return replace(base, alpha_init=0.5, alpha_trainable=True)
        return replace(base, alpha_init=float(alpha), alpha_trainable=False)
    raise ValueError(f"unknown model kind {kind!r} (expected 'plain' or 'confbert')")


@dataclass(frozen=True)
class RepeatResult:
    seed: int
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class RunReport:
    model: str
    alpha: float | None
    repeats: tuple[RepeatResult, ...]
    mean_f1: float
    std_f1: float

    @property
    def f1_scores(self) -> list[float]:
        return [r.f1 for r in self.repeats]


def _summarize(model: str, alpha: float | None, repeats: list[RepeatResult]) -> RunReport:
    scores = np.asarray([r.f1 for r in repeats], dtype=np.float64)
    return RunReport(
        model=model,
        alpha=alpha,
        repeats=tuple(repeats),
        mean_f1=float(scores.mean()),
        std_f1=float(scores.std(ddof=1)) if scores.size > 1 else 0.0,
    )


def train_once(
    kind: str,
    vocab: Vocab,
    train_windows: Sequence[EncodedWindow],
    val_windows: Sequence[EncodedWindow],
    test_windows: Sequence[EncodedWindow],
    train_config: TrainConfig,
    seed: int,
    alpha: float | None = None,
    base_encoder: EncoderConfig | None = None,
    pretrain_corpus: Sequence[Sequence[int]] | None = None,
    pretrain_config: PretrainConfig | None = None,
) -> tuple[DetectorModel, RepeatResult]:
    """One seeded run: init, optional pretraining, fine-tune, test."""
    torch.manual_seed(seed)
    model = DetectorModel(encoder_config_for(kind, len(vocab), alpha, base_encoder))
    if pretrain_corpus is not None:
        cfg = pretrain_config or PretrainConfig()
        pretrain(model, pretrain_corpus, vocab, replace(cfg, seed=seed))
    model, _best_val = finetune(
        model, train_windows, val_windows, replace(train_config, seed=seed), vocab.pad_id
    )
    score = evaluate_detector(model, test_windows, vocab.pad_id)
    return model, RepeatResult(seed=seed, precision=score.precision, recall=score.recall, f1=score.f1)


def run_repeats(
    kind: str,
    vocab: Vocab,
    train_windows: Sequence[EncodedWindow],
    val_windows: Sequence[EncodedWindow],
    test_windows: Sequence[EncodedWindow],
    train_config: TrainConfig,
    alpha: float | None = None,
    base_encoder: EncoderConfig | None = None,
    pretrain_corpus: Sequence[Sequence[int]] | None = None,
    pretrain_config: PretrainConfig | None = None,
) -> RunReport:
    """Repeat training with consecutive seeds and bundle the test scores."""
    repeats = []
    for i in range(train_config.repeats):
        _, result = train_once(
            kind,
            vocab,
            train_windows,
            val_windows,
            test_windows,
            train_config,
            seed=train_config.seed + i,
            alpha=alpha,
            base_encoder=base_encoder,
            pretrain_corpus=pretrain_corpus,
            pretrain_config=pretrain_config,
        )
        repeats.append(result)
    return _summarize(kind, alpha, repeats)


# ---------------------------------------------------------------------------
# Baseline experiment
# ---------------------------------------------------------------------------

def component_confidences(components: Sequence[AlignedComponent]) -> list[float]:
    """Per-component confidence; unmatched-GT components count as fully untrusted."""
    return [c.confidence if c.confidence is not None else 0.0 for c in components]


def run_baseline(
    train_components: Sequence[AlignedComponent],
    val_components: Sequence[AlignedComponent],
    test_components: Sequence[AlignedComponent],
) -> tuple[BaselineModel, F1Score]:
    """Fit the percentile threshold and score it on the test components.

    Deterministic: no seeds, no repeats; percentiles come from the training
    confidences and the pick maximizes validation micro-F1.
    """
    model = fit_baseline(
        component_confidences(train_components),
        component_confidences(val_components),
        [c.is_error for c in val_components],
    )
    score = model.evaluate(
        component_confidences(test_components), [c.is_error for c in test_components]
    )
    return model, score


# ---------------------------------------------------------------------------
# Alpha sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    alpha: float
    mean_f1: float
    std_f1: float
    improvement: float  # vs the alpha = 0 row; relative unless the sweep is flagged absolute


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    reference_f1: float
    relative: bool  # False when F1(alpha=0) = 0 made relative improvement undefined


def alpha_sweep(
    vocab: Vocab,
    train_windows: Sequence[EncodedWindow],
    val_windows: Sequence[EncodedWindow],
    test_windows: Sequence[EncodedWindow],
    train_config: TrainConfig,
    grid: Sequence[float] = DEFAULT_ALPHA_GRID,
    base_encoder: EncoderConfig | None = None,
) -> SweepResult:
    """Fixed, non-trainable alpha at each grid point, identical seeds across
    points; reports improvement of mean test F1 against the alpha = 0 point."""
    grid = [float(a) for a in grid]
    if not grid or abs(grid[0]) > 1e-12:
        raise ValueError("the sweep grid must start at alpha = 0, the reference point")
    reports = [
        run_repeats(
            "confbert",
            vocab,
            train_windows,
            val_windows,
            test_windows,
            train_config,
            alpha=a,
            base_encoder=base_encoder,
        )
        for a in grid
    ]
    reference = reports[0].mean_f1
    relative = reference > 0.0
    rows = []
    for a, rep in zip(grid, reports):
        delta = rep.mean_f1 - reference
        rows.append(
            SweepRow(
                alpha=a,
                mean_f1=rep.mean_f1,
                std_f1=rep.std_f1,
                improvement=delta / reference if relative else delta,
            )
        )
    return SweepResult(rows=tuple(rows), reference_f1=reference, relative=relative)


def sweep_pearson(result: SweepResult, lo: float = 0.1, hi: float = 0.8) -> PearsonResult:
    """Correlation between alpha and improvement over rows with lo <= alpha <= hi."""
    picked = [r for r in result.rows if lo - 1e-9 <= r.alpha <= hi + 1e-9]
    if len(picked) < 3:
        raise ValueError(f"need at least 3 grid points in [{lo}, {hi}] for a correlation")
    return pearson([r.alpha for r in picked], [r.improvement for r in picked])


def windows_for_results(results, vocab: Vocab, max_seq_len: int) -> list[EncodedWindow]:
    """Encode every document of a split; windows never straddle documents."""
    return [w for r in results for w in encode_components(r.components, vocab, max_seq_len)]
