"""Error-detection models: percentile baseline and the confidence-aware encoder."""

from confocr.detector.baseline import BaselineModel, fit_baseline, percentile_candidates
from confocr.detector.encoding import EncodedWindow, encode_components
from confocr.detector.model import (
    DetectorModel,
    EncoderConfig,
    classify_boxes,
    interpolate_confidence,
    load_checkpoint,
    save_checkpoint,
)
from confocr.detector.training import (
    PretrainConfig,
    TrainConfig,
    finetune,
    pretrain,
    run_early_stopping,
)
from confocr.detector.vocab import SPECIAL_TOKENS, Vocab, build_vocab

__all__ = [
    "BaselineModel",
    "DetectorModel",
    "EncodedWindow",
    "EncoderConfig",
    "PretrainConfig",
    "SPECIAL_TOKENS",
    "TrainConfig",
    "Vocab",
    "build_vocab",
    "classify_boxes",
    "encode_components",
    "finetune",
    "fit_baseline",
    "interpolate_confidence",
    "load_checkpoint",
    "percentile_candidates",
    "pretrain",
    "run_early_stopping",
    "save_checkpoint",
]
