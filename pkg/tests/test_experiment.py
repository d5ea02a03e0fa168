import numpy as np
import pytest
import torch

from confocr.detector.encoding import encode_components
from confocr.detector.experiment import (
    DEFAULT_ALPHA_GRID,
    alpha_sweep,
    component_confidences,
    encoder_config_for,
    run_baseline,
    run_repeats,
    sweep_pearson,
    windows_for_results,
)
from confocr.detector.model import EncoderConfig
from confocr.detector.training import TrainConfig
from confocr.detector.vocab import build_vocab
from tests.test_vocab_encoding import comp


def tiny_encoder(vocab_size):
    return EncoderConfig(
        vocab_size=vocab_size, num_layers=1, hidden_dim=8, num_heads=2, ffn_dim=16, max_seq_len=16
    )


def windows(vocab, n, seed):
    rng = np.random.default_rng(seed)
    comps = []
    for _ in range(n):
        is_err = bool(rng.random() < 0.4)
        conf = float(rng.uniform(0.1, 0.45) if is_err else rng.uniform(0.55, 0.95))
        comps.append(comp("aa bb", conf, is_error=is_err))
    return encode_components(comps, vocab, 16)


class TestEncoderConfigFor:
    def test_plain_pins_alpha_zero(self):
        cfg = encoder_config_for("plain", 50)
        assert cfg.alpha_init == 0.0 and not cfg.alpha_trainable

    def test_confbert_trainable_default(self):
        cfg = encoder_config_for("confbert", 50)
        assert cfg.alpha_init == 0.5 and cfg.alpha_trainable

    def test_confbert_fixed_alpha(self):
        cfg = encoder_config_for("confbert", 50, alpha=0.3)
        assert cfg.alpha_init == 0.3 and not cfg.alpha_trainable

    def test_base_overrides_preserved(self):
        base = tiny_encoder(10)
        cfg = encoder_config_for("confbert", 50, base=base)
        assert cfg.hidden_dim == 8 and cfg.vocab_size == 50

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            encoder_config_for("megamodel", 50)

    def test_default_grid_has_eleven_points(self):
        assert len(DEFAULT_ALPHA_GRID) == 11
        assert DEFAULT_ALPHA_GRID[0] == 0.0 and DEFAULT_ALPHA_GRID[-1] == 1.0


class TestRunRepeats:
    def test_seeds_and_summary(self):
        vocab = build_vocab(["aa bb"])
        enc = tiny_encoder(len(vocab))
        tw, vw, sw = windows(vocab, 40, 1), windows(vocab, 20, 2), windows(vocab, 20, 3)
        config = TrainConfig(max_epochs=2, patience=1, learning_rate=1e-3, batch_size=8, repeats=3, seed=100)
        report = run_repeats("confbert", vocab, tw, vw, sw, config, base_encoder=enc)
        assert [r.seed for r in report.repeats] == [100, 101, 102]
        scores = [r.f1 for r in report.repeats]
        assert report.mean_f1 == pytest.approx(np.mean(scores))
        assert report.std_f1 == pytest.approx(np.std(scores, ddof=1))
        assert report.model == "confbert" and report.alpha is None


class TestRunBaseline:
    def test_separable_components(self):
        def comps(n, seed):
            rng = np.random.default_rng(seed)
            out = []
            for _ in range(n):
                is_err = bool(rng.random() < 0.5)
                conf = float(rng.uniform(0, 0.4) if is_err else rng.uniform(0.6, 1.0))
                out.append(comp("x", conf, is_error=is_err))
            return out

        model, score = run_baseline(comps(60, 0), comps(30, 1), comps(30, 2))
        assert 0.4 <= model.threshold <= 0.6
        assert score.f1 == 1.0

    def test_missing_confidence_treated_untrusted(self):
        assert component_confidences([comp("x", None, is_error=True)]) == [0.0]


class TestAlphaSweep:
    def test_structure_and_reference_row(self):
        vocab = build_vocab(["aa bb"])
        enc = tiny_encoder(len(vocab))
        tw, vw, sw = windows(vocab, 40, 1), windows(vocab, 20, 2), windows(vocab, 20, 3)
        config = TrainConfig(max_epochs=2, patience=1, learning_rate=2e-3, batch_size=8, repeats=2, seed=0)
        result = alpha_sweep(vocab, tw, vw, sw, config, grid=(0.0, 0.5, 1.0), base_encoder=enc)
        assert [r.alpha for r in result.rows] == [0.0, 0.5, 1.0]
        assert result.rows[0].improvement == 0.0
        if result.relative:
            assert result.reference_f1 > 0
        else:
            assert result.reference_f1 == 0.0

    def test_grid_must_start_at_zero(self):
        vocab = build_vocab(["aa"])
        with pytest.raises(ValueError):
            alpha_sweep(vocab, [], [], [], TrainConfig(), grid=(0.1, 0.5))

    def test_sweep_pearson_range_filter(self):
        from confocr.detector.experiment import SweepResult, SweepRow

        rows = tuple(
            SweepRow(alpha=a, mean_f1=0.5 + a / 10, std_f1=0.0, improvement=a / 5)
            for a in DEFAULT_ALPHA_GRID
        )
        result = SweepResult(rows=rows, reference_f1=0.5, relative=True)
        res = sweep_pearson(result, 0.1, 0.8)
        assert res.r == pytest.approx(1.0)
        with pytest.raises(ValueError):
            sweep_pearson(result, 0.75, 0.8)


class TestWindowsForResults:
    def test_document_boundaries_respected(self, fixture_document):
        from confocr.alignment import align_document

        result = align_document(fixture_document, 0.10)
        vocab = build_vocab([c.ocr_text for c in result.components])
        out = windows_for_results([result, result], vocab, max_seq_len=256)
        # two documents, each short enough for one window
        assert len(out) == 2
        assert out[0].component_indices == out[1].component_indices
