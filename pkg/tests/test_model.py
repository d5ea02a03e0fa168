import math

import pytest
import torch

from confocr.detector import build_vocab, encode_components
from confocr.detector.model import (
    DetectorModel,
    EncoderConfig,
    batch_windows,
    classify_boxes,
    interpolate_confidence,
    load_checkpoint,
    save_checkpoint,
)
from tests.gradcheck_util import make_tiny_setup, max_relative_gradient_error
from tests.test_vocab_encoding import comp


def tiny_config(vocab_size, **overrides):
    base = dict(num_layers=1, hidden_dim=8, num_heads=2, ffn_dim=16, max_seq_len=16)
    base.update(overrides)
    return EncoderConfig(vocab_size=vocab_size, **base)


class TestEncoderConfig:
    def test_head_divisibility(self):
        with pytest.raises(ValueError):
            EncoderConfig(vocab_size=100, hidden_dim=10, num_heads=4)

    def test_alpha_range(self):
        with pytest.raises(ValueError):
            EncoderConfig(vocab_size=100, alpha_init=1.5)

    def test_trainable_alpha_needs_open_interval(self):
        with pytest.raises(ValueError):
            EncoderConfig(vocab_size=100, alpha_init=0.0, alpha_trainable=True)
        EncoderConfig(vocab_size=100, alpha_init=0.0, alpha_trainable=False)

    def test_defaults(self):
        cfg = EncoderConfig(vocab_size=100)
        assert (cfg.num_layers, cfg.hidden_dim, cfg.num_heads, cfg.ffn_dim) == (2, 64, 4, 256)
        assert cfg.max_seq_len == 256 and cfg.alpha_init == 0.5 and cfg.alpha_trainable


class TestConfidenceEmbedding:
    def test_alpha_zero_endpoint(self):
        emb = torch.tensor([[0.2, -0.4]])
        out = interpolate_confidence(emb, torch.tensor([0.3]), 0.0)
        assert torch.equal(out, emb)

    def test_alpha_one_endpoint(self):
        emb = torch.tensor([[0.2, -0.4]])
        out = interpolate_confidence(emb, torch.tensor([0.3]), 1.0)
        assert torch.allclose(out, torch.full((1, 2), 0.7))

    def test_hand_evaluated_midpoint(self):
        emb = torch.tensor([[0.2, -0.4]], dtype=torch.float64)
        out = interpolate_confidence(emb, torch.tensor([0.9], dtype=torch.float64), 0.5)
        assert torch.allclose(out, torch.tensor([[0.15, -0.15]], dtype=torch.float64), atol=1e-15)

    def test_fixed_alpha_zero_embed_bit_identical(self):
        torch.manual_seed(0)
        model = DetectorModel(tiny_config(30, alpha_init=0.0, alpha_trainable=False))
        ids = torch.tensor([[2, 7, 9, 3]])
        confs = torch.tensor([[1.0, 0.3, 0.8, 1.0]])
        positions = torch.arange(4)
        expected = model.token_emb(ids) + model.pos_emb(positions)[None]
        assert torch.equal(model.embed(ids, confs), expected)

    def test_fixed_alpha_zero_ignores_confidence_in_logits(self):
        torch.manual_seed(1)
        model = DetectorModel(tiny_config(30, alpha_init=0.0, alpha_trainable=False))
        ids = torch.tensor([[2, 7, 9, 3]])
        low = model(ids, torch.zeros(1, 4))
        high = model(ids, torch.rand(1, 4))
        assert torch.equal(low, high)

    def test_fixed_alpha_one_constant_collapse(self):
        torch.manual_seed(2)
        model = DetectorModel(tiny_config(30, alpha_init=1.0, alpha_trainable=False))
        ids = torch.tensor([[5, 6, 7, 8]])
        confs = torch.full((1, 4), 0.4)
        positions = torch.arange(4)
        pre_positional = model.embed(ids, confs) - model.pos_emb(positions)[None]
        first = pre_positional[0, 0]
        for i in range(1, 4):
            assert torch.allclose(pre_positional[0, i], first, atol=1e-7)

    def test_trainable_alpha_sigmoid_parameterization(self):
        torch.manual_seed(3)
        model = DetectorModel(tiny_config(30, alpha_init=0.5))
        assert float(model.alpha.detach()) == pytest.approx(0.5)
        with torch.no_grad():
            model.alpha_raw.fill_(100.0)
        assert 0.0 < float(model.alpha.detach()) <= 1.0


class TestClassifyBoxes:
    def setup_method(self):
        self.vocab = build_vocab(["aa bb cc dd"])
        self.comps = [comp("aa bb", 0.9), comp("", None, is_error=True), comp("cc", 0.2, True)]
        self.windows = encode_components(self.comps, self.vocab, 16)

    def test_untrained_error_head_gives_half(self):
        torch.manual_seed(0)
        model = DetectorModel(tiny_config(len(self.vocab)))
        results = classify_boxes(model, self.windows, self.vocab.pad_id)
        assert [i for i, _ in results] == [0, 1, 2]
        assert all(p == pytest.approx(0.5) for _, p in results)

    def test_deterministic(self):
        torch.manual_seed(1)
        model = DetectorModel(tiny_config(len(self.vocab)))
        with torch.no_grad():
            model.error_head.weight.normal_()
        first = classify_boxes(model, self.windows, self.vocab.pad_id)
        second = classify_boxes(model, self.windows, self.vocab.pad_id)
        assert first == second

    def test_probabilities_proper(self):
        torch.manual_seed(2)
        model = DetectorModel(tiny_config(len(self.vocab)))
        with torch.no_grad():
            model.error_head.weight.normal_()
            model.error_head.bias.normal_()
        ids, confs, mask = batch_windows(self.windows, self.vocab.pad_id)
        hidden = model(ids, confs, mask)
        from confocr.detector.model import pool_spans

        logits = model.error_head(pool_spans(hidden, self.windows))
        probs = torch.softmax(logits, dim=-1)
        assert torch.allclose(probs.sum(dim=-1), torch.ones(len(probs)), atol=1e-6)
        for _, p in classify_boxes(model, self.windows, self.vocab.pad_id):
            assert 0.0 < p < 1.0

    def test_padding_does_not_change_probabilities(self):
        # the same window batched alone vs alongside a longer one
        torch.manual_seed(3)
        model = DetectorModel(tiny_config(len(self.vocab)))
        with torch.no_grad():
            model.error_head.weight.normal_()
        short = encode_components([comp("aa", 0.5)], self.vocab, 16)
        long = encode_components([comp("aa bb cc dd", 0.5)], self.vocab, 16)
        alone = classify_boxes(model, short, self.vocab.pad_id)
        padded = classify_boxes(model, short + long, self.vocab.pad_id)
        assert alone[0][1] == pytest.approx(padded[0][1], abs=1e-6)


class TestGradients:
    def test_matches_central_differences_trainable_alpha(self):
        model, loss_fn = make_tiny_setup(alpha_trainable=True)
        worst, name = max_relative_gradient_error(model, loss_fn)
        assert worst <= 1e-4, f"gradient mismatch at {name}: {worst}"
        assert any(n == "alpha_raw" for n, _ in model.named_parameters())

    def test_matches_central_differences_fixed_alpha(self):
        model, loss_fn = make_tiny_setup(alpha_trainable=False, alpha_init=0.7)
        worst, name = max_relative_gradient_error(model, loss_fn)
        assert worst <= 1e-4, f"gradient mismatch at {name}: {worst}"


class TestCheckpoints:
    def test_round_trip(self, tmp_path):
        torch.manual_seed(5)
        model = DetectorModel(tiny_config(40))
        path = tmp_path / "model.pt"
        save_checkpoint(model, path, extra={"note": "test"})
        loaded, extra = load_checkpoint(path)
        assert extra == {"note": "test"}
        assert loaded.config == model.config
        for (na, pa), (nb, pb) in zip(
            model.state_dict().items(), loaded.state_dict().items()
        ):
            assert na == nb
            assert torch.equal(pa, pb)

    def test_version_mismatch_rejected(self, tmp_path):
        torch.manual_seed(5)
        model = DetectorModel(tiny_config(40))
        path = tmp_path / "model.pt"
        save_checkpoint(model, path)
        payload = torch.load(path, weights_only=False)
        payload["format_version"] = 99
        torch.save(payload, path)
        with pytest.raises(ValueError):
            load_checkpoint(path)

    def test_shapes_recorded(self, tmp_path):
        torch.manual_seed(5)
        model = DetectorModel(tiny_config(40))
        path = tmp_path / "model.pt"
        save_checkpoint(model, path)
        payload = torch.load(path, weights_only=False)
        assert payload["shapes"]["token_emb.weight"] == (40, 8)
        assert "torch_rng_state" in payload
