"""Acceptance suite: one test per criterion, one printed verdict line each.

Run with `pytest tests/test_acceptance.py -v -s`. The two experiment-level
criteria (6 and 7) train real models at the default encoder size and
dominate the runtime (several minutes each on a laptop CPU).
"""

import math
import time
from functools import lru_cache

import numpy as np
import pytest
import torch

from confocr.alignment import align_document, build_match_graph
from confocr.detector.experiment import (
    alpha_sweep,
    run_repeats,
    sweep_pearson,
    windows_for_results,
)
from confocr.detector.model import DetectorModel, EncoderConfig
from confocr.detector.training import (
    TrainConfig,
    build_pretrain_batch,
    pretrain_losses,
    run_early_stopping,
)
from confocr.detector.vocab import build_vocab
from confocr.geometry import BBox, Document, GtBox, OcrBox
from confocr.io_formats import SplitSpec, split_dataset
from confocr.metrics import DEFAULT_NUM_BINS, calibration_bins, ece, levenshtein
from confocr.noise import make_rng, noise_tokens
from confocr.stats import ks_two_sample, pearson
from confocr.synthetic import make_synthetic_dataset
from tests.gradcheck_util import make_tiny_setup, max_relative_gradient_error
from tests.test_stats import oracle_permutation_p


def report(criterion: int, name: str, detail: str) -> None:
    print(f"\nACCEPTANCE {criterion} [{name}]: PASS ({detail})")


# ---------------------------------------------------------------------------
# 1. Edit-distance oracle equivalence
# ---------------------------------------------------------------------------

def test_criterion_1_levenshtein_oracle():
    def oracle(a: str, b: str) -> int:
        @lru_cache(maxsize=None)
        def rec(i, j):
            if i == 0:
                return j
            if j == 0:
                return i
            cost = 0 if a[i - 1] == b[j - 1] else 1
            return min(rec(i - 1, j) + 1, rec(i, j - 1) + 1, rec(i - 1, j - 1) + cost)

        return rec(len(a), len(b))

    rng = np.random.default_rng(2024)
    alphabet = "abcd"
    started = time.monotonic()
    mismatches = 0
    for _ in range(10_000):
        a = "".join(alphabet[i] for i in rng.integers(0, 4, size=rng.integers(0, 9)))
        b = "".join(alphabet[i] for i in rng.integers(0, 4, size=rng.integers(0, 9)))
        if levenshtein(a, b) != oracle(a, b):
            mismatches += 1
    elapsed = time.monotonic() - started
    assert mismatches == 0
    assert elapsed < 30.0
    report(1, "edit-distance oracle", f"10000 pairs, 0 mismatches, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 2. Alignment fixture suite
# ---------------------------------------------------------------------------

def test_criterion_2_alignment_fixtures(fixture_document):
    # the motivating bidirectional case: one merged, error-free component
    doc = Document(
        doc_id="t",
        ocr_boxes=[OcrBox("o1", BBox(0, 0, 44, 10), "text.", 0.9)],
        gt_boxes=[
            GtBox("g1", BBox(0, 0, 40, 10), "text", 0),
            GtBox("g2", BBox(40, 0, 44, 10), ".", 1),
        ],
    )
    merged = align_document(doc, 0.10)
    assert len(merged.components) == 1
    assert not merged.components[0].is_error

    # the hand-traced fixture reproduces its partition exactly
    result = align_document(fixture_document, 0.10)
    assert [(c.gt_ids, c.ocr_ids, c.is_error) for c in result.components] == [
        (("g0", "g1"), ("o0",), False),
        (("g2",), ("o1",), False),
        (("g3",), ("o2",), True),
        (("g4",), ("o3",), True),
        (("g5",), (), True),
    ]
    assert result.unmatched_ocr_count == 1

    # threshold monotonicity across 1000 random layouts
    rng = np.random.default_rng(7)
    for layout in range(1000):
        n_ocr, n_gt = rng.integers(0, 6, size=2)
        ocr = []
        gt = []
        for i in range(n_ocr):
            x0, y0 = rng.uniform(0, 40, size=2)
            ocr.append(
                OcrBox(f"o{i}", BBox(x0, y0, x0 + rng.uniform(0.5, 15), y0 + rng.uniform(0.5, 15)),
                       "x", float(rng.uniform(0, 1)))
            )
        for i in range(n_gt):
            x0, y0 = rng.uniform(0, 40, size=2)
            gt.append(GtBox(f"g{i}", BBox(x0, y0, x0 + rng.uniform(0.5, 15), y0 + rng.uniform(0.5, 15)), "x", i))
        doc = Document(doc_id=f"r{layout}", ocr_boxes=ocr, gt_boxes=gt)
        low, high = sorted(rng.uniform(0, 0.9, size=2))
        loose = {(e.ocr_id, e.gt_id) for e in build_match_graph(doc, low)}
        tight = {(e.ocr_id, e.gt_id) for e in build_match_graph(doc, high)}
        assert tight <= loose
        loose_home = {}
        for idx, c in enumerate(align_document(doc, low).components):
            for g in c.gt_ids:
                loose_home[("gt", g)] = idx
            for o in c.ocr_ids:
                loose_home[("ocr", o)] = idx
        for c in align_document(doc, high).components:
            homes = {loose_home[("gt", g)] for g in c.gt_ids}
            homes |= {loose_home[("ocr", o)] for o in c.ocr_ids if ("ocr", o) in loose_home}
            assert len(homes) == 1
    report(2, "alignment fixtures", "merged-period case, traced fixture, 1000 monotonic layouts")


# ---------------------------------------------------------------------------
# 3. ECE
# ---------------------------------------------------------------------------

def test_criterion_3_ece():
    pairs = [(0.95, True), (0.95, True), (0.65, True), (0.65, False)]
    assert ece(pairs, 10) == pytest.approx(0.10, abs=1e-12)

    # perfectly calibrated synthetic data: accuracy equals confidence per bin
    calibrated = []
    for conf, n_correct, n_total in ((0.25, 1, 4), (0.75, 3, 4), (0.5, 2, 4)):
        calibrated += [(conf, True)] * n_correct + [(conf, False)] * (n_total - n_correct)
    assert ece(calibrated, 10) == pytest.approx(0.0, abs=1e-12)

    assert DEFAULT_NUM_BINS == 10
    bins = calibration_bins([(0.05, True)], DEFAULT_NUM_BINS)
    assert len(bins) == 10
    assert all(b.upper - b.lower == pytest.approx(0.1) for b in bins)
    report(3, "expected calibration error", "two-bin 0.10 exact, calibrated 0, 10 bins of width 0.1")


# ---------------------------------------------------------------------------
# 4. Noise simulation
# ---------------------------------------------------------------------------

def test_criterion_4_noise_simulation(tmp_path):
    rng = make_rng(99)
    ids = rng.integers(0, 100, size=1_000_000)
    observed, confidences, flags = noise_tokens(ids, 100, make_rng(41))
    rate = float(flags.mean())
    assert 0.198 <= rate <= 0.202

    sample = np.sort(confidences[:100_000])
    n = len(sample)
    cdf = sample**4
    d = max(np.max(np.arange(1, n + 1) / n - cdf), np.max(cdf - np.arange(0, n) / n))
    critical = math.sqrt(-0.5 * math.log(0.001 / 2)) / math.sqrt(n)
    assert d < critical

    from confocr.cli import main

    corpus = tmp_path / "corpus.txt"
    corpus.write_text("one two three four five six seven eight\n" * 50)
    outs = []
    for name in ("g1.jsonl", "g2.jsonl"):
        out = tmp_path / name
        assert main(["noisegen", str(corpus), "--out", str(out), "--seed", "7"]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    report(4, "noise simulation", f"rate {rate:.4f}, KS D={d:.5f} < {critical:.5f}, corpora byte-identical")


# ---------------------------------------------------------------------------
# 5. Detector mechanism
# ---------------------------------------------------------------------------

def test_criterion_5a_alpha_zero_bit_identical():
    torch.manual_seed(3)
    config = EncoderConfig(
        vocab_size=50, num_layers=1, hidden_dim=8, num_heads=2, ffn_dim=16,
        max_seq_len=16, alpha_init=0.0, alpha_trainable=False,
    )
    model = DetectorModel(config)
    ids = torch.tensor([[2, 11, 13, 17, 3]])
    positions = torch.arange(5)
    plain_embedding = model.token_emb(ids) + model.pos_emb(positions)[None]
    confs = torch.tensor([[1.0, 0.42, 0.87, 0.05, 1.0]])
    assert torch.equal(model.embed(ids, confs), plain_embedding)
    assert torch.equal(model(ids, confs), model(ids, torch.ones_like(confs)))
    report(5, "alpha-zero endpoint", "embeddings and logits bit-identical to the confidence-free path")


def test_criterion_5b_gradient_check():
    worst_t, name_t = max_relative_gradient_error(*make_tiny_setup(alpha_trainable=True))
    assert worst_t <= 1e-4, f"trainable-alpha mismatch at {name_t}: {worst_t}"
    worst_f, name_f = max_relative_gradient_error(
        *make_tiny_setup(alpha_trainable=False, alpha_init=0.7)
    )
    assert worst_f <= 1e-4, f"fixed-alpha mismatch at {name_f}: {worst_f}"
    report(5, "gradient check", f"max rel err {max(worst_t, worst_f):.2e} <= 1e-4 incl. alpha")


def test_criterion_5c_loss_additivity():
    rng = make_rng(0)
    words = ["aa", "bb", "cc", "dd", "ee", "ff"]
    lines = [" ".join(words[i] for i in rng.integers(0, 6, size=6)) for _ in range(12)]
    vocab = build_vocab(lines)
    torch.manual_seed(0)
    model = DetectorModel(
        EncoderConfig(vocab_size=len(vocab), num_layers=1, hidden_dim=16, num_heads=2,
                      ffn_dim=32, max_seq_len=16)
    ).double()
    corpus = [vocab.encode_text(ln) for ln in lines]
    batch = build_pretrain_batch(corpus, vocab, make_rng(5), mask_prob=0.2, max_seq_len=16)
    batch = {k: v.double() if v.is_floating_point() else v for k, v in batch.items()}
    total, mlm, noise = pretrain_losses(model, batch)
    gap = abs(float(total) - (float(mlm) + float(noise)))
    assert gap < 1e-8
    report(5, "loss additivity", f"|total - (mlm + noise)| = {gap:.2e} < 1e-8")


# ---------------------------------------------------------------------------
# 6 + 7. End-to-end synthetic experiments
# ---------------------------------------------------------------------------

E2E_TRAIN = dict(learning_rate=1e-3, batch_size=4, seed=0)


@pytest.fixture(scope="module")
def e2e_setup():
    data = make_synthetic_dataset(n_docs=600, seed=123, words_per_doc=24, chain_branching=3)
    train, val, test = split_dataset(list(data.results), SplitSpec(fractions=(0.8, 0.1, 0.1), seed=0))
    vocab = build_vocab([c.ocr_text for r in train for c in r.components])
    encoder = EncoderConfig(vocab_size=len(vocab))  # the default tiny configuration
    windows = tuple(
        windows_for_results(split, vocab, encoder.max_seq_len) for split in (train, val, test)
    )
    return vocab, encoder, windows


def test_criterion_6_confidence_improves_f1(e2e_setup):
    vocab, encoder, (tw, vw, sw) = e2e_setup
    started = time.monotonic()
    config = TrainConfig(repeats=10, **E2E_TRAIN)
    plain = run_repeats("plain", vocab, tw, vw, sw, config, base_encoder=encoder)
    confbert = run_repeats("confbert", vocab, tw, vw, sw, config, base_encoder=encoder)
    elapsed = time.monotonic() - started
    ks = ks_two_sample(confbert.f1_scores, plain.f1_scores)
    assert plain.mean_f1 > 0.0
    assert confbert.mean_f1 >= plain.mean_f1
    assert ks.p_value < 0.05
    assert elapsed <= 20 * 60
    report(
        6,
        "end-to-end confidence gain",
        f"confbert {confbert.mean_f1:.3f} >= plain {plain.mean_f1:.3f}, "
        f"KS p={ks.p_value:.2e} < 0.05, {elapsed / 60:.1f} min",
    )


def test_criterion_7_alpha_sweep_shape(e2e_setup):
    vocab, encoder, (tw, vw, sw) = e2e_setup
    config = TrainConfig(repeats=3, **E2E_TRAIN)
    sweep = alpha_sweep(vocab, tw, vw, sw, config, base_encoder=encoder)
    assert len(sweep.rows) == 11
    assert sweep.rows[0].improvement == 0.0
    assert sweep.relative
    best = max(row.improvement for row in sweep.rows)
    at_one = sweep.rows[-1].improvement
    assert best > 0.0
    assert at_one <= 0.0 or at_one <= 0.25 * best
    mid = sweep_pearson(sweep, 0.1, 0.8)
    assert mid.r > 0.0
    report(
        7,
        "alpha sweep shape",
        f"max improvement {best:+.3f}, at alpha=1.0 {at_one:+.3f}, "
        f"Pearson(0.1..0.8) r={mid.r:.3f}",
    )


# ---------------------------------------------------------------------------
# 8. Statistics
# ---------------------------------------------------------------------------

def test_criterion_8_statistics():
    rng = np.random.default_rng(11)
    worst = 0.0
    for n in range(1, 11):
        # continuous samples plus a tied variant at every size
        cases = [
            (rng.normal(size=n).tolist(), rng.normal(0.5, 1.0, size=n).tolist()),
            (rng.integers(0, 3, size=n).astype(float).tolist(),
             rng.integers(0, 3, size=n).astype(float).tolist()),
        ]
        for a, b in cases:
            ours = ks_two_sample(a, b).p_value
            exact = oracle_permutation_p(a, b)
            worst = max(worst, abs(ours - exact))
            assert abs(ours - exact) <= 0.02
    x = [0.1 * i for i in range(1, 9)]
    up = pearson(x, [3.0 * v + 0.25 for v in x])
    down = pearson(x, [-0.5 * v + 2.0 for v in x])
    assert abs(up.r - 1.0) <= 1e-12
    assert abs(down.r + 1.0) <= 1e-12
    report(8, "statistics", f"KS vs permutation oracle max gap {worst:.2e}, Pearson endpoints exact")


# ---------------------------------------------------------------------------
# 9. Protocol conformance
# ---------------------------------------------------------------------------

def test_criterion_9_protocol_conformance():
    defaults = TrainConfig()
    assert defaults.max_epochs == 16
    assert defaults.patience == 5
    assert defaults.repeats == 10
    assert defaults.learning_rate == 5e-5

    def run_trace(trace):
        scores = iter(trace)
        return run_early_stopping(lambda e: None, lambda e: next(scores), 16, 5)

    plateau = run_trace([0.5, 0.6, 0.6, 0.6, 0.6, 0.6, 0.6])
    assert plateau.epochs_run == 7 and plateau.best_epoch == 2

    monotone = run_trace([i / 100 for i in range(1, 17)])
    assert monotone.epochs_run == 16 and monotone.best_epoch == 16

    reset = run_trace([0.5, 0.5, 0.5, 0.5, 0.6, 0.6, 0.6, 0.6, 0.6, 0.6])
    assert reset.epochs_run == 10 and reset.best_epoch == 5
    report(9, "protocol conformance", "16 epochs max, patience 5, best-F1 checkpoint selection")
