"""Command-line interface.

Subcommands mirror the pipeline: `align` produces the aligned dataset,
`metrics` summarizes its quality and calibration, `noisegen` materializes a
noised pretraining corpus, `train` runs detector experiments and `sweep`
maps F1 against the confidence mixing weight. Every output file embeds the
effective configuration and toolkit version, and identical inputs, flags
and seeds yield byte-identical outputs.

Exit codes: 0 success, 1 internal failure, 2 user/input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from multiprocessing import get_context
from pathlib import Path

import torch

from confocr import __version__
from confocr.alignment import align_document
from confocr.detector.experiment import (
    DEFAULT_ALPHA_GRID,
    RunReport,
    SweepResult,
    SweepRow,
    alpha_sweep,
    run_baseline,
    run_repeats,
    sweep_pearson,
    train_once,
    windows_for_results,
)
from confocr.detector.model import EncoderConfig
from confocr.detector.training import PretrainConfig, TrainConfig
from confocr.detector.vocab import DEFAULT_MAX_VOCAB, build_vocab
from confocr.errors import ConfocrError, InputError
from confocr.io_formats import (
    AlignedDataset,
    SplitSpec,
    attach_ocr,
    canonical_json,
    emit_aligned,
    load_aligned,
    load_gt,
    load_ocr,
    split_dataset,
    write_noised_corpus,
    GT_FORMATS,
    SCHEMA_VERSION,
)
from confocr.metrics import calibration_pairs, dataset_stats
from confocr.noise import make_rng, noise_tokens
from confocr.stats import aggregate_runs


def _write_report(path, payload: dict) -> None:
    Path(path).write_text(canonical_json(payload) + "\n", encoding="utf-8")


def _report_scaffold(kind: str, config: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "toolkit_version": __version__,
        "config": config,
    }


# ---------------------------------------------------------------------------
# align
# ---------------------------------------------------------------------------

def cmd_align(args) -> int:
    docs = load_gt(args.gt_path, args.gt_format)
    ocr = load_ocr(args.ocr_path)
    docs = attach_ocr(docs, ocr)
    missing = sum(1 for d in docs if not d.ocr_boxes)
    results = [align_document(d, args.threshold) for d in docs]
    config = {
        "ocr_path": str(args.ocr_path),
        "gt_path": str(args.gt_path),
        "gt_format": args.gt_format,
        "threshold": args.threshold,
    }
    dataset = AlignedDataset(
        threshold=args.threshold,
        results=tuple(results),
        sources={"ocr": str(args.ocr_path), "gt": str(args.gt_path)},
        config=config,
    )
    emit_aligned(dataset, args.out)
    n_components = sum(len(r.components) for r in results)
    n_unmatched_gt = sum(1 for r in results for c in r.components if c.is_unmatched_gt)
    n_unmatched_ocr = sum(r.unmatched_ocr_count for r in results)
    print(f"aligned {len(results)} documents -> {args.out}")
    print(f"  components:        {n_components}")
    print(f"  unmatched GT boxes (kept):    {n_unmatched_gt}")
    print(f"  unmatched OCR boxes (dropped): {n_unmatched_ocr}")
    if missing:
        print(f"  note: {missing} documents had no OCR output", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def cmd_metrics(args) -> int:
    dataset = load_aligned(args.aligned_path)
    results = dataset.results
    pairs = calibration_pairs(results)
    stats = dataset_stats(results, pairs, num_bins=args.bins, pooled_cer=args.pooled)
    name = Path(args.aligned_path).stem
    header = f"{'dataset':<20}{'CER%':>8}{'BER%':>8}{'ECE%':>8}{'AC':>8}{'AUB':>8}"
    row = (
        f"{name:<20}{100 * stats.cer:>8.2f}{100 * stats.ber:>8.2f}"
        f"{100 * stats.ece:>8.2f}{stats.avg_components:>8.2f}{stats.avg_unmatched_ocr:>8.2f}"
    )
    print(header)
    print(row)
    out = args.out or str(Path(args.aligned_path).with_suffix(".metrics.json"))
    payload = _report_scaffold(
        "metrics_report",
        {
            "aligned_path": str(args.aligned_path),
            "bins": args.bins,
            "pooled": args.pooled,
        },
    )
    payload["metrics"] = {
        "cer": stats.cer,
        "ber": stats.ber,
        "ece": stats.ece,
        "avg_components": stats.avg_components,
        "avg_unmatched_ocr": stats.avg_unmatched_ocr,
        "documents": len(results),
        "calibration_pairs": len(pairs),
    }
    _write_report(out, payload)
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# noisegen
# ---------------------------------------------------------------------------

def cmd_noisegen(args) -> int:
    corpus_path = Path(args.corpus_path)
    if not corpus_path.exists():
        raise InputError(f"no such file: {corpus_path}")
    lines = [ln for ln in corpus_path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise InputError(f"corpus {corpus_path} is empty")
    vocab = build_vocab(lines, max_size=args.vocab_cap)
    rng = make_rng(args.seed)
    records = []
    total = noised_count = 0
    for line in lines:
        ids = vocab.encode_text(line)
        if not ids:
            continue
        observed, confidences, flags = noise_tokens(ids, len(vocab), rng, vocab.special_ids)
        records.append(
            {
                "ids": [int(i) for i in observed],
                "original_ids": [int(i) for i in ids],
                "confidences": [float(c) for c in confidences],
                "noised": [bool(f) for f in flags],
            }
        )
        total += len(ids)
        noised_count += int(flags.sum())
    if not records:
        raise InputError(f"corpus {corpus_path} produced no tokens")
    config = {
        "corpus_path": str(corpus_path),
        "seed": args.seed,
        "vocab_cap": args.vocab_cap,
        "toolkit_version": __version__,
    }
    write_noised_corpus(args.out, vocab.tokens, records, config)
    print(f"wrote {len(records)} sequences, {total} tokens -> {args.out}")
    print(f"  empirical noise rate: {noised_count / total:.4f} (analytic 0.2)")
    return 0


# ---------------------------------------------------------------------------
# train / sweep
# ---------------------------------------------------------------------------

def _parse_fractions(text: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise InputError(f"bad --split value {text!r}: {exc}") from exc
    if len(parts) != 3:
        raise InputError(f"--split needs three comma-separated fractions, got {text!r}")
    return parts


def _load_split_spec(args) -> SplitSpec:
    if args.split_file:
        payload = json.loads(Path(args.split_file).read_text(encoding="utf-8"))
        return SplitSpec(fractions=None, explicit=payload, seed=args.split_seed)
    return SplitSpec(fractions=_parse_fractions(args.split), seed=args.split_seed)


def _encoder_config_from_args(args, vocab_size: int) -> EncoderConfig:
    return EncoderConfig(
        vocab_size=vocab_size,
        num_layers=args.layers,
        hidden_dim=args.hidden_dim,
        num_heads=args.heads,
        ffn_dim=args.ffn_dim,
        max_seq_len=args.max_seq_len,
    )


def _train_config_from_args(args) -> TrainConfig:
    return TrainConfig(
        max_epochs=args.max_epochs,
        patience=args.patience,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        repeats=args.repeats,
        seed=args.seed,
    )


def _prepare_experiment(args):
    dataset = load_aligned(args.aligned_path)
    spec = _load_split_spec(args)
    train, val, test = split_dataset(list(dataset.results), spec)
    if not train or not val or not test:
        raise InputError("training requires nonempty train/val/test splits")
    corpus_lines: list[str] = []
    if getattr(args, "pretrain_corpus", None):
        corpus_file = Path(args.pretrain_corpus)
        if not corpus_file.exists():
            raise InputError(f"no such file: {corpus_file}")
        corpus_lines = [
            ln for ln in corpus_file.read_text(encoding="utf-8").splitlines() if ln.strip()
        ]
        if not corpus_lines:
            raise InputError(f"pretraining corpus {corpus_file} is empty")
    texts = [c.ocr_text for r in train for c in r.components]
    vocab = build_vocab(texts + corpus_lines, max_size=args.vocab_cap)
    return dataset, (train, val, test), vocab, corpus_lines


def _repeat_worker(payload):
    """Module-level so process pools can pickle it; one seeded repeat."""
    torch.set_num_threads(1)
    kind, vocab, windows, train_config, seed, alpha, base_encoder, corpus, pretrain_config = payload
    _, result = train_once(
        kind,
        vocab,
        windows[0],
        windows[1],
        windows[2],
        train_config,
        seed=seed,
        alpha=alpha,
        base_encoder=base_encoder,
        pretrain_corpus=corpus,
        pretrain_config=pretrain_config,
    )
    return result


def _run_repeats_parallel(jobs, kind, vocab, windows, train_config, alpha, base_encoder, corpus, pretrain_config):
    from confocr.detector.experiment import _summarize

    payloads = [
        (kind, vocab, windows, train_config, train_config.seed + i, alpha, base_encoder, corpus, pretrain_config)
        for i in range(train_config.repeats)
    ]
    with ProcessPoolExecutor(max_workers=jobs, mp_context=get_context("spawn")) as pool:
        repeats = list(pool.map(_repeat_worker, payloads))
    return _summarize(kind, alpha, repeats)


def _significance_payload(report_f1s, args):
    if not args.vs:
        return None
    ref = json.loads(Path(args.vs).read_text(encoding="utf-8"))
    if ref.get("kind") != "run_report" or "repeats" not in ref:
        raise InputError(f"{args.vs} is not a run report with repeats")
    ref_f1s = [r["f1"] for r in ref["repeats"]]
    comparison = aggregate_runs(report_f1s, ref_f1s)
    return {
        "reference": str(args.vs),
        "reference_model": ref.get("model"),
        "mean": comparison.mean_a,
        "std": comparison.std_a,
        "reference_mean": comparison.mean_b,
        "reference_std": comparison.std_b,
        "ks_statistic": comparison.ks.statistic,
        "p_value": comparison.ks.p_value,
        "ks_method": comparison.ks.method,
        "significant": comparison.significant,
    }


def cmd_train(args) -> int:
    if args.model != "confbert" and args.alpha is not None:
        raise InputError("--alpha only applies to --model confbert")
    if args.model == "baseline" and args.pretrain_corpus:
        raise InputError("--pretrain-corpus does not apply to --model baseline")
    dataset, (train, val, test), vocab, corpus_lines = _prepare_experiment(args)
    config = {
        "aligned_path": str(args.aligned_path),
        "model": args.model,
        "alpha": args.alpha,
        "seed": args.seed,
        "repeats": args.repeats,
        "split": args.split,
        "split_seed": args.split_seed,
        "split_file": args.split_file,
        "max_epochs": args.max_epochs,
        "patience": args.patience,
        "lr": args.lr,
        "batch_size": args.batch_size,
        "layers": args.layers,
        "hidden_dim": args.hidden_dim,
        "heads": args.heads,
        "ffn_dim": args.ffn_dim,
        "max_seq_len": args.max_seq_len,
        "vocab_cap": args.vocab_cap,
        "pretrain_corpus": args.pretrain_corpus,
        "pretrain_steps": args.pretrain_steps,
        "dataset_threshold": dataset.threshold,
    }
    payload = _report_scaffold("run_report", config)
    payload["model"] = args.model

    if args.model == "baseline":
        train_c = [c for r in train for c in r.components]
        val_c = [c for r in val for c in r.components]
        test_c = [c for r in test for c in r.components]
        model, score = run_baseline(train_c, val_c, test_c)
        payload["threshold"] = model.threshold
        payload["repeats"] = [
            {"seed": args.seed, "precision": score.precision, "recall": score.recall, "f1": score.f1}
        ]
        payload["mean_f1"] = score.f1
        payload["std_f1"] = 0.0
        print(f"baseline  threshold={model.threshold:.4f}  F1={score.f1:.4f}")
        report_f1s = [score.f1]
    else:
        encoder = _encoder_config_from_args(args, len(vocab))
        train_config = _train_config_from_args(args)
        windows = tuple(
            windows_for_results(split, vocab, encoder.max_seq_len) for split in (train, val, test)
        )
        corpus_ids = None
        pretrain_config = None
        if corpus_lines:
            corpus_ids = [vocab.encode_text(ln) for ln in corpus_lines]
            corpus_ids = [ids for ids in corpus_ids if ids]
            pretrain_config = PretrainConfig(steps=args.pretrain_steps, seed=args.seed)
        if args.jobs > 1:
            report = _run_repeats_parallel(
                args.jobs, args.model, vocab, windows, train_config,
                args.alpha, encoder, corpus_ids, pretrain_config,
            )
        else:
            report = run_repeats(
                args.model,
                vocab,
                windows[0],
                windows[1],
                windows[2],
                train_config,
                alpha=args.alpha,
                base_encoder=encoder,
                pretrain_corpus=corpus_ids,
                pretrain_config=pretrain_config,
            )
        payload["alpha"] = report.alpha
        payload["repeats"] = [asdict(r) for r in report.repeats]
        payload["mean_f1"] = report.mean_f1
        payload["std_f1"] = report.std_f1
        report_f1s = report.f1_scores
        star = ""
        significance = _significance_payload(report_f1s, args)
        if significance:
            payload["significance"] = significance
            star = "*" if significance["significant"] else ""
        print(
            f"{args.model:<9} F1 = {payload['mean_f1']:.4f} "
            f"(std {payload['std_f1']:.4f}, {len(payload['repeats'])} repeats){star}"
        )

    if args.model == "baseline":
        significance = _significance_payload(report_f1s, args)
        if significance:
            payload["significance"] = significance

    _write_report(args.out, payload)
    print(f"wrote {args.out}")
    return 0


def cmd_sweep(args) -> int:
    dataset, (train, val, test), vocab, _ = _prepare_experiment(args)
    encoder = _encoder_config_from_args(args, len(vocab))
    train_config = _train_config_from_args(args)
    windows = tuple(
        windows_for_results(split, vocab, encoder.max_seq_len) for split in (train, val, test)
    )
    n_points = int(round(1.0 / args.grid_step)) + 1
    grid = [round(i * args.grid_step, 10) for i in range(n_points)]
    if grid[-1] > 1.0 + 1e-9:
        raise InputError(f"--grid-step {args.grid_step} does not divide [0, 1] evenly")

    if args.jobs > 1:
        result = _sweep_parallel(args.jobs, vocab, windows, train_config, grid, encoder)
    else:
        result = alpha_sweep(
            vocab, windows[0], windows[1], windows[2], train_config, grid, base_encoder=encoder
        )

    def safe_pearson(lo, hi):
        try:
            return sweep_pearson(result, lo, hi)
        except ValueError:
            return None  # coarse grids may not have 3 points in range

    pearson_all = safe_pearson(0.0, 0.8)
    pearson_mid = safe_pearson(0.1, 0.8)
    mode = "relative" if result.relative else "absolute (F1(0) = 0)"
    print(f"{'alpha':>6} {'mean_f1':>9} {'std_f1':>9} {'improvement':>12}  ({mode})")
    for row in result.rows:
        print(f"{row.alpha:>6.1f} {row.mean_f1:>9.4f} {row.std_f1:>9.4f} {row.improvement:>12.4f}")
    for label, res in (("0.0-0.8", pearson_all), ("0.1-0.8", pearson_mid)):
        if res is None:
            print(f"Pearson (alpha {label}): n/a (needs 3 grid points in range)")
        else:
            print(f"Pearson (alpha {label}): r={res.r:.4f} p={res.p_value:.4g}")

    config = {
        "aligned_path": str(args.aligned_path),
        "grid_step": args.grid_step,
        "seed": args.seed,
        "repeats": args.repeats,
        "split": args.split,
        "split_seed": args.split_seed,
        "max_epochs": args.max_epochs,
        "patience": args.patience,
        "lr": args.lr,
        "batch_size": args.batch_size,
        "layers": args.layers,
        "hidden_dim": args.hidden_dim,
        "heads": args.heads,
        "ffn_dim": args.ffn_dim,
        "max_seq_len": args.max_seq_len,
        "vocab_cap": args.vocab_cap,
    }
    payload = _report_scaffold("sweep_report", config)
    payload["relative"] = result.relative
    payload["reference_f1"] = result.reference_f1
    payload["rows"] = [asdict(r) for r in result.rows]
    payload["pearson"] = {
        "alpha_0.0_to_0.8": None
        if pearson_all is None
        else {"r": pearson_all.r, "p_value": pearson_all.p_value},
        "alpha_0.1_to_0.8": None
        if pearson_mid is None
        else {"r": pearson_mid.r, "p_value": pearson_mid.p_value},
    }
    _write_report(args.out, payload)
    tsv_path = Path(args.out).with_suffix(".tsv")
    tsv_lines = ["alpha\tmean_f1\tstd_f1\timprovement"]
    tsv_lines += [
        f"{r.alpha}\t{r.mean_f1!r}\t{r.std_f1!r}\t{r.improvement!r}" for r in result.rows
    ]
    tsv_path.write_text("\n".join(tsv_lines) + "\n", encoding="utf-8")
    print(f"wrote {args.out} and {tsv_path}")
    return 0


def _sweep_point_worker(payload):
    torch.set_num_threads(1)
    vocab, windows, train_config, alpha, base_encoder = payload
    return run_repeats(
        "confbert",
        vocab,
        windows[0],
        windows[1],
        windows[2],
        train_config,
        alpha=alpha,
        base_encoder=base_encoder,
    )


def _sweep_parallel(jobs, vocab, windows, train_config, grid, base_encoder) -> SweepResult:
    payloads = [(vocab, windows, train_config, a, base_encoder) for a in grid]
    with ProcessPoolExecutor(max_workers=jobs, mp_context=get_context("spawn")) as pool:
        reports = list(pool.map(_sweep_point_worker, payloads))
    reference = reports[0].mean_f1
    relative = reference > 0.0
    rows = []
    for a, rep in zip(grid, reports):
        delta = rep.mean_f1 - reference
        rows.append(
            SweepRow(
                alpha=float(a),
                mean_f1=rep.mean_f1,
                std_f1=rep.std_f1,
                improvement=delta / reference if relative else delta,
            )
        )
    return SweepResult(rows=tuple(rows), reference_f1=reference, relative=relative)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_split_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--split", default="0.8,0.1,0.1", help="train,val,test fractions")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--split-file", default=None, help="JSON with explicit train/val/test doc_id lists")


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-epochs", type=int, default=16)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--lr", type=float, default=5e-5)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--hidden-dim", type=int, default=64)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--ffn-dim", type=int, default=256)
    p.add_argument("--max-seq-len", type=int, default=256)
    p.add_argument("--vocab-cap", type=int, default=DEFAULT_MAX_VOCAB)
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default sequential)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="confocr",
        description="OCR/GT alignment, quality metrics, and confidence-aware error detection.",
    )
    parser.add_argument("--version", action="version", version=f"confocr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("align", help="align OCR output with ground truth")
    p.add_argument("ocr_path")
    p.add_argument("gt_path")
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.10)
    p.add_argument("--gt-format", choices=GT_FORMATS, default="generic_json")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("metrics", help="CER/BER/ECE/AC/AUB for an aligned dataset")
    p.add_argument("aligned_path")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--pooled", action="store_true", help="pool CER over the corpus")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("noisegen", help="simulate OCR noise over a clean text corpus")
    p.add_argument("corpus_path")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocab-cap", type=int, default=DEFAULT_MAX_VOCAB)
    p.set_defaults(func=cmd_noisegen)

    p = sub.add_parser("train", help="train and evaluate an error detector")
    p.add_argument("aligned_path")
    p.add_argument("--model", choices=("baseline", "plain", "confbert"), required=True)
    p.add_argument("--alpha", type=float, default=None, help="fix alpha (confbert only)")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pretrain-corpus", default=None, help="plain-text corpus for pretraining")
    p.add_argument("--pretrain-steps", type=int, default=2500)
    p.add_argument("--out", required=True)
    p.add_argument("--vs", default=None, help="reference run report for significance")
    _add_split_args(p)
    _add_model_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="F1 vs fixed alpha over a grid")
    p.add_argument("aligned_path")
    p.add_argument("--grid-step", type=float, default=0.1)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_split_args(p)
    _add_model_args(p)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfocrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
