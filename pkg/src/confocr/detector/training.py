"""Pretraining and fine-tuning loops for the detector.

Pretraining jointly optimizes masked-token prediction and a binary
"was this token corrupted" head on synthetically noised text; the two
cross-entropies are simply summed. Fine-tuning trains the error head (and
the whole body) on labelled components with early stopping on validation
micro-F1, returning the best checkpoint seen.

All sampling (shuffling, noise, masking) flows from numpy generators seeded
in the configs, so a fixed seed reproduces the whole trajectory on a
single-threaded run.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from confocr.detector.encoding import EncodedWindow
from confocr.detector.model import DetectorModel, batch_windows, pool_spans
from confocr.detector.vocab import Vocab
from confocr.metrics import micro_f1
from confocr.noise import make_rng, noise_tokens

IGNORE_INDEX = -100


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 16
    patience: int = 5
    learning_rate: float = 5e-5
    weight_decay: float = 0.01
    batch_size: int = 16
    repeats: int = 10
    seed: int = 0

    def __post_init__(self):
        if not self.patience < self.max_epochs:
            raise ValueError("patience must be smaller than max_epochs")


@dataclass(frozen=True)
class PretrainConfig:
    steps: int = 2500
    batch_size: int = 16
    learning_rate: float = 5e-5
    weight_decay: float = 0.01
    mask_prob: float = 0.15
    seed: int = 0


@dataclass(frozen=True)
class EarlyStopResult:
    best_epoch: int
    best_score: float
    epochs_run: int


def run_early_stopping(
    train_epoch: Callable[[int], None],
    evaluate: Callable[[int], float],
    max_epochs: int,
    patience: int,
) -> EarlyStopResult:
    """Generic epoch loop: stop after `patience` epochs without a strict
    improvement, never exceeding `max_epochs`; any improvement resets the
    window. Epochs are numbered from 1."""
    best_score = float("-inf")
    best_epoch = 0
    bad_epochs = 0
    epochs_run = 0
    for epoch in range(1, max_epochs + 1):
        train_epoch(epoch)
        score = evaluate(epoch)
        epochs_run = epoch
        if score > best_score:
            best_score = score
            best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= patience:
                break
    return EarlyStopResult(best_epoch=best_epoch, best_score=best_score, epochs_run=epochs_run)


def evaluate_detector(model: DetectorModel, windows: Sequence[EncodedWindow], pad_id: int):
    """Micro-F1 of thresholded error probabilities over all components."""
    model.eval()
    predictions: list[bool] = []
    labels: list[bool] = []
    with torch.no_grad():
        for lo in range(0, len(windows), 64):
            chunk = windows[lo : lo + 64]
            ids, confs, mask = batch_windows(chunk, pad_id)
            hidden = model(ids, confs, mask)
            probs = torch.softmax(model.error_head(pool_spans(hidden, chunk)), dim=-1)[:, 1]
            predictions.extend(bool(p > 0.5) for p in probs.tolist())
            labels.extend(label for w in chunk for label in w.labels)
    return micro_f1(predictions, labels)


def finetune(
    model: DetectorModel,
    train_windows: Sequence[EncodedWindow],
    val_windows: Sequence[EncodedWindow],
    config: TrainConfig,
    pad_id: int,
) -> tuple[DetectorModel, float]:
    """Train the error classifier; return the model restored to its best
    validation checkpoint along with that best micro-F1."""
    if not train_windows or not val_windows:
        raise ValueError("finetune requires nonempty train and validation sets")
    rng = np.random.default_rng(config.seed)
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay
    )
    best_state: dict = {}
    best_seen = float("-inf")

    def train_epoch(_epoch: int) -> None:
        model.train()
        order = rng.permutation(len(train_windows))
        for lo in range(0, len(order), config.batch_size):
            chunk = [train_windows[i] for i in order[lo : lo + config.batch_size]]
            ids, confs, mask = batch_windows(chunk, pad_id)
            hidden = model(ids, confs, mask)
            logits = model.error_head(pool_spans(hidden, chunk))
            labels = torch.tensor(
                [int(label) for w in chunk for label in w.labels], dtype=torch.long
            )
            loss = F.cross_entropy(logits, labels)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

    def evaluate(_epoch: int) -> float:
        nonlocal best_state, best_seen
        score = evaluate_detector(model, val_windows, pad_id).f1
        # Same strict-improvement rule as the stopping loop, so the snapshot
        # is exactly the checkpoint the loop will report as best.
        if score > best_seen:
            best_seen = score
            best_state = copy.deepcopy(model.state_dict())
        return score

    outcome = run_early_stopping(train_epoch, evaluate, config.max_epochs, config.patience)
    model.load_state_dict(best_state)
    return model, outcome.best_score


# ---------------------------------------------------------------------------
# Pretraining
# ---------------------------------------------------------------------------

@dataclass
class PretrainHistory:
    total: list[float] = field(default_factory=list)
    mlm: list[float] = field(default_factory=list)
    noise: list[float] = field(default_factory=list)


def build_pretrain_batch(
    sequences: Sequence[Sequence[int]],
    vocab: Vocab,
    rng: np.random.Generator,
    mask_prob: float,
    max_seq_len: int,
) -> dict[str, torch.Tensor]:
    """Noise clean sequences, then apply MLM masking on top.

    MLM targets are the pre-mask (already noised) token ids: masking hides
    what the model would otherwise read, while the noise labels always refer
    to the corruption applied before masking. Positions may be both.
    """
    rows = []
    for seq in sequences:
        clean = list(seq)[: max_seq_len - 2]
        observed, confs, flags = noise_tokens(clean, len(vocab), rng, vocab.special_ids)
        n = observed.size
        mlm_labels = np.full(n, IGNORE_INDEX, dtype=np.int64)
        inputs = observed.copy()
        selected = rng.random(n) < mask_prob
        if selected.any():
            mlm_labels[selected] = observed[selected]
            roll = rng.random(int(selected.sum()))
            idx = np.flatnonzero(selected)
            mask_these = idx[roll < 0.8]
            random_these = idx[(roll >= 0.8) & (roll < 0.9)]
            inputs[mask_these] = vocab.mask_id
            if random_these.size:
                allowed = np.setdiff1d(
                    np.arange(len(vocab)), np.asarray(vocab.special_ids, dtype=np.int64)
                )
                inputs[random_these] = allowed[rng.integers(0, allowed.size, random_these.size)]
        rows.append(
            {
                "ids": [vocab.cls_id, *inputs.tolist(), vocab.sep_id],
                "confs": [1.0, *confs.tolist(), 1.0],
                "mlm": [IGNORE_INDEX, *mlm_labels.tolist(), IGNORE_INDEX],
                "noise": [IGNORE_INDEX, *flags.astype(np.int64).tolist(), IGNORE_INDEX],
            }
        )
    width = max(len(r["ids"]) for r in rows)
    pad = {"ids": vocab.pad_id, "confs": 1.0, "mlm": IGNORE_INDEX, "noise": IGNORE_INDEX}
    batch: dict[str, list] = {key: [] for key in pad}
    key_mask = []
    for r in rows:
        fill = width - len(r["ids"])
        key_mask.append([True] * len(r["ids"]) + [False] * fill)
        for key in pad:
            batch[key].append(r[key] + [pad[key]] * fill)
    return {
        "token_ids": torch.tensor(batch["ids"], dtype=torch.long),
        "confidences": torch.tensor(batch["confs"], dtype=torch.get_default_dtype()),
        "mlm_labels": torch.tensor(batch["mlm"], dtype=torch.long),
        "noise_labels": torch.tensor(batch["noise"], dtype=torch.long),
        "key_mask": torch.tensor(key_mask, dtype=torch.bool),
    }


def pretrain_losses(
    model: DetectorModel, batch: dict[str, torch.Tensor]
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(total, mlm, noise) cross-entropies on one batch; total = mlm + noise."""
    hidden = model(batch["token_ids"], batch["confidences"], batch["key_mask"])
    vocab_size = model.config.vocab_size
    mlm_logits = model.mlm_head(hidden).reshape(-1, vocab_size)
    mlm_targets = batch["mlm_labels"].reshape(-1)
    if (mlm_targets != IGNORE_INDEX).any():
        mlm = F.cross_entropy(mlm_logits, mlm_targets, ignore_index=IGNORE_INDEX)
    else:
        mlm = hidden.sum() * 0.0
    noise_logits = model.noise_head(hidden).reshape(-1, 2)
    noise = F.cross_entropy(noise_logits, batch["noise_labels"].reshape(-1), ignore_index=IGNORE_INDEX)
    return mlm + noise, mlm, noise


def pretrain(
    model: DetectorModel,
    corpus: Sequence[Sequence[int]],
    vocab: Vocab,
    config: PretrainConfig,
) -> PretrainHistory:
    """Joint MLM + noise-prediction pretraining for a fixed step budget.

    The learning rate decays linearly from its initial value to zero over
    the budget. The corpus is visited in seeded shuffled order, reshuffling
    whenever it is exhausted.
    """
    if len(corpus) < config.batch_size:
        raise ValueError(
            f"corpus has {len(corpus)} sequences; need at least one batch ({config.batch_size})"
        )
    rng = make_rng(config.seed)
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay
    )
    history = PretrainHistory()
    order: list[int] = []
    model.train()
    for step in range(config.steps):
        if len(order) < config.batch_size:
            order = list(rng.permutation(len(corpus)))
        picks = [order.pop() for _ in range(config.batch_size)]
        batch = build_pretrain_batch(
            [corpus[i] for i in picks], vocab, rng, config.mask_prob, model.config.max_seq_len
        )
        total, mlm, noise = pretrain_losses(model, batch)
        for group in optimizer.param_groups:
            group["lr"] = config.learning_rate * (1.0 - step / config.steps)
        optimizer.zero_grad()
        total.backward()
        optimizer.step()
        history.total.append(total.item())
        history.mlm.append(mlm.item())
        history.noise.append(noise.item())
    return history


def noise_head_accuracy(
    model: DetectorModel,
    sequences: Sequence[Sequence[int]],
    vocab: Vocab,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """(accuracy, majority_rate) of the noise head on freshly noised data.

    majority_rate is the score of always predicting "not noised" on the same
    data, the bar any useful head must clear.
    """
    model.eval()
    correct = total = not_noised = 0
    with torch.no_grad():
        for lo in range(0, len(sequences), 32):
            batch = build_pretrain_batch(
                sequences[lo : lo + 32], vocab, rng, 0.0, model.config.max_seq_len
            )
            hidden = model(batch["token_ids"], batch["confidences"], batch["key_mask"])
            pred = model.noise_head(hidden).argmax(dim=-1)
            labels = batch["noise_labels"]
            valid = labels != IGNORE_INDEX
            correct += int((pred[valid] == labels[valid]).sum())
            total += int(valid.sum())
            not_noised += int((labels[valid] == 0).sum())
    return correct / total, not_noised / total
