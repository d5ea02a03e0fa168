"""A small transformer encoder whose token embeddings are blended with the
OCR confidence signal.

The blend is a convex combination: (1 - alpha) * Emb(token) + alpha *
(1 - confidence) broadcast across the hidden dimension, applied before the
positional embedding is added. There is deliberately no LayerNorm directly
on the embedding sum: a broadcast-constant signal lives entirely in the
per-token mean, which such a normalization would subtract away. The first
attention layer rotates the signal into general directions instead.

alpha is either a trainable scalar (stored unconstrained and squashed
through a sigmoid, so the combination stays convex during training) or a
fixed constant for sweep experiments, where exact endpoints 0 and 1 are
honored bit-for-bit by short-circuiting the arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import torch
from torch import nn

from confocr import __version__
from confocr.detector.encoding import EncodedWindow

CHECKPOINT_FORMAT_VERSION = 1
# Wide enough that the token signal survives mixing weights near 1; a small
# init (0.02-style) lets the broadcast confidence drown the text early.
EMBEDDING_INIT_STD = 0.2


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    num_layers: int = 2
    hidden_dim: int = 64
    num_heads: int = 4
    ffn_dim: int = 256
    max_seq_len: int = 256
    alpha_init: float = 0.5
    alpha_trainable: bool = True

    def __post_init__(self):
        if self.vocab_size < 6:
            raise ValueError("vocab_size must cover the special tokens")
        if self.hidden_dim % self.num_heads != 0:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} not divisible by num_heads {self.num_heads}"
            )
        if self.max_seq_len < 2:
            raise ValueError("max_seq_len must be >= 2")
        if not 0.0 <= self.alpha_init <= 1.0:
            raise ValueError(f"alpha_init must be in [0, 1], got {self.alpha_init}")
        if self.alpha_trainable and not 0.0 < self.alpha_init < 1.0:
            raise ValueError("a trainable alpha needs alpha_init strictly inside (0, 1)")


def interpolate_confidence(
    token_emb: torch.Tensor, confidences: torch.Tensor, alpha: torch.Tensor | float
) -> torch.Tensor:
    """(1 - alpha) * embedding + alpha * (1 - confidence), broadcast over dims."""
    return (1.0 - alpha) * token_emb + alpha * (1.0 - confidences).unsqueeze(-1)


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, hidden_dim: int, num_heads: int):
        super().__init__()
        self.num_heads = num_heads
        self.head_dim = hidden_dim // num_heads
        self.qkv = nn.Linear(hidden_dim, 3 * hidden_dim)
        self.out = nn.Linear(hidden_dim, hidden_dim)

    def forward(self, x: torch.Tensor, key_mask: torch.Tensor) -> torch.Tensor:
        batch, length, dim = x.shape
        qkv = self.qkv(x).view(batch, length, 3, self.num_heads, self.head_dim)
        q, k, v = (t.squeeze(2).transpose(1, 2) for t in qkv.split(1, dim=2))
        scores = (q @ k.transpose(-1, -2)) / math.sqrt(self.head_dim)
        scores = scores.masked_fill(~key_mask[:, None, None, :], float("-inf"))
        ctx = torch.softmax(scores, dim=-1) @ v
        ctx = ctx.transpose(1, 2).reshape(batch, length, dim)
        return self.out(ctx)


class EncoderLayer(nn.Module):
    """Post-norm block: attention and feed-forward, each behind a residual."""

    def __init__(self, hidden_dim: int, num_heads: int, ffn_dim: int):
        super().__init__()
        self.attn = MultiHeadSelfAttention(hidden_dim, num_heads)
        self.norm1 = nn.LayerNorm(hidden_dim)
        self.ffn = nn.Sequential(
            nn.Linear(hidden_dim, ffn_dim), nn.GELU(), nn.Linear(ffn_dim, hidden_dim)
        )
        self.norm2 = nn.LayerNorm(hidden_dim)

    def forward(self, x: torch.Tensor, key_mask: torch.Tensor) -> torch.Tensor:
        x = self.norm1(x + self.attn(x, key_mask))
        return self.norm2(x + self.ffn(x))


class DetectorModel(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.token_emb = nn.Embedding(config.vocab_size, config.hidden_dim)
        self.pos_emb = nn.Embedding(config.max_seq_len, config.hidden_dim)
        self.layers = nn.ModuleList(
            EncoderLayer(config.hidden_dim, config.num_heads, config.ffn_dim)
            for _ in range(config.num_layers)
        )
        self.mlm_head = nn.Linear(config.hidden_dim, config.vocab_size)
        self.noise_head = nn.Linear(config.hidden_dim, 2)
        self.error_head = nn.Linear(config.hidden_dim, 2)
        if config.alpha_trainable:
            raw = math.log(config.alpha_init / (1.0 - config.alpha_init))
            self.alpha_raw = nn.Parameter(torch.tensor(raw))
        else:
            self.register_buffer("alpha_fixed", torch.tensor(float(config.alpha_init)))
        self._init_weights()

    def _init_weights(self):
        nn.init.normal_(self.token_emb.weight, std=EMBEDDING_INIT_STD)
        nn.init.normal_(self.pos_emb.weight, std=EMBEDDING_INIT_STD)
        # Symmetric start: every component scores exactly 0.5 before training.
        nn.init.zeros_(self.error_head.weight)
        nn.init.zeros_(self.error_head.bias)

    @property
    def alpha(self) -> torch.Tensor:
        """Effective mixing weight in [0, 1]."""
        if self.config.alpha_trainable:
            return torch.sigmoid(self.alpha_raw)
        return self.alpha_fixed

    def embed(self, token_ids: torch.Tensor, confidences: torch.Tensor) -> torch.Tensor:
        emb = self.token_emb(token_ids)
        if not self.config.alpha_trainable:
            # Fixed endpoints reproduce the pure paths exactly, not just to
            # rounding: alpha 0 is the confidence-free model bit-for-bit.
            a = float(self.alpha_fixed)
            if a == 0.0:
                x = emb
            elif a == 1.0:
                x = (1.0 - confidences).unsqueeze(-1).expand_as(emb)
            else:
                x = interpolate_confidence(emb, confidences, a)
        else:
            x = interpolate_confidence(emb, confidences, self.alpha)
        positions = torch.arange(token_ids.shape[1], device=token_ids.device)
        return x + self.pos_emb(positions)[None, :, :]

    def forward(
        self,
        token_ids: torch.Tensor,
        confidences: torch.Tensor,
        key_mask: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """Hidden states (batch, length, hidden_dim); key_mask True = real token."""
        if key_mask is None:
            key_mask = torch.ones_like(token_ids, dtype=torch.bool)
        x = self.embed(token_ids, confidences)
        for layer in self.layers:
            x = layer(x, key_mask)
        return x


def batch_windows(
    windows: Sequence[EncodedWindow], pad_id: int, device=None
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Pad a list of windows into (token_ids, confidences, key_mask) tensors."""
    max_len = max(len(w.token_ids) for w in windows)
    ids = torch.full((len(windows), max_len), pad_id, dtype=torch.long, device=device)
    confs = torch.ones((len(windows), max_len), dtype=torch.get_default_dtype(), device=device)
    mask = torch.zeros((len(windows), max_len), dtype=torch.bool, device=device)
    for i, w in enumerate(windows):
        n = len(w.token_ids)
        ids[i, :n] = torch.tensor(w.token_ids, dtype=torch.long)
        confs[i, :n] = torch.tensor(w.confidences, dtype=torch.get_default_dtype())
        mask[i, :n] = True
    return ids, confs, mask


def pool_spans(hidden: torch.Tensor, windows: Sequence[EncodedWindow]) -> torch.Tensor:
    """Mean-pool each component's token span; empty spans read the token just
    before them (their preceding separator, or [CLS] for a leading component)."""
    pooled = []
    for i, w in enumerate(windows):
        for start, end in w.spans:
            if end > start:
                pooled.append(hidden[i, start:end].mean(dim=0))
            else:
                pooled.append(hidden[i, start - 1])
    return torch.stack(pooled)


def classify_boxes(
    model: DetectorModel,
    windows: Sequence[EncodedWindow],
    pad_id: int,
    batch_size: int = 32,
) -> list[tuple[int, float]]:
    """Error probability per component, as (component_index, p_error) pairs.

    Deterministic: same model and windows give identical probabilities.
    """
    model.eval()
    out: list[tuple[int, float]] = []
    with torch.no_grad():
        for lo in range(0, len(windows), batch_size):
            chunk = windows[lo : lo + batch_size]
            ids, confs, mask = batch_windows(chunk, pad_id)
            hidden = model(ids, confs, mask)
            probs = torch.softmax(model.error_head(pool_spans(hidden, chunk)), dim=-1)[:, 1]
            comp_indices = [ci for w in chunk for ci in w.component_indices]
            out.extend(zip(comp_indices, probs.tolist()))
    return out


def save_checkpoint(model: DetectorModel, path, extra: dict | None = None) -> None:
    """Versioned container: config header, named parameter tensors, rng state."""
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "toolkit_version": __version__,
        "config": asdict(model.config),
        "state_dict": model.state_dict(),
        "shapes": {k: tuple(v.shape) for k, v in model.state_dict().items()},
        "torch_rng_state": torch.get_rng_state(),
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(path, restore_rng: bool = False) -> tuple[DetectorModel, dict]:
    payload = torch.load(path, weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {version!r}")
    model = DetectorModel(EncoderConfig(**payload["config"]))
    model.load_state_dict(payload["state_dict"])
    if restore_rng:
        torch.set_rng_state(payload["torch_rng_state"])
    return model, payload.get("extra", {})
