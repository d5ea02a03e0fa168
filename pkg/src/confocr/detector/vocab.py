"""Self-contained tokenizer: lowercase whitespace words with character fallback.

The vocabulary is built from a training corpus and capped; words that miss
the cap decompose into single characters, and characters never seen at all
become [UNK]. No pretrained tokenizer dependency.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable

SPECIAL_TOKENS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]")
DEFAULT_MAX_VOCAB = 8000


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]

    def __post_init__(self):
        if tuple(self.tokens[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise ValueError("vocabulary must start with the special tokens")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary contains duplicate tokens")
        object.__setattr__(self, "_ids", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def unk_id(self) -> int:
        return 1

    @property
    def cls_id(self) -> int:
        return 2

    @property
    def sep_id(self) -> int:
        return 3

    @property
    def mask_id(self) -> int:
        return 4

    @property
    def special_ids(self) -> tuple[int, ...]:
        return tuple(range(len(SPECIAL_TOKENS)))

    def id_of(self, token: str) -> int | None:
        return self._ids.get(token)

    def encode_word(self, word: str) -> list[int]:
        """A known word is one id; unknown words fall back to characters."""
        wid = self._ids.get(word)
        if wid is not None:
            return [wid]
        return [self._ids.get(ch, self.unk_id) for ch in word]

    def encode_text(self, text: str) -> list[int]:
        return [tid for word in text.lower().split() for tid in self.encode_word(word)]


def build_vocab(texts: Iterable[str], max_size: int = DEFAULT_MAX_VOCAB) -> Vocab:
    """Count lowercase words across `texts` and keep the most frequent.

    Single characters seen anywhere are always included so the fallback path
    rarely degrades to [UNK]; the size cap spends the remaining budget on
    whole words, most frequent first (ties alphabetical for determinism).
    """
    counts: Counter[str] = Counter()
    chars: set[str] = set()
    for text in texts:
        for word in text.lower().split():
            counts[word] += 1
            chars.update(word)
    tokens = list(SPECIAL_TOKENS)
    tokens.extend(sorted(chars))
    budget = max_size - len(tokens)
    if budget < 0:
        raise ValueError(f"max_size {max_size} cannot even hold the character set")
    taken = set(tokens)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    for word, _ in ranked:
        if budget <= 0:
            break
        if word in taken:
            continue
        tokens.append(word)
        taken.add(word)
        budget -= 1
    return Vocab(tokens=tuple(tokens))
