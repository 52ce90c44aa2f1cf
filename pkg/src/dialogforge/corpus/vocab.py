from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

from .dialog import SILENCE, Dialog

PAD, BOS, EOS, UNK = "<PAD>", "<BOS>", "<EOS>", "<UNK>"
RESERVED = (PAD, BOS, EOS, UNK, SILENCE)
PAD_ID, BOS_ID, EOS_ID, UNK_ID, SILENCE_ID = range(5)


class Vocabulary:
    """Bijective token/id map with the five reserved tokens at ids 0-4."""

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tuple(tokens[: len(RESERVED)]) != RESERVED:
            raise ValueError("vocabulary must start with the reserved tokens " + " ".join(RESERVED))
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self.tokens: Tuple[str, ...] = tuple(tokens)
        self._ids: Dict[str, int] = {tok: i for i, tok in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def __repr__(self) -> str:
        return f"Vocabulary(size={len(self)})"

    def id(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def encode(self, tokens: Iterable[str]) -> List[int]:
        return [self._ids.get(tok, UNK_ID) for tok in tokens]

    def decode(self, ids: Iterable[int]) -> List[str]:
        return [self.tokens[i] for i in ids]


def build_vocabulary(train_dialogs: Sequence[Dialog], min_count: int = 1) -> Vocabulary:
    """Reserved tokens first, then training tokens by descending count, ties lexicographic."""
    if not train_dialogs:
        raise ValueError("build_vocabulary needs at least one training dialog")
    if min_count < 0:
        raise ValueError("min_count must be non-negative")
    counts: Counter = Counter()
    for dialog in train_dialogs:
        for turn in dialog.turns:
            counts.update(turn.user)
            counts.update(turn.agent)
    for tok in RESERVED:
        counts.pop(tok, None)
    ranked = sorted((tok for tok, n in counts.items() if n >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary(list(RESERVED) + ranked)


class TooFewDialogs(ValueError):
    pass


@dataclass(frozen=True)
class CorpusSplit:
    train: Tuple[Dialog, ...]
    validation: Tuple[Dialog, ...]
    test: Tuple[Dialog, ...]


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_sizes(n: int) -> Tuple[int, int, int]:
    """(train, validation, test) sizes: 20% test, 8% validation, remainder train."""
    test = _round_half_up(0.2 * n)
    val = _round_half_up(0.08 * n)
    return n - test - val, val, test


def split_corpus(dialogs: Sequence[Dialog], seed: int = 0) -> CorpusSplit:
    if len(dialogs) < 10:
        raise TooFewDialogs(f"need at least 10 dialogs to split, got {len(dialogs)}")
    ids = [d.id for d in dialogs]
    if len(set(ids)) != len(ids):
        raise ValueError("dialog ids must be unique")
    order = list(range(len(dialogs)))
    random.Random(seed).shuffle(order)
    n_train, n_val, _ = split_sizes(len(dialogs))
    picked = [dialogs[i] for i in order]
    return CorpusSplit(
        train=tuple(picked[:n_train]),
        validation=tuple(picked[n_train:n_train + n_val]),
        test=tuple(picked[n_train + n_val:]),
    )
