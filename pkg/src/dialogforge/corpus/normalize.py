"""Text normalization: tokenize, de-identify, expand lingo, spell-correct."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Dict, FrozenSet, Iterable, List, Optional

from .dialog import SILENCE, Utterance

PERSON = "<PERSON>"
MONEY = "<MONEY>"
MASKED = "<masked>"
PLACEHOLDERS = {p.lower(): p for p in (SILENCE, PERSON, MONEY, MASKED)}

# split . , ? ! unless sitting between two digits ("$30.50", "1,000")
_PUNCT = re.compile(r"(?<!\d)([.,?!])|([.,?!])(?!\d)")
_APOSTROPHE = re.compile(r"(?<=\S)'")
_CURRENCY = re.compile(r"^(?:[$£€]|usd)\d[\d,]*(?:\.\d+)?$|^\d[\d,]*(?:\.\d+)?[$£€]$")
_NUMBER = re.compile(r"^\d[\d,]*(?:\.\d+)?$")
_CURRENCY_WORDS = {"dollars", "dollar", "bucks", "usd"}


class EmptyUtterance(ValueError):
    pass


def _read_lines(name: str) -> List[str]:
    text = resources.files("dialogforge.corpus").joinpath("data", name).read_text(encoding="utf-8")
    return [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]


def load_lexicon(path=None) -> Dict[str, str]:
    """Read a ``shortform<TAB>expansion`` file. ``path=None`` loads the shipped lexicon."""
    if path is None:
        lines = _read_lines("lingo.tsv")
    else:
        with open(path, encoding="utf-8") as fh:
            lines = [ln.rstrip("\r\n") for ln in fh if ln.strip() and not ln.startswith("#")]
    lexicon = {}
    for ln in lines:
        short, sep, expansion = ln.partition("\t")
        if not sep or not expansion.strip():
            raise ValueError(f"malformed lexicon line: {ln!r}")
        lexicon[short.strip().lower()] = expansion.strip().lower()
    return lexicon


def load_word_list(path=None, default: str = "brands.txt") -> FrozenSet[str]:
    if path is None:
        return frozenset(w.lower() for w in _read_lines(default))
    with open(path, encoding="utf-8") as fh:
        return frozenset(ln.strip().lower() for ln in fh if ln.strip() and not ln.startswith("#"))


@dataclass(frozen=True)
class NormalizerConfig:
    lexicon: Dict[str, str] = field(default_factory=load_lexicon)
    brands: FrozenSet[str] = field(default_factory=lambda: load_word_list(default="brands.txt"))
    names: FrozenSet[str] = field(default_factory=lambda: load_word_list(default="names.txt"))


_DEFAULT_CONFIG: Optional[NormalizerConfig] = None


def default_config() -> NormalizerConfig:
    global _DEFAULT_CONFIG
    if _DEFAULT_CONFIG is None:
        _DEFAULT_CONFIG = NormalizerConfig()
    return _DEFAULT_CONFIG


def tokenize(text: str) -> List[str]:
    """Lowercase and split punctuation; placeholders keep their canonical spelling."""
    text = text.lower()
    text = _PUNCT.sub(lambda m: f" {m.group(1) or m.group(2)} ", text)
    text = _APOSTROPHE.sub(" '", text)
    return [PLACEHOLDERS.get(tok, tok) for tok in text.split()]


def mask_entities(tokens: List[str], names: Iterable[str], brands: Iterable[str]) -> List[str]:
    names, brands = set(names), set(brands)
    out: List[str] = []
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if _CURRENCY.match(tok):
            out.append(MONEY)
        elif _NUMBER.match(tok) and i + 1 < len(tokens) and tokens[i + 1] in _CURRENCY_WORDS:
            out.append(MONEY)
            i += 1
        elif tok in names:
            out.append(PERSON)
        elif tok in brands:
            out.append(MASKED)
        else:
            out.append(tok)
        i += 1
    return out


def expand_lingo(tokens: List[str], lexicon: Dict[str, str]) -> List[str]:
    out: List[str] = []
    for tok in tokens:
        out.extend(lexicon[tok].split() if tok in lexicon else [tok])
    return out


def within_one_edit(a: str, b: str) -> bool:
    """True iff the Levenshtein distance between ``a`` and ``b`` is exactly 1."""
    if a == b:
        return False
    la, lb = len(a), len(b)
    if abs(la - lb) > 1:
        return False
    if la == lb:
        return sum(x != y for x, y in zip(a, b)) == 1
    if la > lb:
        a, b, la, lb = b, a, lb, la
    i = 0
    while i < la and a[i] == b[i]:
        i += 1
    return a[i:] == b[i + 1:]


def _correctable(tok: str) -> bool:
    return tok.isalpha()


def spell_correct(tokens: List[str], vocab_tokens: Iterable[str], protected: Iterable[str] = ()) -> List[str]:
    """Replace an out-of-vocabulary token by the unique in-vocabulary token one edit away."""
    vocab = set(vocab_tokens)
    protected = set(protected)
    candidates_by_len: Dict[int, List[str]] = {}
    for v in vocab:
        if _correctable(v) and v not in protected:
            candidates_by_len.setdefault(len(v), []).append(v)
    out = []
    for tok in tokens:
        if tok in vocab or tok in protected or not _correctable(tok):
            out.append(tok)
            continue
        n = len(tok)
        matches = [
            v
            for length in (n - 1, n, n + 1)
            for v in candidates_by_len.get(length, ())
            if within_one_edit(tok, v)
        ]
        out.append(matches[0] if len(matches) == 1 else tok)
    return out


def normalize_utterance(raw: str, lexicon: Optional[Dict[str, str]] = None, vocab_hint=None,
                        config: Optional[NormalizerConfig] = None) -> Utterance:
    """Run the fixed pipeline: lowercase, punctuation split, masking, lingo, spelling.

    ``vocab_hint`` may be a :class:`Vocabulary` or any iterable of tokens; spell
    correction is skipped without it.
    """
    if raw is None or not raw.strip():
        raise EmptyUtterance("utterance is empty")
    config = config or default_config()
    lexicon = config.lexicon if lexicon is None else lexicon
    tokens = tokenize(raw)
    tokens = mask_entities(tokens, config.names, config.brands)
    tokens = expand_lingo(tokens, lexicon)
    if vocab_hint is not None:
        vocab_tokens = vocab_hint.tokens if hasattr(vocab_hint, "tokens") else vocab_hint
        protected = set(lexicon) | config.names | config.brands
        tokens = spell_correct(tokens, vocab_tokens, protected)
    if not tokens:
        raise EmptyUtterance("utterance is empty after normalization")
    return tuple(tokens)
