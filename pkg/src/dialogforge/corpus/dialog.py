"""Dialog value types plus the bAbI-style text and JSONL formats."""
from __future__ import annotations

import io
import json
from dataclasses import dataclass
from typing import Iterable, List, Sequence, TextIO, Tuple, Union

SILENCE = "<SILENCE>"
API_CALL = "api_call"
MAX_TURNS = 20

Utterance = Tuple[str, ...]


class ParseError(ValueError):
    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class OutOfOrderTurn(ParseError):
    pass


def make_utterance(tokens: Union[str, Iterable[str]]) -> Utterance:
    """Build an utterance from a whitespace-joined string or an iterable of tokens."""
    if isinstance(tokens, str):
        tokens = tokens.split()
    utt = tuple(tokens)
    if not utt:
        raise ValueError("utterance must contain at least one token")
    for tok in utt:
        if not tok or any(ch.isspace() for ch in tok):
            raise ValueError(f"invalid token {tok!r}")
    return utt


def utterance_text(utt: Sequence[str]) -> str:
    return " ".join(utt)


@dataclass(frozen=True)
class ApiCall:
    args: Tuple[str, ...]

    def tokens(self) -> Utterance:
        return (API_CALL,) + tuple(self.args)

    def __str__(self) -> str:
        return utterance_text(self.tokens())


@dataclass(frozen=True)
class Turn:
    user: Utterance
    agent: Utterance
    index: int

    def __post_init__(self):
        if not 1 <= self.index <= MAX_TURNS:
            raise ValueError(f"turn index {self.index} outside [1, {MAX_TURNS}]")
        object.__setattr__(self, "user", make_utterance(self.user))
        object.__setattr__(self, "agent", make_utterance(self.agent))


@dataclass(frozen=True)
class Dialog:
    id: str
    turns: Tuple[Turn, ...]

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        for k, turn in enumerate(self.turns, start=1):
            if turn.index != k:
                raise ValueError(f"dialog {self.id}: turn indices must be contiguous from 1")

    @classmethod
    def from_pairs(cls, dialog_id: str, pairs: Iterable[Tuple[Iterable[str], Iterable[str]]]) -> "Dialog":
        turns = [Turn(make_utterance(u), make_utterance(a), k) for k, (u, a) in enumerate(pairs, start=1)]
        return cls(dialog_id, tuple(turns))

    def __len__(self) -> int:
        return len(self.turns)

    @property
    def users(self) -> List[Utterance]:
        return [t.user for t in self.turns]

    @property
    def agents(self) -> List[Utterance]:
        return [t.agent for t in self.turns]

    def same_structure(self, other: "Dialog") -> bool:
        return [(t.user, t.agent, t.index) for t in self.turns] == [
            (t.user, t.agent, t.index) for t in other.turns
        ]


def is_api_call(utterance: Sequence[str]) -> bool:
    """True iff the first token is exactly ``api_call``."""
    return len(utterance) > 0 and utterance[0] == API_CALL


# --- bAbI-style text -------------------------------------------------------

def format_babi(dialogs: Iterable[Dialog]) -> str:
    blocks = []
    for dialog in dialogs:
        lines = [f"{t.index} {utterance_text(t.user)}\t{utterance_text(t.agent)}" for t in dialog.turns]
        blocks.append("\n".join(lines) + "\n")
    return "\n".join(blocks)


def parse_babi_text(stream: Union[str, TextIO], id_prefix: str = "dialog-") -> List[Dialog]:
    """Parse ``<turn-id> <user>\\t<agent>`` lines; a blank line ends a dialog."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    dialogs: List[Dialog] = []
    pairs: List[Tuple[Utterance, Utterance]] = []

    def flush():
        if pairs:
            dialogs.append(Dialog.from_pairs(f"{id_prefix}{len(dialogs):05d}", pairs))
            pairs.clear()

    for line_no, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            flush()
            continue
        if "\t" not in line:
            raise ParseError("missing tab between user and agent utterances", line_no)
        left, agent = line.split("\t", 1)
        head, _, user = left.partition(" ")
        if not head.isdigit():
            raise ParseError(f"expected a turn number, got {head!r}", line_no)
        if not user.split() or not agent.split():
            raise ParseError("empty utterance", line_no)
        if int(head) != len(pairs) + 1:
            raise OutOfOrderTurn(f"turn id {head} where {len(pairs) + 1} was expected", line_no)
        if len(pairs) >= MAX_TURNS:
            raise ParseError(f"dialog exceeds {MAX_TURNS} turns", line_no)
        pairs.append((make_utterance(user), make_utterance(agent)))
    flush()
    return dialogs


# --- JSONL -----------------------------------------------------------------

def dialog_to_json(dialog: Dialog) -> dict:
    return {
        "id": dialog.id,
        "turns": [{"user": utterance_text(t.user), "agent": utterance_text(t.agent)} for t in dialog.turns],
    }


def dialog_from_json(obj: dict) -> Dialog:
    return Dialog.from_pairs(obj["id"], [(t["user"], t["agent"]) for t in obj["turns"]])


def format_jsonl(dialogs: Iterable[Dialog]) -> str:
    return "".join(json.dumps(dialog_to_json(d), sort_keys=True) + "\n" for d in dialogs)


def parse_jsonl(stream: Union[str, TextIO]) -> List[Dialog]:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    dialogs = []
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            dialogs.append(dialog_from_json(json.loads(line)))
        except (KeyError, TypeError, json.JSONDecodeError, ValueError) as exc:
            raise ParseError(str(exc), line_no) from exc
    return dialogs


def load_dialogs(path) -> List[Dialog]:
    """Read a corpus file; ``.jsonl`` selects JSONL, anything else the bAbI text format."""
    path = str(path)
    with open(path, encoding="utf-8") as fh:
        if path.endswith(".jsonl"):
            return parse_jsonl(fh)
        return parse_babi_text(fh)
