from __future__ import annotations

from typing import List, Sequence

from .corpus.dialog import Dialog, Utterance, make_utterance


def check_dialogs(X, allow_empty: bool = False) -> List[Dialog]:
    """Accept a Dialog or a sequence of Dialogs and return a list."""
    if isinstance(X, Dialog):
        X = [X]
    dialogs = list(X)
    if not dialogs and not allow_empty:
        raise ValueError("expected at least one dialog")
    for d in dialogs:
        if not isinstance(d, Dialog):
            raise TypeError(f"expected Dialog, got {type(d).__name__}")
    return dialogs


def check_history(users: Sequence, agents: Sequence = ()) -> List[Utterance]:
    """Validate a (user_1..t, agent_1..t-1) history; returns the user utterances."""
    users = [make_utterance(u) for u in users]
    if not users:
        raise ValueError("history needs at least the current user utterance")
    if agents is not None and len(agents) not in (0, len(users) - 1):
        raise ValueError(f"history has {len(users)} user turns but {len(agents)} agent turns")
    return users
