"""State-action store: belief-state vectors paired with the agent action taken in that state.

Snapshot format (little-endian):

    magic      4 bytes  b"BSNN"
    version    u32      1
    mode       u32      0 encoder, 1 decoder, 2 concat
    flags      u32      bit 0: cosine metric
    leaf_size  u32
    dim        u32
    count      u32
    count x {
        dim x f64                      belief-state vector
        len u32, utf-8 bytes           action, tokens joined by single spaces
        len u32, utf-8 bytes           origin dialog id
        turn u32                       origin turn index (1-based)
    }

The ball tree is rebuilt on load; construction is deterministic, so query
results are identical before and after a round trip.
"""
from __future__ import annotations

import enum
import io
import struct
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ..corpus.dialog import Dialog, Utterance, make_utterance, utterance_text
from ..corpus.vocab import Vocabulary
from ..seq2seq.model import ModelConfig, encode_dialog, forward, make_batch, read_history
from .balltree import BallTree, DimensionMismatch

MAGIC = b"BSNN"
VERSION = 1


class EmptyStore(ValueError):
    pass


class SnapshotError(ValueError):
    pass


class BeliefMode(enum.Enum):
    ENCODER = "encoder"
    DECODER = "decoder"
    CONCAT = "concat"

    def dim(self, hidden_dim: int) -> int:
        return 2 * hidden_dim if self is BeliefMode.CONCAT else hidden_dim

    def select(self, encoder_final, decoder_final) -> np.ndarray:
        if self is BeliefMode.ENCODER:
            return np.asarray(encoder_final, dtype=np.float64)
        if self is BeliefMode.DECODER:
            return np.asarray(decoder_final, dtype=np.float64)
        return np.concatenate([encoder_final, decoder_final], axis=-1)


_MODE_CODES = {BeliefMode.ENCODER: 0, BeliefMode.DECODER: 1, BeliefMode.CONCAT: 2}


@dataclass(frozen=True)
class StateActionPair:
    bs: np.ndarray
    action: Utterance
    origin: Tuple[str, int]


class StateActionStore:
    """Immutable after construction; lookups are read-only and thread-safe."""

    def __init__(self, vectors, actions: Sequence[Utterance], origins: Sequence[Tuple[str, int]],
                 mode: BeliefMode, leaf_size: int = 32, cosine: bool = False):
        vectors = np.asarray(vectors, dtype=np.float64)
        if len(actions) != len(origins) or (len(actions) and vectors.shape[0] != len(actions)):
            raise ValueError("vectors, actions and origins must be aligned")
        if vectors.size and not np.all(np.isfinite(vectors)):
            raise ValueError("belief states must be finite")
        self.vectors = vectors.reshape(len(actions), -1) if len(actions) else vectors.reshape(0, 0)
        shared: dict = {}
        # repeated scripted responses share one tuple
        self.actions = [shared.setdefault(u, u) for u in map(make_utterance, actions)]
        self.origins = [(str(d), int(t)) for d, t in origins]
        self.mode = mode
        self.leaf_size = leaf_size
        self.cosine = cosine
        self.tree = BallTree(self._prepare(self.vectors), leaf_size) if len(self.actions) else None

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def pair(self, k: int) -> StateActionPair:
        return StateActionPair(self.vectors[k], self.actions[k], self.origins[k])

    @property
    def pairs(self) -> List[StateActionPair]:
        return [self.pair(k) for k in range(len(self))]

    def action_set(self) -> set:
        return set(self.actions)

    def _prepare(self, X: np.ndarray) -> np.ndarray:
        if not self.cosine:
            return X
        norms = np.linalg.norm(X, axis=-1, keepdims=True)
        return X / np.where(norms > 0, norms, 1.0)

    def nearest_many(self, queries) -> Tuple[np.ndarray, np.ndarray]:
        if self.tree is None:
            raise EmptyStore("state-action store is empty")
        Q = np.asarray(queries, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[1] != self.dim:
            raise DimensionMismatch(f"query dimension {Q.shape[-1]} does not match store dimension {self.dim}")
        return self.tree.query_many(self._prepare(Q))

    def nearest(self, query) -> Tuple[StateActionPair, float]:
        q = np.asarray(query, dtype=np.float64)
        if q.ndim != 1:
            raise DimensionMismatch("query must be a vector")
        idx, dist = self.nearest_many(q[None, :])
        return self.pair(int(idx[0])), float(dist[0])

    # --- snapshot ------------------------------------------------------------------

    def dumps(self) -> bytes:
        fh = io.BytesIO()
        fh.write(MAGIC)
        dim = self.dim if len(self) else 0
        fh.write(struct.pack("<6I", VERSION, _MODE_CODES[self.mode], int(self.cosine), self.leaf_size,
                             dim, len(self)))
        for vec, action, (dialog_id, turn) in zip(self.vectors, self.actions, self.origins):
            fh.write(np.ascontiguousarray(vec, dtype="<f8").tobytes())
            for text in (utterance_text(action), dialog_id):
                data = text.encode("utf-8")
                fh.write(struct.pack("<I", len(data)))
                fh.write(data)
            fh.write(struct.pack("<I", turn))
        return fh.getvalue()

    @classmethod
    def loads(cls, data: bytes) -> "StateActionStore":
        fh = io.BytesIO(data)

        def read(n):
            chunk = fh.read(n)
            if len(chunk) != n:
                raise SnapshotError("truncated store snapshot")
            return chunk

        if read(4) != MAGIC:
            raise SnapshotError("not a store snapshot (bad magic)")
        version, mode_code, flags, leaf_size, dim, count = struct.unpack("<6I", read(24))
        if version != VERSION:
            raise SnapshotError(f"unsupported snapshot version {version}")
        modes = {v: k for k, v in _MODE_CODES.items()}
        if mode_code not in modes:
            raise SnapshotError(f"unknown belief mode code {mode_code}")
        vectors = np.empty((count, dim))
        actions, origins = [], []
        for k in range(count):
            vectors[k] = np.frombuffer(read(8 * dim), dtype="<f8")
            action = read(struct.unpack("<I", read(4))[0]).decode("utf-8")
            dialog_id = read(struct.unpack("<I", read(4))[0]).decode("utf-8")
            (turn,) = struct.unpack("<I", read(4))
            actions.append(make_utterance(action))
            origins.append((dialog_id, turn))
        if fh.read(1):
            raise SnapshotError("trailing bytes after last record")
        return cls(vectors, actions, origins, modes[mode_code], leaf_size, bool(flags & 1))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "StateActionStore":
        with open(path, "rb") as fh:
            return cls.loads(fh.read())


def extract_store(params, config: ModelConfig, vocab: Vocabulary, mode: BeliefMode,
                  train_dialogs: Sequence[Dialog], leaf_size: int = 32, cosine: bool = False,
                  batch_size: int = 64) -> StateActionStore:
    """Teacher-forced pass over the training dialogs, one pair per agent turn."""
    vectors: List[np.ndarray] = []
    actions: List[Utterance] = []
    origins: List[Tuple[str, int]] = []
    for k in range(0, len(train_dialogs), batch_size):
        chunk = train_dialogs[k:k + batch_size]
        fwd = forward(params, config, make_batch([encode_dialog(d, vocab) for d in chunk]), keep_cache=False)
        for row, dialog in enumerate(chunk):
            for t, turn in enumerate(dialog.turns):
                vectors.append(mode.select(fwd.encoder_final[t][row], fwd.decoder_final[t][row]))
                actions.append(turn.agent)
                origins.append((dialog.id, turn.index))
    if not vectors:
        return StateActionStore(np.empty((0, mode.dim(config.hidden_dim))), [], [], mode, leaf_size, cosine)
    return StateActionStore(np.vstack(vectors), actions, origins, mode, leaf_size, cosine)


def nearest_neighbor(store: StateActionStore, query) -> Tuple[StateActionPair, float]:
    return store.nearest(query)


def nnb_predict(params, config: ModelConfig, vocab: Vocabulary, store: StateActionStore,
                users: Sequence[Utterance], agents: Sequence[Utterance] = ()) -> Utterance:
    """Response of the stored pair nearest to the belief state of a (user_1..t, agent_1..t-1) history.

    ``agents`` is accepted for protocol symmetry; the state depends on the
    user turns only.
    """
    if len(store) == 0:
        raise EmptyStore("state-action store is empty")
    if agents and len(agents) != len(users) - 1:
        raise ValueError(f"history has {len(users)} user turns but {len(agents)} agent turns")
    state = read_history(params, config, [vocab.encode(u) for u in users],
                         decode=store.mode is not BeliefMode.ENCODER)
    pair, _ = store.nearest(store.mode.select(state.encoder_final, state.decoder_final))
    return pair.action
