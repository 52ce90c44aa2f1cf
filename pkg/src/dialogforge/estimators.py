"""scikit-learn style wrappers around the dialog models.

``fit`` takes a list of training :class:`Dialog` objects. ``predict`` follows
the offline protocol: at turn ``t`` of each dialog the model sees the true
user utterances 1..t and true agent responses 1..t-1, and returns one
response per turn. Each estimator is also a turn-response callable,
``model(users, agents)``, for interactive use.
"""
from __future__ import annotations

import logging
from typing import List, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_dialogs, check_history
from .belief.store import BeliefMode, StateActionStore, extract_store
from .corpus.dialog import SILENCE, Dialog, Utterance
from .corpus.vocab import Vocabulary, build_vocabulary
from .hybrid import HybridDecision, hybrid_respond
from .seq2seq.checkpoint import load_checkpoint, save_checkpoint
from .seq2seq.model import (
    SPECIAL_IDS,
    HistoryState,
    ModelConfig,
    Seq2SeqParams,
    encode_dialog,
    encoder_chain,
    greedy_from_state,
    init_params,
)
from .seq2seq.train import TrainConfig, train

logger = logging.getLogger(__name__)


class Seq2SeqResponder(BaseEstimator):
    """Turn-unrolled encoder-decoder. ``use_context=False`` is the basic model, ``True`` the HRED variant."""

    def __init__(self, embed_dim=64, hidden_dim=128, use_context=True, max_decode_len=40, epochs=30,
                 batch_size=16, learning_rate=1e-3, gradient_clip_norm=5.0, min_count=1, seed=0):
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.use_context = use_context
        self.max_decode_len = max_decode_len
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.gradient_clip_norm = gradient_clip_norm
        self.min_count = min_count
        self.seed = seed

    def _model_config(self) -> ModelConfig:
        return ModelConfig(embed_dim=self.embed_dim, hidden_dim=self.hidden_dim,
                           max_decode_len=self.max_decode_len, use_context=self.use_context)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, learning_rate=self.learning_rate,
                           gradient_clip_norm=self.gradient_clip_norm, seed=self.seed)

    def fit(self, X, y=None, validation: Optional[Sequence[Dialog]] = None, callback=None):
        dialogs = check_dialogs(X)
        val = check_dialogs(validation, allow_empty=True) if validation is not None else []
        self.vocab_ = build_vocabulary(dialogs, self.min_count)
        self.config_ = self._model_config()
        params = init_params(self.config_, len(self.vocab_), self.seed)
        self.params_, self.history_ = train(
            params, self.config_, self._train_config(),
            [encode_dialog(d, self.vocab_) for d in dialogs],
            [encode_dialog(d, self.vocab_) for d in val],
            callback=callback,
        )
        return self

    @classmethod
    def from_parts(cls, params: Seq2SeqParams, config: ModelConfig, vocab: Vocabulary) -> "Seq2SeqResponder":
        model = cls(embed_dim=config.embed_dim, hidden_dim=config.hidden_dim, use_context=config.use_context,
                    max_decode_len=config.max_decode_len)
        params.check(config, len(vocab))
        model.params_, model.config_, model.vocab_ = params, config, vocab
        model.history_ = []
        return model

    @classmethod
    def load(cls, path) -> "Seq2SeqResponder":
        return cls.from_parts(*load_checkpoint(path))

    def save(self, path) -> None:
        check_is_fitted(self, "params_")
        save_checkpoint(path, self.params_, self.config_, self.vocab_)

    # --- inference -------------------------------------------------------------

    def _surface(self, ids: Sequence[int]) -> Utterance:
        tokens = tuple(self.vocab_.tokens[i] for i in ids if i not in SPECIAL_IDS)
        return tokens or (SILENCE,)

    def history_states(self, users: Sequence[Utterance], decode: bool = True) -> List[HistoryState]:
        """Model state after each prefix user_1..t of ``users``.

        State ``t`` depends on the first ``t`` user utterances only, so one
        pass yields the state for every turn of a dialog.
        """
        check_is_fitted(self, "params_")
        chain = encoder_chain(self.params_, self.config_, [self.vocab_.encode(u) for u in users])
        states = []
        for h, c in chain:
            if decode:
                ids, h_dec, truncated = greedy_from_state(self.params_, self.config_, h, c)
                states.append(HistoryState(h, h_dec, list(ids), truncated))
            else:
                states.append(HistoryState(h, None, None))
        return states

    def read_history(self, users, agents=(), decode: bool = True) -> HistoryState:
        """State at the last turn of a (user_1..t, agent_1..t-1) history."""
        users = check_history(users, agents)
        return self.history_states(users, decode)[-1]

    def response_from_state(self, state: HistoryState) -> Utterance:
        return self._surface(state.response_ids)

    def respond(self, users, agents=()) -> Utterance:
        return self.response_from_state(self.read_history(users, agents))

    __call__ = respond

    def predict_dialog(self, dialog: Dialog) -> List[Utterance]:
        return [self.response_from_state(s) for s in self.history_states(dialog.users)]

    def predict(self, X) -> List[List[Utterance]]:
        return [self.predict_dialog(d) for d in check_dialogs(X)]


class NearestNeighborResponder(BaseEstimator):
    """Retrieve the training response whose belief state is nearest to the current one."""

    def __init__(self, seq2seq: Optional[Seq2SeqResponder] = None, mode="decoder", leaf_size=32,
                 metric="euclidean"):
        self.seq2seq = seq2seq
        self.mode = mode
        self.leaf_size = leaf_size
        self.metric = metric

    @property
    def belief_mode(self) -> BeliefMode:
        return BeliefMode(self.mode) if not isinstance(self.mode, BeliefMode) else self.mode

    def _check_seq2seq(self) -> Seq2SeqResponder:
        if self.seq2seq is None:
            raise ValueError("NearestNeighborResponder needs a fitted Seq2SeqResponder")
        check_is_fitted(self.seq2seq, "params_")
        return self.seq2seq

    def fit(self, X, y=None):
        """Build the state-action store from the training dialogs ``X``."""
        s2s = self._check_seq2seq()
        if self.metric not in ("euclidean", "cosine"):
            raise ValueError(f"unknown metric {self.metric!r}")
        self.store_ = extract_store(s2s.params_, s2s.config_, s2s.vocab_, self.belief_mode,
                                    check_dialogs(X), self.leaf_size, self.metric == "cosine")
        return self

    @classmethod
    def from_store(cls, seq2seq: Seq2SeqResponder, store: StateActionStore) -> "NearestNeighborResponder":
        model = cls(seq2seq, store.mode.value, store.leaf_size, "cosine" if store.cosine else "euclidean")
        model.store_ = store
        return model

    def _needs_decode(self) -> bool:
        return self.belief_mode is not BeliefMode.ENCODER

    def vector_from_state(self, state: HistoryState) -> np.ndarray:
        return self.belief_mode.select(state.encoder_final, state.decoder_final)

    def transform(self, X) -> np.ndarray:
        """Query belief vectors for every turn of every dialog, stacked row-wise."""
        s2s = self._check_seq2seq()
        rows = [self.vector_from_state(s)
                for d in check_dialogs(X)
                for s in s2s.history_states(d.users, self._needs_decode())]
        return np.vstack(rows)

    def respond_from_state(self, state: HistoryState) -> Utterance:
        check_is_fitted(self, "store_")
        pair, _ = self.store_.nearest(self.vector_from_state(state))
        return pair.action

    def respond(self, users, agents=()) -> Utterance:
        state = self._check_seq2seq().read_history(users, agents, self._needs_decode())
        return self.respond_from_state(state)

    __call__ = respond

    def predict_dialog(self, dialog: Dialog) -> List[Utterance]:
        check_is_fitted(self, "store_")
        states = self._check_seq2seq().history_states(dialog.users, self._needs_decode())
        idx, _ = self.store_.nearest_many(np.vstack([self.vector_from_state(s) for s in states]))
        return [self.store_.actions[i] for i in idx]

    def predict(self, X) -> List[List[Utterance]]:
        return [self.predict_dialog(d) for d in check_dialogs(X)]


class HybridResponder(BaseEstimator):
    """Generative output for api_call turns, retrieval for everything else.

    Both components read the same history state, so the decoder runs once per
    turn.
    """

    def __init__(self, seq2seq: Optional[Seq2SeqResponder] = None,
                 nearest: Optional[NearestNeighborResponder] = None):
        self.seq2seq = seq2seq
        self.nearest = nearest

    def fit(self, X, y=None):
        check_is_fitted(self.seq2seq, "params_")
        if self.nearest is None:
            self.nearest = NearestNeighborResponder(self.seq2seq)
        if not hasattr(self.nearest, "store_"):
            self.nearest.fit(X)
        self.fitted_ = True
        return self

    def _decide(self, state: HistoryState) -> HybridDecision:
        return hybrid_respond(self.seq2seq.response_from_state(state), self.nearest.respond_from_state(state))

    def decide(self, users, agents=()) -> HybridDecision:
        return self._decide(self.seq2seq.read_history(users, agents))

    __call__ = decide

    def predict_dialog(self, dialog: Dialog) -> List[HybridDecision]:
        states = self.seq2seq.history_states(dialog.users)
        idx, _ = self.nearest.store_.nearest_many(np.vstack([self.nearest.vector_from_state(s) for s in states]))
        return [hybrid_respond(self.seq2seq.response_from_state(s), self.nearest.store_.actions[i])
                for s, i in zip(states, idx)]

    def predict(self, X) -> List[List[Utterance]]:
        return [[d.chosen for d in self.predict_dialog(dialog)] for dialog in check_dialogs(X)]
