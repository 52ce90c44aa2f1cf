"""Turn-unrolled encoder-decoder (basic Seq2Seq and the context-threaded HRED variant).

Every turn of a dialog is processed by the same parameter set. With
``use_context`` the encoder input at each step of turn ``t`` is the token
embedding concatenated with the encoder's final hidden state from turn
``t - 1`` (zeros at turn 1). The decoder starts from the encoder's final
(h, c) and is teacher-forced on ``<BOS> + agent`` during training.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..corpus.dialog import Dialog
from ..corpus.vocab import BOS_ID, EOS_ID, PAD_ID, UNK_ID, Vocabulary
from .lstm import lstm_backward, lstm_forward, sigmoid, softmax


class ShapeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 64
    hidden_dim: int = 128
    max_decode_len: int = 40
    use_context: bool = True
    context_source: str = "encoder_final"

    def __post_init__(self):
        if self.embed_dim < 1 or self.hidden_dim < 1:
            raise ValueError("embed_dim and hidden_dim must be >= 1")
        if self.max_decode_len < 2:
            raise ValueError("max_decode_len must be >= 2")
        if self.context_source != "encoder_final":
            raise ValueError("context_source must be 'encoder_final'")


PARAM_NAMES = ("embedding", "enc_Wx", "enc_Wc", "enc_Wh", "enc_b", "dec_Wx", "dec_Wh", "dec_b",
               "out_W", "out_b")


def param_shapes(config: ModelConfig, vocab_size: int) -> Dict[str, Tuple[int, ...]]:
    E, H, V = config.embed_dim, config.hidden_dim, vocab_size
    shapes = {
        "embedding": (V, E),
        "enc_Wx": (E, 4 * H),
        "enc_Wc": (H, 4 * H),
        "enc_Wh": (H, 4 * H),
        "enc_b": (4 * H,),
        "dec_Wx": (E, 4 * H),
        "dec_Wh": (H, 4 * H),
        "dec_b": (4 * H,),
        "out_W": (H, V),
        "out_b": (V,),
    }
    if not config.use_context:
        del shapes["enc_Wc"]
    return shapes


class Seq2SeqParams(dict):
    """Named float64 arrays; one instance serves every unrolled turn."""

    def copy(self) -> "Seq2SeqParams":
        return Seq2SeqParams({k: v.copy() for k, v in self.items()})

    def zeros_like(self) -> "Seq2SeqParams":
        return Seq2SeqParams({k: np.zeros_like(v) for k, v in self.items()})

    def check(self, config: ModelConfig, vocab_size: int) -> None:
        expected = param_shapes(config, vocab_size)
        if set(expected) != set(self):
            raise ShapeMismatch(f"parameter names {sorted(self)} != {sorted(expected)}")
        for name, shape in expected.items():
            if self[name].shape != shape:
                raise ShapeMismatch(f"{name}: shape {self[name].shape} != {shape}")
            if not np.all(np.isfinite(self[name])):
                raise ValueError(f"{name} contains non-finite values")


def init_params(config: ModelConfig, vocab_size: int, seed: int = 0) -> Seq2SeqParams:
    rng = np.random.default_rng(seed)
    H = config.hidden_dim
    params = Seq2SeqParams()
    for name, shape in param_shapes(config, vocab_size).items():
        if name == "embedding":
            params[name] = rng.normal(0.0, 0.1, size=shape)
        elif name.endswith("_b"):
            b = np.zeros(shape)
            if name in ("enc_b", "dec_b"):
                b[H:2 * H] = 1.0  # forget gate
            params[name] = b
        else:
            scale = 1.0 / np.sqrt(H)
            params[name] = rng.uniform(-scale, scale, size=shape)
    return params


# --- batching ----------------------------------------------------------------

EncodedDialog = List[Tuple[List[int], List[int]]]


def encode_dialog(dialog: Dialog, vocab: Vocabulary) -> EncodedDialog:
    return [(vocab.encode(t.user), vocab.encode(t.agent)) for t in dialog.turns]


@dataclass
class TurnBatch:
    user: np.ndarray       # (B, Lu) token ids
    user_mask: np.ndarray  # (B, Lu)
    dec_in: np.ndarray     # (B, Ld) <BOS> + agent
    dec_out: np.ndarray    # (B, Ld) agent + <EOS>
    dec_mask: np.ndarray   # (B, Ld)


def _pad(seqs: Sequence[Sequence[int]]) -> Tuple[np.ndarray, np.ndarray]:
    L = max(1, max(len(s) for s in seqs))
    ids = np.full((len(seqs), L), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(seqs), L))
    for b, s in enumerate(seqs):
        ids[b, :len(s)] = s
        mask[b, :len(s)] = 1.0
    return ids, mask


def make_batch(dialogs: Sequence[EncodedDialog]) -> List[TurnBatch]:
    """Align dialogs by turn index; rows that have ended are fully masked."""
    T = max(len(d) for d in dialogs)
    batch = []
    for t in range(T):
        users, dec_in, dec_out = [], [], []
        for d in dialogs:
            if t < len(d):
                u, a = d[t]
                users.append(u)
                dec_in.append([BOS_ID] + list(a))
                dec_out.append(list(a) + [EOS_ID])
            else:
                users.append([])
                dec_in.append([])
                dec_out.append([])
        user, user_mask = _pad(users)
        din, dmask = _pad(dec_in)
        dout, _ = _pad(dec_out)
        batch.append(TurnBatch(user, user_mask, din, dout, dmask))
    return batch


# --- forward / backward -------------------------------------------------------

@dataclass
class TurnState:
    encoder_final: np.ndarray
    decoder_final: np.ndarray
    truncated: bool = False


@dataclass
class ForwardResult:
    loss: float
    n_tokens: float
    probs: List[np.ndarray]            # per turn (B, Ld, V)
    encoder_final: List[np.ndarray]    # per turn (B, H)
    decoder_final: List[np.ndarray]    # per turn (B, H)
    caches: list = field(default_factory=list, repr=False)


def _encoder(params, config, user, user_mask, ctx):
    emb = params["embedding"][user]
    zx = emb @ params["enc_Wx"] + params["enc_b"]
    if config.use_context:
        zx = zx + (ctx @ params["enc_Wc"])[:, None, :]
    B = user.shape[0]
    H = config.hidden_dim
    zero = np.zeros((B, H))
    _, h, c, cache = lstm_forward(zx, params["enc_Wh"], zero, zero, user_mask)
    return h, c, cache


def _decoder(params, dec_in, dec_mask, h0, c0):
    emb = params["embedding"][dec_in]
    zx = emb @ params["dec_Wx"] + params["dec_b"]
    hs, h, c, cache = lstm_forward(zx, params["dec_Wh"], h0, c0, dec_mask)
    probs = softmax(hs @ params["out_W"] + params["out_b"])
    return hs, h, probs, cache


def forward(params: Seq2SeqParams, config: ModelConfig, batch: List[TurnBatch],
            keep_cache: bool = True) -> ForwardResult:
    B = batch[0].user.shape[0]
    H = config.hidden_dim
    n_tokens = float(sum(tb.dec_mask.sum() for tb in batch))
    ctx = np.zeros((B, H))
    nll = 0.0
    result = ForwardResult(0.0, n_tokens, [], [], [])
    for tb in batch:
        h_enc, c_enc, enc_cache = _encoder(params, config, tb.user, tb.user_mask, ctx)
        hs, h_dec, probs, dec_cache = _decoder(params, tb.dec_in, tb.dec_mask, h_enc, c_enc)
        p_target = np.take_along_axis(probs, tb.dec_out[..., None], axis=2)[..., 0]
        nll -= float((np.log(np.where(tb.dec_mask > 0, p_target, 1.0)) * tb.dec_mask).sum())
        result.probs.append(probs)
        result.encoder_final.append(h_enc)
        result.decoder_final.append(h_dec)
        if keep_cache:
            result.caches.append((ctx, enc_cache, hs, dec_cache))
        if config.use_context:
            ctx = h_enc
    result.loss = nll / max(n_tokens, 1.0)
    return result


def backward(params: Seq2SeqParams, config: ModelConfig, batch: List[TurnBatch],
             fwd: Optional[ForwardResult] = None) -> Tuple[Seq2SeqParams, float]:
    """Exact gradient of the mean token cross-entropy, including cross-turn context links."""
    if fwd is None or not fwd.caches:
        fwd = forward(params, config, batch, keep_cache=True)
    grads = params.zeros_like()
    n = max(fwd.n_tokens, 1.0)
    dctx_next = None
    for t in range(len(batch) - 1, -1, -1):
        tb = batch[t]
        ctx, enc_cache, hs, dec_cache = fwd.caches[t]
        probs = fwd.probs[t]
        dlogits = probs.copy()
        B, L = tb.dec_out.shape
        np.subtract.at(dlogits, (np.arange(B)[:, None], np.arange(L)[None, :], tb.dec_out), 1.0)
        dlogits *= (tb.dec_mask / n)[..., None]
        grads["out_W"] += np.einsum("blh,blv->hv", hs, dlogits)
        grads["out_b"] += dlogits.sum(axis=(0, 1))
        dhs = dlogits @ params["out_W"].T
        H = config.hidden_dim
        zero = np.zeros((B, H))
        dzx, dWh, dh0, dc0 = lstm_backward(dhs, zero, zero, dec_cache)
        grads["dec_Wh"] += dWh
        grads["dec_b"] += dzx.sum(axis=(0, 1))
        emb = params["embedding"][tb.dec_in]
        grads["dec_Wx"] += np.einsum("ble,blk->ek", emb, dzx)
        np.add.at(grads["embedding"], tb.dec_in, dzx @ params["dec_Wx"].T)

        dh_enc = dh0 if dctx_next is None else dh0 + dctx_next
        dzx, dWh, _, _ = lstm_backward(None, dh_enc, dc0, enc_cache)
        grads["enc_Wh"] += dWh
        grads["enc_b"] += dzx.sum(axis=(0, 1))
        emb = params["embedding"][tb.user]
        grads["enc_Wx"] += np.einsum("ble,blk->ek", emb, dzx)
        np.add.at(grads["embedding"], tb.user, dzx @ params["enc_Wx"].T)
        if config.use_context:
            dz_sum = dzx.sum(axis=1)
            grads["enc_Wc"] += ctx.T @ dz_sum
            dctx_next = dz_sum @ params["enc_Wc"].T
    return grads, fwd.loss


def global_norm(grads: Dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))


def clip_gradients(grads: Dict[str, np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place so the global norm is at most ``max_norm``; returns the new norm."""
    norm = global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
        return global_norm(grads)
    return norm


def loss(distributions: Sequence[np.ndarray], targets: Sequence[Sequence[int]]) -> float:
    """Mean negative log-probability of target ids.

    ``distributions[k]`` is an (L_k, V) array of per-position probabilities
    and ``targets[k]`` the L_k target ids (``<EOS>`` included). ``<PAD>``
    targets are skipped.
    """
    total, count = 0.0, 0
    for dist, tgt in zip(distributions, targets):
        dist = np.asarray(dist)
        if dist.shape[0] != len(tgt):
            raise ShapeMismatch(f"{dist.shape[0]} distributions for {len(tgt)} targets")
        for row, tok in zip(dist, tgt):
            if tok == PAD_ID:
                continue
            total -= float(np.log(row[tok]))
            count += 1
    return total / count if count else 0.0


# --- single-dialog helpers ------------------------------------------------------

def _check_context(config: ModelConfig, prev_context) -> np.ndarray:
    H = config.hidden_dim
    if not config.use_context:
        if prev_context is not None:
            raise ShapeMismatch("model without context accepts no prev_context")
        return np.zeros((1, H))
    if prev_context is None:
        return np.zeros((1, H))
    ctx = np.asarray(prev_context, dtype=np.float64).reshape(1, -1)
    if ctx.shape[1] != H:
        raise ShapeMismatch(f"context has dimension {ctx.shape[1]}, expected {H}")
    return ctx


def _encode_state(params, config, user_tokens, prev_context):
    if len(user_tokens) == 0:
        raise ValueError("user_tokens must be non-empty")
    ctx = _check_context(config, prev_context)
    user = np.asarray([list(user_tokens)], dtype=np.int64)
    h, c, _ = _encoder(params, config, user, np.ones(user.shape), ctx)
    return h[0], c[0]


def encode_turn(params, config: ModelConfig, user_tokens: Sequence[int], prev_context=None) -> np.ndarray:
    """Encoder final hidden state for one user utterance."""
    return _encode_state(params, config, user_tokens, prev_context)[0]


def forward_dialog(params, config: ModelConfig, dialog: EncodedDialog):
    """Teacher-forced pass over one encoded dialog.

    Returns ``(distributions, states)``: per turn an (L, V) array of next-token
    distributions and a :class:`TurnState`.
    """
    fwd = forward(params, config, make_batch([dialog]), keep_cache=False)
    dists, states = [], []
    for t, (_, agent) in enumerate(dialog):
        dists.append(fwd.probs[t][0, :len(agent) + 1])
        states.append(TurnState(fwd.encoder_final[t][0], fwd.decoder_final[t][0]))
    return dists, states


def encoder_chain(params, config: ModelConfig, users: Sequence[Sequence[int]]) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Encoder final (h, c) for every turn of a history, threading the context."""
    states = []
    ctx = None
    for u in users:
        h, c = _encode_state(params, config, u, ctx)
        states.append((h, c))
        if config.use_context:
            ctx = h
    return states


def greedy_from_state(params, config: ModelConfig, h, c, max_len: Optional[int] = None):
    """Argmax decoding from an encoder state. Returns (ids, decoder_final, truncated)."""
    max_len = config.max_decode_len if max_len is None else max_len
    H = config.hidden_dim
    Wx, Wh, b = params["dec_Wx"], params["dec_Wh"], params["dec_b"]
    E, W_out, b_out = params["embedding"], params["out_W"], params["out_b"]
    h = np.asarray(h, dtype=np.float64).copy()
    c = np.asarray(c, dtype=np.float64).copy()
    tok = BOS_ID
    out: List[int] = []
    for _ in range(max_len):
        z = E[tok] @ Wx + h @ Wh + b
        i, f, o = sigmoid(z[:H]), sigmoid(z[H:2 * H]), sigmoid(z[2 * H:3 * H])
        g = np.tanh(z[3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        tok = int(np.argmax(h @ W_out + b_out))  # first maximum, so ties go to the lowest id
        if tok == EOS_ID:
            return out, h, False
        out.append(tok)
    return out, h, True


SPECIAL_IDS = (PAD_ID, BOS_ID, EOS_ID, UNK_ID)


def decode_greedy(params, config: ModelConfig, user_tokens: Sequence[int], prev_context=None):
    """Greedy response to one user utterance.

    Returns ``(ids, state)`` where ``ids`` excludes ``<PAD>``, ``<BOS>``,
    ``<EOS>`` and ``<UNK>``; ``state.truncated`` is set when ``max_decode_len``
    was hit before ``<EOS>``.
    """
    h, c = _encode_state(params, config, user_tokens, prev_context)
    ids, h_dec, truncated = greedy_from_state(params, config, h, c)
    ids = [i for i in ids if i not in SPECIAL_IDS]
    return ids, TurnState(h, h_dec, truncated)


@dataclass
class HistoryState:
    """Model view of a dialog history at its last turn."""
    encoder_final: np.ndarray
    decoder_final: Optional[np.ndarray]
    response_ids: Optional[List[int]]
    truncated: bool = False


def read_history(params, config: ModelConfig, users: Sequence[Sequence[int]], decode: bool = True) -> HistoryState:
    """Encode user_1..t and, optionally, greedily decode the turn-t response.

    Previous agent responses do not enter the computation: the context carried
    between turns is the encoder's final state alone. Batch evaluation and the
    interactive chat both go through this function.
    """
    h, c = encoder_chain(params, config, users)[-1]
    if not decode:
        return HistoryState(h, None, None)
    ids, h_dec, truncated = greedy_from_state(params, config, h, c)
    return HistoryState(h, h_dec, [i for i in ids if i not in SPECIAL_IDS], truncated)
