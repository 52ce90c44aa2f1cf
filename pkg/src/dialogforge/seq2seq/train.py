from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .model import (
    EncodedDialog,
    ModelConfig,
    Seq2SeqParams,
    backward,
    clip_gradients,
    forward,
    make_batch,
)

logger = logging.getLogger(__name__)


class Diverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    learning_rate: float = 1e-3
    gradient_clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate < 0 or self.gradient_clip_norm <= 0:
            raise ValueError("learning_rate must be >= 0 and gradient_clip_norm > 0")


class Adam:
    def __init__(self, params: Seq2SeqParams, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.t = 0

    def step(self, params: Seq2SeqParams, grads: Dict[str, np.ndarray]) -> None:
        if self.lr == 0:
            return
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * math.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for name, g in grads.items():
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            params[name] -= lr_t * m / (np.sqrt(v) + self.eps)


def dataset_loss(params, config: ModelConfig, dialogs: Sequence[EncodedDialog], batch_size: int = 64) -> float:
    """Token-weighted mean cross-entropy over ``dialogs``."""
    total, count = 0.0, 0.0
    for k in range(0, len(dialogs), batch_size):
        fwd = forward(params, config, make_batch(dialogs[k:k + batch_size]), keep_cache=False)
        total += fwd.loss * fwd.n_tokens
        count += fwd.n_tokens
    return total / count if count else 0.0


def train(params_init: Seq2SeqParams, config: ModelConfig, train_config: TrainConfig,
          train_dialogs: Sequence[EncodedDialog], val_dialogs: Optional[Sequence[EncodedDialog]] = None,
          callback=None):
    """Minibatch Adam; returns (best-validation params, history).

    ``history[0]`` is the pre-training evaluation (epoch 0). Each entry holds
    ``epoch``, ``train_loss``, ``val_loss`` and ``best_val_loss``. Without
    validation dialogs the training loss selects the best epoch.
    """
    if not train_dialogs:
        raise ValueError("empty training split")
    params = params_init.copy()
    rng = np.random.default_rng(train_config.seed)
    opt = Adam(params, train_config.learning_rate)
    val_dialogs = list(val_dialogs or [])

    def score(train_loss):
        return dataset_loss(params, config, val_dialogs) if val_dialogs else train_loss

    init_train = dataset_loss(params, config, train_dialogs)
    best_val = score(init_train)
    best = params.copy()
    history: List[dict] = [dict(epoch=0, train_loss=init_train, val_loss=best_val, best_val_loss=best_val)]
    order = np.arange(len(train_dialogs))
    for epoch in range(1, train_config.epochs + 1):
        rng.shuffle(order)
        total, count = 0.0, 0.0
        for k in range(0, len(order), train_config.batch_size):
            batch = make_batch([train_dialogs[i] for i in order[k:k + train_config.batch_size]])
            grads, batch_loss = backward(params, config, batch)
            fwd_tokens = float(sum(tb.dec_mask.sum() for tb in batch))
            if not math.isfinite(batch_loss):
                raise Diverged(f"non-finite loss at epoch {epoch}")
            clip_gradients(grads, train_config.gradient_clip_norm)
            opt.step(params, grads)
            total += batch_loss * fwd_tokens
            count += fwd_tokens
        train_loss = total / count
        val_loss = score(train_loss)
        if not math.isfinite(val_loss):
            raise Diverged(f"non-finite validation loss at epoch {epoch}")
        if val_loss < best_val:
            best_val = val_loss
            best = params.copy()
        history.append(dict(epoch=epoch, train_loss=train_loss, val_loss=val_loss, best_val_loss=best_val))
        logger.info("epoch %d train %.4f val %.4f", epoch, train_loss, val_loss)
        if callback is not None:
            callback(history[-1])
    return best, history
