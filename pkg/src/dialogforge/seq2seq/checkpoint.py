"""Binary checkpoint format (all integers and floats little-endian).

    magic          4 bytes  b"S2SD"
    version        u32      1
    embed_dim      u32
    hidden_dim     u32
    max_decode_len u32
    flags          u32      bit 0: use_context
    vocab_size     u32
    vocab_size x { len u32, utf-8 bytes }        tokens in id order
    n_tensors      u32
    n_tensors x {
        name_len u32, name utf-8 bytes,
        ndim u32, ndim x u32 dims,
        prod(dims) x f64 (row-major)
    }
"""
from __future__ import annotations

import io
import struct
from typing import BinaryIO, Tuple

import numpy as np

from ..corpus.vocab import Vocabulary
from .model import PARAM_NAMES, ModelConfig, Seq2SeqParams

MAGIC = b"S2SD"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _u32(fh: BinaryIO, value: int) -> None:
    fh.write(struct.pack("<I", value))


def _str(fh: BinaryIO, text: str) -> None:
    data = text.encode("utf-8")
    _u32(fh, len(data))
    fh.write(data)


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError("truncated checkpoint")
    return data


def _read_u32(fh: BinaryIO) -> int:
    return struct.unpack("<I", _read_exact(fh, 4))[0]


def _read_str(fh: BinaryIO) -> str:
    return _read_exact(fh, _read_u32(fh)).decode("utf-8")


def dumps(params: Seq2SeqParams, config: ModelConfig, vocab: Vocabulary) -> bytes:
    fh = io.BytesIO()
    fh.write(MAGIC)
    _u32(fh, VERSION)
    _u32(fh, config.embed_dim)
    _u32(fh, config.hidden_dim)
    _u32(fh, config.max_decode_len)
    _u32(fh, 1 if config.use_context else 0)
    _u32(fh, len(vocab))
    for tok in vocab.tokens:
        _str(fh, tok)
    names = [n for n in PARAM_NAMES if n in params]
    _u32(fh, len(names))
    for name in names:
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        _str(fh, name)
        _u32(fh, arr.ndim)
        for dim in arr.shape:
            _u32(fh, dim)
        fh.write(arr.tobytes(order="C"))
    return fh.getvalue()


def loads(data: bytes) -> Tuple[Seq2SeqParams, ModelConfig, Vocabulary]:
    fh = io.BytesIO(data)
    if _read_exact(fh, 4) != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    version = _read_u32(fh)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    embed_dim, hidden_dim, max_decode_len, flags = (_read_u32(fh) for _ in range(4))
    config = ModelConfig(embed_dim=embed_dim, hidden_dim=hidden_dim, max_decode_len=max_decode_len,
                         use_context=bool(flags & 1))
    vocab = Vocabulary([_read_str(fh) for _ in range(_read_u32(fh))])
    params = Seq2SeqParams()
    for _ in range(_read_u32(fh)):
        name = _read_str(fh)
        shape = tuple(_read_u32(fh) for _ in range(_read_u32(fh)))
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(_read_exact(fh, 8 * count), dtype="<f8").reshape(shape)
        params[name] = arr.astype(np.float64)
    if fh.read(1):
        raise CheckpointError("trailing bytes after last tensor")
    params.check(config, len(vocab))
    return params, config, vocab


def save_checkpoint(path, params: Seq2SeqParams, config: ModelConfig, vocab: Vocabulary) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(params, config, vocab))


def load_checkpoint(path) -> Tuple[Seq2SeqParams, ModelConfig, Vocabulary]:
    with open(path, "rb") as fh:
        return loads(fh.read())
