"""Dispatch between the generative model and nearest-neighbour retrieval.

The generative model is trusted for external actions; everything else comes
from retrieval, which only ever returns responses seen in training.
"""
from __future__ import annotations

from dataclasses import dataclass

from .corpus.dialog import Utterance, is_api_call, make_utterance

SEQ2SEQ = "seq2seq"
NEAREST_NEIGHBOR = "nearest_neighbor"

__all__ = ["HybridDecision", "hybrid_respond", "is_api_call", "SEQ2SEQ", "NEAREST_NEIGHBOR"]


@dataclass(frozen=True)
class HybridDecision:
    chosen: Utterance
    source: str
    seq2seq_output: Utterance
    nn_output: Utterance


def hybrid_respond(seq2seq_out, nn_out) -> HybridDecision:
    s2s = make_utterance(seq2seq_out)
    nn = make_utterance(nn_out)
    if is_api_call(s2s):
        return HybridDecision(s2s, SEQ2SEQ, s2s, nn)
    return HybridDecision(nn, NEAREST_NEIGHBOR, s2s, nn)
