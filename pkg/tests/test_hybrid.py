from __future__ import annotations

from hypothesis import given, settings
from hypothesis import strategies as st

from dialogforge.estimators import HybridResponder, NearestNeighborResponder
from dialogforge.hybrid import NEAREST_NEIGHBOR, SEQ2SEQ, hybrid_respond, is_api_call
from dialogforge.metrics import api_timing


def T(text):
    return tuple(text.split())


def test_is_api_call():
    assert is_api_call(T("api_call cancel_refund"))
    assert not is_api_call(T("you 're most welcome"))
    assert not is_api_call(T("the api_call failed"))
    assert not is_api_call(())


def test_api_call_comes_from_seq2seq():
    d = hybrid_respond(T("api_call cancel_refund"), T("you 're welcome"))
    assert d.chosen == T("api_call cancel_refund") and d.source == SEQ2SEQ


def test_other_turns_come_from_retrieval():
    d = hybrid_respond(T("thank you"), T("is there anything else i can help you with ?"))
    assert d.chosen == T("is there anything else i can help you with ?") and d.source == NEAREST_NEIGHBOR


def test_seq2seq_precedence_on_two_api_calls():
    assert hybrid_respond(T("api_call a b"), T("api_call c d")).chosen == T("api_call a b")


_seq = st.lists(st.sampled_from(["api_call", "a", "b", "<SILENCE>"]), min_size=1, max_size=4).map(tuple)


@settings(max_examples=300, deadline=None)
@given(_seq, _seq)
def test_decision_invariants(s2s, nn):
    d = hybrid_respond(s2s, nn)
    assert d.chosen in (s2s, nn)
    assert (d.chosen == s2s) if d.source == SEQ2SEQ else (d.chosen == nn)
    if is_api_call(s2s):
        assert d.chosen == s2s
    assert is_api_call(d.chosen) >= is_api_call(s2s)


def test_hybrid_structural_invariants_on_model_output(tiny_responder, support_small):
    nn = NearestNeighborResponder(tiny_responder, mode="decoder").fit(support_small[:20])
    hybrid = HybridResponder(tiny_responder, nn).fit(support_small[:20])
    s2s_out, hyb_out, refs = [], [], []
    for dialog in support_small[20:]:
        s2s_out += tiny_responder.predict_dialog(dialog)
        decisions = hybrid.predict_dialog(dialog)
        hyb_out += [d.chosen for d in decisions]
        refs += dialog.agents
        for t, d in enumerate(decisions):
            assert d == hybrid.decide(dialog.users[:t + 1], dialog.agents[:t])
    for s, h in zip(s2s_out, hyb_out):
        if is_api_call(s):
            assert h == s
    assert {k for k, s in enumerate(s2s_out) if is_api_call(s)} <= {k for k, h in enumerate(hyb_out) if is_api_call(h)}
    assert api_timing(hyb_out, refs).recall >= api_timing(s2s_out, refs).recall
