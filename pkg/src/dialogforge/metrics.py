"""Fluency and external-action metrics for dialog responses.

All functions take token sequences (tuples or lists of strings). Scores are
computed over every agent turn of a test set pooled together.
"""
from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .corpus.dialog import Dialog, is_api_call, utterance_text

BLEU_EPSILON = 1e-9


class EmptyInput(ValueError):
    pass


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def ngram_match_counts(candidates, references, n: int) -> Tuple[int, int]:
    """(clipped matches, candidate n-gram total) summed over the corpus."""
    if len(candidates) != len(references):
        raise ValueError("candidates and references must be aligned")
    matched = total = 0
    for cand, ref in zip(candidates, references):
        cand_counts = _ngrams(cand, n)
        ref_counts = _ngrams(ref, n)
        matched += sum(min(c, ref_counts[g]) for g, c in cand_counts.items())
        total += sum(cand_counts.values())
    return matched, total


def modified_ngram_precision(candidates, references, n: int) -> float:
    """Corpus-level clipped n-gram precision; 0.0 when no candidate has an n-gram of order ``n``."""
    matched, total = ngram_match_counts(candidates, references, n)
    return matched / total if total else 0.0


def brevity_penalty(candidate_len: int, reference_len: int) -> float:
    if candidate_len == 0:
        return 0.0
    if candidate_len > reference_len:
        return 1.0
    return math.exp(1.0 - reference_len / candidate_len)


def bleu(candidates, references, max_n: int = 4) -> float:
    """Corpus BLEU-4 on a 0-100 scale, single reference per candidate.

    An order whose clipped count is zero enters the geometric mean as
    ``BLEU_EPSILON``; an order for which no candidate has any n-gram is left
    out and the remaining weights are renormalized.
    """
    if not candidates or len(candidates) != len(references):
        raise EmptyInput("bleu needs aligned, non-empty candidate and reference lists")
    c = sum(len(x) for x in candidates)
    r = sum(len(x) for x in references)
    if c == 0:
        return 0.0
    log_sum, used = 0.0, 0
    for n in range(1, max_n + 1):
        matched, total = ngram_match_counts(candidates, references, n)
        if total == 0:
            continue
        p = matched / total if matched else BLEU_EPSILON
        log_sum += math.log(p)
        used += 1
    return 100.0 * brevity_penalty(c, r) * math.exp(log_sum / used)


def sentence_bleu_mean(candidates, references) -> float:
    if not candidates:
        raise EmptyInput("no candidates")
    return math.fsum(bleu([c], [r]) for c, r in zip(candidates, references)) / len(candidates)


@dataclass(frozen=True)
class RatioResult:
    value: float
    degenerate: bool = False


def eqm(predictions, references) -> RatioResult:
    """Exact query match over reference ``api_call`` turns; no partial credit."""
    if len(predictions) != len(references):
        raise ValueError("predictions and references must be aligned")
    denom = hits = 0
    for pred, ref in zip(predictions, references):
        if is_api_call(ref):
            denom += 1
            hits += tuple(pred) == tuple(ref)
    if denom == 0:
        return RatioResult(0.0, True)
    return RatioResult(hits / denom)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class TimingResult:
    counts: ConfusionCounts
    precision: float
    recall: float
    accuracy: float
    degenerate: bool = False


def timing_from_counts(counts: ConfusionCounts) -> TimingResult:
    degenerate = False

    def ratio(num, den):
        nonlocal degenerate
        if den == 0:
            degenerate = True
            return 1.0
        return num / den

    p = ratio(counts.tp, counts.tp + counts.fp)
    r = ratio(counts.tp, counts.tp + counts.fn)
    acc = ratio(counts.tp + counts.tn, counts.total)
    return TimingResult(counts, p, r, acc, degenerate)


def api_timing(predictions, references) -> TimingResult:
    """Precision/recall/accuracy of the binary decision to emit an api_call."""
    if len(predictions) != len(references):
        raise ValueError("predictions and references must be aligned")
    tp = fp = fn = tn = 0
    for pred, ref in zip(predictions, references):
        p, r = is_api_call(pred), is_api_call(ref)
        if p and r:
            tp += 1
        elif p:
            fp += 1
        elif r:
            fn += 1
        else:
            tn += 1
    return timing_from_counts(ConfusionCounts(tp, fp, fn, tn))


def length_and_unigram_diagnostics(generated, references):
    """Mean token counts of generated and reference utterances and the generated unigram distribution."""
    if not generated or not references:
        raise EmptyInput("diagnostics need non-empty inputs")
    avg_gen = sum(len(g) for g in generated) / len(generated)
    avg_ref = sum(len(r) for r in references) / len(references)
    counts = Counter(tok for g in generated for tok in g)
    total = sum(counts.values())
    dist = {tok: n / total for tok, n in sorted(counts.items())} if total else {}
    return avg_gen, avg_ref, dist


# --- evaluation -----------------------------------------------------------------

@dataclass
class EvalReport:
    model: str
    n_dialogs: int
    n_turns: int
    bleu: float
    bleu_turn_mean: float
    eqm: float
    eqm_degenerate: bool
    precision: float
    recall: float
    accuracy: float
    timing_degenerate: bool
    tp: int
    fp: int
    fn: int
    tn: int
    avg_gen_len: float
    avg_ref_len: float
    unigram_dist: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Prediction:
    dialog_id: str
    turn: int
    reference: Tuple[str, ...]
    prediction: Tuple[str, ...]
    source: str

    def to_json(self) -> dict:
        return {
            "dialog_id": self.dialog_id,
            "turn": self.turn,
            "reference": utterance_text(self.reference),
            "prediction": utterance_text(self.prediction),
            "source": self.source,
        }


Responder = Callable[[List[Tuple[str, ...]], List[Tuple[str, ...]]], object]


def _unpack(response, default_source: str) -> Tuple[Tuple[str, ...], str]:
    chosen = getattr(response, "chosen", None)
    if chosen is not None:
        return tuple(chosen), str(response.source)
    return tuple(response), default_source


def predict_dialog(model: Responder, dialog: Dialog, source: str = "model") -> List[Prediction]:
    """Query ``model`` at every turn with the true history (user_1..t, agent_1..t-1)."""
    users, agents = dialog.users, dialog.agents
    if hasattr(model, "predict_dialog"):
        # estimators compute every prefix state in one pass; same protocol
        responses = model.predict_dialog(dialog)
    else:
        responses = [model(users[:t + 1], agents[:t]) for t in range(len(dialog))]
    out = []
    for t, response in enumerate(responses):
        pred, src = _unpack(response, source)
        out.append(Prediction(dialog.id, t + 1, agents[t], pred, src))
    return out


def collect_predictions(model: Responder, dialogs: Sequence[Dialog], source: str = "model",
                        threads: int = 1) -> List[Prediction]:
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            per_dialog = list(pool.map(lambda d: predict_dialog(model, d, source), dialogs))
    else:
        per_dialog = [predict_dialog(model, d, source) for d in dialogs]
    return [p for preds in per_dialog for p in preds]


def report_from_predictions(predictions: Sequence[Prediction], name: str = "model") -> EvalReport:
    if not predictions:
        raise EmptyInput("no predictions to score")
    preds = [p.prediction for p in predictions]
    refs = [p.reference for p in predictions]
    timing = api_timing(preds, refs)
    match = eqm(preds, refs)
    avg_gen, avg_ref, dist = length_and_unigram_diagnostics(preds, refs)
    return EvalReport(
        model=name,
        n_dialogs=len({p.dialog_id for p in predictions}),
        n_turns=len(predictions),
        bleu=bleu(preds, refs),
        bleu_turn_mean=sentence_bleu_mean(preds, refs),
        eqm=match.value,
        eqm_degenerate=match.degenerate,
        precision=timing.precision,
        recall=timing.recall,
        accuracy=timing.accuracy,
        timing_degenerate=timing.degenerate,
        tp=timing.counts.tp,
        fp=timing.counts.fp,
        fn=timing.counts.fn,
        tn=timing.counts.tn,
        avg_gen_len=avg_gen,
        avg_ref_len=avg_ref,
        unigram_dist=dist,
    )


def evaluate_model(model: Responder, test_dialogs: Sequence[Dialog], name: str = "model",
                   threads: int = 1) -> Tuple[EvalReport, List[Prediction]]:
    """Score a turn-response function over a test split.

    ``model(users, agents)`` receives the true history up to the current turn
    and returns either a token sequence or an object with ``chosen`` and
    ``source`` attributes (a hybrid decision).
    """
    predictions = collect_predictions(model, test_dialogs, name, threads)
    return report_from_predictions(predictions, name), predictions
