from __future__ import annotations

import numpy as np
import pytest

from dialogforge.corpus import generate_restaurant_corpus, generate_support_corpus
from dialogforge.corpus.dialog import Dialog
from dialogforge.estimators import Seq2SeqResponder
from dialogforge.seq2seq.model import ModelConfig, init_params

ACCEPTANCE_LINES = []


def record_acceptance(name: str, passed: bool, detail: str = "") -> None:
    line = f"{'PASS' if passed else 'FAIL'} {name}" + (f" :: {detail}" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def restaurant_small():
    return generate_restaurant_corpus(60, seed=3)


@pytest.fixture(scope="session")
def support_small():
    return generate_support_corpus(40, seed=5)


@pytest.fixture(scope="session")
def tiny_responder(support_small):
    """A briefly trained HRED model, good enough to exercise every code path."""
    return Seq2SeqResponder(embed_dim=8, hidden_dim=12, epochs=2, batch_size=8, seed=0).fit(support_small[:20])


@pytest.fixture
def tiny_params():
    config = ModelConfig(embed_dim=4, hidden_dim=6, max_decode_len=5, use_context=True)
    return config, init_params(config, 12, seed=0)


def toy_dialog(dialog_id="toy", n_turns=2):
    pairs = [(f"hello number{k}", f"reply{k} ok") for k in range(n_turns)]
    return Dialog.from_pairs(dialog_id, pairs)
