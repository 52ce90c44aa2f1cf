"""Command-line entry point: ``dialogforge {gen-data,train,index,eval,chat}``.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from .belief.balltree import DimensionMismatch
from .belief.store import BeliefMode, StateActionStore
from .corpus.dialog import SILENCE, format_babi, format_jsonl, load_dialogs, utterance_text
from .corpus.generate import generate_restaurant_corpus, generate_support_corpus
from .corpus.normalize import EmptyUtterance, normalize_utterance
from .corpus.vocab import split_corpus
from .estimators import HybridResponder, NearestNeighborResponder, Seq2SeqResponder
from .metrics import evaluate_model
from .seq2seq.model import ModelConfig
from .seq2seq.train import TrainConfig

logger = logging.getLogger("dialogforge")

SEED_ENV = "DIALOGFORGE_SEED"
GENERATORS = {"restaurant": generate_restaurant_corpus, "support": generate_support_corpus}
MODEL_NAMES = {
    1: "model1_seq2seq",
    2: "model2_hred",
    3: "model3_nn_encoder",
    4: "model4_nn_decoder",
    5: "model5_hybrid",
}


class UsageError(Exception):
    pass


def env_seed(default: int) -> int:
    value = os.environ.get(SEED_ENV)
    if value is None or value == "":
        return default
    try:
        return int(value)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {value!r}")


@dataclass
class RunConfig:
    corpus: str
    checkpoint: str
    loss_log: Optional[str] = None
    store: Optional[str] = None
    report: Optional[str] = None
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    belief_mode: str = "decoder"
    min_count: int = 1
    seed: int = 0

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path = Path(".")) -> "RunConfig":
        raw = dict(raw)
        unknown = set(raw) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        if "corpus" not in raw or "checkpoint" not in raw:
            raise UsageError("config needs 'corpus' and 'checkpoint'")
        seed = env_seed(int(raw.get("seed", 0)))
        train = dict(raw.get("train", {}))
        train["seed"] = seed
        for key in ("corpus", "checkpoint", "loss_log", "store", "report"):
            if raw.get(key) is not None:
                raw[key] = str(base_dir / raw[key])
        try:
            BeliefMode(raw.get("belief_mode", "decoder"))
            model = ModelConfig(**raw.get("model", {}))
            train_cfg = TrainConfig(**train)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"invalid config: {exc}")
        return cls(
            corpus=raw["corpus"],
            checkpoint=raw["checkpoint"],
            loss_log=raw.get("loss_log"),
            store=raw.get("store"),
            report=raw.get("report"),
            model=model,
            train=train_cfg,
            belief_mode=raw.get("belief_mode", "decoder"),
            min_count=int(raw.get("min_count", 1)),
            seed=seed,
        )

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls.from_dict(raw, path.parent)

    def to_dict(self) -> dict:
        return asdict(self)


def _write(path, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def sidecar_path(out: str) -> str:
    p = Path(out)
    return str(p.with_suffix(".jsonl")) if p.suffix != ".jsonl" else str(p) + ".jsonl"


def _load_corpus(path):
    if not Path(path).exists():
        raise FileNotFoundError(f"corpus not found: {path}")
    return load_dialogs(path)


# --- subcommands -------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    dialogs = GENERATORS[args.domain](args.n, _seed(args))
    _write(args.out, format_babi(dialogs))
    _write(sidecar_path(args.out), format_jsonl(dialogs))
    n_turns = sum(len(d) for d in dialogs)
    print(f"wrote {len(dialogs)} dialogs ({n_turns} turns) to {args.out} and {sidecar_path(args.out)}")
    return 0


def cmd_train(args) -> int:
    cfg = RunConfig.load(args.config)
    split = split_corpus(_load_corpus(cfg.corpus), cfg.seed)
    model = Seq2SeqResponder(
        embed_dim=cfg.model.embed_dim, hidden_dim=cfg.model.hidden_dim, use_context=cfg.model.use_context,
        max_decode_len=cfg.model.max_decode_len, epochs=cfg.train.epochs, batch_size=cfg.train.batch_size,
        learning_rate=cfg.train.learning_rate, gradient_clip_norm=cfg.train.gradient_clip_norm,
        min_count=cfg.min_count, seed=cfg.seed,
    )

    def progress(entry):
        print(f"epoch {entry['epoch']}: train {entry['train_loss']:.4f} val {entry['val_loss']:.4f}", flush=True)

    model.fit(split.train, validation=split.validation, callback=progress)
    Path(cfg.checkpoint).parent.mkdir(parents=True, exist_ok=True)
    model.save(cfg.checkpoint)
    # round-trip check before reporting success
    Seq2SeqResponder.load(cfg.checkpoint)
    log_path = cfg.loss_log or cfg.checkpoint + ".loss.csv"
    lines = ["epoch,train_loss,val_loss,best_val_loss"]
    lines += [f"{h['epoch']},{h['train_loss']!r},{h['val_loss']!r},{h['best_val_loss']!r}" for h in model.history_]
    _write(log_path, "\n".join(lines) + "\n")
    print(f"checkpoint {cfg.checkpoint}; loss log {log_path}")
    return 0


def _seed(args) -> int:
    return env_seed(0) if args.seed is None else args.seed


def cmd_index(args) -> int:
    s2s = Seq2SeqResponder.load(args.checkpoint)
    split = split_corpus(_load_corpus(args.corpus), _seed(args))
    nn = NearestNeighborResponder(s2s, mode=args.mode, leaf_size=args.leaf_size, metric=args.metric).fit(split.train)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    nn.store_.save(args.out)
    n_agent_turns = sum(len(d) for d in split.train)
    print(f"indexed {len(nn.store_)} state-action pairs from {n_agent_turns} agent turns "
          f"(mode {args.mode}, dim {nn.store_.dim}) -> {args.out}")
    return 0


def build_model(number: int, s2s: Seq2SeqResponder, store: Optional[StateActionStore]):
    if number == 1 and s2s.config_.use_context:
        raise UsageError("model 1 needs a checkpoint trained with use_context=false")
    if number == 2 and not s2s.config_.use_context:
        raise UsageError("model 2 needs a checkpoint trained with use_context=true")
    if number in (1, 2):
        return s2s
    if store is None:
        raise UsageError(f"model {number} needs --store")
    expected = {3: BeliefMode.ENCODER, 4: BeliefMode.DECODER}.get(number)
    if expected is not None and store.mode is not expected:
        raise DimensionMismatch(f"model {number} queries {expected.value} belief states "
                                f"(dim {expected.dim(s2s.config_.hidden_dim)}) but the store holds "
                                f"{store.mode.value} states (dim {store.dim})")
    if store.dim != store.mode.dim(s2s.config_.hidden_dim):
        raise DimensionMismatch(f"store dimension {store.dim} does not fit checkpoint hidden size "
                                f"{s2s.config_.hidden_dim} in mode {store.mode.value}")
    nn = NearestNeighborResponder.from_store(s2s, store)
    if number == 5:
        return HybridResponder(s2s, nn).fit([])
    return nn


def cmd_eval(args) -> int:
    if args.model in (3, 4, 5) and not args.store:
        raise UsageError(f"model {args.model} needs --store")
    s2s = Seq2SeqResponder.load(args.checkpoint)
    store = StateActionStore.load(args.store) if args.store else None
    model = build_model(args.model, s2s, store)
    split = split_corpus(_load_corpus(args.corpus), _seed(args))
    dialogs = getattr(split, args.split)
    report, predictions = evaluate_model(model, dialogs, MODEL_NAMES[args.model], threads=args.threads)
    text = json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"
    if args.report:
        _write(args.report, text)
    else:
        sys.stdout.write(text)
    if args.predictions:
        _write(args.predictions, "".join(json.dumps(p.to_json(), sort_keys=True) + "\n" for p in predictions))
    print(f"{MODEL_NAMES[args.model]}: BLEU {report.bleu:.2f} P {report.precision:.2f} R {report.recall:.2f} "
          f"Acc {report.accuracy:.2f} EQM {report.eqm:.2f}", file=sys.stderr)
    return 0


class ChatSession:
    """Interactive history that feeds the system's own replies back as agent turns."""

    def __init__(self, model, vocab):
        self.model = model
        self.vocab = vocab
        self.reset()

    def reset(self) -> None:
        self.users, self.agents = [], []

    def parse_user(self, line: str):
        if not line.strip():
            return (SILENCE,)
        try:
            return normalize_utterance(line, vocab_hint=self.vocab)
        except EmptyUtterance:
            return (SILENCE,)

    def turn(self, line: str):
        """Returns (response tokens, source tag)."""
        self.users.append(self.parse_user(line))
        out = self.model(self.users, self.agents)
        if hasattr(out, "chosen"):
            tokens, source = out.chosen, out.source
        else:
            tokens = tuple(out)
            source = "seq2seq" if isinstance(self.model, Seq2SeqResponder) else "nearest_neighbor"
        self.agents.append(tokens)
        return tokens, source


def cmd_chat(args) -> int:
    s2s = Seq2SeqResponder.load(args.checkpoint)
    if args.model in (3, 4, 5) and not args.store:
        raise UsageError(f"model {args.model} needs --store")
    store = StateActionStore.load(args.store) if args.store else None
    session = ChatSession(build_model(args.model, s2s, store), s2s.vocab_)
    stdin, stdout = sys.stdin, sys.stdout
    interactive = stdin.isatty()
    if interactive:
        stdout.write("empty line = <SILENCE>, /reset clears the history, /quit exits\n")
    while True:
        if interactive:
            stdout.write("user> ")
            stdout.flush()
        line = stdin.readline()
        if not line:
            break
        line = line.rstrip("\n")
        if line.strip() == "/quit":
            break
        if line.strip() == "/reset":
            session.reset()
            stdout.write("[reset]\n")
            continue
        tokens, source = session.turn(line)
        stdout.write(f"[{source}] {utterance_text(tokens)}\n")
        stdout.flush()
    return 0


# --- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dialogforge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic corpus")
    p.add_argument("--domain", choices=sorted(GENERATORS), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="bAbI-style text output; a .jsonl sidecar is written next to it")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model from a JSON run config")
    p.add_argument("config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("index", help="build a state-action store snapshot")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--mode", choices=[m.value for m in BeliefMode], default="decoder")
    p.add_argument("--leaf-size", type=int, default=32)
    p.add_argument("--metric", choices=["euclidean", "cosine"], default="euclidean")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("eval", help="evaluate one of models 1-5 on a corpus split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--store")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", type=int, choices=sorted(MODEL_NAMES), required=True)
    p.add_argument("--split", choices=["train", "validation", "test"], default="test")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--report")
    p.add_argument("--predictions")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("chat", help="interactive session on stdin/stdout")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--store")
    p.add_argument("--model", type=int, choices=[2, 4, 5], default=5)
    p.set_defaults(func=cmd_chat)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"dialogforge: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"dialogforge: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
