"""Dialog corpora: types, file formats, normalization, generators, vocabulary."""
from .dialog import (
    API_CALL,
    MAX_TURNS,
    SILENCE,
    ApiCall,
    Dialog,
    OutOfOrderTurn,
    ParseError,
    Turn,
    Utterance,
    format_babi,
    format_jsonl,
    is_api_call,
    load_dialogs,
    make_utterance,
    parse_babi_text,
    parse_jsonl,
    utterance_text,
)
from .generate import generate_restaurant_corpus, generate_support_corpus, restaurant_api_call
from .normalize import EmptyUtterance, NormalizerConfig, load_lexicon, normalize_utterance
from .vocab import (
    BOS_ID,
    EOS_ID,
    PAD_ID,
    RESERVED,
    UNK_ID,
    CorpusSplit,
    TooFewDialogs,
    Vocabulary,
    build_vocabulary,
    split_corpus,
)
