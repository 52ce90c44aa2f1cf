"""Rule-based corpus generators.

The restaurant domain follows the bAbI task 1/2 layout: the user states some
constraints up front, the agent asks for the missing ones, then issues a
single ``api_call`` with the four slot values. The support domain is a scripted
refund/cancellation flow with several paraphrases per agent phase and noisy
user text that goes through :func:`normalize_utterance`.
"""
from __future__ import annotations

import random
from typing import Dict, List, Optional, Sequence, Tuple

from .dialog import API_CALL, SILENCE, ApiCall, Dialog, Utterance, make_utterance
from .normalize import normalize_utterance

CUISINES = ("italian", "french", "indian", "spanish", "british", "japanese", "korean", "thai",
            "vietnamese", "cantonese")
LOCATIONS = ("rome", "paris", "london", "madrid", "bombay", "tokyo", "seoul", "bangkok", "hanoi",
             "beijing")
PARTY_SIZES = ("two", "four", "six", "eight")
PRICES = ("cheap", "moderate", "expensive")
SLOT_ORDER = ("cuisine", "location", "party_size", "price")
SLOT_VALUES = {"cuisine": CUISINES, "location": LOCATIONS, "party_size": PARTY_SIZES, "price": PRICES}

GREETINGS = ("hi", "hello", "good morning", "hey there", "good evening")
REQUESTS = ("can you book a table", "i'd like to book a table", "may i have a table",
            "can you make a restaurant reservation", "i would like a reservation")
SLOT_PHRASES = {
    "cuisine": ("with {} food", "with {} cuisine"),
    "location": ("in {}",),
    "party_size": ("for {} people", "for {}"),
    "price": ("in a {} price range",),
}
SLOT_ANSWERS = {
    "cuisine": ("{} food please", "i love {} food", "with {} cuisine", "{} please"),
    "location": ("{} please", "in {}", "somewhere in {}"),
    "party_size": ("for {} please", "we will be {}", "{} people", "for {} people please"),
    "price": ("in a {} price range please", "i am looking for a {} restaurant", "{} please"),
}
SLOT_QUESTIONS = {
    "cuisine": "any preference on a type of cuisine",
    "location": "where should it be",
    "party_size": "how many people would be in your party",
    "price": "which price range are looking for",
}
THANKS = ("thanks", "thank you", "that's great thanks", "great thank you")


def restaurant_api_call(slots: Dict[str, str]) -> ApiCall:
    return ApiCall(tuple(slots[name] for name in SLOT_ORDER))


def _tok(text: str) -> Utterance:
    # restaurant templates are already clean; only split off apostrophes
    return make_utterance(text.replace("'", " '"))


def _restaurant_dialog(rng: random.Random, dialog_id: str) -> Dialog:
    slots = {name: rng.choice(SLOT_VALUES[name]) for name in SLOT_ORDER}
    stated = [name for name in SLOT_ORDER if rng.random() < 0.5]
    missing = [name for name in SLOT_ORDER if name not in stated]
    pairs: List[Tuple[Utterance, Utterance]] = []

    pairs.append((_tok(rng.choice(GREETINGS)), _tok("hello what can i help you with today")))
    phrases = [rng.choice(SLOT_PHRASES[name]).format(slots[name]) for name in stated]
    rng.shuffle(phrases)
    request = " ".join([rng.choice(REQUESTS)] + phrases)
    pairs.append((_tok(request), _tok("i'm on it")))

    user = (SILENCE,)
    for name in missing:
        pairs.append((user, _tok(SLOT_QUESTIONS[name])))
        user = _tok(rng.choice(SLOT_ANSWERS[name]).format(slots[name]))
    pairs.append((user, _tok("ok let me look into some options for you")))
    pairs.append(((SILENCE,), restaurant_api_call(slots).tokens()))
    pairs.append((_tok(rng.choice(THANKS)), _tok("you're welcome")))
    return Dialog.from_pairs(dialog_id, pairs)


def generate_restaurant_corpus(n_dialogs: int, seed: int = 0) -> List[Dialog]:
    if n_dialogs < 1:
        raise ValueError("n_dialogs must be at least 1")
    rng = random.Random(seed)
    return [_restaurant_dialog(rng, f"restaurant-{seed}-{i:05d}") for i in range(n_dialogs)]


# --- customer support ---------------------------------------------------------

AGENT_SCRIPT: Dict[str, Sequence[str]] = {
    "greet": (
        "hello , my name is <PERSON> . i 'm here to help you today .",
        "hello <PERSON> , my name is <PERSON> . thank you for reaching out to us today .",
        "hello there , this is <PERSON> and i 'll be glad to help you with this today .",
        "hello and welcome to <masked> support , my name is <PERSON> . how are you doing today ?",
    ),
    "member": (
        "thank you for being a <masked> member .",
        "thanks for being a loyal <masked> member , we really appreciate it .",
        "we appreciate you being a valued <masked> member .",
        "first of all , thank you for choosing <masked> as your membership .",
    ),
    "empathy": (
        "i 'm sorry to hear that you were charged with our membership . no worries i 'll do my best .",
        "i 'm sorry if any inconvenience happened to you .",
        "please do not worry , i 'll be completely helping you with this .",
        "i understand how frustrating an unexpected charge can be , let me sort this out for you .",
    ),
    "check": (
        "please allow me a minute to check this for you .",
        "let me pull up your account , one moment please .",
        "thanks for the details . give me a moment to look into your account .",
        "i 'm checking the charges on your account right now , please stay with me .",
    ),
    "found": (
        "thank you for waiting , i can see the charge on your account .",
        "thanks for your patience , i found the membership charge on your account .",
        "i can confirm the membership was renewed after the trial ended .",
        "i see that the trial converted into a paid membership .",
    ),
    "announce": (
        "i will now cancel your membership and issue a full refund .",
        "i 'll go ahead and cancel the membership and refund the charge for you .",
        "no problem , i 'm cancelling your membership and processing the refund now .",
        "i have successfully issued the refund for you and i will make sure this does not happen in future again .",
    ),
    "confirm": (
        "<masked> successfully canceled , <MONEY> refund processed .",
        "your membership is canceled and the refund of <MONEY> has been processed .",
        "all done , the membership is closed and <MONEY> is on its way back to you .",
        "i 've already processed the refund and canceled the membership .",
    ),
    "timing": (
        "the refund will reflect in 3 to 5 business days .",
        "you should see the money back on your card within 3 to 5 business days .",
        "it usually takes 3 to 5 business days for the refund to show up .",
        "please allow 3 to 5 business days for the refund to reflect on your statement .",
    ),
    "welcome": (
        "you 're welcome .",
        "you 're most welcome .",
        "it was my pleasure .",
        "i 'm glad i could help you with this .",
    ),
    "anything": (
        "is there anything else i can help you with today ?",
        "is there anything else i can assist you with ?",
        "in the meantime , i want to make sure i have covered all of your concerns , please let me know .",
        "what else can i do for you today ?",
    ),
    "close": (
        "thank you for contacting <masked> . have a great day .",
        "it was my pleasure assisting a valued customer like you today . thank you for contacting <masked> .",
        "thank you for contacting <masked> , again this is <PERSON> and it 's my pleasure assisting you today .",
        "please click on the end chat to close this window . take care .",
    ),
}
AGENT_API = "api_call cancel_refund"

# free-text additions agents make on top of the script; appended at random
AGENT_ASIDES = (
    "i appreciate your patience .",
    "thank you for your understanding .",
    "please let me know if you have any questions .",
    "i completely understand your concern .",
    "your satisfaction is very important to us .",
    "rest assured i will take care of it .",
    "we value you as a customer .",
    "i hope you are having a good day so far .",
    "it will only take a moment .",
    "sorry for the trouble this has caused .",
)
ASIDE_PROB = 0.5

USER_SCRIPT: Dict[str, Sequence[str]] = {
    "open": (
        "got charged for primeplus membership after trial i did not want to continue",
        "i want to cancel my primeplus membership , pls refund me",
        "hi , i found a bill that charged me $12.99 for a membership i never ordered",
        "hello my name is {name} and i was charged for streamly after the free trial",
        "why did u charge me $14.99 ?? i cancelled the trial",
        "hi there , i need to cancel my membership and get a refund",
    ),
    "detail": (
        "i did not order primeplus membership",
        "i was charged $12.99 yesterday",
        "i never wanted the paid plan",
        "the charge showed up on my card this morning",
    ),
    "request": (
        "can you help me",
        "i just want my money back",
        "pls cancel it asap",
        "can u refund me",
    ),
    "ack": ("ok", "okay thanks", "sure", "alright"),
    "thanks": ("thank you", "ty", "thank you very much", "thx", "thank you so much"),
    "timing_q": (
        "how long will the refund take ?",
        "when will i get my money back",
        "how many days until i see the refund",
    ),
    "done": ("no i 'm good", "no thanks", "that's all , ty", "nope that's it"),
}
NAMES = ("alex", "anna", "ben", "carlos", "dana", "emma", "john", "julia", "priya", "sam")


def _norm(text: str) -> Utterance:
    return normalize_utterance(text)


def _support_dialog(rng: random.Random, dialog_id: str) -> Dialog:
    def agent(phase: str) -> Utterance:
        text = rng.choice(AGENT_SCRIPT[phase])
        while rng.random() < ASIDE_PROB:
            text += " " + rng.choice(AGENT_ASIDES)
        return _norm(text)

    def user(kind: Optional[str]) -> Utterance:
        if kind is None:
            return (SILENCE,)
        return _norm(rng.choice(USER_SCRIPT[kind]).format(name=rng.choice(NAMES)))

    def maybe(kind: str, p: float) -> Optional[str]:
        return kind if rng.random() < p else None

    pairs: List[Tuple[Utterance, Utterance]] = [(user("open"), agent("greet"))]
    if rng.random() < 0.8:
        pairs.append((user(None), agent("member")))
    pairs.append((user(maybe("detail", 0.5)), agent("empathy")))
    if rng.random() < 0.6:
        pairs.append((user(maybe("request", 0.7)), agent("check")))
        if rng.random() < 0.5:
            pairs.append((user(None), agent("found")))
    pairs.append((user(rng.choice(("ack", "thanks", None))), agent("announce")))
    pairs.append((user(None), make_utterance(AGENT_API)))
    pairs.append((user(maybe("ack", 0.3)), agent("confirm")))
    if rng.random() < 0.4:
        pairs.append((user("timing_q"), agent("timing")))
    if rng.random() < 0.6:
        pairs.append((user("thanks"), agent("welcome")))
        pairs.append((user(None), agent("anything")))
    else:
        pairs.append((user("thanks"), agent("anything")))
    pairs.append((user("done"), agent("close")))
    return Dialog.from_pairs(dialog_id, pairs)


def generate_support_corpus(n_dialogs: int, seed: int = 0) -> List[Dialog]:
    if n_dialogs < 1:
        raise ValueError("n_dialogs must be at least 1")
    rng = random.Random(seed)
    return [_support_dialog(rng, f"support-{seed}-{i:05d}") for i in range(n_dialogs)]


def count_api_calls(dialog: Dialog) -> int:
    return sum(1 for t in dialog.turns if t.agent[0] == API_CALL)
