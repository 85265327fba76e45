"""Small text utilities shared by the planner, oracles, and verifiers.

Nothing here is clever: lowercase tokens, bag-of-tokens F1, and a fixed
lexicon of common indoor object nouns used to spot category mentions in
question text without real NLP.
"""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"[a-z0-9]+")

# Nouns the mention scanner recognizes in addition to whatever categories a
# scene declares.  Multi-word entries are matched as phrases.
CATEGORY_LEXICON: tuple[str, ...] = (
    "armchair", "bed", "bench", "bin", "bookshelf", "bottle", "box", "cabinet",
    "chair", "clock", "couch", "counter", "cup", "desk", "door", "dresser",
    "fan", "fireplace", "fridge", "kettle", "lamp", "laptop", "microwave",
    "mirror", "monitor", "mug", "nightstand", "ottoman", "oven", "painting",
    "piano", "pillow", "plant", "printer", "rug", "shelf", "sink", "sofa",
    "stool", "stove", "suitcase", "table", "television", "toaster", "trash can",
    "tv", "vase", "wardrobe", "washer", "window",
)


def normalize_answer(text: str) -> str:
    """Trim, casefold, collapse runs of whitespace."""
    return " ".join(text.split()).casefold()


def pluralize(noun: str) -> str:
    """Naive English plural, good enough for template slots."""
    if noun.endswith(("s", "x", "z", "ch", "sh")):
        return noun + "es"
    return noun + "s"


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.casefold())


def token_f1(predicted: str, reference: str) -> float:
    """Bag-of-tokens F1, the usual reading-comprehension overlap score."""
    pred = tokenize(predicted)
    ref = tokenize(reference)
    if not pred or not ref:
        return 1.0 if pred == ref else 0.0
    ref_counts: dict[str, int] = {}
    for tok in ref:
        ref_counts[tok] = ref_counts.get(tok, 0) + 1
    overlap = 0
    for tok in pred:
        if ref_counts.get(tok, 0) > 0:
            ref_counts[tok] -= 1
            overlap += 1
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred)
    recall = overlap / len(ref)
    return 2 * precision * recall / (precision + recall)


def _word_matches(token: str, word: str) -> bool:
    """Exact or naive-plural match ("chairs" mentions "chair")."""
    return token == word or token == word + "s" or token == word + "es"


def extract_mentions(text: str, extra_vocab: tuple[str, ...] = ()) -> list[str]:
    """Vocabulary entries mentioned in a text, in order of appearance.

    The vocabulary is the builtin lexicon plus ``extra_vocab`` (typically a
    scene's category list).  Matching is token-based with naive plural
    folding, so "the red sofas?" mentions "sofa".  Longer phrases win:
    once "trash can" matched, a lone "can" entry cannot also fire on the
    same words.
    """
    vocab = {v.casefold() for v in CATEGORY_LEXICON}
    vocab.update(v.casefold() for v in extra_vocab)
    toks = tokenize(text)
    hits: list[tuple[int, str]] = []
    consumed: set[int] = set()
    for entry in sorted(vocab, key=lambda v: (-len(v.split()), v)):
        words = entry.split()
        n = len(words)
        for i in range(len(toks) - n + 1):
            if any(j in consumed for j in range(i, i + n)):
                continue
            if all(_word_matches(toks[i + k], words[k]) for k in range(n)):
                consumed.update(range(i, i + n))
                hits.append((i, entry))
    seen: set[str] = set()
    ordered: list[str] = []
    for _, entry in sorted(hits):
        if entry not in seen:
            seen.add(entry)
            ordered.append(entry)
    return ordered


_INTENT_RULES: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("counting", ("how many",)),
    ("attribute-color", ("color", "colour")),
    ("attribute-size", ("bigger", "larger", "smaller", "greater volume")),
    ("distance", ("how far", "distance", "meters away", "nearer", "closer", "farther")),
    ("relationship", (
        "left of", "right of", "above", "below", "relative to", "positioned",
        "compared to", "compared with",
    )),
    ("status", ("status", "open or closed", "on or off", "turned on", "turned off")),
    ("attribute-special", ("special", "used for", "purpose", "what can")),
    ("location", ("where", "which room", "which region", "which part", "what part", "located")),
)


def question_intent(question: str) -> str:
    """Crude keyword guess of what a question is asking for."""
    q = " ".join(tokenize(question))
    for intent, cues in _INTENT_RULES:
        if any(cue in q for cue in cues):
            return intent
    return "unknown"


_LANDMARK_RE = re.compile(r"(?:relative to|compared (?:to|with)|next to) the ([a-z0-9 ]+)")


def landmark_mention(question: str, mentions: list[str]) -> str | None:
    """The mention serving as the reference point in phrases like
    "relative to the lamp".  None when no such phrase names a mention."""
    q = " ".join(tokenize(question))
    match = _LANDMARK_RE.search(q)
    if not match:
        return None
    tail = match.group(1)
    for mention in mentions:
        if tail.startswith(mention):
            return mention
    return None


def wants_location_phrase(question: str) -> bool:
    """True for "where ... relative to" style questions, whose answers
    read "<relation> the <landmark>" rather than a bare relation."""
    return "where" in tokenize(question)
