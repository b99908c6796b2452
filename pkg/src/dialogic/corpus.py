"""Label schema, tokenization, vocabularies, dataset splits and the
synthetic sentence generator."""

from __future__ import annotations

import enum
import json
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from dialogic.errors import EmptyCorpus

PUNCTUATION = ".,?!;:'\""
_PUNCT_RE = re.compile("([" + re.escape(PUNCTUATION) + "])")


class InstructionType(str, enum.Enum):
    GREETING = "greeting"
    GUIDANCE = "guidance"
    NOTE_TAKING = "note_taking"
    COMMENDING = "commending"
    REPEATING = "repeating"
    SUMMARIZATION = "summarization"

    def __str__(self):
        return self.value


INSTRUCTIONS = tuple(InstructionType)


@dataclass(frozen=True)
class LabeledSentence:
    text: str
    label: int
    instruction: InstructionType

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("sentence text must be non-empty")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        object.__setattr__(self, "instruction", InstructionType(self.instruction))

    def to_dict(self):
        return {"text": self.text, "label": self.label, "instruction": self.instruction.value}


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, detach ``. , ? ! ; : ' "`` as tokens."""
    return _PUNCT_RE.sub(r" \1 ", text.lower()).split()


def _text_of(item):
    if isinstance(item, LabeledSentence):
        return item.text
    return item


class Vocabulary:
    """Token to index map with ``PAD = 0`` and ``UNK = 1`` reserved."""

    PAD = "<pad>"
    UNK = "<unk>"
    PAD_INDEX = 0
    UNK_INDEX = 1

    def __init__(self, tokens=(), min_count: int = 1):
        self.min_count = min_count
        self.itos = [self.PAD, self.UNK]
        self.stoi = {}
        for tok in tokens:
            if tok in self.stoi or tok in (self.PAD, self.UNK):
                raise ValueError(f"duplicate vocabulary entry {tok!r}")
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def index(self, token: str) -> int:
        return self.stoi.get(token, self.UNK_INDEX)

    def encode(self, tokens) -> list[int]:
        return [self.stoi.get(t, self.UNK_INDEX) for t in tokens]

    @property
    def tokens(self) -> list[str]:
        return self.itos[2:]

    def as_dict(self) -> dict:
        d = {self.PAD: 0, self.UNK: 1}
        d.update(self.stoi)
        return d

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.tokens), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls([ln for ln in lines if ln])


def build_vocabulary(sentences, min_count: int = 1) -> Vocabulary:
    """Index tokens seen at least ``min_count`` times.

    Order is descending frequency, ties broken lexicographically. ``sentences``
    may hold :class:`LabeledSentence` objects, raw strings or token lists.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    sentences = list(sentences)
    if not sentences:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    counts = Counter()
    for s in sentences:
        counts.update(s if isinstance(s, list) else tokenize(_text_of(s)))
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary(kept, min_count=min_count)


@dataclass
class DatasetSplit:
    train: list
    validation: list
    test: list
    seed: int


def split_dataset(corpus, seed: int = 0, ratios=(0.8, 0.1, 0.1)) -> DatasetSplit:
    """Seeded shuffle followed by contiguous slicing.

    Validation and test sizes are floored; the remainder goes to train, so 2940
    sentences become 2352/294/294.
    """
    corpus = list(corpus)
    if not corpus:
        raise EmptyCorpus("cannot split an empty corpus")
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"ratios must be three non-negative values summing to 1, got {ratios}")
    n = len(corpus)
    n_val = int(np.floor(n * ratios[1] + 1e-9))
    n_test = int(np.floor(n * ratios[2] + 1e-9))
    n_train = n - n_val - n_test
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [corpus[i] for i in order]
    return DatasetSplit(
        shuffled[:n_train],
        shuffled[n_train : n_train + n_val],
        shuffled[n_train + n_val :],
        seed,
    )


def save_dataset(sentences, path) -> None:
    lines = (json.dumps(s.to_dict(), ensure_ascii=False) + "\n" for s in sentences)
    Path(path).write_text("".join(lines), encoding="utf-8")


def load_dataset(path) -> list[LabeledSentence]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                out.append(LabeledSentence(d["text"], int(d["label"]), d["instruction"]))
    return out


# --------------------------------------------------------------------------
# Synthetic corpus
#
# Transcripts come from speech recognition, so generated text carries no
# punctuation; apostrophes inside words ("let's") are kept.

_NAMES = ["tom", "amy", "lily", "jack", "kevin", "sara", "leo", "mia"]

_SLOTS = {
    "name": _NAMES,
    "intens": ["", "really", "very", "so", "truly"],
    "adj": ["good", "great", "nice", "excellent", "perfect", "awesome",
            "brilliant", "wonderful", "fantastic", "amazing"],
    "adj_correct": ["correct", "right", "perfect", "excellent"],
    "doing_adj": ["great", "good", "fine", "amazing"],
    "subj": ["that", "this", "your answer", "your idea", "this step", "your drawing"],
    "aux": ["is", "was"],
    "thing": ["answer", "idea", "try", "solution", "explanation", "guess"],
    "smart": ["smart", "clever", "quick"],
    "modal": ["can", "could", "would"],
    "retell": ["explain", "repeat", "rephrase", "describe", "retell"],
    "retell2": ["explain", "describe", "repeat", "retell", "read"],
    "it": ["it", "that", "this", "the rule", "the steps", "the idea", "the story"],
    "tail": ["to me", "again", "for me", "in your own words", "one more time"],
    "listen": ["listen", "will listen", "check", "will check", "watch"],
    "talk": ["talk", "speak", "explain", "present"],
    "note_verb": ["highlight", "copy", "underline", "circle", "mark",
                  "write down", "jot down"],
    "note_verb1": ["copy", "highlight", "underline", "circle", "mark"],
    "read_verb": ["read", "look at", "skim", "glance at"],
    "this_thing": ["this paragraph", "this part", "the formula", "the key sentence",
                   "this word", "the definition", "the main idea", "this rule",
                   "the answer"],
    "on_this": ["", "on this", "on this part", "here"],
    "why": ["why", "how"],
    "x": ["the answer", "this works", "the angle is ninety", "we need this step",
          "the area changes"],
    "num": ["one", "two", "three", "four", "five", "six", "seven", "ten", "twelve", "twenty"],
    "thanks": ["thanks", "thank you"],
}


class TemplateBank:
    """Slot-filling sentence templates with optional prefixes and name suffix.

    ``pairs`` hold (positive template, near-miss template) combinations that
    share every slot value, so the near miss is a reordering of the positive.
    """

    def __init__(self, templates, lemmas=(), prefixes=(), prefix_rate=0.0,
                 name_rate=0.0, pairs=()):
        self.templates = list(templates) + [p for p, _ in pairs]
        self.pairs = list(pairs)
        self.lemmas = frozenset(lemmas)
        self.prefixes = list(prefixes)
        self.prefix_rate = prefix_rate
        self.name_rate = name_rate
        self._regex = self._compile()

    @staticmethod
    def _fill(template, rng, values=None):
        values = {} if values is None else values

        def sub(m):
            slot = m.group(1)
            if slot not in values:
                options = _SLOTS[slot]
                values[slot] = options[rng.integers(len(options))]
            return values[slot]

        return " ".join(re.sub(r"\{(\w+)\}", sub, template).split()), values

    def _decorate(self, text, rng):
        if self.prefixes and rng.random() < self.prefix_rate:
            text = self.prefixes[rng.integers(len(self.prefixes))] + " " + text
        if self.name_rate and rng.random() < self.name_rate:
            text = text + " " + _NAMES[rng.integers(len(_NAMES))]
        return text

    def sample(self, rng) -> str:
        template = self.templates[rng.integers(len(self.templates))]
        text, _ = self._fill(template, rng)
        return self._decorate(text, rng)

    def sample_pair(self, rng) -> tuple[str, str]:
        """A positive and its near miss, built from the same slot values."""
        positive, negative = self.pairs[rng.integers(len(self.pairs))]
        pos_text, values = self._fill(positive, rng)
        neg_text, _ = self._fill(negative, rng, values)
        return pos_text, neg_text

    def sample_near_miss(self, rng) -> str:
        return self._decorate(self.sample_pair(rng)[1], rng)

    @property
    def near_miss_bank(self) -> "TemplateBank":
        return TemplateBank([n for _, n in self.pairs], prefixes=self.prefixes,
                            prefix_rate=self.prefix_rate, name_rate=self.name_rate)

    def _compile(self):
        # every word carries its trailing space; candidates get one appended
        def alt(options):
            words = [o for o in options if o]
            rx = "(?:" + "|".join(re.escape(o) + " " for o in words) + ")"
            return rx + "?" if len(words) < len(options) else rx

        bodies = []
        for template in self.templates:
            rx = ""
            for word in template.split():
                m = re.fullmatch(r"\{(\w+)\}", word)
                rx += alt(_SLOTS[m.group(1)]) if m else re.escape(word) + " "
            bodies.append(rx)
        prefix = alt(self.prefixes + [""]) if self.prefixes else ""
        suffix = alt(_NAMES + [""]) if self.name_rate else ""
        return re.compile(prefix + "(?:" + "|".join(bodies) + ")" + suffix)

    def matches(self, text: str) -> bool:
        """True when ``text`` could have been produced by :meth:`sample`."""
        return self._regex.fullmatch(" ".join(text.split()) + " ") is not None


BANKS = {
    InstructionType.GREETING: TemplateBank(
        [
            "how are you doing",
            "can you hear me",
            "hello {name}",
            "good morning {name}",
            "can you see my screen",
            "hi {name} how are you",
        ],
        lemmas={"hello", "hi", "morning", "hear", "how", "screen"},
        prefixes=["hello", "hi"],
        prefix_rate=0.1,
    ),
    InstructionType.GUIDANCE: TemplateBank(
        [
            "do you know the reason",
            "let's see how we can get there",
            "{why} do you think {x}",
            "what do you think happens next",
            "what is the first step",
            "do you know why {x}",
            "what should we do next",
            "which formula should we use here",
            "think about why {x}",
            "how can we find the answer",
        ],
        lemmas={"reason", "think", "why", "how", "step", "next", "formula", "find", "know"},
        prefixes=["ok", "so", "now", "alright"],
        prefix_rate=0.3,
        name_rate=0.15,
    ),
    InstructionType.NOTE_TAKING: TemplateBank(
        [
            "highlight this paragraph",
            "please copy this part",
            "{note_verb} {this_thing}",
            "please {note_verb} {this_thing}",
            "take notes {on_this}",
            "write {this_thing} in your notebook",
            "put {this_thing} in your notes",
            "make a note of {this_thing}",
            "use a red pen to {note_verb} {this_thing}",
        ],
        lemmas={"highlight", "copy", "underline", "circle", "mark", "write", "jot",
                "note", "notes", "notebook"},
        prefixes=["please", "ok", "now", "alright", "okay now", "so"],
        prefix_rate=0.4,
        name_rate=0.25,
        pairs=[
            ("{note_verb1} {this_thing} do not just {read_verb} it",
             "{read_verb} {this_thing} do not just {note_verb1} it"),
            ("{note_verb1} it first and {read_verb} it later",
             "{read_verb} it first and {note_verb1} it later"),
        ],
    ),
    InstructionType.COMMENDING: TemplateBank(
        [
            "good job",
            "well done",
            "{intens} {adj} job",
            "{adj} job {name}",
            "{intens} well done",
            "{adj} {thing}",
            "you did a {adj} job",
            "you did {intens} well today",
            "i am {intens} proud of you",
            "you are {intens} {smart}",
        ],
        lemmas={"good", "great", "nice", "excellent", "perfect", "awesome", "brilliant",
                "wonderful", "fantastic", "amazing", "well", "correct", "right", "proud",
                "smart", "clever", "quick", "fine"},
        prefixes=["wow", "yes", "ok", "oh", "alright"],
        prefix_rate=0.4,
        name_rate=0.25,
        pairs=[
            ("{subj} {aux} {intens} {adj_correct}", "{aux} {subj} {intens} {adj_correct}"),
            ("{subj} {aux} a {adj} {thing}", "{aux} {subj} a {adj} {thing}"),
            ("you have done {intens} well", "have you done {intens} well"),
            ("you are doing {intens} {doing_adj}", "are you doing {intens} {doing_adj}"),
            ("you were {intens} right", "were you {intens} right"),
        ],
    ),
    InstructionType.REPEATING: TemplateBank(
        [
            "could you please explain that to me",
            "can you rephrase that",
            "{modal} you {retell} {it} {tail}",
            "{retell} {it} in your own words",
            "tell me what you just learned",
            "tell me how you got {it}",
            "now it is your turn to explain",
            "say it again",
            "walk me through {it}",
        ],
        lemmas={"explain", "rephrase", "repeat", "describe", "retell", "again", "words",
                "tell", "turn", "say", "walk", "read", "talk", "speak", "present"},
        prefixes=["ok", "now", "alright", "so", "okay now"],
        prefix_rate=0.4,
        name_rate=0.25,
        pairs=[
            ("you {retell2} {it} and i {listen}", "i {retell2} {it} and you {listen}"),
            ("first you {retell2} {it} then i {listen}", "first i {retell2} {it} then you {listen}"),
            ("you {talk} and i {listen}", "i {talk} and you {listen}"),
        ],
    ),
    InstructionType.SUMMARIZATION: TemplateBank(
        [
            "let's review the key points",
            "let's wrap up",
            "to sum up today",
            "let's recap what we learned today",
            "here is a summary of today",
            "that is all for today let's wrap up",
        ],
        lemmas={"review", "wrap", "sum", "recap", "summary"},
        prefixes=["ok", "so"],
        prefix_rate=0.1,
    ),
}

DISTRACTORS = TemplateBank(
    [
        "open your book to page {num}",
        "the answer is {num}",
        "look at question {num}",
        "this triangle has three sides",
        "the bell will ring soon",
        "my computer is a little slow",
        "we have {num} minutes left",
        "the homework is on page {num}",
        "the test is next week",
        "let me read the question",
        "the area of the circle is pi r squared",
        "x equals {num}",
        "turn to the next page",
        "the weather is nice today",
        "i will share my screen now",
        "{thanks} for waiting",
        "this is a right triangle",
        "we learned fractions last time",
        "the sum of the angles is one hundred eighty",
        "i explain the next example",
    ],
    prefixes=["ok", "so", "now", "alright", "um"],
    prefix_rate=0.3,
)

HIGH_VARIATION = frozenset(
    {InstructionType.NOTE_TAKING, InstructionType.COMMENDING, InstructionType.REPEATING}
)
LOW_VARIATION = frozenset({InstructionType.GREETING, InstructionType.SUMMARIZATION})

# negative mix: (near miss, other five types, distractors)
_NEGATIVE_MIX = {True: (0.4, 0.3, 0.3), False: (0.0, 0.5, 0.5)}


def generate_corpus(instruction, n_pos: int, n_neg: int, seed: int = 0) -> list[LabeledSentence]:
    """Sample a labeled binary corpus for one instruction type.

    Positives come from the instruction's template bank. Negatives mix generic
    classroom talk, positives of the other five types and, for high-variation
    types, near misses that reorder a positive's words so that the meaning no
    longer matches. A text never carries both labels within one corpus.
    """
    instruction = InstructionType(instruction)
    if n_pos < 0 or n_neg < 0:
        raise ValueError("n_pos and n_neg must be non-negative")
    rng = np.random.default_rng([seed, INSTRUCTIONS.index(instruction)])
    bank = BANKS[instruction]
    others = [BANKS[t] for t in INSTRUCTIONS if t != instruction]

    positives = [bank.sample(rng) for _ in range(n_pos)]
    pos_set = set(positives)

    mix = _NEGATIVE_MIX[instruction in HIGH_VARIATION and bool(bank.pairs)]
    negatives = []
    while len(negatives) < n_neg:
        u = rng.random()
        if u < mix[0]:
            text = bank.sample_near_miss(rng)
        elif u < mix[0] + mix[1]:
            text = others[rng.integers(len(others))].sample(rng)
        else:
            text = DISTRACTORS.sample(rng)
        if text in pos_set or bank.matches(text):
            continue
        negatives.append(text)

    out = [LabeledSentence(t, 1, instruction) for t in positives]
    out += [LabeledSentence(t, 0, instruction) for t in negatives]
    order = rng.permutation(len(out))
    return [out[i] for i in order]


def contains_lemma(text: str, instruction) -> bool:
    return bool(set(tokenize(text)) & BANKS[InstructionType(instruction)].lemmas)
