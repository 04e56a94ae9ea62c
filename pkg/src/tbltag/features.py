"""Per-utterance features and automatic cue-phrase mining.

The feature set examined per utterance: cue phrases (mined word n-grams,
n <= 3), change of speaker, utterance length buckets, whole short
utterances, terminal punctuation, and membership in static semantic
classes (weekdays, months, numbers, ordinals by default).

Cue phrases are mined by counting, for each n-gram g and act a, the
number of training utterances tagged a that contain g, then keeping the
(g, a) pairs whose raw count and conditional probability P(a | g) clear
configurable thresholds. The method deliberately over-generates; the
learner is expected to ignore unhelpful phrases.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .corpus import Corpus, Dialogue, Utterance, validate_label
from .errors import FeatureError, ParseError, ValidationError

LENGTH_BUCKETS = ("1", "2", "3", ">3", ">10")

Ngram = tuple[str, ...]


def length_bucket(n_tokens: int) -> str:
    """Bucket an utterance's token count: exact 1/2/3, then >3, then >10.

    The buckets are disjoint: 4-10 tokens is ">3", 11 or more is ">10".
    """
    if n_tokens <= 0:
        raise ValueError("length_bucket requires at least one token")
    if n_tokens <= 3:
        return str(n_tokens)
    return ">3" if n_tokens <= 10 else ">10"


def ngrams_up_to(tokens: tuple[str, ...], max_n: int = 3) -> set[Ngram]:
    """Distinct contiguous n-grams of the token sequence, n = 1..max_n."""
    grams: set[Ngram] = set()
    for n in range(1, max_n + 1):
        for i in range(len(tokens) - n + 1):
            grams.add(tokens[i : i + n])
    return grams


def speaker_change(u: Utterance, prev: Utterance | None) -> bool:
    """True when the speaker differs from the previous utterance's.

    A change of speaker always occurs for the first utterance of a
    dialogue (prev is None).
    """
    return prev is None or u.speaker != prev.speaker


@dataclass(frozen=True)
class CuePhraseEntry:
    ngram: Ngram
    act: str
    count: int
    cond_prob: float

    def __post_init__(self):
        if not 1 <= len(self.ngram) <= 3:
            raise ValidationError("cue phrase must be a 1-3 token n-gram")
        if self.count < 1 or not 0.0 < self.cond_prob <= 1.0:
            raise ValidationError("cue entry needs count >= 1 and cond_prob in (0, 1]")


@dataclass(frozen=True)
class CuePhraseLexicon:
    """Mined (ngram, act) entries; ``phrases`` is the distinct ngram set."""

    entries: tuple[CuePhraseEntry, ...] = ()
    phrases: frozenset[Ngram] = field(init=False, compare=False)

    def __post_init__(self):
        ordered = tuple(sorted(self.entries, key=lambda e: (e.ngram, e.act)))
        pairs = {(e.ngram, e.act) for e in ordered}
        if len(pairs) != len(ordered):
            raise ValidationError("duplicate (ngram, act) pair in cue lexicon")
        object.__setattr__(self, "entries", ordered)
        object.__setattr__(self, "phrases", frozenset(e.ngram for e in ordered))

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class SemanticClassLexicon:
    """Named word sets; each word may belong to at most one class."""

    classes: tuple[tuple[str, frozenset[str]], ...] = ()

    def __post_init__(self):
        normalized = []
        seen_words: dict[str, str] = {}
        for name, words in sorted(self.classes):
            validate_label(name, "class")
            lowered = frozenset(w.lower() for w in words)
            for w in lowered:
                if w in seen_words:
                    raise ValidationError(
                        f"word {w!r} in both classes {seen_words[w]!r} and {name!r}"
                    )
                seen_words[w] = name
            normalized.append((name, lowered))
        object.__setattr__(self, "classes", tuple(normalized))

    @classmethod
    def from_dict(cls, mapping: dict[str, set[str] | frozenset[str] | list[str]]) -> "SemanticClassLexicon":
        return cls(tuple((name, frozenset(words)) for name, words in mapping.items()))

    def class_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.classes)


@dataclass(frozen=True)
class ShortUtteranceList:
    """Exact short utterances ("Okay.", "Yes.", ...), matched case-insensitively.

    ``match`` returns the lowercased entry so rule conditions built from it
    are canonical.
    """

    entries: tuple[str, ...] = ()

    def __post_init__(self):
        for e in self.entries:
            if not e.strip():
                raise ValidationError("short-utterance entries must be non-empty")
        object.__setattr__(self, "entries", tuple(dict.fromkeys(self.entries)))

    def match(self, raw_text: str) -> str | None:
        wanted = raw_text.strip().lower()
        for e in self.entries:
            if e.strip().lower() == wanted:
                return e.strip().lower()
        return None


DEFAULT_SEMANTIC_CLASSES = SemanticClassLexicon.from_dict(
    {
        "WEEKDAY": {"monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"},
        "MONTH": {
            "january", "february", "march", "april", "may", "june",
            "july", "august", "september", "october", "november", "december",
        },
        "NUMBER": {
            "zero", "one", "two", "three", "four", "five", "six", "seven", "eight",
            "nine", "ten", "eleven", "twelve", "twenty", "thirty", "hundred", "thousand",
        },
        "ORDINAL": {
            "first", "second", "third", "fourth", "fifth", "sixth", "seventh",
            "eighth", "ninth", "tenth",
        },
    }
)

DEFAULT_SHORT_UTTERANCES = ShortUtteranceList(
    ("Okay.", "Yes.", "No.", "Hello.", "Sorry.", "Well.", "Oh.", "Sounds good.")
)


@dataclass(frozen=True)
class FeatureView:
    """Static features of one utterance, fixed for a whole training run.

    ``cues_present``/``classes_present`` are sorted tuples so that
    anything enumerating them (template instantiation) is deterministic;
    the frozensets exist for O(1) matching. ``all_ngrams`` holds every
    contiguous n-gram (n <= 3) so literal phrase conditions can be tested
    without rescanning tokens.
    """

    cues_present: tuple[Ngram, ...]
    classes_present: tuple[str, ...]
    length_bucket: str
    speaker_change: bool
    short_match: str | None
    punctuation: str
    all_ngrams: frozenset[Ngram]
    cue_set: frozenset[Ngram] = field(init=False, compare=False)
    class_set: frozenset[str] = field(init=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "cue_set", frozenset(self.cues_present))
        object.__setattr__(self, "class_set", frozenset(self.classes_present))


def extract_features(
    d: Dialogue,
    cues: CuePhraseLexicon | None = None,
    classes: SemanticClassLexicon | None = None,
    shorts: ShortUtteranceList | None = None,
) -> list[FeatureView]:
    """One FeatureView per utterance of the dialogue, in order.

    Pure function of (dialogue, lexicons); raises FeatureError for an
    utterance with no tokens, naming it.
    """
    cues = cues if cues is not None else CuePhraseLexicon()
    classes = classes if classes is not None else SemanticClassLexicon()
    shorts = shorts if shorts is not None else ShortUtteranceList()

    views: list[FeatureView] = []
    prev: Utterance | None = None
    for u in d.utterances:
        if not u.tokens:
            raise FeatureError(
                f"utterance {u.dialogue_id}[{u.index}] has no tokens: {u.raw_text!r}"
            )
        grams = frozenset(ngrams_up_to(u.tokens, 3))
        token_set = set(u.tokens)
        views.append(
            FeatureView(
                cues_present=tuple(sorted(cues.phrases & grams)),
                classes_present=tuple(
                    sorted(name for name, words in classes.classes if token_set & words)
                ),
                length_bucket=length_bucket(len(u.tokens)),
                speaker_change=speaker_change(u, prev),
                short_match=shorts.match(u.raw_text),
                punctuation=u.punctuation,
                all_ngrams=grams,
            )
        )
        prev = u
    return views


def corpus_views(
    c: Corpus,
    cues: CuePhraseLexicon | None = None,
    classes: SemanticClassLexicon | None = None,
    shorts: ShortUtteranceList | None = None,
) -> list[FeatureView]:
    """Feature views for every utterance of the corpus, in flat order."""
    views: list[FeatureView] = []
    for d in c.dialogues:
        views.extend(extract_features(d, cues, classes, shorts))
    return views


def mine_cue_phrases(
    c: Corpus, max_n: int = 3, min_count: int = 3, min_prob: float = 0.5
) -> CuePhraseLexicon:
    """Mine cue phrases from a fully tagged corpus.

    Counting is utterance-level: an n-gram counts once per utterance it
    occurs in. An entry (g, a) is kept iff

        count(g & a) >= min_count   and   count(g & a) / count(g) >= min_prob.
    """
    if not 1 <= max_n <= 3:
        raise ValidationError("max_n must be 1, 2, or 3")
    if min_count < 1:
        raise ValidationError("min_count must be >= 1")
    if not 0.0 < min_prob <= 1.0:
        raise ValidationError("min_prob must be in (0, 1]")

    gram_total: Counter[Ngram] = Counter()
    joint: Counter[tuple[Ngram, str]] = Counter()
    for u in c.utterances():
        if u.gold_tag is None:
            raise FeatureError(
                f"cannot mine cue phrases: utterance {u.dialogue_id}[{u.index}] is untagged"
            )
        for g in ngrams_up_to(u.tokens, max_n):
            gram_total[g] += 1
            joint[(g, u.gold_tag)] += 1

    entries = []
    for (g, act), count in joint.items():
        prob = count / gram_total[g]
        if count >= min_count and prob >= min_prob:
            entries.append(CuePhraseEntry(g, act, count, prob))
    return CuePhraseLexicon(tuple(entries))


def serialize_cue_lexicon(lex: CuePhraseLexicon) -> str:
    """One entry per line, sorted by (ngram, act), probabilities to 6 dp."""
    lines = [
        f"{' '.join(e.ngram)}\t{e.act}\t{e.count}\t{e.cond_prob:.6f}" for e in lex.entries
    ]
    return "\n".join(lines) + "\n" if lines else ""


def parse_cue_lexicon(text: str) -> CuePhraseLexicon:
    entries = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise ParseError("expected ngram<TAB>act<TAB>count<TAB>cond_prob", lineno)
        gram_text, act, count_text, prob_text = fields
        gram = tuple(t for t in gram_text.split(" ") if t)
        try:
            count = int(count_text)
            prob = float(prob_text)
        except ValueError:
            raise ParseError(f"bad count/probability: {count_text!r} {prob_text!r}", lineno) from None
        try:
            entries.append(CuePhraseEntry(gram, act, count, prob))
        except ValidationError as e:
            raise ParseError(str(e), lineno) from None
    try:
        return CuePhraseLexicon(tuple(entries))
    except ValidationError as e:
        raise ParseError(str(e)) from None


def parse_semantic_classes(text: str) -> SemanticClassLexicon:
    """Class file: ``class<TAB>word`` per line; ``#`` comments allowed."""
    mapping: dict[str, set[str]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2 or not fields[0] or not fields[1]:
            raise ParseError("expected class<TAB>word", lineno)
        mapping.setdefault(fields[0], set()).add(fields[1])
    try:
        return SemanticClassLexicon.from_dict(mapping)
    except ValidationError as e:
        raise ParseError(str(e)) from None


def parse_short_utterances(text: str) -> ShortUtteranceList:
    """Short-utterance file: one raw string per line; ``#`` comments allowed."""
    entries = [
        line for line in text.splitlines() if line.strip() and not line.startswith("#")
    ]
    try:
        return ShortUtteranceList(tuple(entries))
    except ValidationError as e:
        raise ParseError(str(e)) from None
