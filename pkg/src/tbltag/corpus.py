"""Dialogue data model and the corpus text format.

A corpus file is UTF-8 text with one utterance per line:

    speaker<TAB>tag<TAB>raw text

where ``tag`` is a dialogue-act label or ``?`` for an untagged utterance.
A blank line separates dialogues. Lines whose first column is ``#`` are
comments; the directive ``# dialogue: <id>`` immediately before a dialogue
overrides its auto-assigned id (``d0``, ``d1``, ... in file order).

Matching elsewhere in the package is case-insensitive, so tokens are
lowercased here; ``raw_text`` keeps the original casing for display.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

from .errors import ParseError, ValidationError
from .rng import RngStream

PUNCTUATION_CATEGORIES = (
    "period",
    "question",
    "comma",
    "exclamation",
    "semicolon",
    "dash",
    "none",
)

_PUNCT_OF_CHAR = {
    ".": "period",
    "?": "question",
    ",": "comma",
    "!": "exclamation",
    ";": "semicolon",
    "-": "dash",
    "–": "dash",
    "—": "dash",
}

_DIALOGUE_DIRECTIVE = re.compile(r"#\s*dialogue:\s*(.*)$")


def tokenize(raw_text: str) -> tuple[str, ...]:
    """Lowercased tokens: split on whitespace, strip outer non-alphanumerics.

    Only the edges of each piece are stripped, so internal apostrophes
    survive ("can't" is one token) while trailing punctuation is removed
    ("Okay." becomes "okay"). Pieces that strip to nothing are dropped.
    """
    tokens = []
    for piece in raw_text.split():
        start, end = 0, len(piece)
        while start < end and not piece[start].isalnum():
            start += 1
        while end > start and not piece[end - 1].isalnum():
            end -= 1
        if end > start:
            tokens.append(piece[start:end].lower())
    return tuple(tokens)


def punctuation_category(raw_text: str) -> str:
    """Category of the final punctuation character; "..." counts as period."""
    stripped = raw_text.rstrip()
    if not stripped:
        return "none"
    return _PUNCT_OF_CHAR.get(stripped[-1], "none")


def validate_label(label: str, what: str = "tag") -> str:
    """Reject labels that cannot survive the text codecs."""
    if not label or label == "?":
        raise ValidationError(f"{what} label must be non-empty and not '?'")
    if any(ch.isspace() for ch in label) or "," in label:
        raise ValidationError(f"{what} label {label!r} must not contain whitespace or commas")
    return label


@dataclass(frozen=True)
class Tagset:
    """Dialogue-act labels, kept in lexicographic order.

    The lexicographic order doubles as the global tie-break order (initial
    tag ties, noise flips), so it is normalized here once.
    """

    labels: tuple[str, ...] = ()

    def __post_init__(self):
        ordered = tuple(sorted(set(self.labels)))
        for label in ordered:
            validate_label(label)
        object.__setattr__(self, "labels", ordered)

    def __contains__(self, label: object) -> bool:
        return label in self.labels

    def __iter__(self):
        return iter(self.labels)

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class Utterance:
    """One speaker turn. ``tokens`` and ``punctuation`` derive from raw_text.

    ``working_tag`` is the system's current (mutable-by-replacement)
    assignment and is excluded from equality; persistent content alone
    defines identity.
    """

    dialogue_id: str
    index: int
    speaker: str
    raw_text: str
    gold_tag: str | None = None
    working_tag: str | None = field(default=None, compare=False)
    tokens: tuple[str, ...] = field(init=False, compare=False)
    punctuation: str = field(init=False, compare=False)

    def __post_init__(self):
        if not self.speaker or "\t" in self.speaker or "\n" in self.speaker:
            raise ValidationError(f"speaker {self.speaker!r} must be non-empty, without tab/newline")
        if "\n" in self.raw_text:
            raise ValidationError("raw_text must be a single line")
        if self.index < 0:
            raise ValidationError("utterance index must be >= 0")
        object.__setattr__(self, "tokens", tokenize(self.raw_text))
        object.__setattr__(self, "punctuation", punctuation_category(self.raw_text))


@dataclass(frozen=True)
class Dialogue:
    id: str
    utterances: tuple[Utterance, ...]

    def __post_init__(self):
        if not self.id or self.id != self.id.strip() or "\n" in self.id or "\t" in self.id:
            raise ValidationError(f"dialogue id {self.id!r} must be non-empty and trimmed")
        for i, u in enumerate(self.utterances):
            if u.index != i:
                raise ValidationError(f"dialogue {self.id}: utterance indices must run 0..n-1")
            if u.dialogue_id != self.id:
                raise ValidationError(f"dialogue {self.id}: utterance carries id {u.dialogue_id!r}")

    def __len__(self) -> int:
        return len(self.utterances)


@dataclass(frozen=True)
class Corpus:
    dialogues: tuple[Dialogue, ...] = ()
    tagset: Tagset = Tagset()

    def __post_init__(self):
        seen = set()
        for d in self.dialogues:
            if d.id in seen:
                raise ValidationError(f"duplicate dialogue id {d.id!r}")
            seen.add(d.id)
            for u in d.utterances:
                for tag in (u.gold_tag, u.working_tag):
                    if tag is not None and tag not in self.tagset:
                        raise ValidationError(
                            f"dialogue {d.id}[{u.index}]: tag {tag!r} not in tagset"
                        )

    @property
    def n_utterances(self) -> int:
        return sum(len(d) for d in self.dialogues)

    def utterances(self):
        """All utterances in corpus order (the flat position order)."""
        for d in self.dialogues:
            yield from d.utterances

    def is_fully_tagged(self) -> bool:
        return all(u.gold_tag is not None for u in self.utterances())

    def strip_gold(self) -> Corpus:
        """Copy of the corpus with every gold tag removed."""
        dialogues = tuple(
            Dialogue(d.id, tuple(replace(u, gold_tag=None) for u in d.utterances))
            for d in self.dialogues
        )
        return Corpus(dialogues, self.tagset)


def _finish_dialogue(dialogues, pending, raw_utts):
    ordinal = len(dialogues)
    did = pending if pending is not None else f"d{ordinal}"
    utts = tuple(
        Utterance(did, i, speaker, text, gold_tag=tag)
        for i, (speaker, tag, text) in enumerate(raw_utts)
    )
    dialogues.append(Dialogue(did, utts))


def parse_corpus(text: str, expected_tagset: Tagset | None = None) -> Corpus:
    """Parse corpus text; see the module docstring for the grammar.

    A ``?`` in the tag field yields ``gold_tag=None``. When
    ``expected_tagset`` is given, every tag must belong to it; otherwise
    the tagset is the sorted set of tags observed.
    """
    dialogues: list[Dialogue] = []
    raw_utts: list[tuple[str, str | None, str]] = []
    pending_id: str | None = None
    observed: set[str] = set()

    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.startswith("#"):
            m = _DIALOGUE_DIRECTIVE.match(line)
            if m:
                pending_id = m.group(1).strip()
                if not pending_id:
                    raise ParseError("empty dialogue id in directive", lineno)
            continue
        if not line.strip():
            if raw_utts:
                _finish_dialogue(dialogues, pending_id, raw_utts)
                raw_utts, pending_id = [], None
            continue
        fields = line.split("\t", 2)
        if len(fields) != 3:
            raise ParseError(
                f"expected speaker<TAB>tag<TAB>text, got {len(fields)} field(s)", lineno
            )
        speaker, tag_field, raw_text = fields
        if not speaker:
            raise ParseError("empty speaker field", lineno)
        if tag_field == "?":
            tag = None
        else:
            try:
                tag = validate_label(tag_field)
            except ValidationError as e:
                raise ParseError(str(e), lineno) from None
            if expected_tagset is not None and tag not in expected_tagset:
                raise ValidationError(f"line {lineno}: tag {tag!r} not in expected tagset")
            observed.add(tag)
        raw_utts.append((speaker, tag, raw_text))
    if raw_utts:
        _finish_dialogue(dialogues, pending_id, raw_utts)

    tagset = expected_tagset if expected_tagset is not None else Tagset(tuple(observed))
    return Corpus(tuple(dialogues), tagset)


def serialize_corpus(c: Corpus, tags: str = "gold") -> str:
    """Render a corpus in the file format, byte-stably.

    ``tags`` selects which tag lands in the tag field: ``"gold"`` (default)
    or ``"working"`` (used to write predictions). A ``# dialogue:``
    directive is emitted only when the id differs from its auto-assigned
    default, so parse(serialize(c)) == c whenever c's tagset equals the
    set of tags it actually uses.
    """
    if tags not in ("gold", "working"):
        raise ValueError("tags must be 'gold' or 'working'")
    lines: list[str] = []
    for ordinal, d in enumerate(c.dialogues):
        if ordinal:
            lines.append("")
        if d.id != f"d{ordinal}":
            lines.append(f"# dialogue: {d.id}")
        for u in d.utterances:
            tag = u.gold_tag if tags == "gold" else u.working_tag
            lines.append(f"{u.speaker}\t{tag if tag is not None else '?'}\t{u.raw_text}")
    return "\n".join(lines) + "\n" if lines else ""


def split_by_dialogue(c: Corpus, train_fraction: float, seed: int) -> tuple[Corpus, Corpus]:
    """Partition whole dialogues into (train, test), deterministically.

    Both halves keep the original dialogue order and share the corpus
    tagset. Never splits mid-dialogue; both halves are non-empty.
    """
    if not 0 < train_fraction < 1:
        raise ValidationError("train_fraction must be strictly between 0 and 1")
    n = len(c.dialogues)
    if n < 2:
        raise ValidationError("need at least 2 dialogues to split")
    order = list(range(n))
    RngStream(seed).shuffle(order)
    n_train = max(1, min(n - 1, round(train_fraction * n)))
    train_idx = set(order[:n_train])
    train = tuple(d for i, d in enumerate(c.dialogues) if i in train_idx)
    test = tuple(d for i, d in enumerate(c.dialogues) if i not in train_idx)
    return Corpus(train, c.tagset), Corpus(test, c.tagset)
