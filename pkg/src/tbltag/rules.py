"""The rule language: conditions, rules, templates, matching, application.

A rule is up to three conjunctive conditions plus a target tag. Its
canonical text form is

    IF contains="can't" AND tagat[-1]=REQUEST THEN tag=REJECT

with conditions sorted by (predicate name, offset, argument) so each rule
has exactly one serialization. ``IF TRUE THEN tag=X`` is the
unconditional rule.

Templates are rules whose condition arguments and target may be
``$``-prefixed free variables; instantiating a template at a mis-tagged
position binds every variable so that all conditions hold there and the
target equals the position's gold tag.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .corpus import Corpus, validate_label
from .errors import ParseError, ValidationError
from .features import (
    LENGTH_BUCKETS,
    CuePhraseLexicon,
    FeatureView,
    Ngram,
    SemanticClassLexicon,
    ShortUtteranceList,
    corpus_views,
)
from .corpus import PUNCTUATION_CATEGORIES

# Predicate names, which double as the canonical sort order (alphabetical).
CLASS = "class"
CONTAINS = "contains"
CURTAG = "curtag"
LENGTH = "length"
PUNCT = "punct"
SHORT = "short"
SPEAKER_CHANGE = "speaker_change"
TAGAT = "tagat"

KINDS = (CLASS, CONTAINS, CURTAG, LENGTH, PUNCT, SHORT, SPEAKER_CHANGE, TAGAT)
MAX_CONDITIONS = 3
MAX_TAGAT_OFFSET = 3

_QUOTED_KINDS = (CONTAINS, SHORT)


@dataclass(frozen=True)
class Condition:
    """One predicate; ``offset`` is non-zero only for the tagat kind."""

    kind: str
    value: str | bool | Ngram
    offset: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown condition kind {self.kind!r}")
        if self.kind == TAGAT:
            if self.offset == 0 or abs(self.offset) > MAX_TAGAT_OFFSET:
                raise ValidationError(
                    f"tagat offset must be non-zero and within +/-{MAX_TAGAT_OFFSET}"
                )
        elif self.offset != 0:
            raise ValidationError(f"{self.kind} takes no offset")
        v = self.value
        if self.kind == CONTAINS:
            if (
                not isinstance(v, tuple)
                or not 1 <= len(v) <= 3
                or not all(isinstance(t, str) and t and t == t.lower() for t in v)
            ):
                raise ValidationError("contains needs a 1-3 token lowercase ngram tuple")
        elif self.kind == SPEAKER_CHANGE:
            if not isinstance(v, bool):
                raise ValidationError("speaker_change needs a boolean")
        elif self.kind == LENGTH:
            if v not in LENGTH_BUCKETS:
                raise ValidationError(f"length bucket must be one of {LENGTH_BUCKETS}")
        elif self.kind == PUNCT:
            if v not in PUNCTUATION_CATEGORIES:
                raise ValidationError(f"punctuation must be one of {PUNCTUATION_CATEGORIES}")
        elif self.kind == SHORT:
            if not isinstance(v, str) or not v or v != v.lower():
                raise ValidationError("short needs a non-empty lowercase string")
        else:  # CURTAG, TAGAT, CLASS carry a label
            if not isinstance(v, str):
                raise ValidationError(f"{self.kind} needs a label string")
            validate_label(v, self.kind)

    def sort_key(self) -> tuple[str, int, str]:
        return (self.kind, self.offset, _render_value(self))


def contains(phrase: str | Ngram) -> Condition:
    """Condition: the phrase occurs contiguously in the utterance's tokens."""
    gram = tuple(phrase.lower().split(" ")) if isinstance(phrase, str) else tuple(phrase)
    return Condition(CONTAINS, gram)


def current_tag(tag: str) -> Condition:
    return Condition(CURTAG, tag)


def tag_at(offset: int, tag: str) -> Condition:
    """Condition on the working tag ``offset`` utterances away (same dialogue)."""
    return Condition(TAGAT, tag, offset)


def speaker_change_is(flag: bool) -> Condition:
    return Condition(SPEAKER_CHANGE, flag)


def has_class(name: str) -> Condition:
    return Condition(CLASS, name)


def length_is(bucket: str) -> Condition:
    return Condition(LENGTH, bucket)


def short_is(text: str) -> Condition:
    return Condition(SHORT, text.strip().lower())


def punct_is(category: str) -> Condition:
    return Condition(PUNCT, category)


@dataclass(frozen=True)
class Rule:
    """Conjunctive conditions plus a target tag; conditions are kept sorted."""

    conditions: tuple[Condition, ...]
    target: str

    def __post_init__(self):
        validate_label(self.target, "target")
        ordered = tuple(sorted(self.conditions, key=Condition.sort_key))
        if len(ordered) > MAX_CONDITIONS:
            raise ValidationError(f"a rule may have at most {MAX_CONDITIONS} conditions")
        slots = {(c.kind, c.offset) for c in ordered}
        if len(slots) != len(ordered):
            raise ValidationError("at most one condition per predicate kind and offset")
        object.__setattr__(self, "conditions", ordered)


# --- canonical text codec ---------------------------------------------------


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _render_value(c: Condition) -> str:
    if c.kind == CONTAINS:
        return _quote(" ".join(c.value))
    if c.kind == SHORT:
        return _quote(c.value)
    if c.kind == SPEAKER_CHANGE:
        return "true" if c.value else "false"
    return str(c.value)


def condition_to_string(c: Condition) -> str:
    name = f"{c.kind}[{c.offset}]" if c.kind == TAGAT else c.kind
    return f"{name}={_render_value(c)}"


def rule_to_string(r: Rule) -> str:
    """Canonical serialization: unique per rule, parseable by parse_rule."""
    if not r.conditions:
        return f"IF TRUE THEN tag={r.target}"
    body = " AND ".join(condition_to_string(c) for c in r.conditions)
    return f"IF {body} THEN tag={r.target}"


def _split_top_level(text: str, sep: str = " AND ") -> list[str]:
    """Split on the separator, ignoring occurrences inside quoted strings."""
    parts, buf, i, in_quote = [], [], 0, False
    while i < len(text):
        ch = text[i]
        if in_quote:
            if ch == "\\" and i + 1 < len(text):
                buf.append(text[i : i + 2])
                i += 2
                continue
            if ch == '"':
                in_quote = False
            buf.append(ch)
        elif ch == '"':
            in_quote = True
            buf.append(ch)
        elif text.startswith(sep, i):
            parts.append("".join(buf))
            buf = []
            i += len(sep)
            continue
        else:
            buf.append(ch)
        i += 1
    if in_quote:
        raise ParseError(f"unterminated quote in {text!r}")
    parts.append("".join(buf))
    return parts


def _unquote(s: str) -> str:
    if len(s) < 2 or s[0] != '"' or s[-1] != '"':
        raise ParseError(f"expected a quoted string, got {s!r}")
    body, out, i = s[1:-1], [], 0
    while i < len(body):
        ch = body[i]
        if ch == "\\" and i + 1 < len(body):
            out.append(body[i + 1])
            i += 2
            continue
        if ch == '"':
            raise ParseError(f"stray quote inside {s!r}")
        out.append(ch)
        i += 1
    return "".join(out)


def _parse_lhs(lhs: str) -> tuple[str, int]:
    """Split a condition's left side into (kind, offset)."""
    if "[" in lhs:
        name, _, rest = lhs.partition("[")
        if not rest.endswith("]"):
            raise ParseError(f"malformed offset in {lhs!r}")
        if name != TAGAT:
            raise ParseError(f"{name!r} takes no offset")
        try:
            offset = int(rest[:-1])
        except ValueError:
            raise ParseError(f"bad offset {rest[:-1]!r}") from None
        return name, offset
    if lhs == TAGAT:
        raise ParseError("tagat requires an offset, e.g. tagat[-1]")
    return lhs, 0


def parse_condition(text: str) -> Condition:
    lhs, eq, rhs = text.partition("=")
    if not eq or not rhs:
        raise ParseError(f"malformed condition {text!r}")
    kind, offset = _parse_lhs(lhs.strip())
    if kind not in KINDS:
        raise ParseError(f"unknown predicate {kind!r}")
    rhs = rhs.strip()
    try:
        if kind == CONTAINS:
            tokens = tuple(t for t in _unquote(rhs).lower().split(" ") if t)
            return Condition(CONTAINS, tokens)
        if kind == SHORT:
            return Condition(SHORT, _unquote(rhs).lower())
        if kind == SPEAKER_CHANGE:
            if rhs not in ("true", "false"):
                raise ParseError(f"speaker_change must be true or false, got {rhs!r}")
            return Condition(SPEAKER_CHANGE, rhs == "true")
        return Condition(kind, rhs, offset)
    except ValidationError as e:
        raise ParseError(str(e)) from None


def parse_rule(text: str) -> Rule:
    """Inverse of rule_to_string; rejects unknown predicates and bad args."""
    text = text.strip()
    if not text.startswith("IF "):
        raise ParseError(f"rule must start with IF: {text!r}")
    body, sep, target_part = text[3:].rpartition(" THEN tag=")
    if not sep or not target_part:
        raise ParseError(f"rule must end with THEN tag=<label>: {text!r}")
    try:
        target = validate_label(target_part.strip(), "target")
    except ValidationError as e:
        raise ParseError(str(e)) from None
    if body.strip() == "TRUE":
        conditions: tuple[Condition, ...] = ()
    else:
        conditions = tuple(parse_condition(p.strip()) for p in _split_top_level(body))
    try:
        return Rule(conditions, target)
    except ValidationError as e:
        raise ParseError(str(e)) from None


# --- templates ---------------------------------------------------------------


@dataclass(frozen=True)
class TemplateSchema:
    """One condition slot: either a literal value or a free variable."""

    kind: str
    offset: int = 0
    value: str | bool | Ngram | None = None
    var: str | None = None

    def __post_init__(self):
        if (self.value is None) == (self.var is None):
            raise ValidationError("schema needs exactly one of a literal value or a variable")
        if self.value is not None:
            Condition(self.kind, self.value, self.offset)  # validates kind/offset/value
        else:
            if self.kind not in KINDS:
                raise ValidationError(f"unknown condition kind {self.kind!r}")
            if self.kind == TAGAT and (self.offset == 0 or abs(self.offset) > MAX_TAGAT_OFFSET):
                raise ValidationError(
                    f"tagat offset must be non-zero and within +/-{MAX_TAGAT_OFFSET}"
                )
            if self.kind != TAGAT and self.offset != 0:
                raise ValidationError(f"{self.kind} takes no offset")


@dataclass(frozen=True)
class Template:
    """A rule schema with free variables; the target is always a variable."""

    schemas: tuple[TemplateSchema, ...]
    target_var: str = "Y"

    def __post_init__(self):
        if len(self.schemas) > MAX_CONDITIONS:
            raise ValidationError(f"a template may have at most {MAX_CONDITIONS} conditions")
        slots = {(s.kind, s.offset) for s in self.schemas}
        if len(slots) != len(self.schemas):
            raise ValidationError("at most one schema per predicate kind and offset")
        names = [s.var for s in self.schemas if s.var is not None] + [self.target_var]
        if len(set(names)) != len(names):
            raise ValidationError("template variables must be distinct")
        if not self.target_var:
            raise ValidationError("template target must be a variable")

    def uses_forward_context(self) -> bool:
        return any(s.kind == TAGAT and s.offset > 0 for s in self.schemas)


def template_to_string(t: Template) -> str:
    parts = []
    for s in t.schemas:
        name = f"{s.kind}[{s.offset}]" if s.kind == TAGAT else s.kind
        if s.var is not None:
            parts.append(f"{name}=${s.var}")
        else:
            parts.append(condition_to_string(Condition(s.kind, s.value, s.offset)))
    body = " AND ".join(parts) if parts else "TRUE"
    return f"IF {body} THEN tag=${t.target_var}"


def _parse_schema(text: str) -> TemplateSchema:
    lhs, eq, rhs = text.partition("=")
    if not eq or not rhs:
        raise ParseError(f"malformed template condition {text!r}")
    kind, offset = _parse_lhs(lhs.strip())
    if kind not in KINDS:
        raise ParseError(f"unknown predicate {kind!r}")
    rhs = rhs.strip()
    if rhs.startswith("$"):
        var = rhs[1:]
        if not var:
            raise ParseError("empty variable name")
        return TemplateSchema(kind, offset, var=var)
    cond = parse_condition(text.strip())
    return TemplateSchema(cond.kind, cond.offset, value=cond.value)


def parse_template(text: str) -> Template:
    text = text.strip()
    if not text.startswith("IF "):
        raise ParseError(f"template must start with IF: {text!r}")
    body, sep, target_part = text[3:].rpartition(" THEN tag=")
    if not sep or not target_part:
        raise ParseError(f"template must end with THEN tag=$<var>: {text!r}")
    target_part = target_part.strip()
    if not target_part.startswith("$") or len(target_part) < 2:
        raise ParseError("template target must be a $-variable")
    if body.strip() == "TRUE":
        schemas: tuple[TemplateSchema, ...] = ()
    else:
        schemas = tuple(_parse_schema(p.strip()) for p in _split_top_level(body))
    try:
        return Template(schemas, target_part[1:])
    except ValidationError as e:
        raise ParseError(str(e)) from None


def parse_templates(text: str, forward_context: bool = False) -> tuple[Template, ...]:
    """Template file: one template per line, ``#`` comments and blanks skipped.

    Positive tagat offsets are rejected unless forward context is enabled.
    """
    templates = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            t = parse_template(line)
        except ParseError as e:
            raise ParseError(e.message, lineno) from None
        if t.uses_forward_context() and not forward_context:
            raise ParseError(
                "template uses a forward tagat offset but forward context is disabled", lineno
            )
        templates.append(t)
    return tuple(templates)


# --- tagging state and rule semantics ----------------------------------------


class TaggingState:
    """Working tags over a corpus plus its precomputed static features.

    The corpus and feature views are immutable; ``tags`` is the only
    mutable part and is touched only by apply_rule / set_all_tags.
    Positions are flat utterance indices in corpus order; static inverted
    indexes narrow the positions a rule can possibly match.
    """

    def __init__(self, corpus: Corpus, views: list[FeatureView], tags: list[str | None] | None = None):
        self.corpus = corpus
        self.utterances = list(corpus.utterances())
        n = len(self.utterances)
        if len(views) != n:
            raise ValidationError("feature views misaligned with corpus")
        self.views = views
        self.gold: list[str | None] = [u.gold_tag for u in self.utterances]
        self.tags: list[str | None] = list(tags) if tags is not None else [None] * n
        if len(self.tags) != n:
            raise ValidationError("working tags misaligned with corpus")

        self.dialogue_index: list[int] = []
        for di, d in enumerate(corpus.dialogues):
            self.dialogue_index.extend([di] * len(d))

        by_phrase: dict[Ngram, list[int]] = {}
        by_class: dict[str, list[int]] = {}
        by_short: dict[str, list[int]] = {}
        by_length: dict[str, list[int]] = {}
        by_punct: dict[str, list[int]] = {}
        by_speaker_change: dict[bool, list[int]] = {True: [], False: []}
        for pos, v in enumerate(self.views):
            for g in v.all_ngrams:
                by_phrase.setdefault(g, []).append(pos)
            for name in v.classes_present:
                by_class.setdefault(name, []).append(pos)
            if v.short_match is not None:
                by_short.setdefault(v.short_match, []).append(pos)
            by_length.setdefault(v.length_bucket, []).append(pos)
            by_punct.setdefault(v.punctuation, []).append(pos)
            by_speaker_change[v.speaker_change].append(pos)
        self._static_index = {
            CONTAINS: by_phrase,
            CLASS: by_class,
            SHORT: by_short,
            LENGTH: by_length,
            PUNCT: by_punct,
            SPEAKER_CHANGE: by_speaker_change,
        }

    @classmethod
    def from_corpus(
        cls,
        corpus: Corpus,
        cues: CuePhraseLexicon | None = None,
        classes: SemanticClassLexicon | None = None,
        shorts: ShortUtteranceList | None = None,
        tags: list[str | None] | None = None,
    ) -> "TaggingState":
        return cls(corpus, corpus_views(corpus, cues, classes, shorts), tags)

    def __len__(self) -> int:
        return len(self.utterances)

    def neighbor(self, pos: int, offset: int) -> int | None:
        """Flat index of the utterance ``offset`` away in the same dialogue."""
        q = pos + offset
        if 0 <= q < len(self.tags) and self.dialogue_index[q] == self.dialogue_index[pos]:
            return q
        return None

    def set_all_tags(self, tag: str | None) -> None:
        self.tags = [tag] * len(self.tags)

    def correct_count(self) -> int:
        return sum(1 for t, g in zip(self.tags, self.gold) if g is not None and t == g)

    def incorrect_positions(self) -> list[int]:
        return [
            pos
            for pos, (t, g) in enumerate(zip(self.tags, self.gold))
            if g is not None and t != g
        ]

    def candidate_positions(self, r: Rule) -> range | list[int]:
        """Positions worth testing: narrowed by the rule's rarest static condition."""
        best: list[int] | None = None
        for c in r.conditions:
            index = self._static_index.get(c.kind)
            if index is None:
                continue
            positions = index.get(c.value, [])
            if best is None or len(positions) < len(best):
                best = positions
        return best if best is not None else range(len(self.tags))


def condition_holds(c: Condition, s: TaggingState, pos: int) -> bool:
    kind = c.kind
    if kind == CONTAINS:
        return c.value in s.views[pos].all_ngrams
    if kind == TAGAT:
        q = s.neighbor(pos, c.offset)
        return q is not None and s.tags[q] == c.value
    if kind == CURTAG:
        return s.tags[pos] == c.value
    if kind == SPEAKER_CHANGE:
        return s.views[pos].speaker_change == c.value
    if kind == CLASS:
        return c.value in s.views[pos].class_set
    if kind == LENGTH:
        return s.views[pos].length_bucket == c.value
    if kind == SHORT:
        return s.views[pos].short_match == c.value
    return s.views[pos].punctuation == c.value  # PUNCT


def rule_matches(r: Rule, s: TaggingState, pos: int) -> bool:
    """True iff every condition of the rule holds at the position.

    Tag conditions read *working* tags; a tagat offset falling outside the
    position's dialogue never matches.
    """
    return all(condition_holds(c, s, pos) for c in r.conditions)


def apply_rule(r: Rule, s: TaggingState) -> list[int]:
    """Retag every matching position; returns the positions whose tag changed.

    All matches are computed against the pre-application state and the
    retags committed afterwards, so a rule never cascades within one pass
    and the result is independent of visiting order.
    """
    matched = [pos for pos in s.candidate_positions(r) if rule_matches(r, s, pos)]
    changed = [pos for pos in matched if s.tags[pos] != r.target]
    for pos in changed:
        s.tags[pos] = r.target
    return changed


# --- template instantiation ---------------------------------------------------


def _schema_conditions(schema: TemplateSchema, s: TaggingState, pos: int) -> list[Condition]:
    """All concrete conditions for one schema that hold at the position.

    Free variables enumerate, in sorted order, the values observed at the
    position (phrases only from the cue lexicon); literal values yield the
    condition itself when it holds, else nothing.
    """
    kind = schema.kind
    if schema.value is not None:
        cond = Condition(kind, schema.value, schema.offset)
        return [cond] if condition_holds(cond, s, pos) else []
    view = s.views[pos]
    if kind == CONTAINS:
        return [Condition(CONTAINS, g) for g in view.cues_present]
    if kind == CLASS:
        return [Condition(CLASS, name) for name in view.classes_present]
    if kind == CURTAG:
        t = s.tags[pos]
        return [Condition(CURTAG, t)] if t is not None else []
    if kind == TAGAT:
        q = s.neighbor(pos, schema.offset)
        if q is None or s.tags[q] is None:
            return []
        return [Condition(TAGAT, s.tags[q], schema.offset)]
    if kind == SPEAKER_CHANGE:
        return [Condition(SPEAKER_CHANGE, view.speaker_change)]
    if kind == LENGTH:
        return [Condition(LENGTH, view.length_bucket)]
    if kind == SHORT:
        return [Condition(SHORT, view.short_match)] if view.short_match is not None else []
    return [Condition(PUNCT, view.punctuation)]  # PUNCT


def instantiation_count(t: Template, s: TaggingState, pos: int) -> int:
    """Size of instantiate_template's result, without materializing it.

    The count is the product over schemas of each schema's candidate
    count, which lets Monte Carlo sampling weigh templates lazily.
    """
    total = 1
    view = s.views[pos]
    for schema in t.schemas:
        if schema.value is not None:
            cond = Condition(schema.kind, schema.value, schema.offset)
            n = 1 if condition_holds(cond, s, pos) else 0
        elif schema.kind == CONTAINS:
            n = len(view.cues_present)
        elif schema.kind == CLASS:
            n = len(view.classes_present)
        elif schema.kind == CURTAG:
            n = 1 if s.tags[pos] is not None else 0
        elif schema.kind == TAGAT:
            q = s.neighbor(pos, schema.offset)
            n = 1 if q is not None and s.tags[q] is not None else 0
        elif schema.kind == SHORT:
            n = 1 if view.short_match is not None else 0
        else:  # SPEAKER_CHANGE, LENGTH, PUNCT always bind their observed value
            n = 1
        if n == 0:
            return 0
        total *= n
    return total


def _check_instantiation_pre(s: TaggingState, pos: int) -> str:
    gold = s.gold[pos]
    if gold is None:
        raise ValidationError(f"position {pos} has no gold tag")
    if s.tags[pos] == gold:
        raise ValidationError(f"position {pos} is already tagged correctly")
    return gold


def instantiate_template(t: Template, s: TaggingState, pos: int) -> list[Rule]:
    """Every rule the template yields at a mis-tagged position.

    Each returned rule's conditions all hold at ``pos`` and its target is
    the position's gold tag, so applying it would correct the position.
    """
    gold = _check_instantiation_pre(s, pos)
    per_schema = [_schema_conditions(schema, s, pos) for schema in t.schemas]
    if any(not options for options in per_schema):
        return []
    return [Rule(combo, gold) for combo in itertools.product(*per_schema)]


def materialize_instantiation(t: Template, s: TaggingState, pos: int, index: int) -> Rule:
    """The ``index``-th instantiation of the template at the position.

    Instantiations are numbered 0..instantiation_count-1 in mixed radix,
    least-significant digit on the first schema, candidates per schema in
    the sorted order _schema_conditions produces. Used by the Monte Carlo
    sampler to materialize only the sampled rules.
    """
    gold = _check_instantiation_pre(s, pos)
    conditions = []
    for schema in t.schemas:
        options = _schema_conditions(schema, s, pos)
        if not options:
            raise ValidationError("template has no instantiation at this position")
        index, digit = divmod(index, len(options))
        conditions.append(options[digit])
    if index:
        raise ValidationError("instantiation index out of range")
    return Rule(tuple(conditions), gold)
