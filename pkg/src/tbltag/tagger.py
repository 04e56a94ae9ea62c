"""Applying trained models, scoring predictions, and synthetic corpora.

The synthetic generator plants rules written in the learner's own rule
language, applies them to randomly generated dialogues to define gold
tags, and optionally flips tags at a configurable noise rate. Because
the planted truth lives inside the hypothesis space, a trained model can
be checked for exact recovery.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import Corpus, Dialogue, Tagset, Utterance, tokenize
from .errors import ValidationError
from .features import (
    DEFAULT_SEMANTIC_CLASSES,
    DEFAULT_SHORT_UTTERANCES,
    SemanticClassLexicon,
    ShortUtteranceList,
)
from .learner import Model
from .rng import RngStream
from .rules import CONTAINS, Rule, TaggingState, apply_rule


def tag_corpus(
    m: Model,
    c: Corpus,
    classes: SemanticClassLexicon | None = None,
    shorts: ShortUtteranceList | None = None,
) -> Corpus:
    """Tag every utterance: initial tag, then the model's rules in order.

    Gold tags in the input are ignored entirely (predictions are identical
    on the gold-stripped corpus); they are preserved in the output so the
    result can be evaluated. Pass the same class/short lexicons used at
    training time; they default to the built-in ones, as in training.

    Input gold tags outside the model's tagset only trigger a warning,
    since gold plays no part in tagging.
    """
    classes = classes if classes is not None else DEFAULT_SEMANTIC_CLASSES
    shorts = shorts if shorts is not None else DEFAULT_SHORT_UTTERANCES

    foreign = sorted(
        {u.gold_tag for u in c.utterances() if u.gold_tag is not None and u.gold_tag not in m.tagset}
    )
    if foreign:
        warnings.warn(f"input tags not in the model's tagset (ignored): {', '.join(foreign)}")

    state = TaggingState.from_corpus(c, None, classes, shorts)
    state.set_all_tags(m.initial_tag)
    for rule in m.rules:
        apply_rule(rule, state)

    merged = Tagset(c.tagset.labels + m.tagset.labels)
    pos = 0
    dialogues = []
    for d in c.dialogues:
        utts = []
        for u in d.utterances:
            utts.append(replace(u, working_tag=state.tags[pos]))
            pos += 1
        dialogues.append(Dialogue(d.id, tuple(utts)))
    return Corpus(tuple(dialogues), merged)


@dataclass(frozen=True)
class TagMetrics:
    precision: float
    recall: float
    support: int


@dataclass(frozen=True, eq=False)
class EvalReport:
    """Utterance-level accuracy plus per-tag precision/recall and confusion.

    ``confusion[i, j]`` counts utterances with gold ``labels[i]`` predicted
    as ``labels[j]``; row sums equal per-tag support and the diagonal sums
    to ``n_correct``.
    """

    n_utterances: int
    n_correct: int
    accuracy: float
    labels: tuple[str, ...]
    per_tag: dict[str, TagMetrics]
    confusion: np.ndarray


def evaluate(
    m: Model,
    gold: Corpus,
    classes: SemanticClassLexicon | None = None,
    shorts: ShortUtteranceList | None = None,
) -> EvalReport:
    """Tag the corpus with the model and score against its gold tags."""
    for u in gold.utterances():
        if u.gold_tag is None:
            raise ValidationError(
                f"cannot evaluate: utterance {u.dialogue_id}[{u.index}] has no gold tag"
            )
    tagged = tag_corpus(m, gold, classes, shorts)
    labels = tuple(sorted(set(gold.tagset.labels) | set(m.tagset.labels)))
    index = {label: i for i, label in enumerate(labels)}
    confusion = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for u in tagged.utterances():
        confusion[index[u.gold_tag], index[u.working_tag]] += 1

    n = int(confusion.sum())
    correct = int(np.trace(confusion))
    per_tag = {}
    for label, i in index.items():
        support = int(confusion[i].sum())
        predicted = int(confusion[:, i].sum())
        hits = int(confusion[i, i])
        per_tag[label] = TagMetrics(
            precision=hits / predicted if predicted else 0.0,
            recall=hits / support if support else 0.0,
            support=support,
        )
    return EvalReport(
        n_utterances=n,
        n_correct=correct,
        accuracy=correct / n if n else 0.0,
        labels=labels,
        per_tag=per_tag,
        confusion=confusion,
    )


def render_report_kv(report: EvalReport) -> str:
    """Machine-readable key=value block, ratios to 6 decimal places."""
    lines = [
        f"n_utterances={report.n_utterances}",
        f"n_correct={report.n_correct}",
        f"accuracy={report.accuracy:.6f}",
    ]
    for label in report.labels:
        tm = report.per_tag[label]
        lines.append(f"precision.{label}={tm.precision:.6f}")
        lines.append(f"recall.{label}={tm.recall:.6f}")
        lines.append(f"support.{label}={tm.support}")
    return "\n".join(lines) + "\n"


def render_confusion_tsv(report: EvalReport) -> str:
    """Confusion matrix as TSV: rows gold, columns predicted."""
    lines = ["gold\t" + "\t".join(report.labels)]
    for i, label in enumerate(report.labels):
        lines.append(label + "\t" + "\t".join(str(int(x)) for x in report.confusion[i]))
    return "\n".join(lines) + "\n"


def render_report_text(report: EvalReport) -> str:
    """Aligned plain-text report for humans."""
    width = max([len("tag")] + [len(label) for label in report.labels])
    lines = [
        f"accuracy: {report.accuracy:.6f} ({report.n_correct}/{report.n_utterances})",
        "",
        f"{'tag':<{width}}  precision    recall   support",
    ]
    for label in report.labels:
        tm = report.per_tag[label]
        lines.append(
            f"{label:<{width}}   {tm.precision:8.6f}  {tm.recall:8.6f}  {tm.support:8d}"
        )
    return "\n".join(lines) + "\n"


# --- synthetic corpora ----------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a pair of disjoint synthetic corpora with planted truth.

    Gold tags are defined by assigning ``base_tag`` everywhere and then
    applying ``planted_rules`` in order; afterwards each tag is flipped to
    a uniformly random *other* tag with probability ``noise``. Rules with
    a phrase condition get their phrase injected into utterances at the
    matching ``injection_rates`` entry (by default a decreasing schedule,
    so earlier rules cover more utterances, like the painting analogy the
    rule sequence embodies).
    """

    seed: int
    n_train_dialogues: int
    n_test_dialogues: int
    vocabulary: tuple[str, ...]
    base_tag: str
    planted_rules: tuple[Rule, ...]
    utterances_range: tuple[int, int] = (4, 10)
    tokens_range: tuple[int, int] = (3, 9)
    noise: float = 0.0
    injection_rates: tuple[float, ...] | None = None
    classes: SemanticClassLexicon | None = None

    def tagset(self) -> Tagset:
        return Tagset((self.base_tag,) + tuple(r.target for r in self.planted_rules))


_PUNCT_CHOICES = (".", ".", ".", ".", ".", "?", "?", "!", "")


def _validate_spec(spec: SyntheticSpec) -> None:
    if spec.n_train_dialogues < 0 or spec.n_test_dialogues < 0:
        raise ValidationError("dialogue counts must be >= 0")
    lo, hi = spec.utterances_range
    tlo, thi = spec.tokens_range
    if not (1 <= lo <= hi) or not (1 <= tlo <= thi):
        raise ValidationError("utterances_range and tokens_range must be 1 <= lo <= hi")
    if not 0.0 <= spec.noise < 1.0:
        raise ValidationError("noise must be in [0, 1)")
    if not spec.vocabulary:
        raise ValidationError("vocabulary must be non-empty")
    vocab = set()
    for w in spec.vocabulary:
        if tokenize(w) != (w,):
            raise ValidationError(f"vocabulary word {w!r} does not survive tokenization")
        vocab.add(w)
    for rule in spec.planted_rules:
        for cond in rule.conditions:
            if cond.kind == CONTAINS and not set(cond.value) <= vocab:
                raise ValidationError(
                    f"planted rule phrase {' '.join(cond.value)!r} uses words outside the vocabulary"
                )
    if spec.injection_rates is not None:
        if len(spec.injection_rates) != len(spec.planted_rules):
            raise ValidationError("injection_rates must align with planted_rules")
        if any(not 0.0 <= x <= 1.0 for x in spec.injection_rates):
            raise ValidationError("injection rates must be in [0, 1]")


def _phrase_of(rule: Rule):
    for cond in rule.conditions:
        if cond.kind == CONTAINS:
            return cond.value
    return None


def _default_injection_rates(rules: tuple[Rule, ...]) -> tuple[float, ...]:
    rates, j = [], 0
    for rule in rules:
        if _phrase_of(rule) is None:
            rates.append(0.0)
        else:
            rates.append(0.4 * 0.7**j)
            j += 1
    return tuple(rates)


def _generate_dialogues(spec: SyntheticSpec, rng: RngStream, n_dialogues: int) -> tuple[Dialogue, ...]:
    injections = [
        (rate, _phrase_of(rule))
        for rate, rule in zip(
            spec.injection_rates or _default_injection_rates(spec.planted_rules),
            spec.planted_rules,
        )
        if _phrase_of(rule) is not None and rate > 0.0
    ]
    ulo, uhi = spec.utterances_range
    tlo, thi = spec.tokens_range
    vocab = spec.vocabulary
    dialogues = []
    for ordinal in range(n_dialogues):
        n_utts = ulo + rng.randrange(uhi - ulo + 1)
        utts = []
        speaker = "A"
        for i in range(n_utts):
            if i and rng.random() < 0.6:
                speaker = "B" if speaker == "A" else "A"
            n_tokens = tlo + rng.randrange(thi - tlo + 1)
            tokens = [vocab[rng.randrange(len(vocab))] for _ in range(n_tokens)]
            for rate, phrase in injections:
                if rng.random() < rate and len(phrase) <= len(tokens):
                    at = rng.randrange(len(tokens) - len(phrase) + 1)
                    tokens[at : at + len(phrase)] = list(phrase)
            punct = _PUNCT_CHOICES[rng.randrange(len(_PUNCT_CHOICES))]
            utts.append(
                Utterance(f"d{ordinal}", i, speaker, " ".join(tokens) + punct)
            )
        dialogues.append(Dialogue(f"d{ordinal}", tuple(utts)))
    return tuple(dialogues)


def _assign_gold(
    spec: SyntheticSpec, rng: RngStream, dialogues: tuple[Dialogue, ...], tagset: Tagset
) -> Corpus:
    bare = Corpus(dialogues, tagset)
    state = TaggingState.from_corpus(bare, None, spec.classes, ShortUtteranceList())
    state.set_all_tags(spec.base_tag)
    for rule in spec.planted_rules:
        apply_rule(rule, state)

    labels = tagset.labels
    gold = list(state.tags)
    if spec.noise > 0.0:
        for pos, tag in enumerate(gold):
            if rng.random() < spec.noise:
                others = [t for t in labels if t != tag]
                gold[pos] = others[rng.randrange(len(others))]

    pos = 0
    tagged = []
    for d in dialogues:
        utts = []
        for u in d.utterances:
            utts.append(replace(u, gold_tag=gold[pos]))
            pos += 1
        tagged.append(Dialogue(d.id, tuple(utts)))
    return Corpus(tuple(tagged), tagset)


def generate_synthetic(spec: SyntheticSpec) -> tuple[Corpus, Corpus]:
    """Deterministically generate disjoint (train, test) corpora."""
    _validate_spec(spec)
    rng = RngStream(spec.seed)
    tagset = spec.tagset()
    train_dialogues = _generate_dialogues(spec, rng, spec.n_train_dialogues)
    test_dialogues = _generate_dialogues(spec, rng, spec.n_test_dialogues)
    train = _assign_gold(spec, rng, train_dialogues, tagset)
    test = _assign_gold(spec, rng, test_dialogues, tagset)
    return train, test
