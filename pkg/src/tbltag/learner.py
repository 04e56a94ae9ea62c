"""The training loop: initial tagging, candidate generation, scoring, selection.

Training starts from a baseline tagging (the training corpus's majority
gold tag), then greedily appends the rule with the highest score, where

    score(r) = #(positions r retags to their gold tag)
             - #(positions r retags away from their gold tag)

computed against the frozen pre-application state. Training stops when no
candidate scores at least ``theta``.

Candidates come from instantiating the rule templates at every
incorrectly tagged position. In Monte Carlo mode only R instantiations
per incorrect position are sampled (uniformly, without replacement, over
that position's full instantiation set across all templates), which keeps
per-iteration cost independent of the number of templates.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .corpus import Corpus, Tagset, validate_label
from .errors import ParseError, TrainingError, ValidationError
from .features import CuePhraseLexicon, SemanticClassLexicon, ShortUtteranceList
from .rng import RngStream
from .rules import (
    CONTAINS,
    Rule,
    TaggingState,
    Template,
    apply_rule,
    instantiate_template,
    instantiation_count,
    materialize_instantiation,
    parse_rule,
    rule_matches,
    rule_to_string,
)

EXHAUSTIVE = "exhaustive"
MONTE_CARLO = "mc"

DEFAULT_R = 8  # adequate even for template inventories in the thousands


@dataclass(frozen=True)
class TrainConfig:
    templates: tuple[Template, ...]
    mode: str = EXHAUSTIVE
    r: int = DEFAULT_R
    seed: int = 0
    theta: int = 1
    max_iterations: int = 500
    forward_context: bool = False
    initial_tag: str | None = None
    jobs: int = 1

    def validate(self) -> None:
        if not self.templates:
            raise TrainingError("at least one template is required")
        if self.mode not in (EXHAUSTIVE, MONTE_CARLO):
            raise TrainingError(f"mode must be {EXHAUSTIVE!r} or {MONTE_CARLO!r}")
        if self.theta < 1:
            raise TrainingError("theta must be >= 1")
        if self.r < 1:
            raise TrainingError("R must be >= 1")
        if self.max_iterations < 1:
            raise TrainingError("max_iterations must be >= 1")
        if self.jobs < 1:
            raise TrainingError("jobs must be >= 1")
        if not self.forward_context:
            for t in self.templates:
                if t.uses_forward_context():
                    raise TrainingError(
                        "templates use forward tagat offsets but forward context is disabled"
                    )


@dataclass
class IterationStats:
    rule: Rule
    score: int
    delta_correct: int
    n_candidates: int
    correct_after: int
    duration_s: float


@dataclass
class TrainStats:
    n_utterances: int
    correct_initial: int
    iterations: list[IterationStats] = field(default_factory=list)

    @property
    def final_accuracy(self) -> float:
        correct = self.iterations[-1].correct_after if self.iterations else self.correct_initial
        return correct / self.n_utterances if self.n_utterances else 0.0


@dataclass(frozen=True)
class Model:
    """An ordered rule sequence plus the policy and parameters that built it."""

    tagset: Tagset
    initial_tag: str
    rules: tuple[Rule, ...]
    scores: tuple[int, ...]
    mode: str = EXHAUSTIVE
    r: int = 0
    seed: int = 0
    theta: int = 1
    stats: TrainStats | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if len(self.rules) != len(self.scores):
            raise ValidationError("each rule needs exactly one recorded score")
        if self.initial_tag not in self.tagset:
            raise ValidationError(f"initial tag {self.initial_tag!r} not in tagset")
        for rule in self.rules:
            if rule.target not in self.tagset:
                raise ValidationError(f"rule target {rule.target!r} not in tagset")


def initial_policy(train: Corpus) -> str:
    """Most frequent gold tag; ties broken lexicographically."""
    counts: dict[str, int] = {}
    for u in train.utterances():
        if u.gold_tag is None:
            raise TrainingError(f"utterance {u.dialogue_id}[{u.index}] has no gold tag")
        counts[u.gold_tag] = counts.get(u.gold_tag, 0) + 1
    if not counts:
        raise TrainingError("cannot pick an initial tag for an empty corpus")
    best = max(counts.values())
    return min(t for t, c in counts.items() if c == best)


def score_rule(r: Rule, s: TaggingState) -> int:
    """Net tagging improvement if the rule were applied now.

    Corrections count +1, breaks count -1, retags between two wrong tags
    count 0. Matches that leave the tag unchanged contribute nothing.
    """
    score = 0
    target = r.target
    tags, gold = s.tags, s.gold
    for pos in s.candidate_positions(r):
        if not rule_matches(r, s, pos):
            continue
        cur = tags[pos]
        if cur == target:
            continue
        g = gold[pos]
        if g == target:
            score += 1
        elif g == cur:
            score -= 1
    return score


class TemplateInventory:
    """Templates indexed for fast per-position relevance.

    Templates carrying a literal phrase condition are reachable only
    through that phrase, so at a given position only the templates whose
    phrase actually occurs there are consulted; all other templates are
    consulted everywhere. With thousands of phrase-anchored templates this
    keeps candidate generation per position nearly independent of the
    inventory size.
    """

    def __init__(self, templates: tuple[Template, ...]):
        self.templates = templates
        self._by_phrase: dict[tuple[str, ...], list[int]] = {}
        self._general: list[int] = []
        for ti, t in enumerate(templates):
            anchor = next(
                (s.value for s in t.schemas if s.kind == CONTAINS and s.value is not None),
                None,
            )
            if anchor is not None:
                self._by_phrase.setdefault(anchor, []).append(ti)
            else:
                self._general.append(ti)

    def relevant(self, s: TaggingState, pos: int) -> list[int]:
        """Template indices that might instantiate at the position, sorted.

        Sorting keeps downstream sampling independent of set iteration
        order (and therefore of the process hash seed).
        """
        if not self._by_phrase:
            return self._general
        hits: list[int] = []
        for g in s.views[pos].all_ngrams:
            hits.extend(self._by_phrase.get(g, ()))
        if not hits:
            return self._general
        return sorted(self._general + hits)


def generate_candidates(
    s: TaggingState,
    cfg: TrainConfig,
    rng: RngStream | None = None,
    inventory: TemplateInventory | None = None,
) -> set[Rule]:
    """Candidate rules from every incorrectly tagged position.

    Exhaustive mode takes the union of all template instantiations.
    Monte Carlo mode samples min(R, count) instantiations per position,
    uniformly without replacement over the position's instantiation
    sequence (templates in index order, bindings in enumeration order);
    when R covers the whole set the result equals the exhaustive one.
    """
    inventory = inventory if inventory is not None else TemplateInventory(cfg.templates)
    templates = inventory.templates
    candidates: set[Rule] = set()
    mc = cfg.mode == MONTE_CARLO
    if mc and rng is None:
        raise TrainingError("Monte Carlo candidate generation needs an RngStream")

    for pos in s.incorrect_positions():
        tids = inventory.relevant(s, pos)
        if not mc:
            for ti in tids:
                candidates.update(instantiate_template(templates[ti], s, pos))
            continue
        sizes = [instantiation_count(templates[ti], s, pos) for ti in tids]
        total = sum(sizes)
        if total == 0:
            continue
        if total <= cfg.r:
            for ti, size in zip(tids, sizes):
                if size:
                    candidates.update(instantiate_template(templates[ti], s, pos))
            continue
        picked = rng.sample_indices(total, cfg.r)
        bound, ti_iter = 0, 0
        for index in picked:  # sorted, so one forward sweep assigns templates
            while index >= bound + sizes[ti_iter]:
                bound += sizes[ti_iter]
                ti_iter += 1
            candidates.add(
                materialize_instantiation(templates[ti_iter], s, pos, index - bound)
            )
    return candidates


def _score_all(
    candidates: list[Rule], s: TaggingState, jobs: int
) -> list[tuple[Rule, int]]:
    if jobs <= 1 or len(candidates) < 64:
        return [(r, score_rule(r, s)) for r in candidates]
    chunk = (len(candidates) + jobs - 1) // jobs
    chunks = [candidates[i : i + chunk] for i in range(0, len(candidates), chunk)]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        parts = ex.map(lambda rs: [(r, score_rule(r, s)) for r in rs], chunks)
        return [pair for part in parts for pair in part]


def select_best(
    candidates: set[Rule], s: TaggingState, theta: int = 1, jobs: int = 1
) -> tuple[Rule, int] | None:
    """Highest-scoring candidate, or None when nothing reaches theta.

    Ties go to the lexicographically smallest canonical serialization,
    which makes the choice independent of candidate enumeration order.
    """
    if not candidates:
        return None
    scored = _score_all(list(candidates), s, jobs)
    best_score = max(score for _, score in scored)
    if best_score < theta:
        return None
    best_rule = min(
        (r for r, score in scored if score == best_score), key=rule_to_string
    )
    return best_rule, best_score


def train(
    corpus: Corpus,
    cfg: TrainConfig,
    cues: CuePhraseLexicon | None = None,
    classes: SemanticClassLexicon | None = None,
    shorts: ShortUtteranceList | None = None,
) -> Model:
    """Run the full training loop and return the learned model.

    The training corpus must be fully gold-tagged. After each selected
    rule is applied, the number of correctly tagged utterances must rise
    by exactly the rule's score; a violation is a bug and raises.
    """
    cfg.validate()
    if not len(corpus.tagset):
        raise TrainingError("training needs a non-empty tagset")
    for u in corpus.utterances():
        if u.gold_tag is None:
            raise TrainingError(f"utterance {u.dialogue_id}[{u.index}] has no gold tag")

    initial = cfg.initial_tag if cfg.initial_tag is not None else initial_policy(corpus)
    if initial not in corpus.tagset:
        raise TrainingError(f"initial tag {initial!r} not in corpus tagset")

    state = TaggingState.from_corpus(corpus, cues, classes, shorts)
    state.set_all_tags(initial)
    inventory = TemplateInventory(cfg.templates)
    rng = RngStream(cfg.seed)
    stats = TrainStats(n_utterances=len(state), correct_initial=state.correct_count())

    selected: list[Rule] = []
    scores: list[int] = []
    for _ in range(cfg.max_iterations):
        t0 = time.perf_counter()
        candidates = generate_candidates(state, cfg, rng, inventory)
        best = select_best(candidates, state, cfg.theta, cfg.jobs)
        if best is None:
            break
        rule, score = best
        before = state.correct_count()
        apply_rule(rule, state)
        delta = state.correct_count() - before
        if delta != score:
            raise TrainingError(
                f"score accounting broken: rule {rule_to_string(rule)} "
                f"scored {score} but changed correct count by {delta}"
            )
        selected.append(rule)
        scores.append(score)
        stats.iterations.append(
            IterationStats(
                rule=rule,
                score=score,
                delta_correct=delta,
                n_candidates=len(candidates),
                correct_after=state.correct_count(),
                duration_s=time.perf_counter() - t0,
            )
        )

    mc = cfg.mode == MONTE_CARLO
    return Model(
        tagset=corpus.tagset,
        initial_tag=initial,
        rules=tuple(selected),
        scores=tuple(scores),
        mode=cfg.mode,
        r=cfg.r if mc else 0,
        seed=cfg.seed if mc else 0,
        theta=cfg.theta,
        stats=stats,
    )


# --- model file codec ---------------------------------------------------------

_HEADER = "TBL-MODEL v1"


def serialize_model(m: Model) -> str:
    """Bit-stable model file; see parse_model for the inverse."""
    lines = [
        _HEADER,
        f"TAGSET {','.join(m.tagset.labels)}",
        f"INITIAL majority={m.initial_tag}",
        f"PARAMS mode={m.mode} R={m.r} seed={m.seed} theta={m.theta}",
    ]
    for k, (rule, score) in enumerate(zip(m.rules, m.scores), start=1):
        lines.append(f"RULE {k} score={score}: {rule_to_string(rule)}")
    return "\n".join(lines) + "\n"


def _expect(prefix: str, line: str, lineno: int) -> str:
    if not line.startswith(prefix):
        raise ParseError(f"expected {prefix.strip()!r}, got {line!r}", lineno)
    return line[len(prefix) :]


def parse_model(text: str) -> Model:
    lines = text.splitlines()
    if len(lines) < 4:
        raise ParseError("model file truncated")
    if lines[0] != _HEADER:
        raise ParseError(f"bad header {lines[0]!r}", 1)
    labels = _expect("TAGSET ", lines[1], 2)
    try:
        tagset = Tagset(tuple(label for label in labels.split(",") if label))
    except ValidationError as e:
        raise ParseError(str(e), 2) from None
    initial = _expect("INITIAL majority=", lines[2], 3)
    params = _expect("PARAMS ", lines[3], 4)
    fields = dict(part.split("=", 1) for part in params.split(" ") if "=" in part)
    try:
        mode = fields["mode"]
        r = int(fields["R"])
        seed = int(fields["seed"])
        theta = int(fields["theta"])
    except (KeyError, ValueError):
        raise ParseError(f"bad PARAMS line {params!r}", 4) from None
    if mode not in (EXHAUSTIVE, MONTE_CARLO):
        raise ParseError(f"unknown mode {mode!r}", 4)

    rules: list[Rule] = []
    scores: list[int] = []
    for lineno, line in enumerate(lines[4:], start=5):
        if not line.strip():
            continue
        rest = _expect("RULE ", line, lineno)
        head, sep, rule_text = rest.partition(": ")
        if not sep:
            raise ParseError("malformed RULE line", lineno)
        parts = head.split(" ")
        if len(parts) != 2 or not parts[1].startswith("score="):
            raise ParseError("malformed RULE line", lineno)
        try:
            k = int(parts[0])
            score = int(parts[1][len("score=") :])
        except ValueError:
            raise ParseError("malformed RULE line", lineno) from None
        if k != len(rules) + 1:
            raise ParseError(f"rule numbered {k}, expected {len(rules) + 1}", lineno)
        try:
            rules.append(parse_rule(rule_text))
        except ParseError as e:
            raise ParseError(e.message, lineno) from None
        scores.append(score)
    try:
        return Model(
            tagset=tagset,
            initial_tag=initial,
            rules=tuple(rules),
            scores=tuple(scores),
            mode=mode,
            r=r,
            seed=seed,
            theta=theta,
        )
    except ValidationError as e:
        raise ParseError(str(e)) from None
