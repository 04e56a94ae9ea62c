"""Command-line entry point.

Subcommands map one-to-one onto library operations: mine-cues, train,
tag, evaluate, inspect, gen-synthetic. Exit status is 0 on success, 1 on
a validation problem (bad flags, missing or malformed files), 2 on an
unexpected runtime error. Output files are written to a temporary file
and renamed into place, so a failed run never leaves partial output.

Randomized commands require a seed, either via --seed or the TBL_SEED
environment variable (the flag wins); there is no wall-clock default.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path

from . import features, learner, tagger
from .corpus import parse_corpus, serialize_corpus
from .errors import ParseError, TblError
from .rules import parse_rule, parse_templates, rule_to_string


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); remap to status 1
        raise _UsageError(message)


def _read(path: str, what: str) -> str:
    p = Path(path)
    try:
        return p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise _UsageError(f"{path}: {what} file not found") from None
    except IsADirectoryError:
        raise _UsageError(f"{path}: is a directory") from None


def _parse_file(path: str, what: str, parse, *args, **kwargs):
    text = _read(path, what)
    try:
        return parse(text, *args, **kwargs)
    except ParseError as e:
        where = f"{path}:{e.line}" if e.line is not None else path
        raise _UsageError(f"{where}: {e.message}") from None
    except TblError as e:
        raise _UsageError(f"{path}: {e}") from None


def _check_out_path(path: str) -> None:
    parent = Path(path).parent
    if not parent.is_dir():
        raise _UsageError(f"{path}: output directory {parent} does not exist")


def _write_atomic(path: str, text: str) -> None:
    parent = Path(path).parent
    fd, tmp = tempfile.mkstemp(dir=parent, prefix=".tbl-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _resolve_seed(args, required: bool) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("TBL_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise _UsageError(f"TBL_SEED must be an integer, got {env!r}") from None
    if required:
        raise _UsageError("a seed is required: pass --seed or set TBL_SEED")
    return 0


def _load_lexicons(args):
    if getattr(args, "classes", None):
        classes = _parse_file(args.classes, "semantic-class", features.parse_semantic_classes)
    else:
        classes = features.DEFAULT_SEMANTIC_CLASSES
    if getattr(args, "shorts", None):
        shorts = _parse_file(args.shorts, "short-utterance", features.parse_short_utterances)
    else:
        shorts = features.DEFAULT_SHORT_UTTERANCES
    return classes, shorts


def _cmd_mine_cues(args) -> None:
    _check_out_path(args.out)
    corpus = _parse_file(args.corpus, "corpus", parse_corpus)
    lexicon = features.mine_cue_phrases(
        corpus, max_n=args.max_n, min_count=args.min_count, min_prob=args.min_prob
    )
    _write_atomic(args.out, features.serialize_cue_lexicon(lexicon))
    print(f"{len(lexicon)} cue entries -> {args.out}")


def _cmd_train(args) -> None:
    _check_out_path(args.out)
    mc = args.mc is not None
    seed = _resolve_seed(args, required=mc)
    corpus = _parse_file(args.corpus, "corpus", parse_corpus)
    templates = _parse_file(
        args.templates, "template", parse_templates, forward_context=args.forward_context
    )
    cues = (
        _parse_file(args.cues, "cue-lexicon", features.parse_cue_lexicon)
        if args.cues
        else None
    )
    classes, shorts = _load_lexicons(args)
    cfg = learner.TrainConfig(
        templates=templates,
        mode=learner.MONTE_CARLO if mc else learner.EXHAUSTIVE,
        r=args.mc if mc else learner.DEFAULT_R,
        seed=seed,
        theta=args.theta,
        max_iterations=args.max_iterations,
        forward_context=args.forward_context,
        initial_tag=args.initial_tag,
        jobs=args.jobs,
    )
    model = learner.train(corpus, cfg, cues=cues, classes=classes, shorts=shorts)
    _write_atomic(args.out, learner.serialize_model(model))
    stats = model.stats
    print(
        f"{len(model.rules)} rules, training accuracy "
        f"{stats.correct_initial}/{stats.n_utterances} -> "
        f"{stats.final_accuracy:.6f} -> {args.out}"
    )


def _cmd_tag(args) -> None:
    _check_out_path(args.out)
    model = _parse_file(args.model, "model", learner.parse_model)
    corpus = _parse_file(args.corpus, "corpus", parse_corpus)
    classes, shorts = _load_lexicons(args)
    import warnings as _warnings

    with _warnings.catch_warnings(record=True) as caught:
        _warnings.simplefilter("always")
        tagged = tagger.tag_corpus(model, corpus, classes, shorts)
    for w in caught:
        print(f"tbl: warning: {w.message}", file=sys.stderr)
    _write_atomic(args.out, serialize_corpus(tagged, tags="working"))
    print(f"tagged {tagged.n_utterances} utterances -> {args.out}")


def _cmd_evaluate(args) -> None:
    if args.out:
        _check_out_path(args.out)
    model = _parse_file(args.model, "model", learner.parse_model)
    corpus = _parse_file(args.corpus, "corpus", parse_corpus)
    classes, shorts = _load_lexicons(args)
    report = tagger.evaluate(model, corpus, classes, shorts)
    text = "\n".join(
        [
            tagger.render_report_kv(report),
            tagger.render_confusion_tsv(report),
            tagger.render_report_text(report),
        ]
    )
    if args.out:
        _write_atomic(args.out, text)
    else:
        sys.stdout.write(text)


def _cmd_inspect(args) -> None:
    model = _parse_file(args.model, "model", learner.parse_model)
    print(f"TBL model: {len(model.rules)} rules")
    print(f"tagset: {', '.join(model.tagset.labels)}")
    print(f"initial tag: {model.initial_tag}")
    print(
        f"trained with mode={model.mode} R={model.r} seed={model.seed} theta={model.theta}"
    )
    for k, (rule, score) in enumerate(zip(model.rules, model.scores), start=1):
        print(f"{k:4d}. ({score:+d}) {rule_to_string(rule)}")


def _parse_rules_file(text: str) -> tuple:
    rules = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            rules.append(parse_rule(line))
        except ParseError as e:
            raise ParseError(e.message, lineno) from None
    return tuple(rules)


def _cmd_gen_synthetic(args) -> None:
    _check_out_path(args.train_out)
    _check_out_path(args.test_out)
    seed = _resolve_seed(args, required=True)
    vocab = tuple(
        line.strip()
        for line in _read(args.vocab, "vocabulary").splitlines()
        if line.strip() and not line.startswith("#")
    )
    planted = _parse_file(args.rules, "planted-rules", _parse_rules_file)
    rates = None
    if args.inject_rates:
        try:
            rates = tuple(float(x) for x in args.inject_rates.split(","))
        except ValueError:
            raise _UsageError(f"--inject-rates must be comma-separated floats") from None
    classes = None
    if args.classes:
        classes = _parse_file(args.classes, "semantic-class", features.parse_semantic_classes)
    spec = tagger.SyntheticSpec(
        seed=seed,
        n_train_dialogues=args.dialogues,
        n_test_dialogues=args.test_dialogues,
        vocabulary=vocab,
        base_tag=args.base_tag,
        planted_rules=planted,
        utterances_range=(args.min_utterances, args.max_utterances),
        tokens_range=(args.min_tokens, args.max_tokens),
        noise=args.noise,
        injection_rates=rates,
        classes=classes,
    )
    train, test = tagger.generate_synthetic(spec)
    _write_atomic(args.train_out, serialize_corpus(train))
    _write_atomic(args.test_out, serialize_corpus(test))
    print(
        f"{train.n_utterances} train / {test.n_utterances} test utterances -> "
        f"{args.train_out}, {args.test_out}"
    )


def _add_lexicon_flags(p) -> None:
    p.add_argument("--classes", help="semantic-class file (class<TAB>word per line)")
    p.add_argument("--shorts", help="short-utterance file (one per line)")


def build_parser() -> _Parser:
    parser = _Parser(prog="tbl", description="Transformation-based dialogue-act tagging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mine-cues", help="mine a cue-phrase lexicon from a tagged corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--max-n", type=int, default=3)
    p.add_argument("--min-count", type=int, default=3)
    p.add_argument("--min-prob", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_mine_cues)

    p = sub.add_parser("train", help="train a rule sequence on a tagged corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--templates", required=True)
    p.add_argument("--cues", help="cue-phrase lexicon from mine-cues")
    _add_lexicon_flags(p)
    p.add_argument("--mc", type=int, metavar="R", help="Monte Carlo mode, sampling R instantiations per mis-tagged utterance")
    p.add_argument("--seed", type=int)
    p.add_argument("--theta", type=int, default=1, help="minimum net improvement to keep training")
    p.add_argument("--max-iterations", type=int, default=500)
    p.add_argument("--forward-context", action="store_true", help="allow tagat offsets +1..+3")
    p.add_argument("--initial-tag", help="override the majority initial tag")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("tag", help="tag a corpus with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    _add_lexicon_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_tag)

    p = sub.add_parser("evaluate", help="score a model against a gold-tagged corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    _add_lexicon_flags(p)
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("inspect", help="pretty-print a model's rules with scores")
    p.add_argument("--model", required=True)
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("gen-synthetic", help="generate synthetic corpora with planted rules")
    p.add_argument("--rules", required=True, help="planted rules, one canonical rule per line")
    p.add_argument("--vocab", required=True, help="vocabulary, one word per line")
    p.add_argument("--base-tag", required=True)
    p.add_argument("--dialogues", type=int, required=True)
    p.add_argument("--test-dialogues", type=int, required=True)
    p.add_argument("--min-utterances", type=int, default=4)
    p.add_argument("--max-utterances", type=int, default=10)
    p.add_argument("--min-tokens", type=int, default=3)
    p.add_argument("--max-tokens", type=int, default=9)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--inject-rates", help="comma-separated per-rule phrase injection rates")
    p.add_argument("--classes", help="semantic-class file for planted class conditions")
    p.add_argument("--seed", type=int)
    p.add_argument("--train-out", required=True)
    p.add_argument("--test-out", required=True)
    p.set_defaults(func=_cmd_gen_synthetic)

    return parser


def run_cli(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"tbl: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return int(e.code or 0)
    try:
        args.func(args)
    except (_UsageError, TblError) as e:
        print(f"tbl: {e}", file=sys.stderr)
        return 1
    except (FileNotFoundError, IsADirectoryError, PermissionError) as e:
        print(f"tbl: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # pragma: no cover - defensive
        print(f"tbl: internal error: {e}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
