"""Transformation-based learning for dialogue-act tagging.

A trained model is an initial tag plus an ordered rule sequence; rules
fire on features of the utterance (cue phrases, speaker change, length,
punctuation, short-utterance identity, semantic classes) and on the
working tags of nearby utterances. Training greedily appends the rule
with the largest net error reduction, either exhaustively or with Monte
Carlo sampling of candidate rules.
"""

from .corpus import (
    Corpus,
    Dialogue,
    Tagset,
    Utterance,
    parse_corpus,
    serialize_corpus,
    split_by_dialogue,
    tokenize,
)
from .errors import FeatureError, ParseError, TblError, TrainingError, ValidationError
from .features import (
    CuePhraseEntry,
    CuePhraseLexicon,
    FeatureView,
    SemanticClassLexicon,
    ShortUtteranceList,
    extract_features,
    length_bucket,
    mine_cue_phrases,
    parse_cue_lexicon,
    serialize_cue_lexicon,
    speaker_change,
)
from .learner import (
    Model,
    TrainConfig,
    generate_candidates,
    initial_policy,
    parse_model,
    score_rule,
    select_best,
    serialize_model,
    train,
)
from .rng import RngStream
from .rules import (
    Condition,
    Rule,
    TaggingState,
    Template,
    apply_rule,
    instantiate_template,
    parse_rule,
    parse_template,
    parse_templates,
    rule_matches,
    rule_to_string,
)
from .tagger import (
    EvalReport,
    SyntheticSpec,
    evaluate,
    generate_synthetic,
    render_confusion_tsv,
    render_report_kv,
    render_report_text,
    tag_corpus,
)

__version__ = "0.1.0"
