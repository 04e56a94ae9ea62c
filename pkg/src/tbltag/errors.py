"""Exception types shared across the package."""


class TblError(Exception):
    """Base class for every error this package raises deliberately."""


class ParseError(TblError):
    """Malformed text input (corpus, lexicon, template, rule, or model file)."""

    def __init__(self, message: str, line: int | None = None):
        self.message = message
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class ValidationError(TblError):
    """Well-formed input that violates a domain invariant or precondition."""


class FeatureError(TblError):
    """Feature extraction or cue-phrase mining failed."""


class TrainingError(TblError):
    """Invalid training configuration, corpus, or a broken training invariant."""
