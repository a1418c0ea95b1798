"""Exception types shared across the package.

File-not-found, I/O and index errors use the builtin exceptions
(FileNotFoundError, OSError, IndexError, TypeError); everything
domain-specific derives from SpexError so callers can catch one base.
"""


class SpexError(Exception):
    """Base class for all domain errors raised by this package."""


class UnsupportedFormatError(SpexError):
    """File exists but its contents do not parse as the expected format
    (non mono-PCM WAV audio, truncated or corrupt checkpoint archive)."""


class SampleRateMismatchError(SpexError):
    """Waveform sample rate differs from the 8 kHz the pipeline expects."""


class EmptyCorpusError(SpexError):
    """Corpus directory contains no usable utterances."""


class SilentSourceError(SpexError):
    """A source waveform has zero power where nonzero power is required."""


class InsufficientSpeakersError(SpexError):
    """Corpus has fewer eligible speakers than a mixture needs."""


class InsufficientUtterancesError(SpexError):
    """A speaker cannot supply both a target and a distinct reference."""


class TooShortError(SpexError):
    """Input signal shorter than the minimum the operation can frame."""


class EmptyAfterVadError(SpexError):
    """Voice activity detection removed every frame."""


class ShapeMismatchError(SpexError):
    """Tensor shapes are inconsistent with the layer or model config."""


class NonFiniteLossError(SpexError):
    """NaN or Inf appeared in a loss term; the training step is aborted."""


class EmptyAfterSegmentationError(SpexError):
    """No training segments survived the length and silence filters."""


class SilentReferenceError(SpexError):
    """Reference signal is identically zero after mean removal."""


class UnknownKeyError(SpexError):
    """Configuration contains a key the schema does not define."""


class RangeError(SpexError):
    """A configuration value violates its documented range constraint."""
