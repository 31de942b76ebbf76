"""Exception types raised across the package.

Every operation documents which of these it raises; callers that want a
single catch-all can use :class:`CbattackError`.
"""


class CbattackError(Exception):
    """Base class for all errors raised by this package."""


class LengthMismatch(CbattackError):
    """Two bit strings that must have equal length do not."""


class EmptyTemplate(CbattackError):
    """A bit string or template with zero bits where content is required."""


class ShapeMismatch(CbattackError):
    """Template geometry (W, H) or block layout does not fit the operation."""


class KindMismatch(CbattackError):
    """Protected templates of different kinds were matched against each other."""


class ParamMismatch(CbattackError):
    """Bloom-filter sets with different parameters were matched."""


class InvalidParams(CbattackError):
    """Helper-data or transform parameters violate their constraints."""


class DimMismatch(CbattackError):
    """Feature vector dimension does not match the transform's input size."""


class IncompatibleGenome(CbattackError):
    """Genome kind does not fit the transform scheme being attacked."""


class EmptyTargets(CbattackError):
    """An attack was asked to match against zero targets."""


class InvalidConfig(CbattackError):
    """A configuration value is missing, unknown or out of range."""


class EmptyScores(CbattackError):
    """A score population required to be nonempty is empty."""


class DegenerateDistribution(CbattackError):
    """A score sample has zero variance; a Gaussian cannot be fitted."""


class MeanOrderViolation(CbattackError):
    """Fitted means are not in the required order (imposter below attack)."""


class MissingAttackResult(CbattackError):
    """Score assembly expected an attack result for a subject and found none."""


class ParseError(CbattackError):
    """A dataset file is malformed; the message names the offending row."""


class ShapeInconsistent(CbattackError):
    """Loaded dataset rows disagree on dimension or per-subject sample count."""


class NoResults(CbattackError):
    """Report generation found no completed result rows."""
