"""Exceptions raised by :mod:`astinlay`.

All of them derive from :class:`AstInLayError` so that callers (and the
command line) can tell input problems apart from programming errors.
"""


class AstInLayError(Exception):
    pass


class InputFormatError(AstInLayError):
    pass


class InvalidSpan(AstInLayError):
    pass


class SourceMismatch(AstInLayError):
    pass


# token-level predictions
class MissingRealizedToken(AstInLayError):
    pass


class SpanOverlap(AstInLayError):
    pass


class UnsortedSpans(AstInLayError):
    pass


class ProbabilityOutOfRange(AstInLayError):
    pass


class EmptySequence(AstInLayError):
    pass


class ZeroProbability(AstInLayError):
    pass


# clustering
class AggregationMismatch(AstInLayError):
    pass


class UnknownCategoryName(AstInLayError):
    pass


class DuplicateKind(AstInLayError):
    pass


class MappingParseError(AstInLayError):
    pass


# explanations
class MissingGeneratedSpan(AstInLayError):
    pass


class MissingTlp(AstInLayError):
    pass


class ConfigMismatch(AstInLayError):
    pass


# causal estimation
class DegenerateVariance(AstInLayError):
    pass


class LengthMismatch(AstInLayError):
    pass


class RankDeficient(AstInLayError):
    pass


class InsufficientSamples(AstInLayError):
    pass


# completions endpoint
class LogprobsUnsupported(AstInLayError):
    pass


class AuthError(AstInLayError):
    pass


class SpanReconstructionFailure(AstInLayError):
    pass


class EndpointError(AstInLayError):
    pass
