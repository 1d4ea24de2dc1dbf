"""Exception hierarchy.

The CLI maps the three families below onto exit codes: parse errors (2),
evaluation errors (3) and the oracle enumeration cap (4).
"""


class LaserError(Exception):
    """Base class for every error raised by this package."""


class ParseError(LaserError, ValueError):
    pass


class EvaluationError(LaserError):
    pass


# -- specification language ------------------------------------------------

class SpecSyntaxError(ParseError):
    def __init__(self, message, offset, expected=()):
        self.offset = offset
        self.expected = tuple(expected)
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class UnknownPredicate(ParseError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class ArityMismatch(ParseError):
    pass


class UnboundVariable(ParseError):
    pass


class DuplicateWitnessLabel(ParseError):
    pass


class TemporalOperatorInCondition(ParseError):
    pass


class EmptyActionList(ParseError):
    pass


# -- fact database -----------------------------------------------------------

class TimeOutOfRange(EvaluationError, IndexError):
    pass


class DuplicateKey(LaserError, ValueError):
    pass


class ProbOutOfRange(LaserError, ValueError):
    pass


class UnknownConstant(LaserError, ValueError):
    pass


class GroundingExplosion(EvaluationError):
    pass


# -- provenance / checker ---------------------------------------------------

class MissingProbability(EvaluationError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class UnknownWitnessLabel(EvaluationError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class NonDeterministicDatabase(EvaluationError):
    pass


class UnsupportedOperatorInIntervalMode(EvaluationError):
    pass


class TooManyFacts(LaserError):
    pass


# -- losses / data / training ---------------------------------------------

class DTauNotBelowDMax(LaserError, ValueError):
    pass


class InvalidConfig(LaserError, ValueError):
    pass


class DimensionMismatch(LaserError, ValueError):
    pass


class EmptyDataset(LaserError, ValueError):
    pass


class NonFiniteLoss(LaserError, FloatingPointError):
    pass


class TooFewEpisodes(LaserError, ValueError):
    pass
