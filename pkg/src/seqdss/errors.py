"""Exception hierarchy shared across the package."""


class SeqdssError(Exception):
    """Base class for all package errors."""


class InadmissibleParameter(SeqdssError, ValueError):
    """Distribution parameter outside its admissible set (e.g. variance <= 0)."""


class OutOfSupport(SeqdssError, ValueError):
    """Observation outside the support of the family."""


class UnsupportedFamily(SeqdssError, ValueError):
    """No catalog entry (or no integration rule) for the requested family."""


class DuplicateHypothesis(SeqdssError, ValueError):
    """Two hypotheses specify the same distribution."""


class ZeroEvidence(SeqdssError, ArithmeticError):
    """Every hypothesis assigns zero likelihood to an observation at working precision."""


class RankTooHigh(SeqdssError, ValueError):
    """The diagnostic statistic has more dimensions than the solver supports."""


class HorizonNotConverged(SeqdssError, RuntimeError):
    """Root value still moving at the maximum truncation horizon."""


class NonterminatingPolicy(SeqdssError, RuntimeError):
    """A simulated replication exceeded the step cap without stopping."""


class StageOutOfRange(SeqdssError, IndexError):
    """Stage index outside the solved horizon."""


class ConfigError(SeqdssError, ValueError):
    """Problem configuration failed validation."""
