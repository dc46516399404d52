"""Exception hierarchy shared by all coprimax modules."""


class CoprimaxError(Exception):
    """Base class for all errors raised by this package."""


class NonBinaryEntry(CoprimaxError):
    """A similarity or prediction matrix contains a value outside {0, 1}."""


class EmptyModelSet(CoprimaxError):
    """A matrix with zero model columns was supplied."""


class DimensionMismatch(CoprimaxError):
    """Shapes of related inputs do not line up."""


class EmptyClass(CoprimaxError):
    """An operation requiring observations got a class with zero rows."""


class ZeroStandardError(CoprimaxError):
    """A test statistic was requested with a zero standard error."""


class NotPositiveSemidefinite(CoprimaxError):
    """A correlation matrix is indefinite beyond repair tolerance."""


class NonConvergence(CoprimaxError):
    """A numerical routine hit its iteration cap above tolerance."""


class IndexOutOfRange(CoprimaxError):
    """A model index refers outside the candidate set."""


class InfeasibleCorrelation(CoprimaxError):
    """Requested binary correlation is incompatible with the marginals."""


class ParameterOutOfRange(CoprimaxError):
    """A constructed parameter left its admissible range."""


class DegenerateGroupSizes(CoprimaxError):
    """Group-size sampling kept producing an empty class."""


class ParseError(CoprimaxError):
    """An input file could not be parsed."""
