"""
Exception hierarchy for brwlab.

Every error raised on purpose by the library derives from ``BRWError`` so
callers (and the command-line front-end) can separate model problems from
programming errors.
"""
from typing import Any, Iterable, Optional


class BRWError(Exception):
    """Root of all brwlab errors."""


class ModelRejectedError(BRWError, ValueError):
    """The model is malformed: unnormalized laws, negative rates, unbounded rows."""


class AssumptionViolationError(ModelRejectedError):
    """
    An irreducibility class where every vertex has exactly one child inside
    the class almost surely.

    Attributes:
        members (tuple): Labels of the offending class.
    """

    def __init__(self, members: Iterable[Any]) -> None:
        self.members = tuple(members)
        shown = ", ".join(repr(m) for m in self.members[:8])
        if len(self.members) > 8:
            shown += ", ..."
        super().__init__(
            f"every vertex of class {{{shown}}} places exactly one child inside "
            f"the class with probability 1"
        )


class NotLocallyIsomorphicError(BRWError):
    """
    Two vertices in the same fiber of a projection push their laws forward
    to different laws.

    Attributes:
        first: Label of the first witness vertex.
        second: Label of the second witness vertex.
    """

    def __init__(self, first: Any, second: Any, fiber: Any) -> None:
        self.first = first
        self.second = second
        self.fiber = fiber
        super().__init__(
            f"vertices {first!r} and {second!r} both map to {fiber!r} "
            f"but their pushforward laws differ"
        )


class TruncationError(BRWError):
    """A request needs more of a lazy space than its cap or ball budget allows."""


class DomainError(BRWError, ValueError):
    """An input vector or parameter lies outside the domain of an operation."""


class ReducibleMatrixError(BRWError, ValueError):
    """A matrix that must be irreducible has more than one strong component."""

    def __init__(self, components: int, detail: Optional[str] = None) -> None:
        self.components = components
        msg = f"matrix is reducible ({components} strongly connected components)"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class NumericalError(BRWError):
    """A monotonicity or ordering property that must hold failed numerically."""


class CouplingError(BRWError):
    """Truncated processes sharing randomness stopped being ordered."""


class ConfigError(BRWError, ValueError):
    """An experiment configuration does not match the expected schema."""
