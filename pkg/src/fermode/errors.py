"""Exception types raised by the simulator."""


class FermodeError(Exception):
    """Base class for all simulator errors."""


class LayoutError(FermodeError, ValueError):
    """Invalid mode layout, unknown mode or party, or mismatched layouts."""


class StateError(FermodeError, ValueError):
    """Invalid state construction (zero vector, bad occupation, bad normalization)."""


class OperatorError(FermodeError, ValueError):
    """Invalid operator: wrong dimension, not unitary, not Hermitian, bad basis map."""


class SSRViolation(FermodeError, ValueError):
    """An operator or step does not respect the parity superselection rule."""


class ScriptError(FermodeError, ValueError):
    """A protocol script failed validation."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(str(p) for p in self.problems))


class MonotoneViolation(FermodeError, AssertionError):
    """The parity monotone decreased on average under a local operation."""
