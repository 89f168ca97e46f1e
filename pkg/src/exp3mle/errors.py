"""Exception types shared across the package."""


class Exp3MLEError(Exception):
    """Base class for every error this package raises on purpose."""


class DomainError(Exp3MLEError, ValueError):
    """An argument violates a documented precondition."""


class NonFiniteInput(DomainError):
    """A numeric input contains NaN or an infinity."""


class ZeroProbabilityPull(Exp3MLEError):
    """The chosen arm has probability exactly zero in machine arithmetic."""


class SimulationCollapse(Exp3MLEError):
    """The simulated policy put zero mass on the arm that was drawn.

    Mirrors the failure mode where the reference computation of the
    exponential-weights update returns NA once a probability underflows.
    """

    def __init__(self, step: int):
        self.step = step
        super().__init__(f"simulation collapsed at step {step}: drawn arm has probability 0")


class ReplayCollapse(Exp3MLEError):
    """A replayed probability underflowed to zero at an observed arm."""

    def __init__(self, step: int):
        self.step = step
        super().__init__(f"replay collapsed at step {step}: observed arm has probability 0")


class BracketNotFound(Exp3MLEError):
    """Bisection could not locate the target interval."""


class AllNegInfinity(Exp3MLEError):
    """The optimizer never observed a finite objective value."""


class DegenerateInput(DomainError):
    """A statistical routine received constant or otherwise degenerate data."""


class EmptyInput(DomainError):
    """A routine that needs data received none."""
