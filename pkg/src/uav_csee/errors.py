"""Exception types raised across the package."""


class ScenarioError(ValueError):
    """Malformed or invalid scenario document."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class DegenerateDetectionError(ValueError):
    """The warden can reach zero detection error, so covertness is impossible."""


class DegenerateLegError(ValueError):
    """A trajectory leg is shorter than the minimum leg length."""


class DegenerateGeometryError(ValueError):
    """A linearization gradient is undefined at the expansion point."""


class InfeasibleIntervalError(ValueError):
    """The admissible interval for the phase-switching factor is empty."""


class BracketError(ValueError):
    """Bisection endpoints do not bracket a sign change."""


class InfeasibleStartError(ValueError):
    """No admissible initial point exists for the scenario."""


class SubproblemInfeasibleError(RuntimeError):
    """A convex subproblem stayed infeasible after reseeding its slacks."""
