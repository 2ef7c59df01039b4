"""Exception hierarchy shared by the solver and the CLI."""

from __future__ import annotations


class ElastoSGError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ElastoSGError):
    """Rejected input: bad domain, resolution, example id, time step, ..."""

    exit_code = 2


class InvalidDomainError(ConfigurationError):
    pass


class InvalidResolutionError(ConfigurationError):
    pass


class InconsistencyError(ConfigurationError):
    """Objects built on different meshes/spaces were combined."""


class CapabilityError(ConfigurationError):
    """Requested degree/rule is not supported."""


class CFLError(ConfigurationError):
    """Time step or CFL constant violates the stability gate."""


class DomainError(ElastoSGError):
    """Point outside the reference simplex."""


class AssemblyError(ElastoSGError):
    """Degenerate element met during assembly."""

    def __init__(self, tet: int, det: float):
        super().__init__(f"degenerate tetrahedron {tet} (jacobian det {det:.3e})")
        self.tet = tet
        self.det = det


class SolverError(ElastoSGError):
    """Iterative mass solve failed to converge."""

    def __init__(self, iterations: int, residual: float):
        super().__init__(
            f"mass solve did not converge after {iterations} iterations "
            f"(relative residual {residual:.3e})"
        )
        self.iterations = iterations
        self.residual = residual


class InstabilityError(ElastoSGError):
    """The time march blew up (non-finite or runaway norm)."""

    exit_code = 3

    def __init__(self, step: int, time: float, norm: float):
        super().__init__(f"instability at step {step} (t={time:.6g}, |u|={norm:.3e})")
        self.step = step
        self.time = time
        self.norm = norm


class UndefinedOrderError(ElastoSGError):
    """Convergence order requested from a non-positive error."""
