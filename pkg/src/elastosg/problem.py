"""Initial data, the two benchmark configurations, and stress recovery."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .assembly import FeSpace, PhysicalParams, SymmetricSparseOperator
from .elements import quadrature
from .errors import ConfigurationError, InconsistencyError, SolverError

# (i, j) pairs of the stored stress components, in storage order
STRESS_COMPONENTS: tuple[tuple[int, int], ...] = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
STRESS_LABELS = ("11", "22", "33", "12", "13", "23")


@dataclass(frozen=True)
class BallInitialData:
    """Ball-supported initial bump sin(2 pi r0 |x - c|) (1,1,1)."""

    center: tuple[float, float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigurationError(f"ball radius must be positive, got {self.radius}")

    def check_inside(self, lo, hi) -> None:
        c = np.asarray(self.center, dtype=float)
        if np.any(c - self.radius < np.asarray(lo)) or np.any(c + self.radius > np.asarray(hi)):
            raise ConfigurationError(
                f"ball B({list(c)}, {self.radius}) is not inside the domain {list(lo)}..{list(hi)}"
            )
        # a ball exactly tangent to a face would still have an open interior
        # inside the box; only reject strict overlap above.

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Pointwise values (P, 3)."""
        r = np.linalg.norm(np.atleast_2d(x) - np.asarray(self.center), axis=1)
        s = np.where(r < self.radius, np.sin(2.0 * math.pi * self.radius * r), 0.0)
        return np.repeat(s[:, None], 3, axis=1)


@dataclass(frozen=True)
class ExperimentConfig:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    T: float
    params: PhysicalParams
    ball: BallInitialData
    C_p: float = 1.0 / 3.0
    C_ts: float = 0.5
    degree: int = 2
    cells_per_axis: int = 4
    sigma: float = 2.0**-7
    allow_unstable: bool = False
    # "project" (L2 projection) or "interpolate" (nodal); nodal values of the
    # radius-1/8 ball vanish on every mesh coarser than 8 cells per unit
    initial_data: str = "project"
    zero_initial_data: bool = False
    # "taylor1": u1 = u0 + sigma v; "taylor2" adds sigma^2/2 times the initial acceleration
    start: str = "taylor1"
    example: int | None = field(default=None, compare=False)

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    @property
    def C1(self) -> float:
        return self.C_p**-2 / (18.0 * (self.params.lambda1 + self.params.lambda2))

    @property
    def cts_bound(self) -> float:
        return math.sqrt(2.0 * self.params.rho * self.C1)

    @property
    def n_steps(self) -> int:
        ratio = self.T / self.sigma
        N = round(ratio)
        if N < 1 or abs(ratio - N) > 1e-9 * max(1.0, ratio):
            raise ConfigurationError(f"T/sigma = {ratio!r} is not a positive integer")
        return N


def example_config(which: int) -> ExperimentConfig:
    """The two benchmark problems (unit cube and [-1,1]^3)."""
    if which == 1:
        params = PhysicalParams.from_modulus(E=2.5, beta=0.25, rho=1.0)
        return ExperimentConfig(
            lo=(0.0, 0.0, 0.0),
            hi=(1.0, 1.0, 1.0),
            T=1.0,
            params=params,
            ball=BallInitialData((0.5, 0.5, 0.5), 2.0**-3),
            example=1,
        )
    if which == 2:
        params = PhysicalParams.from_modulus(E=2.5, beta=0.1, rho=1.0)
        return ExperimentConfig(
            lo=(-1.0, -1.0, -1.0),
            hi=(1.0, 1.0, 1.0),
            T=2.0,
            params=params,
            ball=BallInitialData((0.0, 0.0, 0.0), 2.0**-3),
            example=2,
        )
    raise ConfigurationError(f"unknown example {which!r}; expected 1 or 2")


def initial_displacement(
    space: FeSpace,
    ball: BallInitialData,
    mode: str = "interpolate",
    mass: SymmetricSparseOperator | None = None,
) -> np.ndarray:
    """Initial displacement coefficients (flat, component-major).

    ``mode="interpolate"`` takes nodal values; ``mode="project"`` computes the
    L2 projection onto the space with homogeneous boundary values.
    """
    ball.check_inside(space.mesh.lo, space.mesh.hi)
    if mode == "interpolate":
        u = space.interpolate(ball)
    elif mode == "project":
        u = _project_ball(space, ball, mass)
    else:
        raise ConfigurationError(f"unknown initial data mode {mode!r}")
    u[space.vector_boundary_mask] = 0.0
    return u


def initial_velocity(space: FeSpace, ball: BallInitialData, mode: str = "interpolate", mass=None) -> np.ndarray:
    """Initial velocity; identical to the initial displacement for this problem."""
    return initial_displacement(space, ball, mode, mass)


def _project_ball(space: FeSpace, ball: BallInitialData, mass) -> np.ndarray:
    from .assembly import apply_dirichlet, assemble_mass
    from .solver import MassSolver

    rule = quadrature(8)
    jac, _, det, origin = space.geometry()
    xq = origin[:, None, :] + np.einsum("eij,qj->eqi", jac, rule.ref_points)
    vals = ball(xq.reshape(-1, 3))[:, 0].reshape(xq.shape[:2])
    phi = space.basis.values(rule.ref_points)
    local = np.einsum("q,e,eq,qa->ea", rule.weights, det, vals, phi)
    rhs = np.bincount(space.element_dof_map.ravel(), local.ravel(), space.scalar_dof_count)
    mask = space.boundary_mask
    rhs[mask] = 0.0
    mass = assemble_mass(space) if mass is None else mass
    c = MassSolver(apply_dirichlet(mass, mask)).solve(rhs)
    return np.tile(c, 3)


@dataclass(frozen=True, eq=False)
class StressField:
    """Six scalar coefficient vectors: psi11, psi22, psi33, psi12, psi13, psi23."""

    components: np.ndarray  # (6, N)

    def component(self, i: int, j: int) -> np.ndarray:
        key = (min(i, j), max(i, j))
        return self.components[STRESS_COMPONENTS.index(key)]

    def __sub__(self, other: "StressField") -> "StressField":
        return StressField(self.components - other.components)


class StressRecovery:
    """L2 projection of lambda1 div(u) I + lambda2 (grad u + grad u^T).

    The right-hand-side integrals use a rule exact for the product of a
    degree k-1 stress and a degree k test function.
    """

    def __init__(self, space: FeSpace, params: PhysicalParams, mass: SymmetricSparseOperator,
                 tol: float = 1e-12):
        from .solver import MassSolver

        self.space = space
        self.params = params
        self.mass = mass
        self.tol = tol
        self.solver = MassSolver(mass, tol=tol)
        rule = quadrature(2 * space.degree)
        _, _, det, _ = space.geometry()
        self.grads = space.physical_gradients(rule.ref_points)  # (T, q, nb, 3)
        self.phi_w = np.einsum("q,e,qa->eqa", rule.weights, det, space.basis.values(rule.ref_points))

    def __call__(self, u_coeffs: np.ndarray) -> StressField:
        space = self.space
        N = space.scalar_dof_count
        u_coeffs = np.asarray(u_coeffs, dtype=float)
        if u_coeffs.shape != (3 * N,):
            raise InconsistencyError(f"expected {3 * N} coefficients, got {u_coeffs.shape}")
        U = u_coeffs.reshape(3, N)[:, space.element_dof_map]  # (3, T, nb)
        # G[e, q, c, j] = d_j u_c at quadrature points
        G = np.einsum("eqaj,cea->eqcj", self.grads, U, optimize=True)
        div = np.einsum("eqcc->eq", G)
        lam1, lam2 = self.params.lambda1, self.params.lambda2
        rhs = np.empty((N, 6))
        for s, (i, j) in enumerate(STRESS_COMPONENTS):
            val = lam2 * (G[:, :, j, i] + G[:, :, i, j])
            if i == j:
                val = val + lam1 * div
            local = np.einsum("eq,eqa->ea", val, self.phi_w)
            rhs[:, s] = np.bincount(space.element_dof_map.ravel(), local.ravel(), N)
        coeffs = self.solver.solve(rhs)
        res = np.linalg.norm(self.mass @ coeffs - rhs)
        scale = np.linalg.norm(rhs)
        if scale > 0 and res > 1e-10 * scale:
            raise SolverError(self.solver.last_iterations, res / scale)
        return StressField(np.ascontiguousarray(coeffs.T))


def recover_stress(space: FeSpace, u_coeffs: np.ndarray, params: PhysicalParams,
                   mass: SymmetricSparseOperator) -> StressField:
    return StressRecovery(space, params, mass)(u_coeffs)
