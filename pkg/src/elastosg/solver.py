"""Explicit three-level time stepper and its mass solver."""

from __future__ import annotations

import logging
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    FeSpace,
    NonlinearLoad,
    PhysicalParams,
    SymmetricSparseOperator,
    apply_dirichlet,
    assemble_mass,
    assemble_stiffness,
    build_space,
)
from .errors import CFLError, InconsistencyError, InstabilityError, SolverError
from .mesh import build_box_mesh
from .problem import ExperimentConfig, StressField, StressRecovery, initial_displacement, initial_velocity

logger = logging.getLogger(__name__)

INSTABILITY_FACTOR = 1e12


class MassSolver:
    """Jacobi-preconditioned conjugate gradients for an SPD operator.

    Accepts a single right-hand side (n,) or a block (n, m); columns are
    iterated together but with independent step lengths.
    """

    def __init__(self, op: SymmetricSparseOperator, tol: float = 1e-10, max_iter: int | None = None):
        self.op = op
        self.tol = tol
        self.max_iter = max_iter or max(10 * int(math.ceil(math.sqrt(op.dimension))), 50)
        self.inv_diag = 1.0 / op.diagonal()
        self.last_iterations = 0

    def solve(self, b: np.ndarray, x0: np.ndarray | None = None) -> np.ndarray:
        A = self.op.matrix
        b = np.asarray(b, dtype=float)
        vec = b.ndim == 1
        B = b[:, None] if vec else b
        Dinv = self.inv_diag[:, None]
        bnorm = np.linalg.norm(B, axis=0)
        target = self.tol * bnorm
        X = np.zeros_like(B) if x0 is None else np.array(x0, dtype=float).reshape(B.shape)
        R = B - A @ X
        Z = Dinv * R
        P = Z.copy()
        rz = np.einsum("ij,ij->j", R, Z)
        k = 0
        rnorm = np.linalg.norm(R, axis=0)
        while np.any(rnorm > target) and k < self.max_iter:
            AP = A @ P
            pap = np.einsum("ij,ij->j", P, AP)
            active = rnorm > target
            alpha = np.where(active, rz / np.where(pap == 0, 1.0, pap), 0.0)
            X += alpha * P
            R -= alpha * AP
            Z = Dinv * R
            rz_new = np.einsum("ij,ij->j", R, Z)
            beta = np.where(active, rz_new / np.where(rz == 0, 1.0, rz), 0.0)
            P = Z + beta * P
            rz = rz_new
            rnorm = np.linalg.norm(R, axis=0)
            k += 1
        self.last_iterations = k
        if np.any(rnorm > target):
            worst = float(np.max(rnorm / np.where(bnorm == 0, 1.0, bnorm)))
            raise SolverError(k, worst)
        return X[:, 0] if vec else X


def cfl_max_sigma(params: PhysicalParams, C_p: float, C_ts: float, h: float) -> float:
    """Largest admissible time step C_ts * h, after checking C_ts."""
    C1 = C_p**-2 / (18.0 * (params.lambda1 + params.lambda2))
    bound = math.sqrt(2.0 * params.rho * C1)
    if not 0.0 < C_ts < bound:
        raise CFLError(f"C_ts = {C_ts} is not admissible; need 0 < C_ts < sqrt(2 rho C1) = {bound:.6g}")
    return C_ts * h


@dataclass
class StateHistory:
    u_prev: np.ndarray
    u_curr: np.ndarray
    step_index: int
    sigma: float

    @property
    def time(self) -> float:
        return self.step_index * self.sigma


def bootstrap(u0: np.ndarray, v0: np.ndarray, sigma: float, accel: np.ndarray | None = None) -> StateHistory:
    """Two starting levels: u0 and the Taylor step u0 + sigma * v0.

    Passing the initial acceleration ``accel`` adds the sigma^2/2 term.
    """
    u0 = np.asarray(u0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if u0.shape != v0.shape:
        raise InconsistencyError(f"u0 has shape {u0.shape} but v0 has {v0.shape}")
    u1 = u0 + sigma * v0
    if accel is not None:
        u1 = u1 + 0.5 * sigma**2 * accel
    return StateHistory(u0.copy(), u1, 1, sigma)


@dataclass
class Stepper:
    """Operators needed by one step, built once per space."""

    space: FeSpace
    params: PhysicalParams
    stiffness: SymmetricSparseOperator
    mass: SymmetricSparseOperator
    mass_solver: MassSolver
    load: NonlinearLoad | None  # None disables the sine source
    mask: np.ndarray = field(init=False)

    def __post_init__(self):
        self.mask = self.space.vector_boundary_mask

    @classmethod
    def for_space(cls, space: FeSpace, params: PhysicalParams, tol: float = 1e-10,
                  nonlinear: bool = True) -> "Stepper":
        mass = assemble_mass(space)
        solver = MassSolver(apply_dirichlet(mass, space.boundary_mask), tol=tol)
        return cls(space, params, assemble_stiffness(space, params), mass, solver,
                   NonlinearLoad(space) if nonlinear else None)

    def rhs(self, state: StateHistory) -> np.ndarray:
        N = self.space.scalar_dof_count
        u, up = state.u_curr, state.u_prev
        force = self.stiffness @ u
        if self.load is not None:
            force = force - self.load(u)
        w = (2.0 * u - up).reshape(3, N)
        mw = (self.mass.matrix @ w.T).T.reshape(-1)
        r = mw - (state.sigma**2 / self.params.rho) * force
        r[self.mask] = 0.0
        return r

    def __call__(self, state: StateHistory) -> StateHistory:
        return step(state, self)

    def acceleration(self, u: np.ndarray) -> np.ndarray:
        """Solve M a = (F(u) - K u) / rho with pinned boundary."""
        N = self.space.scalar_dof_count
        force = self.stiffness @ u
        if self.load is not None:
            force = force - self.load(u)
        r = -force / self.params.rho
        r[self.mask] = 0.0
        a = self.mass_solver.solve(r.reshape(3, N).T).T.reshape(-1)
        a[self.mask] = 0.0
        return a


def step(state: StateHistory, stepper: Stepper) -> StateHistory:
    """Advance the recursion M u+ = M (2u - u-) - (sigma^2/rho)(K u - F(u))."""
    N = stepper.space.scalar_dof_count
    r = stepper.rhs(state)
    guess = (2.0 * state.u_curr - state.u_prev).reshape(3, N).T
    u_next = stepper.mass_solver.solve(r.reshape(3, N).T, x0=guess).T.reshape(-1)
    u_next[stepper.mask] = 0.0
    n = state.step_index + 1
    if not np.all(np.isfinite(u_next)):
        raise InstabilityError(n, n * state.sigma, float("nan"))
    return StateHistory(state.u_curr, u_next, n, state.sigma)


@dataclass
class Trajectory:
    """Captured snapshots of a run.  ``steps[i]`` is the step index of ``u[i]``."""

    space: FeSpace
    sigma: float
    steps: list[int] = field(default_factory=list)
    u: list[np.ndarray] = field(default_factory=list)
    stress: list[StressField] = field(default_factory=list)
    l2: list[float] = field(default_factory=list)  # L2 norm at every step
    stepper: Stepper | None = field(default=None, repr=False)

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.steps) * self.sigma

    def at_step(self, n: int) -> int:
        return self.steps.index(n)


def _l2(mass: SymmetricSparseOperator, u: np.ndarray) -> float:
    U = u.reshape(3, -1)
    return math.sqrt(max(float(np.einsum("ci,ci->", U, (mass.matrix @ U.T).T)), 0.0))


def run(
    config: ExperimentConfig,
    capture_every: int | None = 1,
    with_stress: bool = False,
    progress_every: int | None = None,
    stream=None,
    nonlinear: bool = True,
    stepper: Stepper | None = None,
) -> Trajectory:
    """March the configured problem to T = N sigma.

    Snapshots (copies) are captured at step indices divisible by
    ``capture_every`` plus the final step; ``None`` keeps only the final one.
    The L2 norm is recorded at every step regardless.
    """
    mesh = build_box_mesh(config.lo, config.hi, config.cells_per_axis)
    if not config.allow_unstable:
        bound = cfl_max_sigma(config.params, config.C_p, config.C_ts, mesh.h)
        if config.sigma > bound * (1.0 + 1e-12):
            raise CFLError(f"sigma = {config.sigma:.6g} exceeds C_ts*h = {bound:.6g} (h = {mesh.h:.6g})")
    N = config.n_steps
    if stepper is None:
        space = build_space(mesh, config.degree)
        stepper = Stepper.for_space(space, config.params, nonlinear=nonlinear)
    else:
        space = stepper.space
    mass = stepper.mass

    if config.zero_initial_data:
        u0 = np.zeros(space.vector_dof_count)
        v0 = np.zeros(space.vector_dof_count)
    else:
        u0 = initial_displacement(space, config.ball, config.initial_data, mass)
        v0 = initial_velocity(space, config.ball, config.initial_data, mass)

    recover = StressRecovery(space, config.params, mass) if with_stress else None
    traj = Trajectory(space, config.sigma, stepper=stepper)

    def capture(n: int, u: np.ndarray) -> None:
        traj.steps.append(n)
        traj.u.append(u.copy())
        if recover is not None:
            traj.stress.append(recover(u))

    accel = stepper.acceleration(u0) if config.start == "taylor2" else None
    state = bootstrap(u0, v0, config.sigma, accel)
    norm0 = _l2(mass, u0)
    traj.l2.extend([norm0, _l2(mass, state.u_curr)])
    ref_norm = max(traj.l2)
    if capture_every is not None:
        capture(0, state.u_prev)
        if 1 % capture_every == 0 or N == 1:
            capture(1, state.u_curr)
    elif N == 1:
        capture(1, state.u_curr)

    stream = stream if stream is not None else sys.stderr
    while state.step_index < N:
        state = step(state, stepper)
        n = state.step_index
        nrm = _l2(mass, state.u_curr)
        traj.l2.append(nrm)
        if not math.isfinite(nrm) or (ref_norm > 0 and nrm > INSTABILITY_FACTOR * ref_norm):
            raise InstabilityError(n, n * config.sigma, nrm)
        if (capture_every is not None and n % capture_every == 0) or n == N:
            capture(n, state.u_curr)
        if progress_every and n % progress_every == 0:
            print(f"step {n} t={n * config.sigma:.6g} l2={nrm:.6e}", file=stream)
    return traj


def stable_sigma_limit(stepper: Stepper) -> float:
    """Largest sigma for which the linear recursion is stable: 2 sqrt(rho / lambda_max).

    lambda_max is the largest generalized eigenvalue of (K, M) restricted to
    interior dofs.
    """
    from scipy import sparse
    from scipy.sparse.linalg import eigsh

    inner = ~stepper.mask
    K = stepper.stiffness.matrix[inner][:, inner]
    Ms = stepper.mass.matrix[~stepper.space.boundary_mask][:, ~stepper.space.boundary_mask]
    M = sparse.block_diag([Ms] * 3).tocsc()
    if K.shape[0] <= 600:
        from scipy.linalg import eigh

        lam = float(eigh(K.toarray(), M.toarray(), eigvals_only=True)[-1])
    else:
        lam = float(eigsh(K.tocsc(), k=1, M=M, which="LA", return_eigenvectors=False, tol=1e-8)[0])
    return 2.0 * math.sqrt(stepper.params.rho / lam)
