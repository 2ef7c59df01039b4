"""Discrete norms, error reports and convergence-order estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .assembly import FeSpace, SymmetricSparseOperator, _scatter_matrix
from .elements import quadrature
from .errors import InconsistencyError, UndefinedOrderError
from .problem import StressField


@dataclass(frozen=True)
class NormReport:
    l2: float
    b_norm: float
    combined: float
    t: float | None = None


def _check(space: FeSpace, coeffs: np.ndarray) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (space.vector_dof_count,):
        raise InconsistencyError(f"expected {space.vector_dof_count} coefficients, got {coeffs.shape}")
    return coeffs


def l2_norm(space: FeSpace, coeffs: np.ndarray, mass: SymmetricSparseOperator) -> float:
    """sqrt of sum over components of c_l^T M c_l."""
    U = _check(space, coeffs).reshape(3, -1)
    q = float(np.einsum("ci,ci->", U, (mass.matrix @ U.T).T))
    return math.sqrt(max(q, 0.0))


def b_norm(space: FeSpace, coeffs: np.ndarray, stiffness: SymmetricSparseOperator) -> float:
    c = _check(space, coeffs)
    q = stiffness.quadratic_form(c)
    scale = float(np.abs(stiffness.values).max() * (c @ c)) if c.any() else 0.0
    if q < -1e-12 * max(scale, 1.0):
        raise InconsistencyError(f"negative energy {q:.3e}: stiffness is not positive semidefinite")
    # below the rounding floor of c^T K c (e.g. constants) the energy is zero
    if q <= 1e-14 * scale:
        return 0.0
    return math.sqrt(q)


def star_norm(stress: StressField, mass: SymmetricSparseOperator) -> float:
    """Tensor L2 norm; off-diagonal components count twice."""
    S = stress.components
    q = np.einsum("si,si->s", S, (mass.matrix @ S.T).T)
    total = q[:3].sum() + 2.0 * q[3:].sum()
    return math.sqrt(max(float(total), 0.0))


def component_norms(stress: StressField, mass: SymmetricSparseOperator) -> np.ndarray:
    """Scalar L2 norm of each of the six stored components."""
    S = stress.components
    q = np.einsum("si,si->s", S, (mass.matrix @ S.T).T)
    return np.sqrt(np.maximum(q, 0.0))


def max_in_time(series: Sequence[float]) -> float:
    if len(series) == 0:
        raise ValueError("max over an empty time series")
    return float(np.max(np.asarray(series, dtype=float)))


def convergence_order(coarse_err: float, fine_err: float) -> float:
    """log2(coarse / fine) for errors at resolutions 2x and x."""
    if not (coarse_err > 0 and fine_err > 0):
        raise UndefinedOrderError(f"orders need positive errors, got {coarse_err!r} and {fine_err!r}")
    return math.log(coarse_err / fine_err) / math.log(2.0)


def discrete_error(
    space: FeSpace,
    coeffs_a: np.ndarray,
    coeffs_b: np.ndarray,
    mass: SymmetricSparseOperator,
    stiffness: SymmetricSparseOperator,
    t: float | None = None,
) -> NormReport:
    d = _check(space, coeffs_a) - _check(space, coeffs_b)
    l2 = l2_norm(space, d, mass)
    bn = b_norm(space, d, stiffness)
    return NormReport(l2, bn, math.hypot(l2, bn), t)


def prolongate(coarse: FeSpace, fine: FeSpace, coeffs: np.ndarray) -> np.ndarray:
    """Nodal interpolation of a coarse vector or stacked scalar field onto ``fine``.

    ``coeffs`` is either a flat component-major vector field or a (c, N)
    stack of scalar fields.  Exact when the coarse space is contained in the
    fine one (nested Kuhn meshes, same or higher degree).
    """
    if coarse is fine:
        return np.array(coeffs, dtype=float)
    c = np.asarray(coeffs, dtype=float)
    flat = c.ndim == 1
    stack = c.reshape(-1, coarse.scalar_dof_count)
    out = np.atleast_2d(coarse.evaluate(stack, fine.dof_coords))
    return out.reshape(-1) if flat else out


def prolongation_matrix(coarse: FeSpace, fine: FeSpace):
    """Sparse (N_fine, N_coarse) matrix performing ``prolongate`` on scalars."""
    from scipy import sparse

    tet, bary = coarse.mesh.locate(fine.dof_coords)
    phi = coarse.basis.values(np.clip(bary, 0.0, 1.0)[:, 1:])
    rows = np.repeat(np.arange(len(tet)), phi.shape[1])
    cols = coarse.element_dof_map[tet].ravel()
    P = sparse.csr_matrix((phi.ravel(), (rows, cols)), shape=(fine.scalar_dof_count, coarse.scalar_dof_count))
    P.eliminate_zeros()
    return P


def inverse_constant(space: FeSpace, mass: SymmetricSparseOperator) -> float:
    """Sharp C with ||d w / d x_l|| <= C h^-1 ||w|| over interior scalar fields.

    Uses the largest generalized eigenvalue of the one-direction derivative
    form against the mass matrix, maximised over the three directions.
    """
    from scipy.linalg import eigh
    from scipy.sparse.linalg import eigsh

    inner = ~space.boundary_mask
    rule = quadrature(max(2 * (space.degree - 1), 1))
    _, _, det, _ = space.geometry()
    grads = space.physical_gradients(rule.ref_points)
    Mi = mass.matrix[inner][:, inner]
    best = 0.0
    for l in range(3):
        local = np.einsum("q,e,eqa,eqb->eab", rule.weights, det, grads[..., l], grads[..., l])
        D = _scatter_matrix(space.element_dof_map, local, space.scalar_dof_count)[inner][:, inner]
        if D.shape[0] <= 600:
            lam = float(eigh(D.toarray(), Mi.toarray(), eigvals_only=True)[-1])
        else:
            lam = float(eigsh(D.tocsc(), k=1, M=Mi.tocsc(), which="LA", return_eigenvectors=False, tol=1e-8)[0])
        best = max(best, lam)
    return math.sqrt(best) * space.mesh.h
