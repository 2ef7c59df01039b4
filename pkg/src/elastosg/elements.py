"""Reference-tetrahedron Lagrange bases, affine maps and quadrature.

The reference tetrahedron has vertices (0,0,0), (1,0,0), (0,1,0), (0,0,1).
Barycentric coordinates are ordered (l0, l1, l2, l3) with l_i attached to
vertex i, so reference coordinates are (l1, l2, l3).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from .errors import AssemblyError, CapabilityError, DomainError

SUPPORTED_DEGREES = (1, 2, 3)
MAX_QUADRATURE_DEGREE = 8
REFERENCE_VOLUME = 1.0 / 6.0


def lattice_multi_indices(k: int) -> np.ndarray:
    """Integer barycentric multi-indices (a0..a3), sum k, vertices first.

    The vertex nodes come first in vertex order; the remaining nodes follow
    in lexicographic order.  Only the vertex-first convention is relied on.
    """
    allidx = [a for a in itertools.product(range(k + 1), repeat=4) if sum(a) == k]
    vertex = [tuple(k if j == i else 0 for j in range(4)) for i in range(4)]
    rest = sorted(a for a in allidx if a not in vertex)
    return np.array(vertex + rest, dtype=np.int64)


def _monomial_exponents(k: int) -> np.ndarray:
    return np.array(
        [e for e in itertools.product(range(k + 1), repeat=3) if sum(e) <= k], dtype=np.int64
    )


@dataclass(frozen=True, eq=False)
class ReferenceBasis:
    degree: int
    node_count: int
    node_multi_indices: np.ndarray  # (nb, 4) ints summing to degree
    node_coords: np.ndarray  # (nb, 4) barycentric
    _exponents: np.ndarray
    _coeffs: np.ndarray  # inverse Vandermonde, (nb monomials, nb nodes)

    def values(self, ref_points: np.ndarray) -> np.ndarray:
        """Basis values at reference points (q, 3) -> (q, nb)."""
        x = np.atleast_2d(ref_points)
        mono = np.prod(x[:, None, :] ** self._exponents[None, :, :], axis=2)
        return mono @ self._coeffs

    def ref_gradients(self, ref_points: np.ndarray) -> np.ndarray:
        """Reference gradients at points (q, 3) -> (q, nb, 3)."""
        x = np.atleast_2d(ref_points)
        e = self._exponents
        out = np.empty((len(x), self.node_count, 3))
        for d in range(3):
            ed = e.copy()
            ed[:, d] -= 1
            factor = e[:, d].astype(float)
            safe = np.maximum(ed, 0)
            dmono = factor[None, :] * np.prod(x[:, None, :] ** safe[None, :, :], axis=2)
            out[:, :, d] = dmono @ self._coeffs
        return out


@lru_cache(maxsize=None)
def reference_basis(degree: int) -> ReferenceBasis:
    if degree not in SUPPORTED_DEGREES:
        raise CapabilityError(f"element degree must be one of {SUPPORTED_DEGREES}, got {degree}")
    alpha = lattice_multi_indices(degree)
    bary = alpha / degree
    exps = _monomial_exponents(degree)
    vander = np.prod(bary[:, None, 1:] ** exps[None, :, :], axis=2)
    coeffs = np.linalg.inv(vander)
    for arr in (alpha, bary, exps, coeffs):
        arr.setflags(write=False)
    return ReferenceBasis(degree, len(alpha), alpha, bary, exps, coeffs)


def _check_barycentric(point) -> np.ndarray:
    lam = np.asarray(point, dtype=float).reshape(4)
    if np.any(lam < -1e-12) or abs(lam.sum() - 1.0) > 1e-12:
        raise DomainError(f"point {lam.tolist()} is not in the reference simplex")
    return lam


def basis_eval(basis: ReferenceBasis, point) -> np.ndarray:
    """Values of all basis functions at one barycentric point."""
    lam = _check_barycentric(point)
    return basis.values(lam[None, 1:])[0]


@dataclass(frozen=True, eq=False)
class AffineMap:
    jacobian: np.ndarray
    jacobian_det: float
    inverse_transpose: np.ndarray
    origin: np.ndarray

    @classmethod
    def from_vertices(cls, vertices) -> "AffineMap":
        v = np.asarray(vertices, dtype=float).reshape(4, 3)
        jac = (v[1:] - v[0]).T
        det = float(np.linalg.det(jac))
        if not det > 0:
            raise AssemblyError(-1, det)
        return cls(jac, det, np.linalg.inv(jac).T, v[0].copy())

    def __call__(self, ref_points: np.ndarray) -> np.ndarray:
        return np.atleast_2d(ref_points) @ self.jacobian.T + self.origin


def basis_grad(basis: ReferenceBasis, point, amap: AffineMap) -> np.ndarray:
    """Physical gradients (nb, 3) of all basis functions at one point."""
    lam = _check_barycentric(point)
    g = basis.ref_gradients(lam[None, 1:])[0]
    return g @ amap.inverse_transpose.T


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    points: np.ndarray  # (q, 4) barycentric
    weights: np.ndarray  # (q,), sum 1/6
    exact_degree: int

    @property
    def ref_points(self) -> np.ndarray:
        return self.points[:, 1:]

    def __len__(self) -> int:
        return len(self.weights)


def _gauss_jacobi01(m: int, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """m-point rule on [0,1] for the weight (1-x)^alpha."""
    x, w = roots_jacobi(m, alpha, 0.0)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1.0)


@lru_cache(maxsize=None)
def quadrature(exact_degree: int) -> QuadratureRule:
    """Positive-weight rule on the reference tet exact through ``exact_degree``.

    Degrees 1 and 2 use the classical 1- and 4-point symmetric rules; higher
    degrees use a collapsed (conical) Gauss-Jacobi product rule.
    """
    if not 1 <= exact_degree <= MAX_QUADRATURE_DEGREE:
        raise CapabilityError(
            f"quadrature exactness must lie in 1..{MAX_QUADRATURE_DEGREE}, got {exact_degree}"
        )
    if exact_degree == 1:
        bary = np.full((1, 4), 0.25)
        w = np.array([REFERENCE_VOLUME])
    elif exact_degree == 2:
        a = (5.0 + 3.0 * np.sqrt(5.0)) / 20.0
        b = (5.0 - np.sqrt(5.0)) / 20.0
        bary = np.full((4, 4), b)
        np.fill_diagonal(bary, a)
        w = np.full(4, REFERENCE_VOLUME / 4.0)
    else:
        m = (exact_degree + 2) // 2
        xa, wa = _gauss_jacobi01(m, 2.0)
        xb, wb = _gauss_jacobi01(m, 1.0)
        xc, wc = _gauss_jacobi01(m, 0.0)
        A, B, C = np.meshgrid(xa, xb, xc, indexing="ij")
        WA, WB, WC = np.meshgrid(wa, wb, wc, indexing="ij")
        x1 = A
        x2 = B * (1.0 - A)
        x3 = C * (1.0 - A) * (1.0 - B)
        ref = np.column_stack([x1.ravel(), x2.ravel(), x3.ravel()])
        bary = np.column_stack([1.0 - ref.sum(axis=1), ref])
        w = (WA * WB * WC).ravel()
    bary.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(bary, w, exact_degree)
