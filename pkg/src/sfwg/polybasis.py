"""Scaled monomial bases, face bases and simplex quadrature.

Every inner product used by the method is reduced to a quadrature rule
mapped onto a simplex (segment, triangle or tetrahedron) and to values of
the bases defined here.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb, factorial

import numpy as np
from scipy.special import roots_jacobi

from .errors import ConfigurationError, GeometryError

MAX_QUADRATURE_DEGREE = 20


@lru_cache(maxsize=None)
def monomial_exponents(dim: int, degree: int) -> np.ndarray:
    """Exponents of all monomials of total degree <= ``degree``.

    Ordered by total degree, so the first row is always the constant.
    """
    if degree < 0:
        return np.zeros((0, dim), dtype=int)
    exps = []
    for total in range(degree + 1):
        exps.extend(_exponents_of_total(dim, total))
    out = np.array(exps, dtype=int).reshape(-1, dim)
    out.setflags(write=False)
    return out


def _exponents_of_total(dim, total):
    if dim == 1:
        return [(total,)]
    res = []
    for first in range(total, -1, -1):
        for rest in _exponents_of_total(dim - 1, total - first):
            res.append((first,) + rest)
    return res


def polynomial_dimension(dim: int, degree: int) -> int:
    """Dimension of P_degree in ``dim`` variables."""
    if degree < 0:
        return 0
    return comb(degree + dim, dim)


def _powers(t, exps):
    # t: (..., dim) -> (..., m)
    out = np.ones(t.shape[:-1] + (exps.shape[0],))
    for i in range(exps.shape[1]):
        out = out * t[..., i, None] ** exps[:, i]
    return out


@dataclass(frozen=True)
class ScaledMonomialBasis:
    """Monomials ``((x - center) / scale) ** alpha`` with ``|alpha| <= degree``."""

    center: np.ndarray
    scale: float
    degree: int

    @property
    def ndim(self) -> int:
        return len(self.center)

    @property
    def dim(self) -> int:
        return polynomial_dimension(self.ndim, self.degree)

    @property
    def exponents(self) -> np.ndarray:
        return monomial_exponents(self.ndim, self.degree)

    def eval(self, x: np.ndarray) -> np.ndarray:
        """Values at points ``x`` of shape (..., ndim); returns (..., dim)."""
        t = (np.asarray(x, dtype=float) - self.center) / self.scale
        return _powers(t, self.exponents)

    def grad(self, x: np.ndarray) -> np.ndarray:
        """Gradients at ``x``; returns (..., dim, ndim)."""
        t = (np.asarray(x, dtype=float) - self.center) / self.scale
        exps = self.exponents
        out = np.empty(t.shape[:-1] + (exps.shape[0], self.ndim))
        for i in range(self.ndim):
            lowered = exps.copy()
            lowered[:, i] = np.maximum(lowered[:, i] - 1, 0)
            out[..., i] = exps[:, i] * _powers(t, lowered) / self.scale
        return out


@dataclass(frozen=True)
class FaceBasis:
    """Scaled monomials in the in-plane coordinates of a flat face.

    ``tangents`` holds ``ndim - 1`` orthonormal rows spanning the face plane.
    The local coordinates are ``(x - origin) . t_i / scale``.
    """

    origin: np.ndarray
    tangents: np.ndarray
    scale: float
    degree: int

    @property
    def dim(self) -> int:
        return polynomial_dimension(self.tangents.shape[0], self.degree)

    def local_coords(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.origin) @ self.tangents.T / self.scale

    def eval(self, x: np.ndarray) -> np.ndarray:
        exps = monomial_exponents(self.tangents.shape[0], self.degree)
        return _powers(self.local_coords(x), exps)


# ---------------------------------------------------------------- quadrature


@dataclass(frozen=True)
class QuadratureRule:
    """Points (barycentric-free, reference coordinates) and weights.

    The reference simplex is ``{x_i >= 0, sum x_i <= 1}``.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def _gauss_jacobi01(n, alpha):
    # nodes/weights on [0, 1] for the weight (1 - t)^alpha
    x, w = roots_jacobi(n, alpha, 0.0)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def simplex_quadrature(dim: int, degree: int) -> QuadratureRule:
    """Quadrature on the reference simplex exact for polynomials of ``degree``.

    Gauss-Legendre on the segment; collapsed (conical) Gauss-Jacobi products on
    triangles and tetrahedra. All weights are positive.
    """
    if dim not in (1, 2, 3):
        raise ConfigurationError(f"no simplex quadrature in dimension {dim}")
    if not 0 <= degree <= MAX_QUADRATURE_DEGREE:
        raise ConfigurationError(
            f"quadrature degree {degree} outside [0, {MAX_QUADRATURE_DEGREE}]"
        )
    n = degree // 2 + 1
    if dim == 1:
        t, w = _gauss_jacobi01(n, 0.0)
        pts, wts = t[:, None], w
    elif dim == 2:
        u, wu = _gauss_jacobi01(n, 1.0)
        v, wv = _gauss_jacobi01(n, 0.0)
        U, V = np.meshgrid(u, v, indexing="ij")
        pts = np.stack([U, V * (1 - U)], axis=-1).reshape(-1, 2)
        wts = np.outer(wu, wv).ravel()
    else:
        u, wu = _gauss_jacobi01(n, 2.0)
        v, wv = _gauss_jacobi01(n, 1.0)
        s, ws = _gauss_jacobi01(n, 0.0)
        U, V, S = np.meshgrid(u, v, s, indexing="ij")
        pts = np.stack(
            [U, V * (1 - U), S * (1 - U) * (1 - V)], axis=-1
        ).reshape(-1, 3)
        wts = np.einsum("i,j,k->ijk", wu, wv, ws).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, degree)


def reference_monomial_integral(exponent) -> float:
    """Exact integral of ``x**a`` over the reference simplex (Dirichlet formula)."""
    exponent = tuple(int(a) for a in exponent)
    num = 1.0
    for a in exponent:
        num *= factorial(a)
    return num / factorial(len(exponent) + sum(exponent))


def simplex_measure(vertices: np.ndarray) -> float:
    """Measure of a simplex with ``m + 1`` vertices embedded in R^d (m <= d)."""
    v = np.asarray(vertices, dtype=float)
    J = (v[1:] - v[0]).T
    m = J.shape[1]
    gram = J.T @ J
    return float(np.sqrt(max(np.linalg.det(gram), 0.0)) / factorial(m))


def map_rule(rule: QuadratureRule, vertices: np.ndarray):
    """Map a reference rule onto a (possibly embedded) simplex.

    Returns physical points (nq, d) and weights (nq,).
    """
    v = np.asarray(vertices, dtype=float)
    J = v[1:] - v[0]
    pts = v[0] + rule.points @ J
    vol = simplex_measure(v) * factorial(rule.dim)
    return pts, rule.weights * vol


def mass_matrix(values: np.ndarray, weights: np.ndarray, check: bool = True) -> np.ndarray:
    """Gram matrix ``sum_q w_q phi_i(x_q) phi_j(x_q)``.

    ``values`` is (nq, m) for scalar bases or (nq, m, d) for vector bases.
    """
    if values.ndim == 3:
        M = np.einsum("q,qid,qjd->ij", weights, values, values)
    else:
        M = np.einsum("q,qi,qj->ij", weights, values, values)
    M = 0.5 * (M + M.T)
    if check:
        lam = np.linalg.eigvalsh(M)
        if lam[0] <= 1e-13 * max(np.trace(M), np.finfo(float).tiny):
            raise GeometryError(
                f"mass matrix is not positive definite (min eigenvalue {lam[0]:.3e})"
            )
    return M
