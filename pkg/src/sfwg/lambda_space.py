"""Constrained piecewise vector-polynomial space for the weak gradient.

On a cell split into simplices ``T_i`` the space holds fields that are
``[P_{k+1}(T_i)]^d`` on every piece, have a continuous normal component
across the internal facets, a normal trace that is a single ``P_{k+1}``
polynomial on every (possibly subdivided) cell face, and a divergence that
is one ``P_k`` polynomial over the whole cell.

A basis is computed numerically as the SVD nullspace of the linear
constraints acting on coefficients in the unconstrained piecewise space.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from math import comb
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConstraintError
from .mesh import CellSplit
from .polybasis import (
    FaceBasis,
    ScaledMonomialBasis,
    map_rule,
    mass_matrix,
    simplex_quadrature,
)

RANK_RCOND = 1e-10


def facet_frame(F: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Centroid, orthonormal tangents and diameter of a segment or triangle."""
    c = F.mean(axis=0)
    t1 = F[1] - F[0]
    t1 = t1 / np.linalg.norm(t1)
    if F.shape[1] == 2:
        T = t1[None]
    else:
        n = np.cross(t1, F[2] - F[0])
        n /= np.linalg.norm(n)
        T = np.stack([t1, np.cross(n, t1)])
    diam = max(np.linalg.norm(F[i] - F[j]) for i in range(len(F)) for j in range(i))
    return c, T, diam


class PiecewiseSpace:
    """Unconstrained superspace: ``[P_{k+1}]^d`` on every simplex of a split.

    Coefficient layout: simplex-major, then component, then basis function.
    The scalar basis on each simplex is the scaled monomial basis made
    L2-orthonormal (twice-applied Cholesky), which keeps the mass matrices
    well conditioned at high degree.
    """

    def __init__(self, split: CellSplit, degree: int):
        self.split = split
        self.degree = degree
        self.d = split.points.shape[1]
        self.bases = []
        self.transforms = []
        for i in range(split.n_simplices):
            S = split.simplex(i)
            h = max(np.linalg.norm(S[a] - S[b]) for a in range(len(S)) for b in range(a))
            basis = ScaledMonomialBasis(S.mean(axis=0), h, degree)
            x, w = map_rule(simplex_quadrature(self.d, 2 * degree), S)
            phi = basis.eval(x)
            T = np.eye(basis.dim)
            for _ in range(2):
                G = (phi * w[:, None]).T @ phi
                L = np.linalg.cholesky(0.5 * (G + G.T))
                Li = np.linalg.solve(L, np.eye(len(L))).T
                phi = phi @ Li
                T = T @ Li
            self.bases.append(basis)
            self.transforms.append(T)
        self.m = self.bases[0].dim
        self.block = self.d * self.m
        self.dim = split.n_simplices * self.block

    def piece_slice(self, i: int) -> slice:
        return slice(i * self.block, (i + 1) * self.block)

    def values(self, i: int, x: np.ndarray) -> np.ndarray:
        """Values of the simplex-``i`` block at ``x``: (nq, block, d)."""
        phi = self.bases[i].eval(x) @ self.transforms[i]
        out = np.zeros(x.shape[:-1] + (self.block, self.d))
        for l in range(self.d):
            out[..., l * self.m:(l + 1) * self.m, l] = phi
        return out

    def divergence(self, i: int, x: np.ndarray) -> np.ndarray:
        """Divergence of the simplex-``i`` block at ``x``: (nq, block)."""
        g = np.einsum("...md,mn->...nd", self.bases[i].grad(x), self.transforms[i])
        return np.concatenate([g[..., l] for l in range(self.d)], axis=-1)

    def normal_values(self, i: int, x: np.ndarray, n: np.ndarray) -> np.ndarray:
        return np.einsum("qbd,d->qb", self.values(i, x), n)

    def simplex_rule(self, i: int, degree: int):
        return map_rule(simplex_quadrature(self.d, degree), self.split.simplex(i))

    def facet_rule(self, i: int, j: int, degree: int):
        return map_rule(simplex_quadrature(self.d - 1, degree), self.split.facet(i, j))

    def mass(self) -> np.ndarray:
        M = np.zeros((self.dim, self.dim))
        for i in range(self.split.n_simplices):
            x, w = self.simplex_rule(i, 2 * self.degree)
            sl = self.piece_slice(i)
            M[sl, sl] = mass_matrix(self.values(i, x), w)
        return M

    def project(self, func) -> np.ndarray:
        """Piecewise L2 projection of a vector field; exact on piecewise ``P_degree``."""
        out = np.zeros(self.dim)
        for i in range(self.split.n_simplices):
            x, w = self.simplex_rule(i, 2 * self.degree + 2)
            V = self.values(i, x)
            M = mass_matrix(V, w)
            rhs = np.einsum("q,qbd,qd->b", w, V, func(x))
            out[self.piece_slice(i)] = np.linalg.solve(M, rhs)
        return out

    def evaluate(self, coeffs: np.ndarray, i: int, x: np.ndarray) -> np.ndarray:
        return np.einsum("qbd,b...->q...d", self.values(i, x), coeffs[self.piece_slice(i)])


def boundary_facets(split: CellSplit) -> dict:
    """Map cell-local face index -> list of ``(simplex, facet)`` covering it."""
    out: dict = {}
    for i, row in enumerate(split.facet_face):
        for j, e in enumerate(row):
            if e >= 0:
                out.setdefault(int(e), []).append((i, j))
    return out


def internal_facets(split: CellSplit) -> list:
    """``(i, j, i2)`` for each internal facet, listed once with ``i < i2``."""
    return [(i, j, int(nb)) for i, row in enumerate(split.facet_neighbor)
            for j, nb in enumerate(row) if nb > i]


def build_constraints(split: CellSplit, k: int, cell_center=None, cell_scale=None,
                      return_groups: bool = False):
    """Constraint matrix ``C`` whose nullspace is the weak-gradient space.

    Rows (normalized to unit length):
      * ``jump``  - moments of the normal jump on internal facets against P_{k+1};
      * ``trace`` - on faces covered by several facets, the normal trace of every
        facet equals the one of the first facet as a face-wide P_{k+1} polynomial;
      * ``div``   - the divergence of every piece equals that of the first piece
        as a cell-wide P_k polynomial.
    """
    sup = PiecewiseSpace(split, k + 1)
    d = sup.d
    qdeg = 2 * (k + 1)
    rows, groups = [], []

    for i, j, i2 in internal_facets(split):
        F = split.facet(i, j)
        c, T, diam = facet_frame(F)
        test = FaceBasis(c, T, diam, k + 1)
        x, w = sup.facet_rule(i, j, qdeg)
        n = split.facet_normal(i, j)
        P = test.eval(x) * w[:, None]
        R = np.zeros((test.dim, sup.dim))
        R[:, sup.piece_slice(i)] = P.T @ sup.normal_values(i, x, n)
        R[:, sup.piece_slice(i2)] -= P.T @ sup.normal_values(i2, x, n)
        rows.append(R)
        groups += ["jump"] * test.dim

    for e, facets in sorted(boundary_facets(split).items()):
        if len(facets) < 2:
            continue
        allF = np.vstack([split.facet(i, j) for i, j in facets])
        c, T, _ = facet_frame(split.facet(*facets[0]))
        diam = max(np.linalg.norm(a - b) for a in allF for b in allF)
        fb = FaceBasis(allF.mean(axis=0), T, diam, k + 1)
        n = split.facet_normal(*facets[0])
        coefs = []
        for i, j in facets:
            x, w = sup.facet_rule(i, j, qdeg)
            psi = fb.eval(x)
            M = mass_matrix(psi, w)
            R = np.zeros((fb.dim, sup.dim))
            R[:, sup.piece_slice(i)] = (psi * w[:, None]).T @ sup.normal_values(i, x, n)
            coefs.append(np.linalg.solve(M, R))
        for cf in coefs[1:]:
            rows.append(cf - coefs[0])
            groups += ["trace"] * fb.dim

    if split.n_simplices > 1:
        if cell_center is None:
            cell_center = split.points.mean(axis=0)
        if cell_scale is None:
            P = split.points
            cell_scale = np.sqrt(((P[:, None] - P[None]) ** 2).sum(-1).max())
        pk = ScaledMonomialBasis(np.asarray(cell_center, float), float(cell_scale), k)
        divs = []
        for i in range(split.n_simplices):
            x, w = sup.simplex_rule(i, qdeg)
            phi = pk.eval(x)
            M = mass_matrix(phi, w)
            R = np.zeros((pk.dim, sup.dim))
            R[:, sup.piece_slice(i)] = (phi * w[:, None]).T @ sup.divergence(i, x)
            divs.append(np.linalg.solve(M, R))
        for dv in divs[1:]:
            rows.append(dv - divs[0])
            groups += ["div"] * pk.dim

    C = np.vstack(rows) if rows else np.zeros((0, sup.dim))
    norms = np.linalg.norm(C, axis=1)
    keep = norms > 1e-14 * max(norms.max(initial=0.0), 1.0)
    C = C[keep] / norms[keep, None]
    groups = np.array(groups, dtype=object)[keep] if len(groups) else np.array([], dtype=object)
    return (C, groups) if return_groups else C


def nullspace(C: np.ndarray, ncols: int, rcond: float = RANK_RCOND):
    """Orthonormal nullspace basis and numerical rank of ``C`` via SVD."""
    if C.shape[0] == 0:
        return np.eye(ncols), 0
    _, s, vh = np.linalg.svd(C, full_matrices=True)
    rank = int((s > rcond * s[0]).sum())
    return vh[rank:].T.copy(), rank


@dataclass(frozen=True, eq=False)
class LambdaSpace:
    """Numerical basis ``N`` (columns) of the weak-gradient space on one cell."""

    cell: int
    k: int
    superspace: PiecewiseSpace
    constraints: np.ndarray
    groups: np.ndarray
    N: np.ndarray
    rank: int
    mass_sup: np.ndarray
    mass: np.ndarray

    @property
    def dim_sup(self) -> int:
        return self.superspace.dim

    @property
    def dim(self) -> int:
        return self.N.shape[1]

    @property
    def split(self) -> CellSplit:
        return self.superspace.split

    def project(self, func) -> np.ndarray:
        """L2 projection of a vector field onto the space; returns Λ-coordinates."""
        sup = self.superspace
        rhs = np.zeros(sup.dim)
        for i in range(sup.split.n_simplices):
            x, w = sup.simplex_rule(i, 2 * sup.degree + 2)
            rhs[sup.piece_slice(i)] = np.einsum("q,qbd,qd->b", w, sup.values(i, x), func(x))
        return cho_solve(cho_factor(self.mass), self.N.T @ rhs)

    def containment_residual(self, k: int | None = None) -> float:
        """Max relative residual of projecting every ``[P_k]^d`` monomial field onto span(N)."""
        k = self.k if k is None else k
        sup = self.superspace
        P = sup.split.points
        pk = ScaledMonomialBasis(P.mean(axis=0), float(np.ptp(P, axis=0).max()), k)
        worst = 0.0
        for a in range(pk.dim):
            for l in range(sup.d):
                def field(x, a=a, l=l):
                    out = np.zeros(x.shape)
                    out[..., l] = pk.eval(x)[..., a]
                    return out
                c = sup.project(field)
                r = c - self.N @ (self.N.T @ c)
                worst = max(worst, np.linalg.norm(r) / np.linalg.norm(c))
        return worst


def build_lambda_space(split: CellSplit, k: int, cell_center=None, cell_scale=None,
                       rcond: float = RANK_RCOND, row_permutation=None) -> LambdaSpace:
    """Nullspace construction of the weak-gradient space on one split cell."""
    C, groups = build_constraints(split, k, cell_center, cell_scale, return_groups=True)
    if row_permutation is not None:
        C, groups = C[row_permutation], groups[row_permutation]
    sup = PiecewiseSpace(split, k + 1)
    N, rank = nullspace(C, sup.dim, rcond)
    d = sup.d
    needed = d * comb(k + d, d)
    if N.shape[1] < needed:
        raise ConstraintError(
            f"cell {split.cell}: weak-gradient space has dimension {N.shape[1]} < {needed}"
        )
    Ms = sup.mass()
    M = N.T @ Ms @ N
    return LambdaSpace(split.cell, k, sup, C, groups, N, rank, Ms, 0.5 * (M + M.T))


def _random_points_in_simplex(S, n, rng):
    b = rng.dirichlet(np.ones(len(S)), size=n)
    return b @ S


def lambda_sample_check(space: LambdaSpace, n_members: int = 5, n_points: int = 20,
                        rng=None, tol: float | None = 1e-9) -> dict:
    """Sample random members and report the worst violation of each constraint.

    Residuals are relative to the largest sampled field value (divergences are
    multiplied by the cell diameter first). Raises ``ConstraintError`` naming the
    cell when a residual exceeds ``tol`` (pass ``tol=None`` to only report).
    """
    rng = np.random.default_rng(rng)
    sup = space.superspace
    split = sup.split
    P = split.points
    hT = np.sqrt(((P[:, None] - P[None]) ** 2).sum(-1).max())
    members = space.N @ rng.standard_normal((space.dim, n_members))
    members[:, 0] = space.N @ (space.N.T @ sup.project(lambda x: np.ones_like(x)))
    res = {"jump": 0.0, "trace": 0.0, "div": 0.0}
    for col in range(n_members):
        c = members[:, col]
        scale = max(np.abs(sup.evaluate(c, i, _random_points_in_simplex(split.simplex(i), n_points, rng))).max()
                    for i in range(split.n_simplices))
        scale = max(scale, np.finfo(float).tiny)
        for i, j, i2 in internal_facets(split):
            x = _random_points_in_simplex(split.facet(i, j), n_points, rng)
            n = split.facet_normal(i, j)
            jump = (sup.evaluate(c, i, x) - sup.evaluate(c, i2, x)) @ n
            res["jump"] = max(res["jump"], np.abs(jump).max() / scale)
        for e, facets in boundary_facets(split).items():
            if len(facets) < 2:
                continue
            n = split.facet_normal(*facets[0])
            xs, vals = [], []
            for i, j in facets:
                x = _random_points_in_simplex(split.facet(i, j), 3 * n_points, rng)
                xs.append(x)
                vals.append(sup.evaluate(c, i, x) @ n)
            x, v = np.vstack(xs), np.concatenate(vals)
            cen, T, _ = facet_frame(split.facet(*facets[0]))
            fb = FaceBasis(x.mean(axis=0), T, hT, space.k + 1)
            A = fb.eval(x)
            fit, *_ = np.linalg.lstsq(A, v, rcond=None)
            res["trace"] = max(res["trace"], np.abs(A @ fit - v).max() / scale)
        for i in range(1, split.n_simplices):
            x = _random_points_in_simplex(split.simplex(i), n_points, rng)
            d1 = sup.divergence(0, x) @ c[sup.piece_slice(0)]
            di = sup.divergence(i, x) @ c[sup.piece_slice(i)]
            res["div"] = max(res["div"], hT * np.abs(di - d1).max() / scale)
    if tol is not None:
        bad = {k: v for k, v in res.items() if v > tol}
        if bad:
            raise ConstraintError(f"cell {space.cell}: constraint residuals above {tol:g}: {bad}")
    return res


def dump_lambda_csv(rows, path) -> Path:
    """Write ``(cell, D_sup, rank, D_lam, jump, trace, div)`` debug rows."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell", "dim_sup", "rank", "dim_lambda", "jump", "trace", "div"])
        for space, res in rows:
            w.writerow([space.cell, space.dim_sup, space.rank, space.dim,
                        f"{res['jump']:.3e}", f"{res['trace']:.3e}", f"{res['div']:.3e}"])
    return path
