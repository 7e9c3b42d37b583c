"""Per-cell weak gradient and local stiffness.

For ``v = {v_0, v_b}`` the weak gradient is the field ``g`` of the
constrained space with

    (g, q)_T = -(v_0, div q)_T + <v_b, q . n>_{dT}   for every q,

so that ``G = M^{-1} B`` maps local DOFs to coordinates in the space's basis
and ``S_T = G^T M G`` is the local stiffness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConstraintError
from .lambda_space import LambdaSpace, boundary_facets, build_lambda_space
from .mesh import Mesh, split_cell
from .polybasis import (
    FaceBasis,
    ScaledMonomialBasis,
    mass_matrix,
    polynomial_dimension,
)


@dataclass(frozen=True)
class LocalDofLayout:
    """Interior block first, then one block per face in cell-local order."""

    n_interior: int
    n_face: int
    n_faces: int

    @property
    def n_loc(self) -> int:
        return self.n_interior + self.n_faces * self.n_face

    def face(self, m: int) -> slice:
        start = self.n_interior + m * self.n_face
        return slice(start, start + self.n_face)

    @property
    def interior(self) -> slice:
        return slice(0, self.n_interior)


def cell_basis(mesh: Mesh, cell: int, k: int) -> ScaledMonomialBasis:
    return ScaledMonomialBasis(mesh.cell_centroid[cell].copy(), float(mesh.cell_diameter[cell]), k)


def face_basis(mesh: Mesh, face: int, k: int) -> FaceBasis:
    """``P_{k+1}`` basis in the face's global frame (shared by both neighbours)."""
    return FaceBasis(mesh.face_centroid[face].copy(), mesh.face_tangents[face].copy(),
                     float(mesh.face_diameter[face]), k + 1)


def weak_gradient_rhs(mesh: Mesh, cell: int, k: int, lam: LambdaSpace) -> np.ndarray:
    """Superspace right-hand side ``B_sup`` (D_sup x n_loc) of the weak-gradient identity."""
    sup = lam.superspace
    split = sup.split
    d = mesh.dim
    flist = list(mesh.cells[cell])
    layout = LocalDofLayout(polynomial_dimension(d, k), polynomial_dimension(d - 1, k + 1), len(flist))
    pk = cell_basis(mesh, cell, k)
    qdeg = 2 * (k + 1)
    B = np.zeros((sup.dim, layout.n_loc))
    for i in range(split.n_simplices):
        x, w = sup.simplex_rule(i, qdeg)
        B[sup.piece_slice(i), layout.interior] = -(sup.divergence(i, x) * w[:, None]).T @ pk.eval(x)
    normals = mesh.outward_normals(cell)
    for m, facets in boundary_facets(split).items():
        fb = face_basis(mesh, flist[m], k)
        for i, j in facets:
            x, w = sup.facet_rule(i, j, qdeg)
            B[sup.piece_slice(i), layout.face(m)] += (
                sup.normal_values(i, x, normals[m]) * w[:, None]).T @ fb.eval(x)
    return B


def weak_gradient_map(mesh: Mesh, cell: int, k: int, lam: LambdaSpace) -> np.ndarray:
    """Matrix ``G`` (D_lam x n_loc): local DOFs -> weak gradient in the Λ basis."""
    B = lam.N.T @ weak_gradient_rhs(mesh, cell, k, lam)
    try:
        factor = cho_factor(lam.mass)
    except np.linalg.LinAlgError as exc:
        raise ConstraintError(f"cell {cell}: weak-gradient mass matrix is not SPD") from exc
    return cho_solve(factor, B)


def local_stiffness(G: np.ndarray, M: np.ndarray) -> np.ndarray:
    S = G.T @ M @ G
    return 0.5 * (S + S.T)


@dataclass(frozen=True, eq=False)
class LocalKernel:
    """Everything computed once per cell (or per congruence class of cells).

    Point sets are stored relative to the cell centroid so the kernel can be
    reused on translated copies of the cell.
    """

    cell: int
    k: int
    layout: LocalDofLayout
    lam: LambdaSpace
    G: np.ndarray
    S: np.ndarray
    mass0: np.ndarray
    face_mass: tuple
    norm1h: np.ndarray
    load_points: np.ndarray
    load_weights: np.ndarray
    load_values: np.ndarray
    diameter: float
    centroid: np.ndarray

    @property
    def mass_lambda(self) -> np.ndarray:
        return self.lam.mass


def build_local_kernel(mesh: Mesh, cell: int, k: int, load_degree: int | None = None) -> LocalKernel:
    d = mesh.dim
    split = split_cell(mesh, cell)
    hT = float(mesh.cell_diameter[cell])
    xc = mesh.cell_centroid[cell]
    lam = build_lambda_space(split, k, xc, hT)
    G = weak_gradient_map(mesh, cell, k, lam)
    S = local_stiffness(G, lam.mass)
    flist = list(mesh.cells[cell])
    layout = LocalDofLayout(polynomial_dimension(d, k), polynomial_dimension(d - 1, k + 1), len(flist))
    pk = cell_basis(mesh, cell, k)
    sup = lam.superspace

    # cell mass, gradient Gram and load quadrature
    load_degree = 2 * k + 4 if load_degree is None else load_degree
    xs, ws = [], []
    K = np.zeros((layout.n_interior, layout.n_interior))
    M0 = np.zeros_like(K)
    for i in range(split.n_simplices):
        x, w = sup.simplex_rule(i, max(2 * k, 1))
        M0 += mass_matrix(pk.eval(x), w, check=False)
        g = pk.grad(x)
        K += np.einsum("q,qad,qbd->ab", w, g, g)
        x, w = sup.simplex_rule(i, load_degree)
        xs.append(x)
        ws.append(w)
    load_x = np.vstack(xs)
    load_w = np.concatenate(ws)

    H = np.zeros((layout.n_loc, layout.n_loc))
    H[layout.interior, layout.interior] = K
    fmass = []
    for m, facets in sorted(boundary_facets(split).items()):
        fb = face_basis(mesh, flist[m], k)
        Mf = np.zeros((layout.n_face, layout.n_face))
        for i, j in facets:
            x, w = sup.facet_rule(i, j, 2 * (k + 1))
            psi = fb.eval(x)
            Mf += mass_matrix(psi, w, check=False)
            E = np.zeros((len(w), layout.n_loc))
            E[:, layout.interior] = pk.eval(x)
            E[:, layout.face(m)] = -psi
            H += (E * w[:, None]).T @ E / hT
        fmass.append(0.5 * (Mf + Mf.T))

    return LocalKernel(
        cell=cell, k=k, layout=layout, lam=lam, G=G, S=S,
        mass0=0.5 * (M0 + M0.T), face_mass=tuple(fmass), norm1h=0.5 * (H + H.T),
        load_points=load_x - xc, load_weights=load_w, load_values=pk.eval(load_x),
        diameter=hT, centroid=xc.copy(),
    )


def weak_gradient_field(kernel: LocalKernel, dofs: np.ndarray):
    """Superspace coefficients of the weak gradient of local ``dofs``."""
    return kernel.lam.N @ (kernel.G @ dofs)
