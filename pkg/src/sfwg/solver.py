"""Global DOF numbering, sparse assembly, boundary conditions and linear solves."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.io import mmwrite

from .errors import AssemblyError, SolverError
from .polybasis import polynomial_dimension

try:  # optional CHOLMOD backend
    from sksparse.cholmod import CholmodNotPositiveDefiniteError, cholesky
except ImportError:  # pragma: no cover - depends on the environment
    cholesky = None

log = logging.getLogger(__name__)

CG_THRESHOLD = 300_000


class DofMap:
    """Interior DOFs first (cell-major), then face DOFs (face-major)."""

    def __init__(self, mesh, k: int):
        self.mesh = mesh
        self.k = k
        self.n_interior = polynomial_dimension(mesh.dim, k)
        self.n_face = polynomial_dimension(mesh.dim - 1, k + 1)
        self.n_cells = mesh.n_cells
        self.n_faces = mesh.n_faces
        self.face_offset = self.n_cells * self.n_interior
        self.n_dof = self.face_offset + self.n_faces * self.n_face
        bf = np.flatnonzero(mesh.boundary)
        self.boundary_faces = bf
        self.boundary_dofs = (self.face_offset + bf[:, None] * self.n_face
                              + np.arange(self.n_face)).ravel()

    def interior(self, cell: int) -> np.ndarray:
        return cell * self.n_interior + np.arange(self.n_interior)

    def face(self, face: int) -> np.ndarray:
        return self.face_offset + face * self.n_face + np.arange(self.n_face)

    def cell_dofs(self, cell: int) -> np.ndarray:
        faces = np.asarray(self.mesh.cells[cell])
        fd = self.face_offset + faces[:, None] * self.n_face + np.arange(self.n_face)
        return np.concatenate([self.interior(cell), fd.ravel()])


@dataclass
class WGFunction:
    """Coefficients of ``{v_0, v_b}`` in the global DOF layout."""

    dofmap: DofMap
    coeffs: np.ndarray

    def __post_init__(self):
        if len(self.coeffs) != self.dofmap.n_dof:
            raise ValueError("coefficient vector does not match the DOF map")

    @property
    def interior_coeffs(self) -> np.ndarray:
        dm = self.dofmap
        return self.coeffs[: dm.face_offset].reshape(dm.n_cells, dm.n_interior)

    @property
    def face_coeffs(self) -> np.ndarray:
        dm = self.dofmap
        return self.coeffs[dm.face_offset:].reshape(dm.n_faces, dm.n_face)


# ------------------------------------------------------------------ assembly


def _scatter(classes, mats, n):
    rows, cols, vals = [], [], []
    for cls, A in zip(classes, mats):
        idx = cls.dofs if A.shape[0] == cls.dofs.shape[1] else cls.dofs[:, -A.shape[0]:]
        m = idx.shape[1]
        rows.append(np.repeat(idx, m, axis=1).ravel())
        cols.append(np.tile(idx, (1, m)).ravel())
        vals.append(np.broadcast_to(A.ravel(), (len(idx), m * m)).ravel())
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    A.sum_duplicates()
    return A


def assemble(disc, f: Callable | None = None):
    """Global stiffness ``A`` (CSR) and load ``b`` for ``(grad_w u, grad_w v) = (f, v_0)``."""
    n = disc.dofmap.n_dof
    A = _scatter(disc.classes, [c.kernel.S for c in disc.classes], n)
    asym = abs(A - A.T).max() if A.nnz else 0.0
    if asym > 1e-12 * max(abs(A).max(), 1.0):
        raise AssemblyError(f"assembled matrix is not symmetric (max asymmetry {asym:.3e})")
    return A, disc.load_vector(f)


@dataclass
class CondensedSystem:
    """Face-only system left after eliminating the cell-interior DOFs.

    ``index`` maps condensed unknowns to global DOFs.
    """

    A: sp.csr_matrix
    b: np.ndarray
    index: np.ndarray
    recover: Callable = field(repr=False)


def condense_interior(A, b, dofmap: DofMap) -> CondensedSystem:
    """Schur complement of an assembled system onto the face DOFs.

    The interior block is block diagonal (one ``n_interior`` block per cell),
    so it is inverted block by block.
    """
    n0, nc, off = dofmap.n_interior, dofmap.n_cells, dofmap.face_offset
    A = sp.csr_matrix(A)
    Aii = A[:off, :off].tocoo()
    blocks = np.zeros((nc, n0, n0))
    if ((Aii.row // n0) != (Aii.col // n0)).any():
        raise AssemblyError("interior block is not cell-block diagonal")
    blocks[Aii.row // n0, Aii.row % n0, Aii.col % n0] = Aii.data
    inv = np.linalg.inv(blocks)
    Kinv = sp.block_diag(list(inv), format="csr") if nc else sp.csr_matrix((0, 0))
    Aib = A[:off, off:]
    Abi = A[off:, :off]
    Ac = (A[off:, off:] - Abi @ Kinv @ Aib).tocsr()
    Ac = 0.5 * (Ac + Ac.T)
    bi, bb = b[:off], b[off:]
    bc = bb - Abi @ (Kinv @ bi)

    def recover(xb):
        x = np.empty(dofmap.n_dof)
        x[off:] = xb
        x[:off] = Kinv @ (bi - Aib @ xb)
        return x

    return CondensedSystem(Ac.tocsr(), bc, np.arange(off, dofmap.n_dof), recover)


def assemble_condensed(disc, f: Callable | None = None) -> CondensedSystem:
    """Local static condensation followed by face-only assembly.

    Equivalent to ``condense_interior(*assemble(disc, f), disc.dofmap)`` but
    never forms the full matrix.
    """
    dm = disc.dofmap
    off = dm.face_offset
    local, rhs_parts, recovery = [], [], []
    for cls in disc.classes:
        kern = cls.kernel
        n0 = kern.layout.n_interior
        S = kern.S
        Sii, Sib, Sbb = S[:n0, :n0], S[:n0, n0:], S[n0:, n0:]
        Sii_inv = np.linalg.inv(Sii)
        Sc = Sbb - Sib.T @ Sii_inv @ Sib
        local.append(0.5 * (Sc + Sc.T))
        bi = disc._cell_moments(cls, f) if f is not None else np.zeros((len(cls.cells), n0))
        rhs_parts.append((cls.dofs[:, n0:], -(bi @ Sii_inv.T) @ Sib))
        recovery.append((cls, Sii_inv, Sib, bi))
    Afull = _scatter(disc.classes, local, dm.n_dof)
    Ac = Afull[off:, off:].tocsr()
    bc = np.zeros(dm.n_dof)
    for idx, vals in rhs_parts:
        np.add.at(bc, idx, vals)

    def recover(xb):
        x = np.empty(dm.n_dof)
        x[off:] = xb
        for cls, Sii_inv, Sib, bi in recovery:
            n0 = Sii_inv.shape[0]
            xl = x[cls.dofs[:, n0:]]
            x[cls.dofs[:, :n0]] = (bi - xl @ Sib.T) @ Sii_inv.T
        return x

    return CondensedSystem(Ac, bc[off:], np.arange(off, dm.n_dof), recover)


# ------------------------------------------------------------ boundary data


@dataclass
class ReducedSystem:
    """System with the Dirichlet DOFs eliminated."""

    A: sp.csr_matrix
    b: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    size: int

    def expand(self, x_free: np.ndarray) -> np.ndarray:
        x = np.zeros(self.size)
        x[self.free] = x_free
        x[self.fixed] = self.fixed_values
        return x


def apply_dirichlet(A, b, disc, g: Callable | None = None, index: np.ndarray | None = None) -> ReducedSystem:
    """Fix boundary face DOFs to ``Q_b g`` and eliminate them.

    ``index`` maps the system's unknowns to global DOFs (identity for the full
    system, face DOFs for a condensed one).
    """
    dm = disc.dofmap
    n = A.shape[0]
    index = np.arange(n) if index is None else np.asarray(index)
    pos = np.full(dm.n_dof, -1)
    pos[index] = np.arange(n)
    fixed = pos[dm.boundary_dofs]
    if (fixed < 0).any():
        raise AssemblyError("boundary DOFs missing from the system")
    if g is None:
        vals = np.zeros(len(fixed))
    else:
        vals = disc.project_faces(g, dm.boundary_faces)[dm.boundary_faces].ravel()
    mask = np.ones(n, dtype=bool)
    mask[fixed] = False
    free = np.flatnonzero(mask)
    A = sp.csr_matrix(A)
    Aff = A[free][:, free].tocsr()
    bf = b[free] - A[free][:, fixed] @ vals
    return ReducedSystem(Aff, bf, free, fixed, vals, n)


# ------------------------------------------------------------------- solves


def _direct(A, b, backend: str | None = None):
    if A.shape[0] == 0:
        return np.zeros(0)
    backend = backend or ("cholmod" if cholesky is not None else "superlu")
    if backend == "cholmod":
        # supernodal mode needs a BLAS ABI that scikit-sparse wheels do not always match;
        # simplicial mode is an LDL^T, so positivity of D is the SPD check
        try:
            factor = cholesky(sp.csc_matrix(A), mode="simplicial", ordering_method="nesdis")
        except CholmodNotPositiveDefiniteError as exc:
            raise SolverError(f"Cholesky breakdown, matrix is not SPD: {exc}") from exc
        piv = factor.D()
        if not (piv > 0).all():
            raise SolverError(f"Cholesky breakdown: non-positive pivot {piv.min():.3e}, matrix is not SPD")
        return factor(b)
    # symmetric fill-reducing ordering and no pivoting: U = D L^T, i.e. an LDL^T
    # Cholesky; SPD <=> every pivot is positive
    try:
        lu = spla.splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise SolverError(f"sparse factorization failed: {exc}") from exc
    piv = lu.U.diagonal()
    if not (piv > 0).all():
        raise SolverError(f"Cholesky breakdown: non-positive pivot {piv.min():.3e}, matrix is not SPD")
    return lu.solve(b)


def _cg(A, b, tol):
    n = A.shape[0]
    if n == 0:
        return np.zeros(0)
    diag = A.diagonal()
    if (diag <= 0).any():
        raise SolverError("non-positive diagonal, matrix is not SPD")
    M = spla.LinearOperator((n, n), matvec=lambda r: r / diag)
    history = []
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n)
    x, info = spla.cg(A, b, rtol=tol, atol=0.0, M=M, maxiter=int(50 * np.sqrt(n)) + 1,
                      callback=lambda xk: history.append(np.linalg.norm(b - A @ xk) / bnorm))
    if info != 0:
        raise SolverError(f"CG did not converge in {info} iterations", residuals=history)
    return x


def solve(system: ReducedSystem, method: str = "direct", tol: float = 1e-12,
          backend: str | None = None) -> np.ndarray:
    """Solve a reduced SPD system; returns the full system vector incl. fixed values.

    ``method`` is ``"direct"`` (sparse Cholesky), ``"cg"`` (Jacobi-preconditioned
    conjugate gradients to relative residual ``tol``) or ``"auto"``. The direct
    ``backend`` is ``"cholmod"`` when scikit-sparse is importable, else ``"superlu"``.
    """
    if method == "auto":
        method = "direct" if system.A.shape[0] <= CG_THRESHOLD else "cg"
    if method == "direct":
        x = _direct(system.A, system.b, backend)
    elif method == "cg":
        x = _cg(system.A, system.b, tol)
    else:
        raise ValueError(f"unknown solver {method!r}")
    return system.expand(x)


def solve_poisson(disc, f: Callable | None, g: Callable | None = None, method: str = "direct",
                  tol: float = 1e-12, condense: bool = True) -> WGFunction:
    """Assemble, impose ``u = g`` on the boundary, solve and return ``u_h``."""
    if condense:
        cs = assemble_condensed(disc, f)
        red = apply_dirichlet(cs.A, cs.b, disc, g, index=cs.index)
        return WGFunction(disc.dofmap, cs.recover(solve(red, method, tol)))
    A, b = assemble(disc, f)
    red = apply_dirichlet(A, b, disc, g)
    return WGFunction(disc.dofmap, solve(red, method, tol))


def export_matrix_market(A, path) -> Path:
    """Write a sparse matrix in Matrix Market coordinate format."""
    path = Path(path)
    mmwrite(str(path), sp.coo_matrix(A), symmetry="symmetric")
    return path
