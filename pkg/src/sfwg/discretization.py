"""Mesh + degree -> cached local kernels, DOF numbering and projections.

Cells are grouped into classes of translated copies (same shape, same face
frame orientation, same simplicial split). One ``LocalKernel`` is built per
class, and every per-cell operation below runs vectorized over a class.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .mesh import Mesh, prism_tetrahedra
from .polybasis import FaceBasis, map_rule, mass_matrix, simplex_quadrature
from .solver import DofMap
from .weak_gradient import LocalKernel, build_local_kernel

log = logging.getLogger(__name__)

CHUNK = 8192


def cell_signature(mesh: Mesh, cell: int):
    """Hashable key equal for translated copies of a cell."""
    gids = mesh.cell_vertices[cell]
    h = float(mesh.cell_diameter[cell])
    rel = (mesh.vertices[list(gids)] - mesh.cell_centroid[cell]) / h
    pos = {g: i for i, g in enumerate(gids)}
    pattern = tuple(tuple(pos[v] for v in sorted(mesh.faces[f])) for f in mesh.cells[cell])
    if mesh.dim == 3:
        pattern += tuple(prism_tetrahedra(gids))
    return (float(f"{h:.10e}"), tuple(np.round(rel, 9).ravel().tolist()), pattern)


def face_signature(mesh: Mesh, face: int):
    verts = sorted(mesh.faces[face])
    d = float(mesh.face_diameter[face])
    rel = (mesh.vertices[verts] - mesh.face_centroid[face]) / d
    return (float(f"{d:.10e}"), tuple(np.round(rel, 9).ravel().tolist()))


@dataclass(frozen=True, eq=False)
class CellClass:
    kernel: LocalKernel
    cells: np.ndarray
    dofs: np.ndarray  # (n_cells_in_class, n_loc) global DOF indices


@dataclass(frozen=True, eq=False)
class FaceClass:
    faces: np.ndarray
    points: np.ndarray  # relative to face centroid
    weights: np.ndarray
    values: np.ndarray
    mass: np.ndarray


class Discretization:
    """The stabilizer-free WG discretization of one mesh at degree ``k``."""

    def __init__(self, mesh: Mesh, k: int, cache: bool = True):
        self.mesh = mesh
        self.k = k
        self.dofmap = DofMap(mesh, k)
        self.class_of_cell = np.empty(mesh.n_cells, dtype=np.int64)
        self.classes: list[CellClass] = []
        groups: dict = {}
        for c in range(mesh.n_cells):
            key = cell_signature(mesh, c) if cache else c
            groups.setdefault(key, []).append(c)
        for cid, cells in enumerate(groups.values()):
            cells = np.array(cells)
            kernel = build_local_kernel(mesh, int(cells[0]), k)
            dofs = np.array([self.dofmap.cell_dofs(c) for c in cells], dtype=np.int64)
            self.classes.append(CellClass(kernel, cells, dofs))
            self.class_of_cell[cells] = cid
        log.debug("%d cells in %d kernel classes", mesh.n_cells, len(self.classes))

        fgroups: dict = {}
        for f in range(mesh.n_faces):
            fgroups.setdefault(face_signature(mesh, f) if cache else f, []).append(f)
        self.face_classes = [self._face_class(np.array(fs)) for fs in fgroups.values()]

    def _face_class(self, faces) -> FaceClass:
        mesh, k = self.mesh, self.k
        f = int(faces[0])
        loop = mesh.vertices[list(mesh.faces[f])]
        fb = FaceBasis(mesh.face_centroid[f], mesh.face_tangents[f], float(mesh.face_diameter[f]), k + 1)
        tris = [loop] if mesh.dim == 2 else [loop[[0, i, i + 1]] for i in range(1, len(loop) - 1)]
        xs, ws, Ms = [], [], 0.0
        for T in tris:
            x, w = map_rule(simplex_quadrature(mesh.dim - 1, 2 * k + 4), T)
            xs.append(x)
            ws.append(w)
            xm, wm = map_rule(simplex_quadrature(mesh.dim - 1, 2 * k + 2), T)
            Ms = Ms + mass_matrix(fb.eval(xm), wm, check=False)
        x = np.vstack(xs)
        return FaceClass(faces, x - mesh.face_centroid[f], np.concatenate(ws), fb.eval(x), Ms)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def kernel(self, cell: int) -> LocalKernel:
        return self.classes[self.class_of_cell[cell]].kernel

    def cell_dofs(self, cell: int) -> np.ndarray:
        return self.dofmap.cell_dofs(cell)

    # ---------------------------------------------------------- vectorized ops

    def _cell_moments(self, cls: CellClass, func):
        """``(func, phi_j)_T`` for every cell of the class: (n_cells, n_interior)."""
        kern = cls.kernel
        out = np.empty((len(cls.cells), kern.layout.n_interior))
        wv = kern.load_values * kern.load_weights[:, None]
        for s in range(0, len(cls.cells), CHUNK):
            cs = cls.cells[s:s + CHUNK]
            X = self.mesh.cell_centroid[cs][:, None, :] + kern.load_points[None]
            out[s:s + CHUNK] = np.asarray(func(X), dtype=float) @ wv
        return out

    def load_vector(self, f) -> np.ndarray:
        """Global vector of ``(f, v_0)`` over all interior basis functions."""
        b = np.zeros(self.dofmap.n_dof)
        if f is None:
            return b
        for cls in self.classes:
            n0 = cls.kernel.layout.n_interior
            b[cls.dofs[:, :n0]] = self._cell_moments(cls, f)
        return b

    def project_interior(self, u) -> np.ndarray:
        """Cell-wise L2 projection onto ``P_k``: (n_cells, n_interior)."""
        out = np.zeros((self.mesh.n_cells, self.dofmap.n_interior))
        for cls in self.classes:
            out[cls.cells] = np.linalg.solve(cls.kernel.mass0, self._cell_moments(cls, u).T).T
        return out

    def project_faces(self, g, faces=None) -> np.ndarray:
        """Face-wise L2 projection onto ``P_{k+1}``: (n_faces, n_face)."""
        out = np.zeros((self.mesh.n_faces, self.dofmap.n_face))
        mask = None
        if faces is not None:
            mask = np.zeros(self.mesh.n_faces, dtype=bool)
            mask[faces] = True
        for fc in self.face_classes:
            fs = fc.faces if mask is None else fc.faces[mask[fc.faces]]
            if len(fs) == 0:
                continue
            wv = fc.values * fc.weights[:, None]
            for s in range(0, len(fs), CHUNK):
                part = fs[s:s + CHUNK]
                X = self.mesh.face_centroid[part][:, None, :] + fc.points[None]
                rhs = np.asarray(g(X), dtype=float) @ wv
                out[part] = np.linalg.solve(fc.mass, rhs.T).T
        return out

    def project(self, u) -> np.ndarray:
        """``Q_h u = {Q_0 u, Q_b u}`` as a global DOF vector."""
        x = np.empty(self.dofmap.n_dof)
        x[: self.dofmap.face_offset] = self.project_interior(u).ravel()
        x[self.dofmap.face_offset:] = self.project_faces(u).ravel()
        return x

    def local_quadratic_sum(self, x: np.ndarray, which: str = "S") -> np.ndarray:
        """Per-cell ``x_T^T A_T x_T`` for ``A_T`` in {S, norm1h, mass0}."""
        out = np.empty(self.mesh.n_cells)
        for cls in self.classes:
            kern = cls.kernel
            if which == "mass0":
                A, idx = kern.mass0, cls.dofs[:, : kern.layout.n_interior]
            else:
                A, idx = getattr(kern, which), cls.dofs
            xl = x[idx]
            out[cls.cells] = np.einsum("ci,ij,cj->c", xl, A, xl)
        return out
