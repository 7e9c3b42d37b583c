"""Polytopal meshes of the unit square / unit cube.

Three families are generated: fixed-shape trapezoid quadrilaterals,
staggered bricks (hexagons with hanging midpoints, pentagons, quadrilaterals)
and wedges (triangular prisms). Each cell also has a simplicial split used
only to build the weak-gradient space.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from math import factorial
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, GeometryError

QUAD_PERTURBATION = 0.1
MAX_LEVEL_2D = 10
MAX_LEVEL_3D = 7


@dataclass(frozen=True, eq=False)
class Mesh:
    """An immutable polytopal mesh.

    Faces are vertex loops (edges ``(a, b)`` in 2D, planar polygons in 3D).
    ``cells[c]`` lists the face ids of cell ``c``; ``cell_vertices[c]`` is the
    counter-clockwise vertex loop in 2D and the prism ordering
    ``(a0, a1, a2, b0, b1, b2)`` for wedges.
    """

    dim: int
    vertices: np.ndarray
    faces: tuple
    cells: tuple
    cell_vertices: tuple
    family: str = "custom"
    level: int = 1
    face_cells: np.ndarray = field(init=False)
    boundary: np.ndarray = field(init=False)
    face_centroid: np.ndarray = field(init=False)
    face_measure: np.ndarray = field(init=False)
    face_diameter: np.ndarray = field(init=False)
    face_tangents: np.ndarray = field(init=False)
    face_normal: np.ndarray = field(init=False)
    cell_centroid: np.ndarray = field(init=False)
    cell_measure: np.ndarray = field(init=False)
    cell_diameter: np.ndarray = field(init=False)
    cell_face_sign: tuple = field(init=False)

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        nf = len(self.faces)
        fc = -np.ones((nf, 2), dtype=np.int64)
        for c, flist in enumerate(self.cells):
            for f in flist:
                slot = 0 if fc[f, 0] < 0 else 1
                if fc[f, slot] >= 0:
                    raise GeometryError(f"face {f} shared by more than two cells")
                fc[f, slot] = c
        set_("face_cells", fc)
        set_("boundary", fc[:, 1] < 0)
        self._face_geometry()
        self._cell_geometry()

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def h(self) -> float:
        return float(self.cell_diameter.max())

    def _face_geometry(self):
        V, d, nf = self.vertices, self.dim, len(self.faces)
        cen = np.empty((nf, d))
        meas = np.empty(nf)
        diam = np.empty(nf)
        tang = np.empty((nf, d - 1, d))
        nrm = np.empty((nf, d))
        if d == 2:
            F = np.array(self.faces, dtype=np.int64)
            lo = np.minimum(F[:, 0], F[:, 1])
            hi = np.maximum(F[:, 0], F[:, 1])
            t = V[hi] - V[lo]
            L = np.linalg.norm(t, axis=1)
            t /= L[:, None]
            cen[:] = 0.5 * (V[lo] + V[hi])
            meas[:] = diam[:] = L
            tang[:, 0] = t
            nrm[:] = np.stack([t[:, 1], -t[:, 0]], axis=1)
        else:
            for f, loop in enumerate(self.faces):
                P = V[list(loop)]
                s = sorted(loop)
                t1 = V[s[1]] - V[s[0]]
                t1 /= np.linalg.norm(t1)
                n = np.cross(t1, V[s[2]] - V[s[0]])
                n /= np.linalg.norm(n)
                tang[f, 0] = t1
                tang[f, 1] = np.cross(n, t1)
                nrm[f] = n
                area, c = 0.0, np.zeros(3)
                for i in range(1, len(loop) - 1):
                    a = 0.5 * np.linalg.norm(np.cross(P[i] - P[0], P[i + 1] - P[0]))
                    area += a
                    c += a * (P[0] + P[i] + P[i + 1]) / 3
                meas[f] = area
                cen[f] = c / area
                diam[f] = max(np.linalg.norm(P[i] - P[j]) for i in range(len(P)) for j in range(i))
                if np.abs((P - cen[f]) @ n).max() > 1e-12 * diam[f]:
                    raise GeometryError(f"face {f} is not planar")
        for name, val in [("face_centroid", cen), ("face_measure", meas),
                          ("face_diameter", diam), ("face_tangents", tang), ("face_normal", nrm)]:
            object.__setattr__(self, name, val)

    def _cell_geometry(self):
        nc = len(self.cells)
        cen = np.empty((nc, self.dim))
        meas = np.empty(nc)
        diam = np.empty(nc)
        signs = [None] * nc
        # cells grouped by vertex count so everything below is vectorized
        groups: dict = {}
        for c, loop in enumerate(self.cell_vertices):
            groups.setdefault(len(loop), []).append(c)
        for nv, cs in groups.items():
            cs = np.array(cs)
            loops = np.array([self.cell_vertices[c] for c in cs])
            P = self.vertices[loops]
            diam[cs] = np.sqrt(((P[:, :, None, :] - P[:, None, :, :]) ** 2).sum(-1).max(axis=(1, 2)))
            if self.dim == 2:
                m, c = _polygon_area_centroid(P)
            else:
                m, c = _polyhedron_volume_centroid(self.vertices, P, [self.cells[c] for c in cs], self.faces)
            if (m <= 0).any():
                bad = cs[np.argmin(m)]
                raise GeometryError(f"cell {bad} has non-positive measure")
            meas[cs] = m
            cen[cs] = c
        for c in range(nc):
            fl = list(self.cells[c])
            signs[c] = np.sign(np.einsum("fd,fd->f", self.face_centroid[fl] - cen[c], self.face_normal[fl]))
        object.__setattr__(self, "cell_centroid", cen)
        object.__setattr__(self, "cell_measure", meas)
        object.__setattr__(self, "cell_diameter", diam)
        object.__setattr__(self, "cell_face_sign", tuple(signs))

    def outward_normals(self, cell: int) -> np.ndarray:
        fl = list(self.cells[cell])
        return self.face_normal[fl] * self.cell_face_sign[cell][:, None]


def _polygon_area_centroid(P):
    x, y = P[..., 0], P[..., 1]
    xn, yn = np.roll(x, -1, axis=-1), np.roll(y, -1, axis=-1)
    cr = x * yn - xn * y
    A = 0.5 * cr.sum(-1)
    cx = ((x + xn) * cr).sum(-1) / (6 * A)
    cy = ((y + yn) * cr).sum(-1) / (6 * A)
    return A, np.stack([cx, cy], axis=-1)


def _polyhedron_volume_centroid(V, P, cell_faces, faces):
    vols = np.empty(len(P))
    cens = np.empty((len(P), 3))
    for n, (ref, flist) in enumerate(zip(P.mean(axis=1), cell_faces)):
        vol, cc = 0.0, np.zeros(3)
        for f in flist:
            Q = V[list(faces[f])]
            for i in range(1, len(Q) - 1):
                v = abs(np.linalg.det(np.array([Q[0] - ref, Q[i] - ref, Q[i + 1] - ref]))) / 6
                vol += v
                cc += v * (ref + Q[0] + Q[i] + Q[i + 1]) / 4
        vols[n] = vol
        cens[n] = cc / vol
    return vols, cens


def mesh_from_polygons(vertices, loops, family="custom", level=1) -> Mesh:
    """Build a 2D mesh from counter-clockwise vertex loops."""
    index: dict = {}
    faces, cells = [], []
    for loop in loops:
        flist = []
        for a, b in zip(loop, loop[1:] + loop[:1]):
            key = (a, b) if a < b else (b, a)
            f = index.get(key)
            if f is None:
                f = index[key] = len(faces)
                faces.append(key)
            flist.append(f)
        cells.append(tuple(flist))
    return Mesh(2, np.asarray(vertices, dtype=float), tuple(faces), tuple(cells),
                tuple(tuple(l) for l in loops), family, level)


_PRISM_FACES = ((0, 1, 2), (3, 4, 5), (0, 1, 4, 3), (1, 2, 5, 4), (2, 0, 3, 5))


def mesh_from_prisms(vertices, prisms, family="custom", level=1) -> Mesh:
    """Build a 3D mesh of triangular prisms ``(a0, a1, a2, b0, b1, b2)``."""
    index: dict = {}
    faces, cells = [], []
    for pr in prisms:
        flist = []
        for loc in _PRISM_FACES:
            loop = tuple(pr[i] for i in loc)
            key = tuple(sorted(loop))
            f = index.get(key)
            if f is None:
                f = index[key] = len(faces)
                faces.append(loop)
            flist.append(f)
        cells.append(tuple(flist))
    return Mesh(3, np.asarray(vertices, dtype=float), tuple(faces), tuple(cells),
                tuple(tuple(p) for p in prisms), family, level)


def _check_level(level, upper):
    if not isinstance(level, (int, np.integer)) or not 1 <= level <= upper:
        raise ConfigurationError(f"level must be an integer in [1, {upper}], got {level!r}")


def build_quad_grid(level: int) -> Mesh:
    """Fixed-shape trapezoid grid with ``2**level`` cells per direction.

    Interior vertex ``(i/n, j/n)`` moves vertically by ``(-1)**(i+j) * 0.1 / n``.
    """
    _check_level(level, MAX_LEVEL_2D)
    n = 2**level
    i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="xy")
    x = i / n
    y = j / n
    interior = (i > 0) & (i < n) & (j > 0) & (j < n)
    y = y + np.where(interior, (-1.0) ** (i + j) * QUAD_PERTURBATION / n, 0.0)
    verts = np.stack([x.ravel(), y.ravel()], axis=1)
    vid = lambda a, b: a + (n + 1) * b  # noqa: E731
    loops = [
        [vid(a, b), vid(a + 1, b), vid(a + 1, b + 1), vid(a, b + 1)]
        for b in range(n) for a in range(n)
    ]
    return mesh_from_polygons(verts, loops, "quad", level)


def build_quad_hex_grid(level: int) -> Mesh:
    """Staggered-brick grid of ``n = 2**level`` rows.

    Even rows are shifted by half a brick and closed by half bricks at both
    ends. Each brick's top and bottom edges are split at the hanging vertices
    of the neighbouring rows, so interior bricks are hexagons.
    """
    _check_level(level, MAX_LEVEL_2D)
    n = 2**level
    # integer x positions in units of 1/(2n)
    def breaks(row):
        if row % 2 == 0:
            return [0] + list(range(1, 2 * n, 2)) + [2 * n]
        return list(range(0, 2 * n + 1, 2))

    line_x = []
    for j in range(n + 1):
        xs = set()
        if j > 0:
            xs.update(breaks(j - 1))
        if j < n:
            xs.update(breaks(j))
        line_x.append(sorted(xs))
    verts, ids = [], []
    for j, xs in enumerate(line_x):
        row = {}
        for xi in xs:
            row[xi] = len(verts)
            verts.append((xi / (2 * n), j / n))
        ids.append(row)
    loops = []
    for j in range(n):
        br = breaks(j)
        for a, b in zip(br[:-1], br[1:]):
            lo, hi = line_x[j], line_x[j + 1]
            bottom = [ids[j][x] for x in lo[bisect_left(lo, a):bisect_right(lo, b)]]
            top = [ids[j + 1][x] for x in hi[bisect_left(hi, a):bisect_right(hi, b)]]
            loops.append(bottom + top[::-1])
    return mesh_from_polygons(np.array(verts), loops, "quadhex", level)


def build_wedge_grid(level: int) -> Mesh:
    """Unit cube cut into ``n**3`` cubes (``n = 2**(level-1)``), each split into two wedges."""
    _check_level(level, MAX_LEVEL_3D)
    n = 2 ** (level - 1)
    g = np.arange(n + 1) / n
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    verts = np.stack([X.transpose(2, 1, 0).ravel(), Y.transpose(2, 1, 0).ravel(),
                      Z.transpose(2, 1, 0).ravel()], axis=1)
    vid = lambda a, b, c: a + (n + 1) * (b + (n + 1) * c)  # noqa: E731
    prisms = []
    for c in range(n):
        for b in range(n):
            for a in range(n):
                p00, p10 = vid(a, b, c), vid(a + 1, b, c)
                p01, p11 = vid(a, b + 1, c), vid(a + 1, b + 1, c)
                up = (n + 1) ** 2
                prisms.append((p00, p10, p01, p00 + up, p10 + up, p01 + up))
                prisms.append((p10, p11, p01, p10 + up, p11 + up, p01 + up))
    return mesh_from_prisms(verts, prisms, "wedge", level)


FAMILIES = {"quad": build_quad_grid, "quadhex": build_quad_hex_grid, "wedge": build_wedge_grid}


def build_mesh(family: str, level: int) -> Mesh:
    try:
        builder = FAMILIES[family]
    except KeyError:
        raise ConfigurationError(f"unknown mesh family {family!r}") from None
    return builder(level)


# ------------------------------------------------------------------ splitting


@dataclass(frozen=True, eq=False)
class CellSplit:
    """Simplicial split of one cell.

    ``simplices[i]`` indexes ``points``; facet ``j`` of simplex ``i`` is the
    one opposite its ``j``-th vertex. ``facet_face[i, j]`` is the cell-local
    face index covering that facet (-1 when internal) and
    ``facet_neighbor[i, j]`` the simplex on the other side (-1 on the boundary).
    """

    cell: int
    points: np.ndarray
    simplices: np.ndarray
    facet_face: np.ndarray
    facet_neighbor: np.ndarray

    @property
    def n_simplices(self) -> int:
        return len(self.simplices)

    def simplex(self, i: int) -> np.ndarray:
        return self.points[self.simplices[i]]

    def facet(self, i: int, j: int) -> np.ndarray:
        idx = [v for m, v in enumerate(self.simplices[i]) if m != j]
        return self.points[idx]

    def facet_normal(self, i: int, j: int) -> np.ndarray:
        """Unit normal of facet ``j`` of simplex ``i``, outward from simplex ``i``."""
        S = self.simplex(i)
        F = np.delete(S, j, axis=0)
        if len(F) == 2:
            t = F[1] - F[0]
            n = np.array([t[1], -t[0]])
        else:
            n = np.cross(F[1] - F[0], F[2] - F[0])
        n = n / np.linalg.norm(n)
        if np.dot(n, F[0] - S[j]) < 0:
            n = -n
        return n

    def volumes(self) -> np.ndarray:
        d = self.points.shape[1]
        return np.array([abs(np.linalg.det(S[1:] - S[0])) / factorial(d)
                         for S in (self.simplex(i) for i in range(self.n_simplices))])


# (V1..V6) relabelling putting the minimum-id vertex first, keeping the prism structure
_PRISM_ROTATIONS = (
    (0, 1, 2, 3, 4, 5), (1, 2, 0, 4, 5, 3), (2, 0, 1, 5, 3, 4),
    (3, 5, 4, 0, 2, 1), (4, 3, 5, 1, 0, 2), (5, 4, 3, 2, 1, 0),
)


def prism_tetrahedra(gids: Sequence[int]):
    """Local vertex indices of the 3 tetrahedra of a prism.

    Each quadrilateral face is cut along the diagonal through its smallest
    global vertex id, so a face shared by two prisms is cut identically.
    """
    m = int(np.argmin(gids))
    p = _PRISM_ROTATIONS[m]
    g = [gids[i] for i in p]
    if min(g[1], g[5]) < min(g[2], g[4]):
        tets = ((0, 1, 2, 5), (0, 1, 5, 4), (0, 4, 5, 3))
    else:
        tets = ((0, 1, 2, 4), (0, 4, 2, 5), (0, 4, 5, 3))
    return [tuple(p[i] for i in t) for t in tets]


def split_cell(mesh: Mesh, cell: int) -> CellSplit:
    """Fan triangulation from the centroid (2D) or 3-tetrahedron prism split (3D)."""
    gids = list(mesh.cell_vertices[cell])
    flist = list(mesh.cells[cell])
    if mesh.dim == 2:
        nv = len(gids)
        pts = np.vstack([mesh.vertices[gids], mesh.cell_centroid[cell]])
        c = nv
        simp = np.array([[c, i, (i + 1) % nv] for i in range(nv)])
        h = mesh.cell_diameter[cell]
        for i, (a, b, cc) in enumerate(pts[simp]):
            area = 0.5 * ((b[0] - a[0]) * (cc[1] - a[1]) - (b[1] - a[1]) * (cc[0] - a[0]))
            if area <= 1e-14 * h * h:
                raise GeometryError(f"cell {cell} is not star-shaped with respect to its centroid")
        # face i joins loop vertices i, i+1; locate it among the cell faces
        loc = {frozenset(mesh.faces[f]): m for m, f in enumerate(flist)}
        facet_face = -np.ones((nv, 3), dtype=np.int64)
        facet_nb = -np.ones((nv, 3), dtype=np.int64)
        for i in range(nv):
            facet_face[i, 0] = loc[frozenset((gids[i], gids[(i + 1) % nv]))]
            facet_nb[i, 1] = (i + 1) % nv  # facet opposite v_i: (c, v_{i+1})
            facet_nb[i, 2] = (i - 1) % nv  # facet opposite v_{i+1}: (c, v_i)
        return CellSplit(cell, pts, simp, facet_face, facet_nb)

    if len(gids) != 6:
        raise GeometryError(f"cell {cell}: only prism cells can be split in 3D")
    pts = mesh.vertices[gids]
    simp = []
    for t in prism_tetrahedra(gids):
        t = list(t)
        if np.linalg.det(pts[t[1:]] - pts[t[0]]) < 0:
            t[2], t[3] = t[3], t[2]
        simp.append(t)
    simp = np.array(simp)
    face_sets = [frozenset(gids.index(v) for v in mesh.faces[f]) for f in flist]
    ns = len(simp)
    facet_face = -np.ones((ns, 4), dtype=np.int64)
    facet_nb = -np.ones((ns, 4), dtype=np.int64)
    keys = {}
    for i, t in enumerate(simp):
        for j in range(4):
            fs = frozenset(v for m, v in enumerate(t) if m != j)
            hit = [m for m, s in enumerate(face_sets) if fs <= s]
            if hit:
                facet_face[i, j] = hit[0]
            elif fs in keys:
                i2, j2 = keys[fs]
                facet_nb[i, j], facet_nb[i2, j2] = i2, i
            else:
                keys[fs] = (i, j)
    return CellSplit(cell, pts, simp, facet_face, facet_nb)


# ------------------------------------------------------------------ geometry


@dataclass(frozen=True)
class CellGeometry:
    diameter: float
    centroid: np.ndarray
    normals: np.ndarray
    face_measures: np.ndarray
    measure: float


def geometry(mesh: Mesh, cell: int) -> CellGeometry:
    """Diameter, centroid, outward unit normals and face measures of a cell."""
    if not 0 <= cell < mesh.n_cells:
        raise IndexError(f"cell {cell} out of range")
    fl = list(mesh.cells[cell])
    return CellGeometry(float(mesh.cell_diameter[cell]), mesh.cell_centroid[cell].copy(),
                        mesh.outward_normals(cell), mesh.face_measure[fl].copy(),
                        float(mesh.cell_measure[cell]))


# ------------------------------------------------------------------ export


def write_vtk(mesh: Mesh, path, cell_data: dict | None = None, title="sfwg mesh") -> Path:
    """Legacy-VTK ASCII export (POLYDATA polygons in 2D, polyhedra in 3D)."""
    path = Path(path)
    V = mesh.vertices
    lines = ["# vtk DataFile Version 3.0", title, "ASCII"]
    pts = V if mesh.dim == 3 else np.hstack([V, np.zeros((len(V), 1))])
    if mesh.dim == 2:
        lines.append("DATASET POLYDATA")
        lines.append(f"POINTS {len(pts)} double")
        lines += [" ".join(f"{x:.16g}" for x in p) for p in pts]
        size = sum(len(l) + 1 for l in mesh.cell_vertices)
        lines.append(f"POLYGONS {mesh.n_cells} {size}")
        lines += [" ".join(map(str, (len(l),) + tuple(l))) for l in mesh.cell_vertices]
    else:
        lines.append("DATASET UNSTRUCTURED_GRID")
        lines.append(f"POINTS {len(pts)} double")
        lines += [" ".join(f"{x:.16g}" for x in p) for p in pts]
        rows = []
        for c, flist in enumerate(mesh.cells):
            entry = [len(flist)]
            for f in flist:
                loop = list(mesh.faces[f])
                if mesh.cell_face_sign[c][list(flist).index(f)] * _loop_sign(V, loop, mesh.face_normal[f]) < 0:
                    loop = loop[::-1]
                entry += [len(loop)] + loop
            rows.append([len(entry)] + entry)
        lines.append(f"CELLS {mesh.n_cells} {sum(len(r) for r in rows)}")
        lines += [" ".join(map(str, r)) for r in rows]
        lines.append(f"CELL_TYPES {mesh.n_cells}")
        lines += ["42"] * mesh.n_cells
    if cell_data:
        lines.append(f"CELL_DATA {mesh.n_cells}")
        for name, vals in cell_data.items():
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines += [f"{v:.16g}" for v in np.asarray(vals, dtype=float)]
    path.write_text("\n".join(lines) + "\n")
    return path


def _loop_sign(V, loop, normal):
    P = V[loop]
    a = np.zeros(3)
    for i in range(1, len(P) - 1):
        a += np.cross(P[i] - P[0], P[i + 1] - P[0])
    return np.sign(a @ normal)
