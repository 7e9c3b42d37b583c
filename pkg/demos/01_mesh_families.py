"""The three mesh families, their sizes, and a VTK export of each.

Run from the repository root:  python demos/01_mesh_families.py
Files land in ./demo_output/.
"""
from pathlib import Path

import numpy as np

from sfwg.mesh import build_mesh, split_cell, write_vtk

out = Path("demo_output")
out.mkdir(exist_ok=True)

# Trapezoids: a square grid whose interior vertices are nudged up and down by
# a tenth of the spacing, in a checkerboard pattern. Only two interior shapes.
for family in ("quad", "quadhex", "wedge"):
    print(f"--- {family}")
    for level in (1, 2, 3):
        m = build_mesh(family, level)
        nverts = np.bincount([len(v) for v in m.cell_vertices])
        print(f"level {level}: {m.n_cells:5d} cells, {m.n_faces:5d} faces, h = {m.h:.4f}, "
              f"vertices-per-cell histogram {dict((i, int(c)) for i, c in enumerate(nverts) if c)}")
    write_vtk(m, out / f"{family}_L3.vtk", {"measure": m.cell_measure})

# Staggered bricks: every other row is shifted by half a brick, so the bricks
# pick up hanging vertices on their top and bottom edges and become hexagons.
m = build_mesh("quadhex", 2)
c = max(range(m.n_cells), key=lambda c: len(m.cell_vertices[c]))
print("\nan interior brick:", np.round(m.vertices[list(m.cell_vertices[c])], 4).tolist())

# Each cell is split into simplices before the weak-gradient space is built:
# a fan from the centroid in 2D, three tetrahedra per wedge in 3D.
s = split_cell(m, c)
print(f"its fan has {s.n_simplices} triangles with areas {np.round(s.volumes(), 5).tolist()}")
w = build_mesh("wedge", 1)
s = split_cell(w, 0)
print(f"a wedge splits into {s.n_simplices} tets, volumes {np.round(s.volumes(), 5).tolist()} "
      f"(wedge volume {w.cell_measure[0]:.5f})")
