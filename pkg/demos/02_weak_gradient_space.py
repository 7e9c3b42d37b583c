"""Build the constrained weak-gradient space on a few cells and inspect it.

The space is the nullspace of a constraint matrix acting on piecewise vector
polynomials over the cell's simplicial split. Its dimension is whatever the
rank computation says; we print it next to the superspace size.
"""
import numpy as np

from sfwg.lambda_space import build_lambda_space, lambda_sample_check
from sfwg.mesh import build_mesh, mesh_from_polygons, split_cell

square = mesh_from_polygons(np.array([[0.0, 0], [1, 0], [1, 1], [0, 1]]), [[0, 1, 2, 3]])
hexes = build_mesh("quadhex", 2)
hex_cell = max(range(hexes.n_cells), key=lambda c: len(hexes.cell_vertices[c]))
wedge = build_mesh("wedge", 1)

print(f"{'cell':>12} {'k':>2} {'D_sup':>6} {'rank':>5} {'D_lam':>6}  residuals (jump, trace, div)")
for name, mesh, cell, ks in [("square", square, 0, range(4)), ("hexagon", hexes, hex_cell, range(4)),
                             ("wedge", wedge, 0, range(3))]:
    for k in ks:
        lam = build_lambda_space(split_cell(mesh, cell), k, mesh.cell_centroid[cell], mesh.cell_diameter[cell])
        res = lambda_sample_check(lam, rng=0)
        print(f"{name:>12} {k:>2} {lam.dim_sup:>6} {lam.rank:>5} {lam.dim:>6}  "
              f"{res['jump']:.1e} {res['trace']:.1e} {res['div']:.1e}")

# Every global [P_k]^d field must be in the space; the residual of projecting
# the vector monomials onto it should be at round-off level.
lam = build_lambda_space(split_cell(hexes, hex_cell), 2, hexes.cell_centroid[hex_cell],
                         hexes.cell_diameter[hex_cell])
print(f"\n[P_2]^2 containment residual on the hexagon: {lam.containment_residual():.2e}")
