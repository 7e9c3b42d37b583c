import numpy as np
import pytest

from sfwg.analysis import local_Qh, commuting_residual, polynomial_solution
from sfwg.discretization import Discretization
from sfwg.mesh import build_mesh
from sfwg.weak_gradient import build_local_kernel, local_stiffness, weak_gradient_field, weak_gradient_rhs

SETUPS = [("quad", 2, 0), ("quad", 2, 1), ("quad", 2, 3), ("quadhex", 2, 0), ("quadhex", 2, 2),
          ("wedge", 1, 0), ("wedge", 1, 1)]


@pytest.fixture(scope="module", params=SETUPS, ids=lambda p: f"{p[0]}-k{p[2]}")
def disc(request):
    family, level, k = request.param
    return Discretization(build_mesh(family, level), k)


def _cells(disc):
    return [int(c.cells[0]) for c in disc.classes]


def _constant_dofs(kern):
    x = np.zeros(kern.layout.n_loc)
    x[0] = 1.0  # first cell and face basis functions are the constant monomial
    for m in range(kern.layout.n_faces):
        x[kern.layout.face(m).start] = 1.0
    return x


def test_constant_has_zero_weak_gradient(disc):
    for c in _cells(disc):
        kern = disc.kernel(c)
        x = _constant_dofs(kern)
        assert np.abs(kern.G @ x).max() <= 1e-12
        assert np.abs(kern.S @ x).max() <= 1e-11 * np.abs(kern.S).max()


def test_linear_function_has_exact_weak_gradient(disc):
    d = disc.mesh.dim
    g = np.arange(1.0, d + 1)
    ell = lambda x: x @ g + 0.3  # noqa: E731
    for c in _cells(disc):
        kern = disc.kernel(c)
        x = local_Qh(disc, c, ell)
        sig = kern.lam.superspace
        coef = weak_gradient_field(kern, x)
        pts = kern.load_points[:5] + kern.centroid
        for i in range(sig.split.n_simplices):
            vals = sig.evaluate(coef, i, pts)
            np.testing.assert_allclose(vals, np.broadcast_to(g, vals.shape), atol=1e-11)
        # energy of a linear function: |grad l|^2 |T|
        assert x @ kern.S @ x == pytest.approx(g @ g * disc.mesh.cell_measure[c], rel=1e-10)


def test_weak_gradient_matches_saddle_point_oracle(disc):
    rng = np.random.default_rng(11)
    for c in _cells(disc):
        kern = disc.kernel(c)
        lam = kern.lam
        B = weak_gradient_rhs(disc.mesh, c, disc.k, lam)
        C = lam.constraints
        Ms = lam.mass_sup
        n, r = Ms.shape[0], C.shape[0]
        K = np.block([[Ms, C.T], [C, np.zeros((r, r))]])
        v = rng.standard_normal(kern.layout.n_loc)
        sol, *_ = np.linalg.lstsq(K, np.concatenate([B @ v, np.zeros(r)]), rcond=None)
        np.testing.assert_allclose(weak_gradient_field(kern, v), sol[:n],
                                   atol=1e-10 * max(1.0, np.abs(sol[:n]).max()))


def test_stiffness_symmetric_psd_with_constant_kernel(disc):
    for c in _cells(disc):
        S = disc.kernel(c).S
        assert np.abs(S - S.T).max() <= 1e-13 * np.abs(S).max()
        w = np.linalg.eigvalsh(S)
        assert w.min() >= -1e-11 * w.max()
        assert (w < 1e-11 * w.max()).sum() == 1


def test_local_stiffness_formula():
    rng = np.random.default_rng(0)
    G = rng.standard_normal((5, 3))
    A = rng.standard_normal((5, 5))
    M = A @ A.T + np.eye(5)
    S = local_stiffness(G, M)
    np.testing.assert_allclose(S, G.T @ M @ G, atol=1e-13)
    np.testing.assert_allclose(S, S.T, atol=0)


def test_commuting_identity(disc):
    rng = np.random.default_rng(5)
    for c in _cells(disc):
        for _ in range(3):
            u = polynomial_solution(disc.k + 2, disc.mesh.dim, seed=int(rng.integers(1 << 30)))
            assert commuting_residual(disc, c, u) <= 1e-9


def test_kernel_reused_for_translated_cells():
    m = build_mesh("quad", 3)
    disc = Discretization(m, 1)
    assert disc.n_classes < m.n_cells
    for cls in disc.classes[:3]:
        other = int(cls.cells[-1])
        fresh = build_local_kernel(m, other, 1)
        np.testing.assert_allclose(fresh.S, cls.kernel.S, atol=1e-11 * np.abs(fresh.S).max())
        np.testing.assert_allclose(fresh.mass0, cls.kernel.mass0, atol=1e-14)


def test_uncached_discretization_agrees():
    m = build_mesh("quadhex", 2)
    a, b = Discretization(m, 1), Discretization(m, 1, cache=False)
    assert b.n_classes == m.n_cells
    for c in range(m.n_cells):
        np.testing.assert_allclose(a.kernel(c).S, b.kernel(c).S, atol=1e-10)
