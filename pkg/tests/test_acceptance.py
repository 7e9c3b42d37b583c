"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criteria 1-3 run full convergence studies (several minutes in total).
"""

import time

import numpy as np
import pytest

from sfwg.analysis import (
    EXACT,
    commuting_residual,
    energy_error,
    energy_norm,
    get_solution,
    l2_error,
    norm_ratio_interval,
    polynomial_solution,
)
from sfwg.discretization import Discretization
from sfwg.lambda_space import build_lambda_space, lambda_sample_check
from sfwg.mesh import build_mesh
from sfwg.solver import apply_dirichlet, assemble, solve, solve_poisson
from sfwg.study import StudyConfig, run_study

TARGETS = {0: (2.0, 2.0), 1: (4.0, 3.0), 2: (5.0, 4.0), 3: (6.0, 5.0)}
KS = {"quad": range(4), "quadhex": range(4), "wedge": range(2)}


def mesh_dim(family):
    return 3 if family == "wedge" else 2


def _verdict(capsys, number, title, checks):
    failed = [c for c, ok in checks if not ok]
    line = f"criterion {number} ({title}): {'PASS' if not failed else 'FAIL'}"
    if failed:
        line += " -- " + "; ".join(failed)
    with capsys.disabled():
        print("\n" + line)
        for c, ok in checks:
            print(f"    [{'ok' if ok else 'xx'}] {c}")
    assert not failed, line


def _rate_checks(family, k, levels, tol, l2_tol=None, finest_only=False, budget=None):
    t0 = time.perf_counter()
    report = run_study(StudyConfig(family=family, k=k, levels=levels))
    elapsed = time.perf_counter() - t0
    want = TARGETS[k]
    rows = report.rows[-1:] if finest_only else report.rows[1:]
    checks = []
    for r in rows:
        for name, got, w, t in [("L2", r.l2_rate, want[0], l2_tol or tol), ("energy", r.energy_rate, want[1], tol)]:
            ok = got != EXACT and abs(got - w) <= t
            checks.append((f"{family} k={k} level {r.level} {name} rate {got:.3f} vs {w} +- {t}", ok))
    if budget is not None:
        checks.append((f"{family} k={k} levels {levels[0]}-{levels[1]} in {elapsed:.1f}s < {budget}s",
                       elapsed < budget))
    return checks


@pytest.mark.slow
def test_criterion_1_quad_rates(capsys):
    checks = []
    checks += _rate_checks("quad", 0, (6, 8), 0.10, budget=120)
    checks += _rate_checks("quad", 1, (5, 7), 0.10)
    checks += _rate_checks("quad", 2, (4, 6), 0.15)
    checks += _rate_checks("quad", 3, (2, 4), 0.3, finest_only=True)
    _verdict(capsys, 1, "quadrilateral grids", checks)


@pytest.mark.slow
def test_criterion_2_quadhex_rates(capsys):
    checks = []
    checks += _rate_checks("quadhex", 0, (6, 8), 0.10)
    checks += _rate_checks("quadhex", 1, (6, 8), 0.10, l2_tol=0.15)
    checks += _rate_checks("quadhex", 2, (4, 6), 0.15)
    checks += _rate_checks("quadhex", 3, (2, 4), 0.3, finest_only=True)
    _verdict(capsys, 2, "quadrilateral-hexagon grids", checks)


@pytest.mark.slow
def test_criterion_3_wedge_rates(capsys):
    # rates are judged at the finest level: level 4 is still pre-asymptotic for k = 0
    checks = []
    checks += _rate_checks("wedge", 0, (3, 5), 0.2, finest_only=True, budget=600)
    checks += _rate_checks("wedge", 1, (3, 5), 0.2, finest_only=True, budget=600)
    _verdict(capsys, 3, "3D wedge grids", checks)


def test_criterion_4_polynomial_exactness(capsys):
    checks = []
    for family, ks in KS.items():
        mesh = build_mesh(family, 3)
        for k in ks:
            disc = Discretization(mesh, k)
            u = polynomial_solution(k + 1, mesh.dim)
            uh = solve_poisson(disc, u.source, u.u)
            e0, e1 = l2_error(uh, u, disc), energy_error(uh, u, disc)
            checks.append((f"{family} k={k}: L2 {e0:.1e}, energy {e1:.1e} <= 1e-8", e0 <= 1e-8 and e1 <= 1e-8))
    _verdict(capsys, 4, "polynomial exactness", checks)


def test_criterion_5_commuting_identity(capsys):
    rng = np.random.default_rng(2024)
    checks = []
    for family, ks in KS.items():
        mesh = build_mesh(family, 3 if mesh_dim(family) == 2 else 2)
        for k in ks:
            disc = Discretization(mesh, k)
            worst = 0.0
            for cls in disc.classes:
                cell = int(cls.cells[0])
                for _ in range(20):
                    deg = int(rng.integers(1, k + 3))
                    u = polynomial_solution(deg, mesh.dim, seed=int(rng.integers(1 << 30)))
                    worst = max(worst, commuting_residual(disc, cell, u))
            checks.append((f"{family} k={k} ({disc.n_classes} classes): worst residual {worst:.1e} <= 1e-9",
                           worst <= 1e-9))
    _verdict(capsys, 5, "weak gradient of projections", checks)


def test_criterion_6_lambda_space(capsys):
    rng = np.random.default_rng(6)
    checks = []
    for family, ks in KS.items():
        mesh = build_mesh(family, 3 if mesh_dim(family) == 2 else 2)
        for k in ks:
            disc = Discretization(mesh, k)
            sample, contain, stable = 0.0, 0.0, True
            for cls in disc.classes:
                lam = cls.kernel.lam
                res = lambda_sample_check(lam, rng=rng, tol=None)
                sample = max(sample, *res.values())
                contain = max(contain, lam.containment_residual())
                cell = int(cls.cells[0])
                for _ in range(3):
                    perm = rng.permutation(lam.constraints.shape[0])
                    other = build_lambda_space(lam.split, k, mesh.cell_centroid[cell], mesh.cell_diameter[cell],
                                               row_permutation=perm)
                    stable &= other.dim == lam.dim
            checks.append((f"{family} k={k}: sample residual {sample:.1e} <= 1e-9", sample <= 1e-9))
            checks.append((f"{family} k={k}: [P_k]^d containment {contain:.1e} <= 1e-10", contain <= 1e-10))
            checks.append((f"{family} k={k}: dimension stable under row permutation", stable))
    _verdict(capsys, 6, "weak-gradient space", checks)


def test_criterion_7_solver(capsys):
    checks = []
    for family in KS:
        for level in (1, 2):
            for k in (0, 1):
                disc = Discretization(build_mesh(family, level), k)
                A, b = assemble(disc, None)
                red = apply_dirichlet(A, b, disc)
                D = red.A.toarray()
                lam_min = np.linalg.eigvalsh(D).min()
                checks.append((f"{family} level {level} k={k}: symmetric, min eigenvalue {lam_min:.2e} > 0",
                               lam_min > 0 and np.array_equal(D, D.T)))
    for family, level in [("quad", 4), ("quadhex", 4), ("wedge", 2)]:
        disc = Discretization(build_mesh(family, level), 1)
        u = get_solution(f"sine{disc.mesh.dim}d", disc.mesh.dim)
        direct = solve_poisson(disc, u.source, u.u, method="direct").coeffs
        cg = solve_poisson(disc, u.source, u.u, method="cg", tol=1e-13).coeffs
        full = solve_poisson(disc, u.source, u.u, condense=False).coeffs
        e_cg = energy_norm(disc, cg - direct)
        e_sc = energy_norm(disc, full - direct)
        checks.append((f"{family} level {level}: CG vs direct {e_cg:.1e} <= 1e-9", e_cg <= 1e-9))
        checks.append((f"{family} level {level}: condensed vs full {e_sc:.1e} <= 1e-10", e_sc <= 1e-10))
    # the uncondensed path with an explicit solve call, for completeness
    disc = Discretization(build_mesh("quad", 2), 0)
    A, b = assemble(disc, None)
    x = solve(apply_dirichlet(A, b, disc))
    checks.append(("zero data gives zero solution", not np.any(x)))
    _verdict(capsys, 7, "linear solver", checks)


def test_criterion_8_norm_equivalence(capsys):
    rng = np.random.default_rng(8)
    intervals = {}
    for level in (3, 4, 5):
        intervals[level] = norm_ratio_interval(Discretization(build_mesh("quad", level), 1), 100, rng)
    lo = [v[0] for v in intervals.values()]
    hi = [v[1] for v in intervals.values()]
    desc = ", ".join(f"L{lev}: [{a:.3f}, {b:.3f}]" for lev, (a, b) in intervals.items())
    checks = [
        (f"lower ends vary by {max(lo) / min(lo):.3f} <= 2 ({desc})", max(lo) / min(lo) <= 2),
        (f"upper ends vary by {max(hi) / min(hi):.3f} <= 2", max(hi) / min(hi) <= 2),
        ("ratios bounded away from 0", min(lo) > 0),
    ]
    _verdict(capsys, 8, "norm equivalence", checks)
