"""Exact solutions, projections, the two error norms and convergence rates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError
from .polybasis import monomial_exponents
from .solver import WGFunction

EXACT = "exact"


@dataclass(frozen=True)
class ExactSolution:
    """``u`` with analytic gradient and Laplacian; callables take (..., dim) arrays."""

    name: str
    dim: int
    u: Callable
    grad: Callable
    laplacian: Callable

    def source(self, x):
        """``f = -Δu``."""
        return -self.laplacian(x)


def _sine(dim):
    pi = np.pi

    def u(x):
        return np.prod(np.sin(pi * x), axis=-1)

    def grad(x):
        s, c = np.sin(pi * x), np.cos(pi * x)
        out = np.empty(x.shape)
        for i in range(dim):
            out[..., i] = pi * c[..., i] * np.prod(np.delete(s, i, axis=-1), axis=-1)
        return out

    def lap(x):
        return -dim * pi**2 * u(x)

    return ExactSolution(f"sine{dim}d", dim, u, grad, lap)


def polynomial_solution(degree: int, dim: int, seed: int = 7) -> ExactSolution:
    """A fixed dense polynomial of total degree ``degree`` (reproducible coefficients)."""
    exps = monomial_exponents(dim, degree)
    coef = np.random.default_rng(seed + 31 * degree + dim).uniform(-1, 1, len(exps))

    def mono(x, e):
        return np.prod(x ** e, axis=-1)

    def d_mono(x, e, i):
        if e[i] == 0:
            return np.zeros(x.shape[:-1])
        e2 = e.copy()
        e2[i] -= 1
        return e[i] * mono(x, e2)

    def u(x):
        return sum(c * mono(x, e) for c, e in zip(coef, exps))

    def grad(x):
        return np.stack([sum(c * d_mono(x, e, i) for c, e in zip(coef, exps)) for i in range(dim)], axis=-1)

    def lap(x):
        out = np.zeros(x.shape[:-1])
        for c, e in zip(coef, exps):
            for i in range(dim):
                if e[i] >= 2:
                    e2 = e.copy()
                    e2[i] -= 2
                    out = out + c * e[i] * (e[i] - 1) * mono(x, e2)
        return out

    return ExactSolution(f"poly:{degree}", dim, u, grad, lap)


def get_solution(name: str, dim: int) -> ExactSolution:
    """Registry lookup: ``sine2d``, ``sine3d`` or ``poly:m``."""
    if name == "sine2d" and dim == 2:
        return _sine(2)
    if name == "sine3d" and dim == 3:
        return _sine(3)
    if name.startswith("poly:"):
        try:
            m = int(name.split(":", 1)[1])
        except ValueError:
            raise ConfigurationError(f"bad polynomial degree in {name!r}") from None
        return polynomial_solution(m, dim)
    raise ConfigurationError(f"unknown exact solution {name!r} in {dim}D")


def project_Qh(u: ExactSolution | Callable, disc) -> WGFunction:
    """``Q_h u = {Q_0 u, Q_b u}``."""
    func = u.u if isinstance(u, ExactSolution) else u
    return WGFunction(disc.dofmap, disc.project(func))


def _difference(uh: WGFunction, u, disc):
    return project_Qh(u, disc).coeffs - uh.coeffs


def l2_error(uh: WGFunction, u, disc) -> float:
    """``||Q_0 u - u_0||`` over the mesh."""
    e = _difference(uh, u, disc)
    return math.sqrt(max(disc.local_quadratic_sum(e, "mass0").sum(), 0.0))


def energy_norm(disc, x: np.ndarray) -> float:
    """``|||v||| = ||grad_w v||`` of a global DOF vector."""
    return math.sqrt(max(disc.local_quadratic_sum(x, "S").sum(), 0.0))


def norm_1h(disc, x: np.ndarray) -> float:
    """Discrete H1 norm: ``sum_T ||grad v_0||_T^2 + h_T^{-1} ||v_0 - v_b||_{dT}^2``."""
    return math.sqrt(max(disc.local_quadratic_sum(x, "norm1h").sum(), 0.0))


def energy_error(uh: WGFunction, u, disc) -> float:
    """``|||Q_h u - u_h|||``."""
    return energy_norm(disc, _difference(uh, u, disc))


def cell_means(uh: WGFunction, disc) -> np.ndarray:
    """Cell averages of ``u_0``."""
    out = np.empty(disc.mesh.n_cells)
    c0 = uh.interior_coeffs
    for cls in disc.classes:
        kern = cls.kernel
        out[cls.cells] = c0[cls.cells] @ kern.mass0[0] / disc.mesh.cell_measure[cls.cells]
    return out


def rates(errors, floor: float = 0.0) -> list:
    """``log2(e_{l-1} / e_l)`` for consecutive levels.

    A rate is ``"exact"`` when either error is at or below ``floor`` (zero by
    default), i.e. the discrete solution reproduces the projection.
    """
    errors = list(errors)
    if len(errors) < 2:
        raise ValueError("need at least two levels to compute rates")
    out = []
    for a, b in zip(errors[:-1], errors[1:]):
        if a <= floor or b <= floor:
            out.append(EXACT)
        else:
            out.append(math.log2(a / b))
    return out


@dataclass
class LevelResult:
    level: int
    n_dof: int
    l2: float
    l2_rate: float | str | None
    energy: float
    energy_rate: float | str | None
    time: float


@dataclass
class ConvergenceReport:
    """Per-level errors and rates.

    ``floors`` are absolute round-off thresholds (L2, energy); errors below
    them count as zero when forming rates.
    """

    family: str
    k: int
    solution: str
    rows: list = field(default_factory=list)
    floors: tuple = (0.0, 0.0)

    def add(self, level, n_dof, l2, energy, time):
        prev = self.rows[-1] if self.rows else None
        l2r = er = None
        if prev is not None:
            l2r = rates([prev.l2, l2], self.floors[0])[0]
            er = rates([prev.energy, energy], self.floors[1])[0]
        self.rows.append(LevelResult(level, n_dof, l2, l2r, energy, er, time))

    def last_rates(self):
        r = self.rows[-1]
        return r.l2_rate, r.energy_rate


def commuting_residual(disc, cell: int, u: ExactSolution) -> float:
    """Relative Λ-norm gap between ``grad_w(Q_h u)`` and the projection of ``grad u``.

    The two agree for any smooth ``u`` by construction of the space, so this
    measures the accuracy of a local kernel.
    """
    kern = disc.kernel(cell)
    x = local_Qh(disc, cell, u.u)
    gw = kern.G @ x
    pg = kern.lam.project(u.grad)
    M = kern.lam.mass
    diff = gw - pg
    ref = math.sqrt(max(pg @ M @ pg, 0.0))
    return math.sqrt(max(diff @ M @ diff, 0.0)) / max(ref, np.finfo(float).tiny)


def local_Qh(disc, cell, func):
    """``Q_h func`` restricted to one cell's DOFs without a global projection."""
    kern = disc.kernel(cell)
    xc = disc.mesh.cell_centroid[cell]
    rhs = (func(xc + kern.load_points) * kern.load_weights) @ kern.load_values
    parts = [np.linalg.solve(kern.mass0, rhs)]
    for f in disc.mesh.cells[cell]:
        fc = next(fc for fc in disc.face_classes if f in fc.faces)
        g = func(disc.mesh.face_centroid[f] + fc.points)
        parts.append(np.linalg.solve(fc.mass, (g * fc.weights) @ fc.values))
    return np.concatenate(parts)


def norm_ratio_interval(disc, n_samples: int = 100, rng=None) -> tuple[float, float]:
    """Min and max of ``|||v||| / ||v||_{1,h}`` over random DOF vectors ``v``."""
    rng = np.random.default_rng(rng)
    r = []
    for _ in range(n_samples):
        x = rng.standard_normal(disc.dofmap.n_dof)
        r.append(energy_norm(disc, x) / norm_1h(disc, x))
    return min(r), max(r)
