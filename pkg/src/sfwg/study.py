"""Convergence studies and table output."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .analysis import (EXACT, ConvergenceReport, energy_error, energy_norm, get_solution, l2_error,
                       project_Qh)
from .discretization import Discretization
from .errors import ConfigurationError, WGError
from .lambda_space import lambda_sample_check
from .mesh import build_mesh, write_vtk
from .solver import solve_poisson

log = logging.getLogger(__name__)

FAMILY_DIM = {"quad": 2, "quadhex": 2, "wedge": 3}

# Errors below these multiples of the (L2, energy) norms of Q_h u are treated
# as round-off. The energy form amplifies coefficient round-off, hence the
# looser second entry.
EXACT_RTOL = (1e-12, 1e-10)


class StageError(WGError):
    """A study stage failed; carries the stage name and level."""

    def __init__(self, stage, level, cause):
        super().__init__(f"stage {stage!r} failed at level {level}: {cause}")
        self.stage = stage
        self.level = level
        self.cause = cause


@dataclass
class StudyConfig:
    family: str = "quad"
    k: int = 1
    levels: tuple = (3, 5)
    solution: str | None = None
    dim: int | None = None
    solver: str = "direct"
    tol: float = 1e-12
    condense: bool = True
    out: str | None = None
    format: str = "markdown"
    export_vtk: str | None = None
    verify: bool = False
    lambda_check: bool = False
    experimental: bool = False

    def __post_init__(self):
        self.levels = tuple(int(v) for v in self.levels)
        self.validate()

    def validate(self):
        if self.family not in FAMILY_DIM:
            raise ConfigurationError(f"unknown family {self.family!r}")
        fam_dim = FAMILY_DIM[self.family]
        if self.dim is None:
            self.dim = fam_dim
        if self.dim != fam_dim:
            raise ConfigurationError(f"family {self.family!r} is {fam_dim}D, got dim={self.dim}")
        if self.solution is None:
            self.solution = f"sine{self.dim}d"
        if len(self.levels) != 2 or not self.levels[0] < self.levels[1]:
            raise ConfigurationError(f"levels must be a:b with a < b, got {self.levels}")
        if not isinstance(self.k, int) or self.k < 0:
            raise ConfigurationError(f"k must be a non-negative integer, got {self.k!r}")
        if self.k > 3 and not self.experimental:
            raise ConfigurationError("k > 3 requires the experimental flag")
        if self.solver not in ("direct", "cg", "auto"):
            raise ConfigurationError(f"unknown solver {self.solver!r}")
        if self.format not in ("markdown", "csv"):
            raise ConfigurationError(f"unknown format {self.format!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "StudyConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigurationError(f"unknown config keys: {sorted(extra)}")
        data = dict(data)
        if isinstance(data.get("levels"), str):
            data["levels"] = parse_levels(data["levels"])
        return cls(**data)

    @classmethod
    def from_json(cls, path, **overrides) -> "StudyConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["levels"] = list(self.levels)
        return d


def parse_levels(text: str) -> tuple:
    try:
        a, b = text.split(":")
        return int(a), int(b)
    except ValueError:
        raise ConfigurationError(f"levels must look like 'a:b', got {text!r}") from None


def run_study(config: StudyConfig) -> ConvergenceReport:
    """Mesh -> kernels -> assemble -> solve -> errors for every level."""
    u = get_solution(config.solution, config.dim)
    report = ConvergenceReport(config.family, config.k, config.solution)
    scales = None
    for level in range(config.levels[0], config.levels[1] + 1):
        t0 = time.perf_counter()
        stage = "mesh"
        try:
            mesh = build_mesh(config.family, level)
            stage = "kernels"
            disc = Discretization(mesh, config.k)
            if config.lambda_check:
                stage = "lambda-check"
                for cls in disc.classes:
                    lambda_sample_check(cls.kernel.lam, rng=level)
            stage = "solve"
            uh = solve_poisson(disc, u.source, u.u, method=config.solver, tol=config.tol,
                               condense=config.condense)
            stage = "errors"
            e0 = l2_error(uh, u, disc)
            e1 = energy_error(uh, u, disc)
            if scales is None:
                q = project_Qh(u, disc).coeffs
                scales = (math.sqrt(disc.local_quadratic_sum(q, "mass0").sum()), energy_norm(disc, q))
                report.floors = tuple(r * s for r, s in zip(EXACT_RTOL, scales))
        except ConfigurationError:
            raise
        except WGError as exc:
            raise StageError(stage, level, exc) from exc
        elapsed = time.perf_counter() - t0
        report.add(level, disc.dofmap.n_dof, e0, e1, elapsed)
        log.info("level %d: n_dof=%d l2=%.4e energy=%.4e (%.1fs)", level,
                 disc.dofmap.n_dof, e0, e1, elapsed)
        if config.export_vtk:
            from .analysis import cell_means
            path = Path(config.export_vtk)
            path.parent.mkdir(parents=True, exist_ok=True)
            target = path.with_name(f"{path.stem}_L{level}{path.suffix or '.vtk'}")
            write_vtk(mesh, target, {"u0": cell_means(uh, disc)})
    return report


# ---------------------------------------------------------------- emission

COLUMNS = ("level", "l2_error", "l2_rate", "energy_error", "energy_rate", "n_dof", "time")


def sci4(x: float) -> str:
    """``0.2533E-03`` style: 4 significant digits with a leading ``0.``."""
    if x == 0:
        return "0.0000E+00"
    if not math.isfinite(x):
        return str(x)
    e = math.floor(math.log10(abs(x))) + 1
    m = x / 10.0**e
    if round(abs(m), 4) >= 1.0:
        m /= 10.0
        e += 1
    return f"{m:.4f}E{e:+03d}".replace("0.", "0.", 1)


def _rate(r) -> str:
    if r is None:
        return ""
    if r == EXACT:
        return EXACT
    return f"{r:.2f}"


def emit(report: ConvergenceReport, fmt: str = "markdown", path=None) -> str:
    """Render the report; also write it when ``path`` is given."""
    if fmt == "markdown":
        lines = ["| level | ‖Q_h u − u_h‖₀ | rate | \\|\\|\\|Q_h u − u_h\\|\\|\\| | rate |",
                 "|---|---|---|---|---|"]
        for r in report.rows:
            lines.append(f"| {r.level} | {sci4(r.l2)} | {_rate(r.l2_rate)} | "
                         f"{sci4(r.energy)} | {_rate(r.energy_rate)} |")
        text = "\n".join(lines) + "\n"
    elif fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in report.rows:
            w.writerow([r.level, repr(float(r.l2)), _csv_rate(r.l2_rate), repr(float(r.energy)),
                        _csv_rate(r.energy_rate), r.n_dof, repr(float(r.time))])
        text = buf.getvalue()
    else:
        raise ConfigurationError(f"unknown format {fmt!r}")
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    return text


def _csv_rate(r):
    if r is None:
        return ""
    return EXACT if r == EXACT else repr(float(r))


def parse_csv(text: str, family="", k=0, solution="") -> ConvergenceReport:
    """Inverse of ``emit(..., "csv")``."""
    from .analysis import LevelResult

    rows = list(csv.DictReader(io.StringIO(text)))
    report = ConvergenceReport(family, k, solution)

    def rate(s):
        if s == "":
            return None
        return EXACT if s == EXACT else float(s)

    for r in rows:
        report.rows.append(LevelResult(int(r["level"]), int(r["n_dof"]), float(r["l2_error"]),
                                       rate(r["l2_rate"]), float(r["energy_error"]),
                                       rate(r["energy_rate"]), float(r["time"])))
    return report


# Finest-level rate targets (L2, energy) per k.
TARGETS = {
    0: (2.0, 2.0),
    1: (4.0, 3.0),
    2: (5.0, 4.0),
    3: (6.0, 5.0),
}


def check_rates(report: ConvergenceReport, tol: float = 0.15) -> bool:
    """Finest-level rates against ``(k+3, k+2)`` (``(2, 2)`` for k = 0)."""
    want = TARGETS.get(report.k, (report.k + 3.0, report.k + 2.0))
    got = report.last_rates()
    ok = True
    for w, g in zip(want, got):
        if g == EXACT:
            continue
        ok &= g is not None and abs(g - w) <= tol
    return ok
