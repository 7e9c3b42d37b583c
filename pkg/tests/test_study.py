import json
import subprocess
import sys
import time

import pytest

from sfwg import cli
from sfwg.analysis import EXACT, ConvergenceReport
from sfwg.errors import ConfigurationError, SolverError
from sfwg.study import StageError, StudyConfig, check_rates, emit, parse_csv, parse_levels, run_study, sci4


def test_config_defaults_and_validation():
    c = StudyConfig()
    assert (c.family, c.k, c.levels, c.dim, c.solution) == ("quad", 1, (3, 5), 2, "sine2d")
    assert StudyConfig(family="wedge").solution == "sine3d"
    for bad in [dict(family="wedge", dim=2), dict(levels=(4, 4)), dict(levels=(5, 3)), dict(k=4),
                dict(k=-1), dict(family="tri"), dict(solver="gmres"), dict(format="xml")]:
        with pytest.raises(ConfigurationError):
            StudyConfig(**bad)
    assert StudyConfig(k=4, experimental=True).k == 4


def test_config_json_with_overrides(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"family": "quadhex", "k": 2, "levels": "2:3"}))
    c = StudyConfig.from_json(p, k=0)
    assert (c.family, c.k, c.levels) == ("quadhex", 0, (2, 3))
    assert StudyConfig.from_dict(c.to_dict()) == c
    p.write_text(json.dumps({"family": "quad", "colour": "red"}))
    with pytest.raises(ConfigurationError):
        StudyConfig.from_json(p)
    with pytest.raises(ConfigurationError):
        StudyConfig.from_json(tmp_path / "missing.json")


def test_parse_levels():
    assert parse_levels("3:5") == (3, 5)
    with pytest.raises(ConfigurationError):
        parse_levels("3-5")


def test_sci4_format():
    assert sci4(2.533e-4) == "0.2533E-03"
    assert sci4(1.0) == "0.1000E+01"
    assert sci4(0.99999) == "0.1000E+01"
    assert sci4(0.0) == "0.0000E+00"


def test_smoke_study_is_fast_and_superconvergent():
    t0 = time.perf_counter()
    report = run_study(StudyConfig())
    assert time.perf_counter() - t0 < 10
    assert [r.level for r in report.rows] == [3, 4, 5]
    assert check_rates(report, tol=0.1)


def test_exactness_study_reports_exact_rates():
    report = run_study(StudyConfig(k=1, levels=(2, 4), solution="poly:2"))
    for r in report.rows:
        assert r.l2 <= 1e-8 and r.energy <= 1e-8
    for r in report.rows[1:]:
        assert r.l2_rate == EXACT and r.energy_rate == EXACT


def test_study_is_deterministic():
    a = run_study(StudyConfig(family="quadhex", k=0, levels=(2, 4)))
    b = run_study(StudyConfig(family="quadhex", k=0, levels=(2, 4)))
    for x, y in zip(a.rows[1:], b.rows[1:]):
        assert abs(x.l2_rate - y.l2_rate) <= 1e-6
        assert abs(x.energy_rate - y.energy_rate) <= 1e-6
    assert emit(a, "markdown") == emit(b, "markdown")


def test_stage_failure_names_stage_and_level(monkeypatch):
    import sfwg.study as study

    def boom(*a, **k):
        raise SolverError("factorization failed")

    monkeypatch.setattr(study, "solve_poisson", boom)
    with pytest.raises(StageError) as info:
        run_study(StudyConfig(levels=(1, 2)))
    assert info.value.stage == "solve" and info.value.level == 1


def _report():
    r = ConvergenceReport("quad", 0, "sine2d")
    r.add(1, 40, 3.2e-3, 1.1e-2, 0.01)
    r.add(2, 160, 8.0e-4, 2.75e-3, 0.02)
    return r


def test_emit_markdown_layout(tmp_path):
    text = emit(_report(), "markdown", tmp_path / "t.md")
    lines = text.splitlines()
    assert len(lines) == 4
    assert all(line.count("|") - line.count("\\|") == 6 for line in lines)
    assert "0.3200E-02" in lines[2] and "| 2.00 |" in lines[3]
    assert (tmp_path / "t.md").read_text() == text


def test_emit_empty_report_is_header_only():
    r = ConvergenceReport("quad", 0, "sine2d")
    assert len(emit(r, "markdown").splitlines()) == 2
    assert emit(r, "csv").splitlines() == ["level,l2_error,l2_rate,energy_error,energy_rate,n_dof,time"]


def test_csv_round_trip():
    text = emit(_report(), "csv")
    assert emit(parse_csv(text), "csv") == text


def test_emit_unknown_format():
    with pytest.raises(ConfigurationError):
        emit(_report(), "html")


def test_vtk_export_from_study(tmp_path):
    run_study(StudyConfig(family="wedge", k=0, levels=(1, 2), export_vtk=str(tmp_path / "u.vtk")))
    assert (tmp_path / "u_L1.vtk").exists() and (tmp_path / "u_L2.vtk").exists()
    assert "SCALARS u0 double 1" in (tmp_path / "u_L2.vtk").read_text()


# ------------------------------------------------------------------ CLI


def test_cli_success_writes_csv(tmp_path, capsys):
    out = tmp_path / "r.csv"
    rc = cli.main(["--family", "quad", "--k", "0", "--levels", "2:3", "--format", "csv", "--out", str(out)])
    assert rc == 0
    assert out.read_text().startswith("level,")
    assert capsys.readouterr().out == ""


def test_cli_config_file_and_flag_override(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"family": "quadhex", "k": 3, "levels": "1:2"}))
    assert cli.main(["--config", str(p), "--k", "0"]) == 0
    assert capsys.readouterr().out.count("\n") == 4


@pytest.mark.parametrize("argv", [["--family", "wedge", "--dim", "2", "--levels", "1:2"],
                                  ["--levels", "3"], ["--k", "5", "--levels", "1:2"],
                                  ["--solution", "cosine", "--levels", "1:2"],
                                  ["--config", "/nonexistent/c.json"]])
def test_cli_config_errors(argv, capsys):
    assert cli.main(argv) == 2
    assert "configuration error" in capsys.readouterr().err


def test_cli_numerical_failure(monkeypatch, capsys):
    import sfwg.study as study

    def boom(*a, **k):
        raise SolverError("matrix is not SPD")

    monkeypatch.setattr(study, "solve_poisson", boom)
    assert cli.main(["--levels", "1:2"]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_cli_verify(capsys):
    assert cli.main(["--k", "0", "--levels", "4:5", "--verify"]) == 0
    # the pre-asymptotic range misses the targets
    assert cli.main(["--family", "wedge", "--k", "0", "--levels", "1:2", "--verify"]) == 4
    assert "rate check failed" in capsys.readouterr().err


def test_cli_lambda_check(capsys):
    assert cli.main(["--family", "quadhex", "--k", "1", "--levels", "1:2", "--lambda-check"]) == 0


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "sfwg", "--k", "0", "--levels", "1:2"],
                       capture_output=True, text=True, timeout=60)
    assert r.returncode == 0
    assert r.stdout.startswith("| level |")
