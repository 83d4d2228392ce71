import csv
import json
import math

import pytest

from sloshing.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, EXIT_VERIFY, load_config, main


def _config(tmp_path, **overrides):
    cfg = {
        "container": {"shape": "disk", "radius": 1.0, "depth": 1.0, "resolution": 2},
        "Bo": 10,
        "modes": 5,
        "refinements": 1,
        "formulation": "reduced",
        "output_dir": str(tmp_path / "out"),
        "seed": 0,
    }
    cfg.update(overrides)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def _csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_solve_writes_artifacts(tmp_path):
    assert main(["solve", "--config", _config(tmp_path)]) == EXIT_OK
    out = tmp_path / "out"
    rows = _csv(out / "spectrum.csv")
    assert len(rows) == 6
    assert (out / "mode_00_volume.vtk").exists() and (out / "mode_04_surface.vtk").exists()
    summary = json.loads((out / "solve.json").read_text())
    assert len(summary["energies"]) == 5


def test_solve_both_reports_difference(tmp_path, capsys):
    assert main(["solve", "--config", _config(tmp_path), "--formulation", "both"]) == EXIT_OK
    summary = json.loads((tmp_path / "out" / "solve.json").read_text())
    assert summary["max_relative_formulation_difference"] <= 1e-8
    assert "formulation difference" in capsys.readouterr().out


def test_inf_string_selects_steklov_branch(tmp_path):
    assert main(["solve", "--config", _config(tmp_path, Bo="inf"), "--modes", "2"]) == EXIT_OK
    summary = json.loads((tmp_path / "out" / "solve.json").read_text())
    assert summary["config"]["Bo"] == "inf"


def test_flags_override_config(tmp_path):
    out = tmp_path / "elsewhere"
    assert main(["solve", "--config", _config(tmp_path), "--out", str(out), "--bo", "inf", "--modes", "3"]) == 0
    assert len(_csv(out / "spectrum.csv")) == 4


def test_matrix_dump(tmp_path):
    assert main(["solve", "--config", _config(tmp_path), "--modes", "1", "--dump-matrices"]) == EXIT_OK
    for name in ("K_D", "M_F", "K_F"):
        head = (tmp_path / "out" / f"{name}.mtx").read_text().splitlines()[0]
        assert head == "%%MatrixMarket matrix coordinate real symmetric"


def test_identical_runs_bitwise_identical(tmp_path):
    a = _config(tmp_path, output_dir=str(tmp_path / "a"))
    main(["solve", "--config", a])
    b = _config(tmp_path, output_dir=str(tmp_path / "b"))
    main(["solve", "--config", b])
    for name in ("spectrum.csv", "mode_02_volume.vtk"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_verify_default_passes(tmp_path, capsys):
    assert main(["verify", "--out", str(tmp_path / "v")]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("CHECK ") == 10 and "FAIL" not in out
    assert json.loads((tmp_path / "v" / "verify.json").read_text())["all_passed"]


def test_verify_injected_fault_fails(tmp_path, capsys):
    assert main(["verify", "--out", str(tmp_path / "v"), "--inject-fault", "sign-flip"]) == EXIT_VERIFY
    assert "CHECK orthogonality FAIL" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["verify", "--modes", "0"],
    ["solve", "--bo", "-1"],
    ["solve", "--bo", "zero"],
    ["bogus"],
    ["solve", "--formulation", "squared"],
])
def test_usage_errors(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)]) == EXIT_CONFIG


def test_config_errors(tmp_path):
    assert main(["solve", "--config", _config(tmp_path, refinements=6)]) == EXIT_CONFIG
    assert main(["solve", "--config", _config(tmp_path, colour="red")]) == EXIT_CONFIG
    assert main(["solve", "--config", _config(tmp_path, container={"shape": "disk", "depth": -1.0})]) == EXIT_CONFIG
    assert main(["solve", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    assert main(["convergence", "--config", _config(tmp_path, refinements=0)]) == EXIT_CONFIG


def test_too_many_modes_is_numerical_failure(tmp_path):
    assert main(["solve", "--config", _config(tmp_path), "--modes", "5000"]) == EXIT_NUMERIC


def test_sweep(tmp_path, capsys):
    cfg = _config(tmp_path, bonds=[1, 10, 100, "inf"], modes=2)
    assert main(["sweep", "--config", cfg]) == EXIT_OK
    rows = _csv(tmp_path / "out" / "sweep.csv")
    assert rows[0] == ["Bo", "mode_index", "omega", "tracking_overlap"]
    w1 = [float(r[2]) for r in rows[1:] if r[1] == "0"]
    assert len(w1) == 4 and all(a > b for a, b in zip(w1, w1[1:]))
    assert [r[0] for r in rows[1:] if r[1] == "0"][-1] == "inf"


def test_single_bond_sweep_equals_solve(tmp_path):
    cfg = _config(tmp_path, bonds=[10], modes=3)
    assert main(["sweep", "--config", cfg]) == EXIT_OK
    sweep = [float(r[2]) for r in _csv(tmp_path / "out" / "sweep.csv")[1:]]
    main(["solve", "--config", cfg, "--modes", "3"])
    solved = [float(r[1]) for r in _csv(tmp_path / "out" / "spectrum.csv")[1:]]
    assert sweep == pytest.approx(solved, rel=1e-12)


def test_perturb(tmp_path):
    assert main(["perturb", "--config", _config(tmp_path)]) == EXIT_OK
    rows = _csv(tmp_path / "out" / "perturbation.csv")
    assert rows[0] == ["mode_index", "omega0", "slope_formula", "slope_fd", "rel_error"]
    assert all(float(r[4]) <= 1e-3 for r in rows[1:])


def test_convergence_disk(tmp_path, capsys):
    cfg = _config(tmp_path, Bo="inf", refinements=2)
    assert main(["convergence", "--config", cfg]) == EXIT_OK
    rows = _csv(tmp_path / "out" / "convergence.csv")
    assert len(rows) == 4
    assert float(rows[-1][-1]) >= 1.5
    assert (tmp_path / "out" / "dispersion.csv").exists()


def test_convergence_rectangle(tmp_path):
    cfg = _config(tmp_path, container={"shape": "rectangle", "Lx": 2.0, "Ly": 1.0, "depth": 0.5, "resolution": 2},
                  refinements=3)
    assert main(["convergence", "--config", cfg]) == EXIT_OK
    rows = _csv(tmp_path / "out" / "convergence.csv")
    assert float(rows[-1][-1]) >= 1.5


def test_convergence_order_guard(tmp_path, monkeypatch):
    import sloshing.cli as cli
    monkeypatch.setattr(cli, "MIN_ORDER", 10.0)
    assert main(["convergence", "--config", _config(tmp_path)]) == EXIT_NUMERIC


def test_monotonicity_command(tmp_path):
    assert main(["monotonicity", "--config", _config(tmp_path)]) == EXIT_OK
    rows = _csv(tmp_path / "out" / "monotonicity.csv")
    assert float(rows[1][2]) < float(rows[2][2])


def test_load_config_defaults():
    cfg = load_config().validate()
    assert cfg.container.shape == "disk" and math.isinf(cfg.Bo) and cfg.modes == 5
