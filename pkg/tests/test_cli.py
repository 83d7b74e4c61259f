"""INI configuration parsing and the command-line interface.

CLI commands are exercised in-process through main(argv), which keeps the
full argparse -> config -> runner path under test without subprocess
startup costs; one subprocess test confirms the installed entry point.
"""

import math
import shutil
import subprocess
import sys
import textwrap

import numpy as np
import pytest

import triqed.cli as cli
from triqed.config import OBSERVABLE_COLUMNS, ScenarioConfig, SolverKind, load_config
from triqed.model import TAU_OFF_DEFAULT
from triqed.runner import SWEEP_QUANTITIES

TAU_OFF = TAU_OFF_DEFAULT

TINY_INI = textwrap.dedent(
    f"""\
    [model]
    k_tilde = 0.05        # inline comments are allowed
    gamma_tilde = 0.02

    [input]
    kind = ghz

    [grid]
    tau_end = {TAU_OFF!r}
    dt = 0.001
    sample_times = 0.45, {TAU_OFF!r}

    [output]
    observables = E_a, p_e, class_label
    """
)


def write_ini(tmp_path, text, name="scenario.ini"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


# ---------------------------------------------------------------------------
# config parsing


def test_load_config_full_ini(tmp_path):
    cfg = load_config(write_ini(tmp_path, TINY_INI))
    assert cfg.model.k_tilde == 0.05
    assert cfg.model.gamma_tilde == 0.02
    assert cfg.input_spec.variant == "ghz"
    assert cfg.grid.sample_times == (0.45, TAU_OFF)
    assert cfg.grid.dt == 1e-3
    assert cfg.solver is SolverKind.FACTORIZED
    assert cfg.observables == ("p_e", "E_a", "class_label")  # canonical order
    assert cfg.output_path is None


def test_load_config_defaults_for_missing_sections(tmp_path):
    cfg = load_config(write_ini(tmp_path, "[model]\ng_a = 1.0\n"))
    assert cfg.input_spec.variant == "w"
    assert cfg.model.k_tilde == 0.0
    assert cfg.grid.tau_end == 12.0
    assert cfg.grid.sample_times[1] - cfg.grid.sample_times[0] == pytest.approx(0.01)
    assert cfg.observables == OBSERVABLE_COLUMNS
    assert cfg.n_traj == 2000


def test_load_config_rejects_unknown_keys(tmp_path):
    with pytest.raises(ValueError, match="unknown key"):
        load_config(write_ini(tmp_path, "[model]\ncoupling = 2.0\n"))
    with pytest.raises(ValueError, match="unknown config section"):
        load_config(write_ini(tmp_path, "[laser]\npower = 9000\n"))
    with pytest.raises(ValueError, match="unknown observables"):
        load_config(write_ini(tmp_path, "[output]\nobservables = E_a, bogus\n"))


def test_load_config_input_kind_requirements(tmp_path):
    with pytest.raises(ValueError, match="requires key 'p'"):
        load_config(write_ini(tmp_path, "[input]\nkind = mixed\n"))
    with pytest.raises(ValueError, match="requires key 'amplitudes'"):
        load_config(write_ini(tmp_path, "[input]\nkind = custom\n"))
    with pytest.raises(ValueError, match="unknown input kind"):
        load_config(write_ini(tmp_path, "[input]\nkind = bell\n"))

    cfg = load_config(write_ini(tmp_path, "[input]\nkind = mixed\np = 0.25\n"))
    assert cfg.input_spec.variant == "mixed" and cfg.input_spec.p == 0.25

    r = 1.0 / math.sqrt(2.0)
    amp_text = f"[input]\nkind = custom\namplitudes = {r!r}, 0, 0, 0, 0, 0, 0, {r!r}j\n"
    cfg = load_config(write_ini(tmp_path, amp_text))
    amps = cfg.input_spec.field_amplitudes()
    assert amps[0] == pytest.approx(r) and amps[7] == pytest.approx(r * 1j)


def test_load_config_sample_times_and_dt_conflict(tmp_path):
    text = "[grid]\ntau_end = 1.0\nsample_dt = 0.1\nsample_times = 0.5\n"
    with pytest.raises(ValueError, match="not both"):
        load_config(write_ini(tmp_path, text))


def test_with_overrides():
    cfg = ScenarioConfig()
    out = cfg.with_overrides(
        solver="mcwf", n_traj=37, base_seed=9, dt=0.005, workers=2, output_path="x.csv"
    )
    assert out.solver is SolverKind.MCWF
    assert out.n_traj == 37 and out.base_seed == 9 and out.workers == 2
    assert out.output_path == "x.csv"
    assert out.grid.dt == 0.005
    assert out.grid.sample_times == cfg.grid.sample_times  # dt change keeps samples
    # No overrides -> unchanged config.
    assert cfg.with_overrides() == cfg


def test_config_from_args_maps_every_flag(tmp_path):
    ini = write_ini(tmp_path, TINY_INI)
    args = cli.build_parser().parse_args(
        ["run", "--config", ini, "--solver", "exact", "--traj", "12",
         "--seed", "3", "--dt", "0.002", "--workers", "2", "--out", "o.csv"]
    )
    cfg = cli._config_from_args(args)
    assert cfg.solver is SolverKind.EXACT
    assert cfg.n_traj == 12 and cfg.base_seed == 3 and cfg.workers == 2
    assert cfg.grid.dt == 0.002 and cfg.output_path == "o.csv"
    assert cfg.input_spec.variant == "ghz"  # from the INI, not overridden


# ---------------------------------------------------------------------------
# CLI commands (in-process)


def test_cli_run_writes_byte_identical_csv(tmp_path):
    ini = write_ini(tmp_path, TINY_INI)
    out1, out2 = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    assert cli.main(["run", "--config", ini, "--out", out1]) == 0
    assert cli.main(["run", "--config", ini, "--out", out2]) == 0
    data = (tmp_path / "a.csv").read_bytes()
    assert data == (tmp_path / "b.csv").read_bytes()

    lines = data.decode("utf-8").splitlines()
    assert lines[0] == "tau,p_e,E_a,class_label"
    assert len(lines) == 3
    last = lines[2].split(",")
    assert float(last[0]) == pytest.approx(TAU_OFF, abs=1e-12)
    assert last[3] in ("GHZ", "W", "ENT", "PPT")


def test_cli_run_exact_solver_agrees(tmp_path):
    short = TINY_INI.replace(f"tau_end = {TAU_OFF!r}", "tau_end = 0.45").replace(
        f"sample_times = 0.45, {TAU_OFF!r}", "sample_times = 0.45"
    )
    ini = write_ini(tmp_path, short)
    for solver, name in (("factorized", "f.csv"), ("exact", "e.csv")):
        code = cli.main(
            ["run", "--config", ini, "--solver", solver, "--out", str(tmp_path / name)]
        )
        assert code == 0
    rows = {
        name: (tmp_path / name).read_text().splitlines()[1].split(",")
        for name in ("f.csv", "e.csv")
    }
    for a, b in zip(rows["f.csv"][:3], rows["e.csv"][:3]):
        assert float(a) == pytest.approx(float(b), abs=1e-8)


def test_cli_run_default_output_name(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    ini = write_ini(tmp_path, TINY_INI)
    assert cli.main(["run", "--config", ini]) == 0
    assert (tmp_path / "run.csv").exists()


def test_cli_sweep_k_with_rate_override(tmp_path, capsys):
    out = str(tmp_path / "sweep.csv")
    code = cli.main(
        ["sweep-k", "--input", "w", "--rates", "0,0.1,0.2", "--out", out]
    )
    assert code == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("input,rate_kind,quantity,rate")
    assert len(lines) == 1 + len(SWEEP_QUANTITIES) * 3
    assert all(line.split(",")[0] == "w" for line in lines[1:])
    err = capsys.readouterr().err
    assert "E_a_tau0: decay" in err and f"wrote {out}" in err


def test_cli_sweep_gamma_both_inputs_single_header(tmp_path):
    out = str(tmp_path / "sweep_g.csv")
    code = cli.main(
        ["sweep-gamma", "--rates", "0,0.05,0.1", "--fixed-rate", "0.0", "--out", out]
    )
    assert code == 0
    lines = (tmp_path / "sweep_g.csv").read_text().splitlines()
    assert sum(line.startswith("input,") for line in lines) == 1
    variants = {line.split(",")[0] for line in lines[1:]}
    assert variants == {"w", "ghz"}
    assert {line.split(",")[1] for line in lines[1:]} == {"atomic"}
    assert len(lines) == 1 + 2 * len(SWEEP_QUANTITIES) * 3


def test_cli_sweep_rejects_trajectory_solver(tmp_path, capsys):
    code = cli.main(
        ["sweep-k", "--solver", "mcwf", "--rates", "0,0.1,0.2",
         "--out", str(tmp_path / "x.csv")]
    )
    assert code == 2
    assert "deterministic solver" in capsys.readouterr().err
    assert not (tmp_path / "x.csv").exists()


def test_cli_classify_map_small_grid(tmp_path):
    out = str(tmp_path / "map.csv")
    code = cli.main(
        ["classify-map", "--p-points", "3", "--tau-points", "5", "--out", out]
    )
    assert code == 0
    lines = (tmp_path / "map.csv").read_text().splitlines()
    assert lines[0] == "p,tau,E,class_label"
    assert len(lines) == 1 + 3 * 5
    labels = {line.split(",")[3] for line in lines[1:]}
    assert labels <= {"GHZ", "W", "ENT", "PPT"}
    taus = sorted({float(line.split(",")[1]) for line in lines[1:]})
    assert taus[0] == 0.0
    assert taus[-1] == pytest.approx(2.0 * np.pi + TAU_OFF, abs=1e-12)


def test_cli_validate_exit_codes(monkeypatch, capsys, tmp_path):
    # The real suite is covered elsewhere; here only the exit-code contract.
    from triqed.runner import CheckResult, ValidationReport

    def fake_report(ok):
        check = CheckResult("demo", ok, 0.0 if ok else 1.0, 0.5, "stub")
        return ValidationReport(checks=(check,), elapsed_seconds=0.1)

    for ok, expected in ((True, 0), (False, 1)):
        monkeypatch.setattr(
            cli, "validate", lambda ok=ok, **kwargs: fake_report(ok)
        )
        out = str(tmp_path / f"report_{ok}.csv")
        assert cli.main(["validate", "--out", out]) == expected
        captured = capsys.readouterr().out
        assert ("PASS demo" if ok else "FAIL demo") in captured
        assert (tmp_path / f"report_{ok}.csv").read_text().startswith("check,passed")


def test_cli_validate_passes_trajectory_count(monkeypatch):
    seen = {}

    def fake_validate(**kwargs):
        seen.update(kwargs)
        from triqed.runner import ValidationReport

        return ValidationReport(checks=(), elapsed_seconds=0.0)

    monkeypatch.setattr(cli, "validate", fake_validate)
    cli.main(["validate", "--traj", "55", "--dt", "0.004"])
    assert seen["n_traj"] == 55 and seen["dt"] == 0.004
    cli.main(["validate"])
    assert seen["n_traj"] == 1600  # documented default, not the scenario default


# ---------------------------------------------------------------------------
# installed entry point


def test_installed_entry_point_runs():
    exe = shutil.which("triqed")
    assert exe is not None, "console script 'triqed' not on PATH"
    proc = subprocess.run(
        [exe, "--help"], capture_output=True, text=True, timeout=120
    )
    assert proc.returncode == 0
    assert "classify-map" in proc.stdout

    proc = subprocess.run(
        [sys.executable, "-m", "triqed.cli", "run", "--help"],
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert proc.returncode == 0
    assert "--solver" in proc.stdout
