import os

import numpy as np
import pytest

from goalafem.errors import ConfigurationError, InputError
from goalafem.harness.cli import main
from goalafem.harness.experiments import HISTORY_COLUMNS, ExperimentConfig, read_config_file, run, sweep
from goalafem.harness.rates import fit_slope, ncum_at_tolerance
from goalafem.marking import AdaptiveHistory, LevelRecord, MarkingConfig


def test_fit_slope_exact_power_law():
    N = np.array([10, 20, 50, 100, 200, 500, 1000])
    fit = fit_slope(N, 3 * N**-1.5)
    assert fit.slope == pytest.approx(-1.5, abs=1e-12)
    assert fit.window == (100, 1000)
    assert fit.points == 4
    assert fit.residual < 1e-12


def test_fit_slope_drops_nonpositive_and_needs_span():
    N = np.array([10, 100, 200, 500, 1000])
    q = np.array([1.0, np.nan, 0.5, 0.2, 0.1])
    with pytest.raises(InputError):
        fit_slope(N, q)
    with pytest.raises(InputError):
        fit_slope([100, 200, 400, 800], [1, 1, 1, 1])
    with pytest.raises(InputError):
        fit_slope([1, 2], [1.0])


def history_from(N, product):
    h = AdaptiveHistory(MarkingConfig())
    ncum = np.cumsum(N)
    for ell, (n, p) in enumerate(zip(N, product)):
        h.records.append(LevelRecord(ell, n, p, 1.0, p, 0.0, np.nan, 0, "u", int(ncum[ell])))
    return h


def test_ncum_at_tolerance():
    h = history_from([10, 20, 40, 80], [1.0, 0.1, 0.01, 0.001])
    res = ncum_at_tolerance(h, 0.05)
    assert (res.ncum, res.reached, res.level) == (70, True, 2)
    res = ncum_at_tolerance(h, 1e-6)
    assert (res.ncum, res.reached) == (150, False)
    assert ncum_at_tolerance(h, 1.0).ncum == 10


def test_config_validation():
    with pytest.raises(ConfigurationError):
        ExperimentConfig(problem="exp3")
    with pytest.raises(ConfigurationError):
        ExperimentConfig(theta=1.5)
    with pytest.raises(ConfigurationError):
        ExperimentConfig(nu=0.0)
    with pytest.raises(ConfigurationError):
        ExperimentConfig(epsilon=-0.1)
    assert ExperimentConfig(problem="exp2").budget == 20_000
    assert ExperimentConfig(max_elements=50).budget == 50


def test_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# small run\nproblem = bem-conforming\nstrategy = C  # combined\ntheta = 0.4\ntol = none\n"
                    "max-elements = 40\n")
    assert read_config_file(path) == {"problem": "bem-conforming", "strategy": "C", "theta": 0.4,
                                      "tol": None, "max_elements": 40}
    path.write_text("colour = blue\n")
    with pytest.raises(ConfigurationError):
        read_config_file(path)
    path.write_text("theta = lots\n")
    with pytest.raises(ConfigurationError):
        read_config_file(path)


def small(out=None, **kw):
    base = dict(problem="bem-conforming", strategy="B", theta=0.5, max_elements=60, out=out)
    base.update(kw)
    return ExperimentConfig(**base)


def test_run_writes_outputs(tmp_path):
    out = tmp_path / "run"
    res = run(small(str(out), snapshot_every=2))
    header = (out / "history.csv").read_text().splitlines()[0]
    assert header == ",".join(HISTORY_COLUMNS)
    rows = (out / "history.csv").read_text().splitlines()[1:]
    assert len(rows) == len(res.history)
    assert (out / "history.dat").read_text().splitlines()[0] == "# " + " ".join(HISTORY_COLUMNS)
    assert (out / "rates.txt").read_text().startswith("quantity,slope,window,residual")
    assert (out / "meshes" / "level_000.mesh").exists()
    panels = (out / "meshes" / "level_002_panels.csv").read_text().splitlines()
    assert panels[0] == "panel,mid_x,mid_y,h,U,eta_u2,eta_z2"
    assert not (out / "meshes" / "level_001.mesh").exists()


def test_identical_configs_give_identical_files(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run(small(str(a), problem="exp1", p=1, max_elements=300))
    run(small(str(b), problem="exp1", p=1, max_elements=300))
    assert (a / "history.csv").read_bytes() == (b / "history.csv").read_bytes()
    assert (a / "rates.txt").read_bytes() == (b / "rates.txt").read_bytes()


def test_sweep_and_report(tmp_path):
    out = tmp_path / "sweep"
    rows = sweep(small(tol=1e-3, max_elements=400), ["A", "C"], [0.3, 0.6], str(out))
    assert [(s, th) for s, th, _ in rows] == [("A", 0.3), ("A", 0.6), ("C", 0.3), ("C", 0.6)]
    lines = (out / "ncum.csv").read_text().splitlines()
    assert lines[0] == "strategy,theta,ncum,reached"
    assert len(lines) == 5
    pytest.importorskip("matplotlib")
    from goalafem.harness.report import render

    written = render(str(out))
    assert os.path.join(str(out), "ncum.png") in written
    assert all(os.path.getsize(p) > 0 for p in written)
    with pytest.raises(ConfigurationError):
        render(str(tmp_path / "empty"))


def test_sweep_needs_tolerance():
    with pytest.raises(ConfigurationError):
        sweep(small(), ["A"], [0.5])


def test_cli_run_and_errors(tmp_path, capsys):
    out = tmp_path / "cli"
    assert main(["run", "--problem", "bem-conforming", "--strategy", "A", "--max-elements", "40",
                 "--out", str(out)]) == 0
    assert "bem-conforming A theta=0.5" in capsys.readouterr().out
    assert (out / "history.csv").exists()
    assert main(["run", "--problem", "exp1", "--theta", "2"]) == 2
    assert "theta" in capsys.readouterr().err
    cfg = tmp_path / "c.cfg"
    cfg.write_text("problem = exp1\np = 1\nmax_elements = 100\n")
    assert main(["run", "--config", str(cfg), "--strategy", "C"]) == 0
    assert "exp1 C" in capsys.readouterr().out
    with pytest.raises(SystemExit):
        main(["run", "--strategy", "Z"])


def test_cli_sweep(tmp_path, capsys):
    out = tmp_path / "s"
    assert main(["sweep", "--problem", "exp1", "--p", "1", "--tol", "1e-2", "--max-elements", "200",
                 "--strategies", "A,B", "--thetas", "0.4,0.8", "--out", str(out)]) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 4
    assert (out / "ncum.dat").exists()
