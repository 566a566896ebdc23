import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from fullmhd import cli
from fullmhd import solver as so
from fullmhd.experiments import RunConfig, field_from_modes, rough_E0, run


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def summary(out):
    return json.loads((out / "summary.json").read_text())


# -- configuration ------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError, match="delta"):
        RunConfig(delta=1.5)
    with pytest.raises(ValueError, match="unknown experiment"):
        RunConfig(experiment="turbulence")
    with pytest.raises(ValueError, match="fault"):
        RunConfig(fault="flip_everything")
    with pytest.raises(ValueError, match="nu"):
        RunConfig(nu=0.0)


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("experiment: lemma_check\nC1: 2.0\nlemma_s: [1.0]\nseed: 4\n")
    cfg = RunConfig.from_file(path, seed=9)
    assert cfg.experiment == "lemma_check" and cfg.C1 == 2.0 and cfg.lemma_s == [1.0]
    assert cfg.seed == 9
    path.write_text("N: 4\nwarp_factor: 9\n")
    with pytest.raises(ValueError, match="warp_factor"):
        RunConfig.from_file(path)


def test_modes_recipe_is_real_field():
    f = field_from_modes(3, [{"n": [1, 0, 0], "re": [0, 1, 0], "im": [0, 0, 2]}, {"n": [9, 0, 0], "re": [1, 0, 0]}])
    assert np.allclose(f.at((1, 0, 0)), [0, 1, 2j])
    assert np.allclose(f.at((-1, 0, 0)), [0, 1, -2j])


def test_rough_E0_seeding():
    cfg = RunConfig.for_experiment("loss_of_smoothness", N=8)
    E0 = rough_E0(cfg)
    rho = lambda n: cfg.C1 / (cfg.C2 + np.linalg.norm(n) ** (1 + cfg.delta / 2 + 3))  # noqa: E731
    for n in [(0, 0, 3), (1, 2, 2), (8, 0, 0)]:
        assert E0.at(n)[0] == pytest.approx((-1) ** sum(n) * rho(n))
    smooth = rough_E0(cfg, profile=False)
    assert abs(smooth.at((0, 0, 8))[0]) == pytest.approx(cfg.C1 * math.exp(-16))


# -- local existence ----------------------------------------------------------


def test_run_zero_data(tmp_path):
    out = tmp_path / "zero"
    path = tmp_path / "zero.yaml"
    path.write_text("amplitude: 0.0\n")
    code = cli.main(["run", "--config", str(path), "--n", "3", "--dt", "0.05", "--t-final", "0.2", "--out", str(out)])
    assert code == 0
    rows = read_csv(out / "diagnostics.csv")
    assert len(rows) == 5
    for r in rows:
        for key, val in r.items():
            if key != "t":
                assert float(val) == 0.0 or math.isnan(float(val))
    assert so.read_state(out / "state_final.wmhd").t == pytest.approx(0.2)


def test_run_single_heat_mode(tmp_path):
    nu = 0.2
    cfg = RunConfig.for_experiment(
        "local_existence",
        N=3,
        nu=nu,
        dt=0.05,
        T=0.5,
        amplitude=1.0,
        v0_modes=[{"n": [1, 0, 0], "re": [0, 0.5, 0]}],
        B0_modes=[],
        E0_modes=[],
        out=str(tmp_path),
    )
    res = run(cfg)
    assert res.passed
    rows = read_csv(tmp_path / "diagnostics.csv")
    for r in rows:
        t = float(r["t"])
        # energy 0.5 * 2 * 0.5^2 decays at rate 2 nu |n|^2
        assert float(r["E_total"]) == pytest.approx(0.25 * math.exp(-2 * nu * t), rel=1e-12)


def test_run_smooth_data_checks(tmp_path):
    cfg = RunConfig.for_experiment("local_existence", N=4, dt=0.02, T=0.2, out=str(tmp_path))
    res = run(cfg)
    s = res.summary
    assert s["passed"]
    assert set(s["checks"]) == {"energy_nonincreasing", "mean_B_conserved", "divergence_free", "finite"}
    assert s["results"]["max_residuals"]["ampere"] < 1e-2


def test_run_reports_blow_up(tmp_path, capsys):
    path = tmp_path / "big.yaml"
    path.write_text("amplitude: 30.0\n")
    code = cli.main(["run", "--config", str(path), "--n", "4", "--dt", "0.5", "--t-final", "3", "--out", str(tmp_path)])
    assert code == 2
    assert "step 1" in capsys.readouterr().err


# -- other experiments --------------------------------------------------------


def test_picard_experiment(tmp_path):
    cfg = RunConfig.for_experiment("picard_contraction", N=4, out=str(tmp_path))
    res = run(cfg)
    assert res.passed
    rows = read_csv(tmp_path / "picard.csv")
    assert list(rows[0]) == ["j", "K_j", "L_j", "ratio"]
    r = res.summary["results"]
    assert 0 < r["T_star"] <= cfg.T_max
    assert r["self_consistency"] < 10 * cfg.tol


def test_loss_rejects_small_resolution(tmp_path, capsys):
    code = cli.main(["loss", "--n", "8", "--out", str(tmp_path)])
    assert code == 2
    assert "resolution too small" in capsys.readouterr().err


def test_loss_experiment_small(tmp_path):
    cfg = RunConfig.for_experiment("loss_of_smoothness", N=8, fit_range=[4, 8], out=str(tmp_path))
    res = run(cfg)
    rows = read_csv(tmp_path / "spectra.csv")
    assert [int(r["m"]) for r in rows] == list(range(4, 9))
    ex = {r["run"]: float(r["exponent"]) for r in read_csv(tmp_path / "exponents.csv")}
    assert set(ex) == {"linear", "nonlinear", "control"}
    assert ex["control"] < ex["linear"] < 0
    assert res.summary["results"]["max_relative_deviation"] < 0.1


def test_lemma_experiment(tmp_path):
    path = tmp_path / "lemma.yaml"
    path.write_text(f"lemma_s: [1.0, 2.0]\nlemma_n_max: [4, 6]\nout: {tmp_path / 'o'}\n")
    code = cli.main(["lemma", "--config", str(path)])
    rows = read_csv(tmp_path / "o" / "lemma.csv")
    assert len(rows) == 8
    assert all(math.isfinite(float(r["max_ratio"])) for r in rows)
    assert code in (0, 1)
    assert summary(tmp_path / "o")["checks"]["finite"]


# -- self-check ---------------------------------------------------------------


def test_selfcheck_passes(tmp_path, capsys):
    assert cli.main(["selfcheck", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "order_ampere" in out


def test_selfcheck_detects_phi2_sign_fault(tmp_path):
    assert cli.main(["selfcheck", "--fault", "phi2_sign", "--out", str(tmp_path)]) == 1
    checks = summary(tmp_path)["checks"]
    assert not checks["order_ampere"]
    assert checks["convolution_oracle"]
    # the fault is scoped to the run
    assert cli.main(["selfcheck", "--out", str(tmp_path / "again")]) == 0


def test_selfcheck_flags_large_dt(tmp_path):
    assert cli.main(["selfcheck", "--dt", "0.1", "--out", str(tmp_path)]) == 1
    table = summary(tmp_path)["results"]["table"]
    msg = next(r["detail"] for r in table if r["check"] == "order_energy")
    assert "dt=0.1 too large" in msg


# -- reproducibility and entry points ------------------------------------------


def test_identical_runs_write_identical_csv(tmp_path):
    for name in ("a", "b"):
        cli.main(["run", "--n", "3", "--dt", "0.05", "--t-final", "0.2", "--out", str(tmp_path / name)])
    assert (tmp_path / "a" / "diagnostics.csv").read_bytes() == (tmp_path / "b" / "diagnostics.csv").read_bytes()
    assert (tmp_path / "a" / "state_final.wmhd").read_bytes() == (tmp_path / "b" / "state_final.wmhd").read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "fullmhd", "lemma", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert proc.returncode in (0, 1)
    assert '"experiment": "lemma_check"' in proc.stdout
