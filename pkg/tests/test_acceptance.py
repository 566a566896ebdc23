"""Acceptance gate: each test checks one criterion at its stated tolerance."""

import math
import time

import numpy as np
import pytest

from fullmhd import solver as so
from fullmhd import spectral as sp
from fullmhd.experiments import RunConfig, propagator_ode_residual, run

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def smooth_run(tmp_path_factory):
    """N=8 smooth small data to T=0.5 with the dt, dt/2, dt/4 refinement study."""
    out = tmp_path_factory.mktemp("smooth")
    cfg = RunConfig.for_experiment("local_existence", N=8, dt=1e-2, T=0.5, refine=True, out=str(out))
    return run(cfg)


def test_convolution_oracle(report):
    rng = np.random.default_rng(0)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        f, g = sp.random_field(4, rng, c=1), sp.random_field(4, rng, c=1)
        worst = max(worst, float(np.abs(sp.convolve_fft(f, g).coeffs - sp.convolve_direct(f, g).coeffs).max()))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 10
    assert report(1, "FFT product matches the direct lattice sum", ok, f"max err {worst:.2e}, {elapsed:.1f}s")


def test_propagator_ode_residual(report):
    residual, initial = propagator_ode_residual(sigma=1.0, count=50, h=1e-4)
    ok = residual <= 1e-6 and initial <= 1e-8
    assert report(2, "phi1, phi2 solve the damped wave ODE", ok, f"residual {residual:.2e}, initial values {initial:.2e}")


def test_energy_identity_order(smooth_run, report):
    study = smooth_run.summary["results"]["refinement"]
    orders = study["orders"]["energy"]
    dts = study["dts"]
    monotone = smooth_run.summary["checks"]["energy_nonincreasing"]
    ok = dts == pytest.approx([1e-2, 5e-3, 2.5e-3]) and min(orders) >= 1.8 and monotone
    detail = f"orders {', '.join(f'{o:.3f}' for o in orders)}, nonincreasing {monotone}"
    assert report(3, "energy identity residual converges at second order", ok, detail)


def test_system_residual_orders(smooth_run, report):
    orders = smooth_run.summary["results"]["refinement"]["orders"]
    worst = {k: min(orders[k]) for k in ("faraday", "ampere", "momentum")}
    ok = all(v >= 1.8 for v in worst.values())
    detail = ", ".join(f"{k} {v:.3f}" for k, v in worst.items())
    assert report(4, "Faraday, Ampere and momentum residuals converge at second order", ok, detail)


def test_conservation(smooth_run, report):
    r = smooth_run.summary["results"]
    ok = r["max_mean_B_mode"] <= 1e-12 and r["max_divergence"] <= 1e-10 and r["steps"] == 50
    detail = f"|B(0)| {r['max_mean_B_mode']:.1e}, divergence {r['max_divergence']:.1e} to T=0.5"
    assert report(5, "mean magnetic mode and divergences conserved", ok, detail)


def test_picard_contraction(tmp_path, report):
    cfg = RunConfig.for_experiment("picard_contraction", N=8, out=str(tmp_path))
    res = run(cfg)
    r = res.summary["results"]
    ratios = r["ratios"]  # ratios[i] is L_{i+3} / L_{i+2}
    ok = (
        r["error"] is None
        and all(x <= 0.9 for x in ratios)
        and all(x <= 0.6 for i, x in enumerate(ratios) if i + 2 >= 5)
        and r["self_consistency"] < 10 * cfg.tol
    )
    detail = f"T*={r['T_star']:.3g}, max ratio {max(ratios):.3f}, self-consistency {r['self_consistency']:.1e}"
    assert report(6, "Picard differences contract on the admissible interval", ok, detail)


def test_operator_bounds_stable_across_N(report):
    consts = {N: so.operator_bound_constants(N) for N in (4, 8, 16)}
    spread = {}
    for name in so.OPERATORS:
        vals = [consts[N][name] for N in (4, 8, 16)]
        finite = all(math.isfinite(v) and v > 0 for v in vals)
        spread[name] = max(vals) / min(vals) if finite else math.inf
    ok = all(v < 2 for v in spread.values())
    detail = ", ".join(f"{k} {v:.3f}" for k, v in spread.items())
    assert report(7, "operator constants vary less than 2x over N=4,8,16", ok, detail)


def test_loss_of_smoothness(tmp_path, report):
    cfg = RunConfig.for_experiment("loss_of_smoothness", N=16, delta=0.5, fit_range=[4, 16], out=str(tmp_path))
    assert cfg.amplitude <= 1e-3
    start = time.perf_counter()
    res = run(cfg)
    elapsed = time.perf_counter() - start
    r = res.summary["results"]
    ex = r["exponents"]
    ok = (
        abs(ex["linear"] + 4 + cfg.delta / 2) <= 0.2
        and ex["control"] < -8
        and r["max_relative_deviation"] < 0.1
        and elapsed < 120
    )
    detail = (
        f"linear {ex['linear']:.3f}, control {ex['control']:.2f}, "
        f"deviation {r['max_relative_deviation']:.1e}, {elapsed:.0f}s"
    )
    assert report(8, "rough electric data gives the predicted magnetic decay", ok, detail)


def test_lemma_ratio_stable(tmp_path, report):
    cfg = RunConfig.for_experiment(
        "lemma_check", lemma_s=[0.5, 1.0, 2.0], lemma_n_max=[10, 15], out=str(tmp_path)
    )
    res = run(cfg)
    values = res.summary["results"]["max_ratio"]
    assert len(values) == 9
    change = {k: v[1] / v[0] - 1 for k, v in values.items()}
    finite = all(math.isfinite(x) for v in values.values() for x in v)
    unstable = {k: c for k, c in change.items() if abs(c) > 0.05}
    detail = ", ".join(f"({k}) {v[1]:.2f} {change[k]:+.1%}" for k, v in values.items())
    ok = finite and not unstable
    assert report(9, "convolution bound constant stable between n_max=10 and 15", ok, detail)


def test_determinism(tmp_path, report):
    files = {
        "local_existence": ["diagnostics.csv"],
        "picard_contraction": ["picard.csv", "constants.csv"],
        "lemma_check": ["lemma.csv"],
    }
    overrides = {
        "local_existence": dict(N=4, dt=0.02, T=0.2),
        "picard_contraction": dict(N=4),
        "lemma_check": dict(lemma_n_max=[4, 6]),
    }
    same = []
    for exp, names in files.items():
        for tag in ("a", "b"):
            run(RunConfig.for_experiment(exp, seed=3, out=str(tmp_path / exp / tag), **overrides[exp]))
        for name in names:
            a = (tmp_path / exp / "a" / name).read_bytes()
            b = (tmp_path / exp / "b" / name).read_bytes()
            same.append(a == b and len(a) > 0)
    ok = all(same)
    assert report(10, "identical configs write bit-identical CSVs", ok, f"{sum(same)}/{len(same)} files identical")

