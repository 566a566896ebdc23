import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from fullmhd import propagators as pr
from fullmhd import solver as so
from fullmhd import spectral as sp
from fullmhd.experiments import RunConfig, initial_state
from fullmhd.spectral import SpectralField

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def rand(N, seed, **kw):
    return sp.random_field(N, np.random.default_rng(seed), **kw)


def smooth_state(N=4, amplitude=0.3):
    return initial_state(RunConfig.for_experiment("selfcheck", N=N, amplitude=amplitude))


def const(f, n=3):
    return [f] * n


# -- configuration and state ---------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError, match="nu"):
        so.SolverConfig(nu=0)
    with pytest.raises(ValueError, match="dt"):
        so.SolverConfig(dt=-1)


def test_initial_state_invariants():
    N = 3
    v0, B0, E0 = rand(N, 1), rand(N, 2), rand(N, 3)
    s = so.StateVector.from_initial(v0, B0, E0)
    res = s.invariant_residuals()
    assert all(x < 1e-12 for x in res.values())
    assert np.abs(s.E.coeffs - E0.coeffs).max() < 1e-14
    assert np.allclose(s.Etil.at((0, 0, 0)), E0.at((0, 0, 0)))


def test_state_roundtrip(tmp_path):
    s = smooth_state()
    s = so.StateVector(0.25, s.v, s.B, s.Etil, s.Ebar)
    so.write_state(tmp_path / "s.wmhd", s)
    r = so.read_state(tmp_path / "s.wmhd")
    assert r.t == 0.25
    assert so.state_distance(r, s) == 0.0
    with pytest.raises(ValueError):
        so.StateVector.from_stacked(SpectralField.zeros(2, 3), 0.0)


def test_compute_j():
    N = 2
    z = SpectralField.zeros(N)
    B, E = rand(N, 1), rand(N, 2)
    assert np.all(so.compute_j(z, B, z, z).coeffs == 0)
    Et, Eb = sp.helmholtz_split(E)
    j = so.compute_j(rand(N, 3), z, Et, Eb, sigma=1.5)
    assert np.abs(j.coeffs - 1.5 * E.coeffs).max() < 1e-14
    v = rand(N, 4)
    j1, j2 = so.compute_j(v, B, Et, Eb, 1.0), so.compute_j(v, B, Et, Eb, 2.0)
    assert np.abs(j2.coeffs - 2 * j1.coeffs).max() < 1e-13


# -- Duhamel operators ---------------------------------------------------------


def test_operators_vanish_on_zero_and_constants():
    N = 3
    tab = pr.get_table(N, 0.05, 0.1)
    z, u = SpectralField.zeros(N), rand(N, 5)
    c = SpectralField.from_modes(N, {(0, 0, 0): [0.3, -0.2, 0.5]})
    par = SpectralField.from_modes(N, {(0, 0, 0): [0.6, -0.4, 1.0]})
    cases = [
        so.M1(const(z), const(z), tab),
        so.M1(const(c), const(c), tab),
        so.M2(const(z), const(u), tab),
        so.M2(const(c), const(par), tab),
        so.M3(const(u), const(z), const(u), tab),
        so.M3(const(c), const(par), const(u), tab),
        so.M4(const(z), const(u), tab),
        so.M5(const(u), const(z), tab),
        so.M6(const(z), const(u), tab),
    ]
    for traj in cases:
        assert max(np.abs(f.coeffs).max() for f in traj) < 1e-14


@given(seeds)
@settings(max_examples=10, deadline=None)
def test_operators_are_bilinear(seed):
    N = 2
    tab = pr.get_table(N, 0.1, 0.2)
    a, b, c = rand(N, seed), rand(N, seed + 1), rand(N, seed + 2)
    for op in (so.M2, so.M4, so.M5, so.M6):
        lhs = op(const(a + 2.0 * b), const(c), tab)[-1]
        rhs = op(const(a), const(c), tab)[-1] + 2.0 * op(const(b), const(c), tab)[-1]
        assert np.abs(lhs.coeffs - rhs.coeffs).max() < 1e-12 * (1 + np.abs(rhs.coeffs).max())
        lhs = op(const(c), const(a - b), tab)[-1]
        rhs = op(const(c), const(a), tab)[-1] - op(const(c), const(b), tab)[-1]
        assert np.abs(lhs.coeffs - rhs.coeffs).max() < 1e-12 * (1 + np.abs(rhs.coeffs).max())
    lhs = so.M3(const(a), const(b), const(3.0 * c), tab)[-1]
    rhs = 3.0 * so.M3(const(a), const(b), const(c), tab)[-1]
    assert np.abs(lhs.coeffs - rhs.coeffs).max() < 1e-12 * (1 + np.abs(rhs.coeffs).max())


@given(seeds)
@settings(max_examples=10, deadline=None)
def test_operator_outputs_solenoidal_or_irrotational(seed):
    N = 3
    tab = pr.get_table(N, 0.1, 0.2)
    v, B, E = rand(N, seed), rand(N, seed + 1), rand(N, seed + 2)
    for traj in (
        so.M1(const(v), const(v), tab),
        so.M2(const(E), const(B), tab),
        so.M3(const(v), const(B), const(B), tab),
        so.M4(const(v), const(B), tab),
        so.M5(const(v), const(B), tab),
    ):
        assert sp.xnorm(sp.divergence(traj[-1])) < 1e-10
    assert sp.xnorm(sp.curl(so.M6(const(v), const(B), tab)[-1])) < 1e-10


def test_M5_matches_dense_ode():
    # M5 with G(s) = P(v x B)(s) solves z'' + z' + m z = G', z(0) = 0, z'(0) = G(0)
    N, T = 2, 1.0
    v0 = SpectralField.from_modes(N, {(1, 0, 0): [0, 1.0, 0]})
    B0 = SpectralField.from_modes(N, {(0, 1, 0): [0, 0, 1.0]})
    f = lambda t: 1.0 + 0.5 * math.sin(2 * t)  # noqa: E731
    df = lambda t: math.cos(2 * t)  # noqa: E731
    n = (1, 1, 0)
    G0 = sp.leray_project(sp.cross(v0, B0)).at(n)
    k = int(np.argmax(np.abs(G0)))
    g = G0[k]
    m = 2.0
    sol = solve_ivp(
        lambda t, y: [y[1], g * df(t) - y[1] - m * y[0]],
        (0, T),
        [0.0, g * f(0.0)],
        rtol=1e-12,
        atol=1e-14,
    )
    exact = sol.y[0, -1]
    errs = []
    for steps in (10, 20, 40):
        times = np.linspace(0, T, steps + 1)
        tab = pr.PropagatorTable(N, T / steps, 0.1)
        out = so.M5([f(t) * v0 for t in times], const(B0, steps + 1), tab)
        errs.append(abs(out[-1].at(n)[k] - exact))
    assert errs[-1] < 1e-4
    assert min(math.log2(a / b) for a, b in zip(errs[:-1], errs[1:])) > 1.9


def test_operator_bound_constants_finite():
    c = so.operator_bound_constants(4, samples=2, nodes=4)
    assert set(c) == set(so.OPERATORS)
    assert all(0 < x < math.inf for x in c.values())
    cfg = so.calibrate_constants(so.SolverConfig(), N=4, samples=2, nodes=4)
    assert cfg.c1 == c["M1"] and cfg.ct1 == 2 * c["M1"] and cfg.ct3 == 3 * c["M3"]


# -- pressure -----------------------------------------------------------------


def test_pressure():
    N = 3
    z = SpectralField.zeros(N)
    assert np.all(so.recover_pressure(z, z, z).coeffs == 0)
    v, j, B = rand(N, 1), rand(N, 2), rand(N, 3)
    v = sp.leray_project(v)
    p = so.recover_pressure(v, j, B)
    F = sp.div_tensor(v, v) - sp.cross(j, B)
    # the pressure gradient removes exactly the gradient part of F
    assert np.abs((sp.gradient(p) + sp.gradient_part(F)).coeffs).max() < 1e-12
    assert sp.xnorm(sp.divergence(F + sp.gradient(p))) < 1e-10


# -- stepping -----------------------------------------------------------------


def test_step_zero_state():
    s = so.StateVector.zeros(3)
    out = so.step(s, 0.1, so.SolverConfig())
    assert all(np.all(f.coeffs == 0) for f in out.fields())
    assert out.t == pytest.approx(0.1)


def test_step_pure_heat_mode():
    N, nu, dt = 3, 0.3, 0.05
    v0 = SpectralField.from_modes(N, {(1, 0, 0): [0, 1.0, 0]})
    z = SpectralField.zeros(N)
    s = so.StateVector.from_initial(v0, z, z)
    traj = so.integrate(s, so.SolverConfig(nu=nu, dt=dt, T=10 * dt))
    for k, st_ in enumerate(traj):
        assert st_.v.at((1, 0, 0))[1] == pytest.approx(math.exp(-nu * k * dt), rel=1e-13)


def test_linear_maxwell_closed_form():
    N, sigma = 3, 1.0
    B0 = sp.leray_project(rand(N, 4, decay=1.0))
    E0 = rand(N, 5, decay=1.0)
    s = so.StateVector.from_initial(SpectralField.zeros(N), B0, E0)
    cfg = so.SolverConfig(dt=0.05, T=0.5, nonlinear=False)
    final = so.integrate(s, cfg)[-1]
    n = s.B.lattice.wavenumbers
    m = s.B.lattice.msq
    curl = lambda c: 1j * np.cross(n, c, axis=0)  # noqa: E731
    Bc, Ec = s.B.coeffs, s.Etil.coeffs
    B1 = -curl(Ec)
    E1 = curl(Bc) - sigma * Ec
    t = 0.5
    Bt = pr.phi1(t, m) * Bc + pr.phi2(t, m) * (Bc / 2 + B1)
    Et = pr.phi1(t, m) * Ec + pr.phi2(t, m) * (Ec / 2 + E1)
    assert np.abs(final.B.coeffs - Bt).max() < 1e-13
    assert np.abs(final.Etil.coeffs - Et).max() < 1e-13
    assert np.abs(final.Ebar.coeffs - math.exp(-t) * s.Ebar.coeffs).max() < 1e-14


def test_mean_B_mode_conserved_in_linear_run():
    N = 3
    B0 = sp.leray_project(rand(N, 6))
    B0.coeffs[:, N, N, N] = [0.2, -0.1, 0.05]
    s = so.StateVector(0.0, SpectralField.zeros(N), B0, *sp.helmholtz_split(rand(N, 7)))
    traj = so.integrate(s, so.SolverConfig(dt=0.05, T=1.0, nonlinear=False))
    for st_ in traj:
        assert np.abs(st_.B.at((0, 0, 0)) - [0.2, -0.1, 0.05]).max() < 1e-12


def test_step_second_order_against_fine_reference():
    s = smooth_state(N=4)
    T = 0.2
    ref = so.integrate(s, so.SolverConfig(dt=0.0025, T=T))[-1]
    errs = [so.state_distance(so.integrate(s, so.SolverConfig(dt=dt, T=T))[-1], ref) for dt in (0.04, 0.02, 0.01)]
    orders = [math.log2(a / b) for a, b in zip(errs[:-1], errs[1:])]
    assert min(orders) >= 1.8


def test_invariants_along_nonlinear_run():
    traj = so.integrate(smooth_state(N=4), so.SolverConfig(dt=0.02, T=0.3))
    for st_ in traj:
        res = st_.invariant_residuals()
        assert res["div_v"] < 1e-10 and res["div_B"] < 1e-10
        assert res["div_Etil"] < 1e-10 and res["curl_Ebar"] < 1e-10
        assert res["mean_B"] <= 1e-12
        assert sp.hermitian_defect(st_.stacked()) == 0.0


def test_blow_up_guard():
    s = smooth_state(N=4, amplitude=30.0)
    with pytest.raises(so.BlowUpError, match="step 1"):
        so.integrate(s, so.SolverConfig(dt=0.5, T=3.0))


# -- Picard iteration ----------------------------------------------------------


def test_admissible_T():
    ones = so.SolverConfig(ct1=1, ct2=1, ct3=1, T_max=10.0)
    assert so.admissible_T(1.0, ones) == pytest.approx(1 / 144)
    assert so.admissible_T(0.0, ones) == 10.0
    assert so.admissible_T(1e-9, ones) == 10.0
    Ts = [so.admissible_T(K, ones) for K in (0.5, 1, 2, 4, 8)]
    assert all(a > b for a, b in zip(Ts[:-1], Ts[1:]))


def test_picard_zero_data():
    traj, diag = so.picard_run(so.StateVector.zeros(3), 0.1, 5, so.SolverConfig(dt=0.02))
    assert all(np.all(f.coeffs == 0) for s in traj for f in s.fields())
    assert diag.converged and diag.K == [0.0, 0.0]


def test_picard_small_data_contracts():
    N = 4
    v0 = SpectralField.from_modes(N, {(1, 0, 0): [0, 1e-2, 0]})
    B0 = SpectralField.from_modes(N, {(0, 1, 0): [1e-2, 0, 0]})
    E0 = SpectralField.from_modes(N, {(0, 0, 1): [0, 1e-2, 0]})
    s = so.StateVector.from_initial(v0, B0, E0)
    cfg = so.SolverConfig(dt=0.01)
    traj, diag = so.picard_run(s, 0.1, 20, cfg)
    assert diag.converged
    assert all(r <= 0.5 for r in diag.ratios)
    assert diag.self_consistency < 10 * cfg.tol
    assert all(K >= 0 for K in diag.K) and all(L >= 0 for L in diag.L[1:])
    assert len(traj) == 11 and traj[-1].t == pytest.approx(0.1)


def test_picard_fixed_point_matches_time_stepping():
    s = smooth_state(N=4, amplitude=0.1)
    cfg = so.SolverConfig(dt=0.01, T=0.1)
    traj, _ = so.picard_run(s, 0.1, 30, cfg)
    stepped = so.integrate(s, cfg)
    # both are second-order discretisations of the same solution
    assert so.state_distance(traj[-1], stepped[-1]) < 1e-3 * s.norm()


def test_picard_keep_iterates_and_csv(tmp_path):
    s = smooth_state(N=3, amplitude=0.1)
    hist, diag = so.picard_run(s, 0.05, 4, so.SolverConfig(dt=0.01), keep_iterates=True)
    assert len(hist) == len(diag.K) == 4
    diag.to_csv(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "j,K_j,L_j,ratio"
    assert lines[1].startswith("1,") and lines[1].endswith(",nan,nan")
    assert len(lines) == 5


def test_picard_divergence_detected():
    s = smooth_state(N=4, amplitude=3.0)
    with pytest.raises(so.PicardDivergenceError) as exc:
        so.picard_run(s, 2.0, 30, so.SolverConfig(dt=0.1))
    assert exc.value.diagnostics is not None
    assert "non-contraction" in str(exc.value)
