"""Measurements on states and trajectories: energy budget, PDE residuals,
conserved mean mode, norm series, Fourier decay exponents and the pointwise
convolution bound for the decay profiles."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.signal import fftconvolve

from . import spectral as sp
from .solver import StateVector, compute_j, recover_pressure
from .spectral import DecayProfile, SpectralField


# ---------------------------------------------------------------------------
# Energy
# ---------------------------------------------------------------------------


def energy(state: StateVector) -> float:
    """``(|v|^2 + |B|^2 + |E|^2) / 2`` with volume-averaged L2 norms (Parseval)."""
    return 0.5 * (sp.l2sq(state.v) + sp.l2sq(state.B) + sp.l2sq(state.E))


def dissipation(state: StateVector, nu: float, sigma: float = 1.0) -> float:
    """``|j|^2 / sigma + nu |grad v|^2``."""
    j = compute_j(state.v, state.B, state.Etil, state.Ebar, sigma)
    grad_v = float((state.v.lattice.msq * np.abs(state.v.coeffs) ** 2).sum())
    return sp.l2sq(j) / sigma + nu * grad_v


def energy_budget(s0: StateVector, s1: StateVector, dt: float | None = None, nu: float = 0.1, sigma: float = 1.0) -> float:
    """Residual of the energy identity across one step, dissipation averaged over the ends."""
    dt = s1.t - s0.t if dt is None else dt
    if dt == 0:
        return 0.0
    d = 0.5 * (dissipation(s0, nu, sigma) + dissipation(s1, nu, sigma))
    return abs((energy(s1) - energy(s0)) / dt + d)


# ---------------------------------------------------------------------------
# Residuals of the original system
# ---------------------------------------------------------------------------


def system_residuals(window: Sequence[StateVector], nu: float = 0.1, sigma: float = 1.0) -> tuple[float, float, float]:
    """X^0 norms of the Faraday, Ampere and momentum residuals at the window centre.

    Time derivatives are centred differences over three consecutive states.
    """
    if len(window) < 3:
        raise ValueError("need three consecutive states")
    s0, s1, s2 = window[len(window) // 2 - 1 : len(window) // 2 + 2]
    h2 = s2.t - s0.t
    if h2 == 0:
        return 0.0, 0.0, 0.0
    dB = (s2.B - s0.B) / h2
    dE = (s2.E - s0.E) / h2
    dv = (s2.v - s0.v) / h2
    E = s1.E
    j = compute_j(s1.v, s1.B, s1.Etil, s1.Ebar, sigma)
    faraday = dB + sp.curl(E)
    ampere = dE - sp.curl(s1.B) + j
    p = recover_pressure(s1.v, j, s1.B)
    momentum = (
        dv
        + sp.div_tensor(s1.v, s1.v)
        - nu * sp.laplacian(s1.v)
        + sp.gradient(p)
        - sp.cross(j, s1.B)
    )
    return sp.xnorm(faraday), sp.xnorm(ampere), sp.xnorm(momentum)


def mean_mode_B(state: StateVector) -> float:
    return float(np.linalg.norm(state.B.at((0, 0, 0))))


# ---------------------------------------------------------------------------
# Norm series
# ---------------------------------------------------------------------------


def gradient_norm_series(trajectory: Sequence[StateVector], k: int = 1) -> dict[str, list[float]]:
    """``xnorm(u, k)`` per state for ``u`` in ``v, B, Etil, Ebar``; bounds ``|grad^k u|``."""
    names = ("v", "B", "Etil", "Ebar")
    return {name: [sp.xnorm(getattr(s, name), k) for s in trajectory] for name in names}


# ---------------------------------------------------------------------------
# Decay exponents
# ---------------------------------------------------------------------------


def _axis_magnitudes(u: SpectralField, axis, ms, component) -> np.ndarray:
    out = []
    for m in ms:
        c = u.at(tuple(int(m) * int(a) for a in axis))
        out.append(abs(c[component]) if component is not None else float(np.linalg.norm(c)))
    return np.array(out)


def slope_fit(
    field: SpectralField | Sequence[SpectralField],
    axis: Sequence[int] = (0, 0, 1),
    m_range: tuple[int, int] = (4, 16),
    component: int | None = None,
    transform: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
) -> tuple[float, float]:
    """Least-squares slope of ``log |u_hat(m axis)|`` against ``log |m axis|``.

    ``field`` is a single field or a trajectory; for a trajectory ``transform``
    reduces the ``(times, modes)`` magnitude array to one value per mode.
    Returns ``(exponent, r2)``.
    """
    lo, hi = m_range
    fields = [field] if isinstance(field, SpectralField) else list(field)
    N = fields[0].N
    if hi > N:
        raise ValueError(f"fit range up to m={hi} exceeds the lattice cutoff N={N}")
    if hi - lo < 4 or lo < 1:
        raise ValueError(f"degenerate fit range {m_range}")
    ms = np.arange(lo, hi + 1)
    mags = np.array([_axis_magnitudes(f, axis, ms, component) for f in fields])
    if transform is not None:
        vals = transform(mags, ms)
    elif len(fields) == 1:
        vals = mags[0]
    else:
        raise ValueError("a trajectory needs a transform to reduce it to one value per mode")
    if np.any(vals <= 0):
        raise ValueError("zero coefficients in the fit range; nothing to fit")
    x = np.log(ms * np.linalg.norm(axis))
    y = np.log(vals)
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def window_envelope(
    times: Sequence[float],
    sigma: float = 1.0,
    axis_length: float = 1.0,
    t_end: float | None = None,
    min_samples: int = 16,
) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Transform for :func:`slope_fit`: per-mode sup over the last oscillation period.

    For the mode ``m`` the window is ``[t_end - 2 pi / w, t_end]`` with
    ``w = sqrt(|n|^2 - sigma^2/4)``. Samples are rescaled by ``exp(sigma (t - t_end)/2)``
    so the common damping factor is evaluated at ``t_end`` for every mode and the
    sup measures the envelope ``exp(-sigma t_end / 2) |amplitude| / w``.
    """
    times = np.asarray(times, dtype=float)
    t_end = float(times[-1]) if t_end is None else t_end

    def envelope(mags: np.ndarray, ms: np.ndarray) -> np.ndarray:
        out = np.empty(len(ms))
        for i, m in enumerate(ms):
            w2 = (m * axis_length) ** 2 - sigma**2 / 4
            if w2 <= 0:
                raise ValueError(f"mode m={m} does not oscillate")
            period = 2 * math.pi / math.sqrt(w2)
            sel = (times >= t_end - period - 1e-12) & (times <= t_end + 1e-12)
            if times[0] > t_end - period + 1e-12:
                raise ValueError(f"trajectory shorter than one period ({period:.3g}) of mode m={m}")
            if sel.sum() < min_samples:
                raise ValueError(
                    f"only {int(sel.sum())} samples per period for mode m={m}; need {min_samples}"
                )
            out[i] = (mags[sel, i] * np.exp(0.5 * sigma * (times[sel] - t_end))).max()
        return out

    return envelope


# ---------------------------------------------------------------------------
# Pointwise convolution bound
# ---------------------------------------------------------------------------


def _profile_grid(profile: DecayProfile, R: int) -> np.ndarray:
    k = np.arange(-R, R + 1)
    n = np.array(np.meshgrid(k, k, k, indexing="ij"))
    return np.asarray(sp.rho_eval(profile, n), dtype=float)


def profile_convolution(s: float, s2: float, C1: float, C2: float, n_max: int) -> np.ndarray:
    """``sum_{|k|_inf <= 2 n_max} rho_s(k) rho_s2(n - k)`` for all ``|n|_inf <= n_max``.

    Exact linear convolution evaluated with FFTs ('valid' part only).
    """
    a = _profile_grid(DecayProfile(s, C1, C2), 2 * n_max)
    b = _profile_grid(DecayProfile(s2, C1, C2), 3 * n_max)
    return fftconvolve(b, a, mode="valid")


def lemma_check(s: float, s2: float, C1: float = 1.0, C2: float = 1.0, n_max: int = 10):
    """Max over ``|n|_inf <= n_max`` of the convolution divided by ``rho_min(s, s2)(n)``.

    Returns ``(max_ratio, argmax)`` with ``argmax`` a lattice mode.
    """
    if s <= 0 or s2 <= 0:
        raise ValueError("need s, s' > 0")
    if C2 <= 0:
        raise ValueError("need C2 > 0 so that rho is finite at n = 0")
    conv = profile_convolution(s, s2, C1, C2, n_max)
    ratio = conv / _profile_grid(DecayProfile(min(s, s2), C1, C2), n_max)
    i = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    return float(ratio[i]), tuple(int(k) - n_max for k in i)


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


@dataclass
class DiagnosticsRecord:
    t: float
    energy: float
    dissipation: float
    energy_residual: float
    div_v: float
    div_B: float
    mean_B_mode: float
    faraday_residual: float
    ampere_residual: float
    momentum_residual: float
    xnorms: dict = field(default_factory=dict)

    COLUMNS = (
        "t",
        "E_total",
        "dissipation",
        "energy_residual",
        "div_v",
        "div_B",
        "mean_B_mode",
        "faraday_residual",
        "ampere_residual",
        "momentum_residual",
    )

    def row(self, s_values) -> list[float]:
        return [
            self.t,
            self.energy,
            self.dissipation,
            self.energy_residual,
            self.div_v,
            self.div_B,
            self.mean_B_mode,
            self.faraday_residual,
            self.ampere_residual,
            self.momentum_residual,
        ] + [self.xnorms[s] for s in s_values]


def state_xnorm(state: StateVector, s: float) -> float:
    """``|v|_{X^s} + |B|_{X^s} + |E|_{X^s}``."""
    return sp.xnorm(state.v, s) + sp.xnorm(state.B, s) + sp.xnorm(state.E, s)


def trajectory_records(
    trajectory: Sequence[StateVector],
    nu: float,
    sigma: float = 1.0,
    s_values: Sequence[float] = (0.0, 1.0, 2.0),
) -> list[DiagnosticsRecord]:
    """One record per state; centred quantities are NaN at the ends."""
    nan = float("nan")
    out = []
    for k, s in enumerate(trajectory):
        er = energy_budget(trajectory[k - 1], s, nu=nu, sigma=sigma) if k > 0 else nan
        if 0 < k < len(trajectory) - 1:
            fr, am, mo = system_residuals(trajectory[k - 1 : k + 2], nu, sigma)
        else:
            fr = am = mo = nan
        out.append(
            DiagnosticsRecord(
                t=s.t,
                energy=energy(s),
                dissipation=dissipation(s, nu, sigma),
                energy_residual=er,
                div_v=sp.xnorm(sp.divergence(s.v)),
                div_B=sp.xnorm(sp.divergence(s.B)),
                mean_B_mode=mean_mode_B(s),
                faraday_residual=fr,
                ampere_residual=am,
                momentum_residual=mo,
                xnorms={x: state_xnorm(s, x) for x in s_values},
            )
        )
    return out


def write_records(path, records: Sequence[DiagnosticsRecord], s_values: Sequence[float]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(DiagnosticsRecord.COLUMNS) + [f"xnorm_{s:g}" for s in s_values])
        for r in records:
            w.writerow([repr(float(x)) for x in r.row(s_values)])


def convergence_order(dts: Sequence[float], errors: Sequence[float]) -> list[float]:
    """Observed orders between consecutive refinements."""
    return [
        math.log(e0 / e1) / math.log(d0 / d1)
        for d0, d1, e0, e1 in zip(dts[:-1], dts[1:], errors[:-1], errors[1:])
    ]
