"""Linear propagators: heat semigroup, damped-wave multipliers and Duhamel weights.

The damped wave operator is ``y'' + sigma y' + m y`` for a mode with ``m = |n|^2``.
With ``a = sigma/2`` and ``q^2 = m - a^2`` its fundamental solutions are

    phi1(t) = exp(-a t) cos(q t),    phi2(t) = exp(-a t) sin(q t) / q,

(hyperbolic functions when ``q^2 < 0``), and data ``y(0) = y0, y'(0) = y1``
propagate as ``phi1 y0 + phi2 (a y0 + y1)``. With ``sigma = 1`` and ``m = 0`` this
gives ``phi1 = (1 + e^-t)/2`` and ``phi2 = 1 - e^-t``.

Duhamel integrals use forcing that is linear in time on each step; the kernel is
integrated exactly against ``1`` and ``s/h`` through the functions
``phi_k(z)`` of exponential integrators, applied to each characteristic root.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .spectral import SpectralField, _msq

KERNELS = ("heat", "phi2", "dphi2", "relax")


# ---------------------------------------------------------------------------
# Multipliers
# ---------------------------------------------------------------------------


def _cs(t, m, sigma):
    """``(exp(-a t), cos-like(q t), sin-like(q t)/q)`` for real or imaginary ``q``."""
    t = np.asarray(t, dtype=float)
    q2 = np.asarray(m, dtype=float) - (sigma / 2.0) ** 2
    w = np.sqrt(np.abs(q2))
    wt = w * t
    pos, neg = q2 > 0, q2 < 0
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(pos, np.cos(wt), np.where(neg, np.cosh(wt), 1.0))
        s = np.where(
            pos,
            np.sin(wt) / np.where(pos, w, 1.0),
            np.where(neg, np.sinh(wt) / np.where(neg, w, 1.0), t),
        )
    return np.exp(-0.5 * sigma * t), c, s


def phi1(t, m, sigma: float = 1.0):
    """Cosine-type damped-wave multiplier; ``(1 + e^-t)/2`` at ``m = 0``."""
    d, c, _ = _cs(t, m, sigma)
    return d * c


def phi2(t, m, sigma: float = 1.0):
    """Sine-type damped-wave multiplier; ``1 - e^-t`` at ``m = 0``."""
    d, _, s = _cs(t, m, sigma)
    return d * s


def dphi2(t, m, sigma: float = 1.0):
    """Time derivative of :func:`phi2`."""
    d, c, s = _cs(t, m, sigma)
    return d * (c - 0.5 * sigma * s)


def dphi1(t, m, sigma: float = 1.0):
    """Time derivative of :func:`phi1`, equal to ``-a phi1 - q^2 phi2``."""
    a = 0.5 * sigma
    q2 = np.asarray(m, dtype=float) - a * a
    return -a * phi1(t, m, sigma) - q2 * phi2(t, m, sigma)


def heat(t, m, nu: float):
    return np.exp(-nu * np.asarray(m, dtype=float) * t)


# ---------------------------------------------------------------------------
# Exponential-integrator weights
# ---------------------------------------------------------------------------


def phi_functions(z) -> tuple[np.ndarray, np.ndarray]:
    """``phi_1(z) = (e^z - 1)/z`` and ``phi_2(z) = (e^z - 1 - z)/z^2`` for complex ``z``."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 0.5
    zs = np.where(small, z, 0.0)
    # Taylor series: phi_k(z) = sum_j z^j / (j + k)!
    p1 = np.zeros_like(z)
    p2 = np.zeros_like(z)
    for j in range(24, -1, -1):
        p1 = p1 * zs + 1.0 / math.factorial(j + 1)
        p2 = p2 * zs + 1.0 / math.factorial(j + 2)
    zl = np.where(small, 1.0, z)
    em1 = np.expm1(zl)
    p1 = np.where(small, p1, em1 / zl)
    p2 = np.where(small, p2, (em1 - zl) / zl**2)
    return p1, p2


def _wave_roots(m, sigma):
    a = 0.5 * sigma
    q = np.sqrt(np.asarray(m, dtype=float) - a * a + 0j)
    rp, rm = -a + 1j * q, -a - 1j * q
    gap = np.abs(rp - rm)
    if np.any(gap < 1e-6 * max(1.0, a)):
        raise ValueError(
            f"critically damped mode (|n|^2 = sigma^2/4) for sigma={sigma}; "
            "choose a conductivity with sigma^2/4 off the integer lattice"
        )
    return rp, rm


def kernel_weights(kernel: str, m, h: float, nu: float = 1.0, sigma: float = 1.0):
    """Step weights ``(W0, W1)`` with ``W0 = int_0^h K(h-s) ds``, ``W1 = int_0^h K(h-s) s/h ds``."""
    m = np.asarray(m, dtype=float)
    if kernel in ("heat", "relax"):
        r = -nu * m if kernel == "heat" else np.full_like(m, -sigma)
        p1, p2 = phi_functions(r * h)
        return h * p1.real, h * p2.real
    if kernel in ("phi2", "dphi2"):
        rp, rm = _wave_roots(m, sigma)
        p1p, p2p = phi_functions(rp * h)
        p1m, p2m = phi_functions(rm * h)
        d = rp - rm
        w0 = (h * (p1p - p1m) / d).real
        w1 = (h * (p2p - p2m) / d).real
        if kernel == "phi2":
            return w0, w1
        # integrating the derivative kernel by parts
        return phi2(h, m, sigma), w0 / h
    raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PropagatorTable:
    """Multipliers and Duhamel weights for one time increment, indexed by ``m = |n|^2``."""

    N: int
    dt: float
    nu: float
    sigma: float = 1.0
    arrays: dict = field(init=False, repr=False)

    def __post_init__(self):
        if self.dt < 0 or self.nu <= 0 or self.sigma <= 0:
            raise ValueError("need dt >= 0, nu > 0, sigma > 0")
        m = np.arange(3 * self.N**2 + 1, dtype=float)
        h, nu, sg = self.dt, self.nu, self.sigma
        arr = {
            "m": m,
            "heat": heat(h, m, nu),
            "phi1": phi1(h, m, sg),
            "phi2": phi2(h, m, sg),
            "dphi1": dphi1(h, m, sg),
            "dphi2": dphi2(h, m, sg),
            "relax": np.full_like(m, math.exp(-sg * h)),
        }
        if h > 0:
            for k in KERNELS:
                w0, w1 = kernel_weights(k, m, h, nu, sg)
                arr[f"w0_{k}"], arr[f"w1_{k}"] = w0, w1
        for a in arr.values():
            a.setflags(write=False)
        object.__setattr__(self, "arrays", arr)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def on_lattice(self, name: str) -> np.ndarray:
        """Multiplier ``name`` broadcast onto the ``(L, L, L)`` lattice."""
        return _lattice_view(self, name)

    def to_csv(self, path) -> None:
        cols = ("m", "heat", "phi1", "phi2", "dphi2")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for row in zip(*(self.arrays[c] for c in cols)):
                w.writerow([int(row[0])] + [repr(float(x)) for x in row[1:]])


def _lattice_view(table: PropagatorTable, name: str) -> np.ndarray:
    cache = table.__dict__.setdefault("_lattice_cache", {})
    if name not in cache:
        cache[name] = table.arrays[name][_msq(table.N)]
    return cache[name]


@functools.lru_cache(maxsize=64)
def get_table(N: int, dt: float, nu: float, sigma: float = 1.0) -> PropagatorTable:
    return PropagatorTable(N, float(dt), float(nu), float(sigma))


# ---------------------------------------------------------------------------
# Application to fields
# ---------------------------------------------------------------------------


def _apply(u: SpectralField, mult: np.ndarray) -> SpectralField:
    return SpectralField(u.N, u.coeffs * mult)


def apply_heat(u: SpectralField, t: float, nu: float) -> SpectralField:
    return _apply(u, heat(t, u.lattice.msq, nu))


def apply_L1(u: SpectralField, t: float, sigma: float = 1.0) -> SpectralField:
    return _apply(u, phi1(t, u.lattice.msq, sigma))


def apply_L2(u: SpectralField, t: float, sigma: float = 1.0) -> SpectralField:
    return _apply(u, phi2(t, u.lattice.msq, sigma))


def duhamel_series(kernel: str, forcing: Sequence[SpectralField], table: PropagatorTable) -> list[SpectralField]:
    """``y_k = int_0^{t_k} K(t_k - s) F(s) ds`` at every node ``t_k = k dt``.

    ``F`` is interpolated linearly between consecutive samples.
    """
    if len(forcing) < 2:
        raise ValueError("need at least two forcing samples")
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")
    N = forcing[0].N
    T = table.on_lattice
    w0, w1 = T(f"w0_{kernel}"), T(f"w1_{kernel}")
    y = np.zeros_like(forcing[0].coeffs)
    out = [SpectralField(N, y)]
    if kernel in ("heat", "relax"):
        g = T(kernel)
        for f0, f1 in zip(forcing[:-1], forcing[1:]):
            y = g * y + w0 * f0.coeffs + w1 * (f1.coeffs - f0.coeffs)
            out.append(SpectralField(N, y))
        return out
    # wave kernels: carry y and its time derivative
    a = 0.5 * table.sigma
    p1, p2, dp1, dp2 = T("phi1"), T("phi2"), T("dphi1"), T("dphi2")
    a0, a1 = T("w0_phi2"), T("w1_phi2")
    b0, b1 = T("w0_dphi2"), T("w1_dphi2")
    yd = np.zeros_like(y)
    for f0, f1 in zip(forcing[:-1], forcing[1:]):
        df = f1.coeffs - f0.coeffs
        v = a * y + yd
        y, yd = (
            p1 * y + p2 * v + a0 * f0.coeffs + a1 * df,
            dp1 * y + dp2 * v + b0 * f0.coeffs + b1 * df,
        )
        out.append(SpectralField(N, yd if kernel == "dphi2" else y))
    return out


def duhamel(
    kernel: str,
    forcing: Sequence[SpectralField],
    t_low: float,
    t_high: float,
    nu: float = 1.0,
    sigma: float = 1.0,
    rule: str = "linear",
) -> SpectralField:
    """``int_{t_low}^{t_high} K(t_high - s) F(s) ds`` mode-wise.

    ``rule="linear"``: samples at equispaced nodes including both ends, forcing
    piecewise linear between them. ``rule="midpoint"``: exactly two samples at
    ``t_low`` and the midpoint, forcing extrapolated linearly over the interval.
    """
    if not t_high > t_low:
        raise ValueError("need t_high > t_low")
    length = t_high - t_low
    if rule == "linear":
        if len(forcing) < 2:
            raise ValueError("linear rule needs at least two samples")
        table = PropagatorTable(forcing[0].N, length / (len(forcing) - 1), nu, sigma)
        return duhamel_series(kernel, forcing, table)[-1]
    if rule == "midpoint":
        if len(forcing) != 2:
            raise ValueError("midpoint rule needs samples at t_low and the midpoint")
        table = PropagatorTable(forcing[0].N, length, nu, sigma)
        f0, fh = forcing
        w0, w1 = table.on_lattice(f"w0_{kernel}"), table.on_lattice(f"w1_{kernel}")
        return SpectralField(f0.N, w0 * f0.coeffs + 2.0 * w1 * (fh.coeffs - f0.coeffs))
    raise ValueError(f"unknown quadrature rule {rule!r}")
