"""Truncated Fourier representation of real vector fields on the 3-torus.

A field is stored as a dense coefficient array of shape ``(c, 2N+1, 2N+1, 2N+1)``
where array index ``i`` along a spatial axis holds wavenumber ``n = i - N``.
The physical field is ``u(x) = sum_n u_hat(n) exp(i n.x)`` on ``[0, 2pi)^3``.

Products are exact truncated convolutions: both factors are evaluated on a
zero-padded grid large enough that the quadratic product does not alias back
onto the lattice, and the result is truncated to ``max_i |n_i| <= N``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.fft as sfft

MAGIC = "WMHD1"


# ---------------------------------------------------------------------------
# Lattice
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Lattice:
    """Cube of modes ``n in Z^3`` with ``max_i |n_i| <= N``."""

    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"cutoff N must be a positive integer, got {self.N!r}")

    @property
    def size(self) -> int:
        return 2 * self.N + 1

    @property
    def mode_count(self) -> int:
        return self.size**3

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.size,) * 3

    def index(self, n: Sequence[int]) -> tuple[int, int, int]:
        """Array index of lattice mode ``n``."""
        if max(abs(int(k)) for k in n) > self.N:
            raise IndexError(f"mode {tuple(n)} outside lattice N={self.N}")
        return tuple(int(k) + self.N for k in n)

    @property
    def wavenumbers(self) -> np.ndarray:
        """Integer array ``(3, L, L, L)`` of mode vectors."""
        return _wavenumbers(self.N)

    @property
    def msq(self) -> np.ndarray:
        """Squared wavenumber ``|n|^2`` on the lattice (integer array)."""
        return _msq(self.N)

    @property
    def padded_size(self) -> int:
        return padded_size(self.N)


@functools.lru_cache(maxsize=None)
def _wavenumbers(N: int) -> np.ndarray:
    k = np.arange(-N, N + 1)
    n = np.array(np.meshgrid(k, k, k, indexing="ij"))
    n.setflags(write=False)
    return n


@functools.lru_cache(maxsize=None)
def _msq(N: int) -> np.ndarray:
    m = (_wavenumbers(N) ** 2).sum(axis=0)
    m.setflags(write=False)
    return m


@functools.lru_cache(maxsize=None)
def _inv_msq(N: int) -> np.ndarray:
    m = _msq(N).astype(float)
    inv = np.zeros_like(m)
    np.divide(1.0, m, out=inv, where=m > 0)
    inv.setflags(write=False)
    return inv


def padded_size(N: int) -> int:
    """Grid size for alias-free quadratic products, at least ``2(2N+1)``."""
    return sfft.next_fast_len(2 * (2 * N + 1), real=True)


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients of a real scalar (``c=1``) or vector (``c=3``) field."""

    N: int
    coeffs: np.ndarray

    def __post_init__(self):
        L = 2 * self.N + 1
        c = np.asarray(self.coeffs)
        if c.ndim != 4 or c.shape[1:] != (L, L, L):
            raise ValueError(f"coefficient array shape {c.shape} does not match N={self.N}")
        if c.dtype != np.complex128:
            object.__setattr__(self, "coeffs", c.astype(np.complex128))

    @classmethod
    def zeros(cls, N: int, c: int = 3) -> "SpectralField":
        L = 2 * N + 1
        return cls(N, np.zeros((c, L, L, L), dtype=np.complex128))

    @classmethod
    def from_modes(cls, N: int, modes: dict, c: int = 3) -> "SpectralField":
        """Build a real field from ``{n: coefficient}``; ``-n`` gets the conjugate."""
        f = cls.zeros(N, c)
        lat = Lattice(N)
        for n, value in modes.items():
            value = np.broadcast_to(np.asarray(value, dtype=complex), (c,))
            neg = tuple(-int(k) for k in n)
            if tuple(n) == neg:
                f.coeffs[(slice(None),) + lat.index(n)] += value.real
            else:
                f.coeffs[(slice(None),) + lat.index(n)] += value
                f.coeffs[(slice(None),) + lat.index(neg)] += np.conj(value)
        return f

    @property
    def lattice(self) -> Lattice:
        return Lattice(self.N)

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[0]

    def at(self, n: Sequence[int]) -> np.ndarray:
        return self.coeffs[(slice(None),) + self.lattice.index(n)]

    def component(self, i: int) -> "SpectralField":
        return SpectralField(self.N, self.coeffs[i : i + 1].copy())

    def copy(self) -> "SpectralField":
        return SpectralField(self.N, self.coeffs.copy())

    def _check(self, other: "SpectralField"):
        if not isinstance(other, SpectralField):
            return NotImplemented
        if other.N != self.N:
            raise ValueError(f"lattice mismatch: N={self.N} vs N={other.N}")

    def __add__(self, other):
        self._check(other)
        return SpectralField(self.N, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return SpectralField(self.N, self.coeffs - other.coeffs)

    def __neg__(self):
        return SpectralField(self.N, -self.coeffs)

    def __mul__(self, a):
        if isinstance(a, SpectralField):
            return NotImplemented
        return SpectralField(self.N, self.coeffs * a)

    __rmul__ = __mul__

    def __truediv__(self, a):
        return SpectralField(self.N, self.coeffs / a)


def _same_lattice(*fields: SpectralField) -> int:
    N = fields[0].N
    for f in fields[1:]:
        if f.N != N:
            raise ValueError(f"lattice mismatch: N={N} vs N={f.N}")
    return N


def _flip(a: np.ndarray) -> np.ndarray:
    """Coefficient array evaluated at ``-n``."""
    return a[..., ::-1, ::-1, ::-1]


def hermitian_defect(u: SpectralField) -> float:
    """Largest ``|u_hat(-n) - conj(u_hat(n))|``; zero for a real field."""
    return float(np.abs(_flip(u.coeffs) - np.conj(u.coeffs)).max())


def hermitian_part(u: SpectralField) -> SpectralField:
    """Coefficients of ``Re u``."""
    return SpectralField(u.N, 0.5 * (u.coeffs + np.conj(_flip(u.coeffs))))


def random_field(
    N: int,
    rng: np.random.Generator,
    c: int = 3,
    decay: float | None = None,
    amplitude: float = 1.0,
) -> SpectralField:
    """Random real field; ``decay`` scales mode ``n`` by ``exp(-decay |n|)``."""
    L = 2 * N + 1
    a = rng.standard_normal((c, L, L, L)) + 1j * rng.standard_normal((c, L, L, L))
    if decay is not None:
        a *= np.exp(-decay * np.sqrt(_msq(N)))
    return hermitian_part(SpectralField(N, amplitude * a))


def embed(u: SpectralField, N: int) -> SpectralField:
    """Same field on a lattice with cutoff ``N >= u.N`` (new modes are zero)."""
    if N < u.N:
        raise ValueError(f"cannot embed N={u.N} into smaller N={N}")
    out = SpectralField.zeros(N, u.ncomp)
    d = N - u.N
    L = 2 * u.N + 1
    out.coeffs[:, d : d + L, d : d + L, d : d + L] = u.coeffs
    return out


def truncate(u: SpectralField, N: int) -> SpectralField:
    """Restriction to the modes with ``max_i |n_i| <= N``."""
    if N > u.N:
        raise ValueError(f"cannot truncate N={u.N} to larger N={N}")
    d = u.N - N
    L = 2 * N + 1
    return SpectralField(N, u.coeffs[:, d : d + L, d : d + L, d : d + L].copy())


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------


def weight(n: Sequence[float] | np.ndarray, s: float) -> float | np.ndarray:
    """``(1 + |n|^2)^(s/2)``; ``n`` may be one mode or an array ``(3, ...)``."""
    n = np.asarray(n, dtype=float)
    return (1.0 + (n**2).sum(axis=0)) ** (s / 2.0)


def magnitudes(u: SpectralField) -> np.ndarray:
    """Euclidean length of the complex coefficient vector at every mode."""
    return np.sqrt((u.coeffs.real**2 + u.coeffs.imag**2).sum(axis=0))


def xnorm(u: SpectralField, s: float = 0.0) -> float:
    """Weighted l1 norm ``sum_n (1+|n|^2)^(s/2) |u_hat(n)|``."""
    w = (1.0 + u.lattice.msq) ** (s / 2.0)
    return float((w * magnitudes(u)).sum())


def l2sq(u: SpectralField) -> float:
    """``sum_n |u_hat(n)|^2``, the volume-averaged squared L2 norm."""
    return float((u.coeffs.real**2 + u.coeffs.imag**2).sum())


# ---------------------------------------------------------------------------
# Products
# ---------------------------------------------------------------------------


def _broadcast_pair(f: SpectralField, g: SpectralField):
    if f.ncomp != g.ncomp and 1 not in (f.ncomp, g.ncomp):
        raise ValueError(f"cannot multiply fields with {f.ncomp} and {g.ncomp} components")
    return f.coeffs, g.coeffs


def convolve_direct(f: SpectralField, g: SpectralField) -> SpectralField:
    """Truncated convolution ``sum_k f(k) g(n-k)`` by explicit shifted sums.

    Component-wise for equal component counts; a scalar factor broadcasts.
    """
    N = _same_lattice(f, g)
    a, b = _broadcast_pair(f, g)
    L = 2 * N + 1
    out = np.zeros((max(a.shape[0], b.shape[0]), L, L, L), dtype=complex)
    for i1 in range(L):
        k1 = i1 - N
        o1, g1 = _shift_slices(k1, N)
        for i2 in range(L):
            k2 = i2 - N
            o2, g2 = _shift_slices(k2, N)
            for i3 in range(L):
                k3 = i3 - N
                fk = a[:, i1, i2, i3]
                if not fk.any():
                    continue
                o3, g3 = _shift_slices(k3, N)
                out[:, o1, o2, o3] += fk[:, None, None, None] * b[:, g1, g2, g3]
    return SpectralField(N, out)


def _shift_slices(k: int, N: int) -> tuple[slice, slice]:
    # output n and source n-k, both inside [-N, N]
    lo, hi = max(-N, k - N), min(N, k + N)
    return slice(lo + N, hi + N + 1), slice(lo - k + N, hi - k + N + 1)


def _pad_index(N: int, P: int) -> np.ndarray:
    return np.arange(-N, N + 1) % P


def convolve_fft(f: SpectralField, g: SpectralField) -> SpectralField:
    """Same contract as :func:`convolve_direct`, via zero-padded complex FFTs."""
    N = _same_lattice(f, g)
    a, b = _broadcast_pair(f, g)
    P = padded_size(N)
    idx = _pad_index(N, P)
    sel = (slice(None),) + np.ix_(idx, idx, idx)

    def to_grid(c):
        full = np.zeros((c.shape[0], P, P, P), dtype=complex)
        full[sel] = c
        return sfft.ifftn(full, axes=(1, 2, 3), norm="forward")

    prod = to_grid(a) * to_grid(b)
    spec = sfft.fftn(prod, axes=(1, 2, 3), norm="forward")
    return SpectralField(N, spec[sel])


class Transform:
    """Real-field transforms between the lattice and the padded grid.

    Requires Hermitian-symmetric input, which every :class:`SpectralField`
    carries by construction.
    """

    def __init__(self, N: int):
        self.N = N
        self.P = padded_size(N)
        idx = _pad_index(N, self.P)
        self._sel = (slice(None),) + np.ix_(idx, idx, np.arange(N + 1))

    def to_grid(self, coeffs: np.ndarray) -> np.ndarray:
        P = self.P
        half = np.zeros((coeffs.shape[0], P, P, P // 2 + 1), dtype=complex)
        half[self._sel] = coeffs[..., self.N :]
        return sfft.irfftn(half, s=(P, P, P), axes=(1, 2, 3), norm="forward")

    def from_grid(self, values: np.ndarray) -> np.ndarray:
        N = self.N
        spec = sfft.rfftn(values, axes=(1, 2, 3), norm="forward")
        pos = spec[self._sel]
        L = 2 * N + 1
        out = np.empty((values.shape[0], L, L, L), dtype=complex)
        out[..., N:] = pos
        out[..., :N] = np.conj(pos[:, ::-1, ::-1, N:0:-1])
        return out


@functools.lru_cache(maxsize=None)
def transform(N: int) -> Transform:
    return Transform(N)


def _cross_grid(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.stack(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


def multiply(f: SpectralField, g: SpectralField) -> SpectralField:
    """Truncated product of real fields via real transforms."""
    N = _same_lattice(f, g)
    _broadcast_pair(f, g)
    tr = transform(N)
    return SpectralField(N, tr.from_grid(tr.to_grid(f.coeffs) * tr.to_grid(g.coeffs)))


def cross(f: SpectralField, g: SpectralField) -> SpectralField:
    """Truncated mode-space image of the pointwise cross product ``f x g``."""
    N = _same_lattice(f, g)
    if f.ncomp != 3 or g.ncomp != 3:
        raise ValueError("cross product needs two vector fields")
    tr = transform(N)
    return SpectralField(N, tr.from_grid(_cross_grid(tr.to_grid(f.coeffs), tr.to_grid(g.coeffs))))


def dot(f: SpectralField, g: SpectralField) -> SpectralField:
    N = _same_lattice(f, g)
    tr = transform(N)
    prod = (tr.to_grid(f.coeffs) * tr.to_grid(g.coeffs)).sum(axis=0, keepdims=True)
    return SpectralField(N, tr.from_grid(prod))


def div_tensor(v: SpectralField, w: SpectralField) -> SpectralField:
    """``div(v (x) w)``, i.e. component ``i`` is ``sum_j d_j (v_i w_j)``."""
    N = _same_lattice(v, w)
    tr = transform(N)
    gv, gw = tr.to_grid(v.coeffs), tr.to_grid(w.coeffs)
    n = _wavenumbers(N)
    prods = tr.from_grid((gv[:, None] * gw[None, :]).reshape(9, *gv.shape[1:]))
    prods = prods.reshape(3, 3, *prods.shape[1:])
    out = 1j * np.einsum("jabc,ijabc->iabc", n, prods)
    return SpectralField(N, out)


# ---------------------------------------------------------------------------
# Differential operators and projections
# ---------------------------------------------------------------------------


def divergence(u: SpectralField) -> SpectralField:
    n = u.lattice.wavenumbers
    return SpectralField(u.N, 1j * (n * u.coeffs).sum(axis=0, keepdims=True))


def curl(u: SpectralField) -> SpectralField:
    n = u.lattice.wavenumbers
    return SpectralField(u.N, 1j * _cross_grid(n, u.coeffs))


def gradient(p: SpectralField) -> SpectralField:
    if p.ncomp != 1:
        raise ValueError("gradient needs a scalar field")
    return SpectralField(p.N, 1j * p.lattice.wavenumbers * p.coeffs[0])


def laplacian(u: SpectralField) -> SpectralField:
    return SpectralField(u.N, -u.lattice.msq * u.coeffs)


def _longitudinal(c: np.ndarray, N: int) -> np.ndarray:
    # n n^T c / |n|^2, zero at n = 0
    n = _wavenumbers(N)
    return n * ((n * c).sum(axis=0) * _inv_msq(N))


def leray_project(u: SpectralField) -> SpectralField:
    """Divergence-free part ``(I - n n^T/|n|^2) u_hat``; the mean passes through."""
    if u.ncomp != 3:
        raise ValueError("Leray projection needs a vector field")
    return SpectralField(u.N, u.coeffs - _longitudinal(u.coeffs, u.N))


def gradient_part(u: SpectralField) -> SpectralField:
    """Curl-free part ``n n^T/|n|^2 u_hat``, with the mean dropped."""
    if u.ncomp != 3:
        raise ValueError("projection needs a vector field")
    return SpectralField(u.N, _longitudinal(u.coeffs, u.N))


def helmholtz_split(E: SpectralField) -> tuple[SpectralField, SpectralField]:
    """``(E_tilde, E_bar)``: divergence-free part (carrying the mean) and gradient part."""
    return leray_project(E), gradient_part(E)


# ---------------------------------------------------------------------------
# Decay profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayProfile:
    """``rho_s(n) = C1 / (C2 + |n|^(3+s))``."""

    s: float
    C1: float = 1.0
    C2: float = 1.0

    def __post_init__(self):
        if self.C1 <= 0 or self.C2 < 0:
            raise ValueError("need C1 > 0 and C2 >= 0")

    def __call__(self, n) -> float | np.ndarray:
        return rho_eval(self, n)


def rho_eval(profile: DecayProfile, n) -> float | np.ndarray:
    """Profile value at one mode ``n`` (length 3) or an array ``(3, ...)`` of modes."""
    n = np.asarray(n, dtype=float)
    r = np.sqrt((n**2).sum(axis=0))
    with np.errstate(divide="ignore"):
        return profile.C1 / (profile.C2 + r ** (3.0 + profile.s))


def seed_field_from_profile(
    profile: DecayProfile,
    N: int,
    component: int = 0,
    signs: str = "alternating",
    base: SpectralField | None = None,
) -> SpectralField:
    """Real field whose ``component`` has coefficient magnitude exactly ``rho_s(n)``.

    ``signs="alternating"`` uses ``(-1)^(n1+n2+n3)``, ``"positive"`` uses +1; both
    are even in ``n`` so real coefficients stay Hermitian. The other components
    are taken from ``base`` (zero if omitted). With ``C2 = 0`` the profile is
    singular at ``n = 0`` and that coefficient is set to zero.
    """
    n = _wavenumbers(N)
    rho = np.asarray(rho_eval(profile, n), dtype=float)
    if profile.C2 == 0:
        rho[N, N, N] = 0.0
    if signs == "alternating":
        rho = rho * (-1.0) ** (n.sum(axis=0) % 2)
    elif signs != "positive":
        raise ValueError(f"unknown sign pattern {signs!r}")
    out = SpectralField.zeros(N, 3) if base is None else base.copy()
    out.coeffs[component] = rho
    return out


# ---------------------------------------------------------------------------
# Snapshot files
# ---------------------------------------------------------------------------


def write_snapshot(path: str | Path, u: SpectralField, t: float = 0.0) -> None:
    """Write ``WMHD1 <N> <c> <t>\\n`` then little-endian float64 (re, im) pairs.

    Coefficients are laid out C-order over ``(component, n1, n2, n3)`` with each
    ``n_i`` running from ``-N`` to ``N``.
    """
    header = f"{MAGIC} {u.N} {u.ncomp} {float(t)!r}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(u.coeffs, dtype="<c16").tobytes())


def read_snapshot(path: str | Path) -> tuple[SpectralField, float]:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 4 or header[0] != MAGIC:
            raise ValueError(f"{path}: not a {MAGIC} snapshot")
        N, c, t = int(header[1]), int(header[2]), float(header[3])
        L = 2 * N + 1
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.size != c * L**3:
        raise ValueError(f"{path}: expected {c * L**3} coefficients, found {data.size}")
    return SpectralField(N, data.reshape(c, L, L, L).astype(np.complex128)), t
