"""Laplace-Beltrami eigenbasis of the ellipsoid and the associated transforms.

For each zonal wavenumber ``m >= 0`` the latitudinal profiles solve the
self-adjoint Sturm-Liouville problem (written in ``s = sin(theta)``)::

    -d/ds[(1 - s^2)/m(s) dY/ds] + m^2 m(s)/(1 - s^2) Y = Lambda m(s) Y

which is the separated form of ``-Delta Y = Lambda Y`` for the scale factors
``h_phi = cos(theta)``, ``h_theta = m(theta)``. It is discretized by
Rayleigh-Ritz in the orthonormal associated Legendre functions of order
``m``; those are the exact eigenfunctions at ``b = 1`` and carry the correct
``cos(theta)^m`` pole behaviour for any ``b``. The resulting symmetric-definite
generalized eigenproblem is assembled with a fine Gauss rule and solved
densely.

Spectral coefficients are stored in a complex array of shape
``(2 * m_max + 1, l_max + 1)``; row ``r`` holds zonal wavenumber
``m = r - m_max`` and column ``l`` the degree label ``l = |m| + n`` where
``n`` counts latitudinal zeros. Entries with ``l < max(|m|, 1)`` are unused and
kept at zero: the ``l = 0`` mean never enters a coefficient array.

Modes ``Y_l^m(theta, phi) = Y_{l,|m|}(theta) exp(i m phi)`` have unit
``L^2`` norm on the surface, and ``Y_{l,|m|}`` is positive next to the south
pole.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.special

from .geometry import Geometry
from .legendre import alf_table

log = logging.getLogger(__name__)


class BasisError(RuntimeError):
    """Eigenbasis construction failed."""


def _galerkin_padding(b: float) -> int:
    # extra Legendre degrees so the kept eigenvectors converge to ~1e-16;
    # m(s) has branch points at s = +-i b / sqrt(1 - b^2)
    if b >= 1.0:
        return 24
    y = b / np.sqrt(1.0 - b * b)
    rho = y + np.sqrt(y * y + 1.0)
    return int(np.clip(np.ceil(16.0 / np.log10(rho)), 24, 240))


def _solve_order(M: int, l_max: int, b: float):
    """Eigenpairs of the order-``M`` problem; returns (Lambda, V, n_galerkin).

    ``V`` has shape ``(n_galerkin, n_keep)`` and expands the kept profiles in
    ``Pbar_{M + k}^M``; its columns are orthonormal for the mass matrix.
    """
    n_keep = l_max - M + 1 if M > 0 else l_max
    n_gal = (l_max - M + 1) + _galerkin_padding(b)
    n_quad = 2 * (M + n_gal) + 32
    sq, gq = scipy.special.roots_legendre(n_quad)
    msq = np.sqrt(b * b + (1.0 - b * b) * sq * sq)
    one_m_s2 = 1.0 - sq * sq

    P, A = alf_table(M, n_gal, sq)
    stiff = (A * (gq / (one_m_s2 * msq))) @ A.T
    if M:
        stiff += M * M * (P * (gq * msq / one_m_s2)) @ P.T
    mass = (P * (gq * msq)) @ P.T
    try:
        lam, V = scipy.linalg.eigh(stiff, mass)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise BasisError(f"eigen-solver failed for zonal wavenumber m={M}: {exc}") from exc

    if M == 0:
        if abs(lam[0]) > 1e-8 * lam[1]:
            raise BasisError(f"m=0: lowest eigenvalue {lam[0]:.3e} is not the constant mode")
        lam, V = lam[1 : n_keep + 1], V[:, 1 : n_keep + 1]
    else:
        lam, V = lam[:n_keep], V[:, :n_keep]
    if not np.all(np.diff(lam) > 0) or lam[0] <= 0:
        raise BasisError(f"m={M}: eigenvalue table is not positive and strictly increasing")

    # sign: positive approaching the south pole
    R, _ = alf_table(M, n_gal, [-1.0], reduced=True)
    sgn = np.sign(R[:, 0] @ V)
    sgn[sgn == 0] = 1.0
    V = V * sgn / np.sqrt(2.0 * np.pi)
    return lam, V, n_gal


def _rmatmul(c, T):
    # complex @ real without promoting the (large) real table to complex
    if np.iscomplexobj(c):
        return np.matmul(c.real, T) + 1j * np.matmul(c.imag, T)
    return np.matmul(c, T)


def _lmatmul(T, c):
    if np.iscomplexobj(c):
        return np.matmul(T, c.real) + 1j * np.matmul(T, c.imag)
    return np.matmul(T, c)


@dataclass(frozen=True, eq=False)
class Basis:
    geometry: Geometry
    l_max: int
    m_max: int
    eigenvalues: np.ndarray = field(repr=False)  # (m_max+1, l_max+1), 0 where unused
    modes: np.ndarray = field(repr=False)  # (m_max+1, l_max+1, n_theta)
    dmodes: np.ndarray = field(repr=False)  # d/dtheta of modes
    galerkin: tuple | None = field(default=None, repr=False)  # per |m|: V matrix

    def __post_init__(self):
        M = self.m_max
        ms = np.arange(-M, M + 1)
        rows = np.abs(ms)
        mask = self.eigenvalues > 0
        lam = self.eigenvalues[rows]
        inv = np.zeros_like(lam)
        inv[mask[rows]] = 1.0 / lam[mask[rows]]
        set_ = object.__setattr__
        set_(self, "ms", ms)
        set_(self, "mask_half", mask)
        set_(self, "mask", mask[rows])
        set_(self, "lam_full", lam)
        set_(self, "inv_lam_full", inv)
        set_(self, "lam_half", self.eigenvalues)
        set_(self, "inv_lam_half", inv[M:])
        set_(self, "_modes_w", self.modes * self.geometry.quad_weights)
        set_(self, "_modes_signed", self.modes[rows])
        set_(self, "_dmodes_signed", self.dmodes[rows])
        set_(self, "_modes_w_signed", self.modes[rows] * self.geometry.quad_weights)
        set_(self, "_dmodes_w", self.dmodes * self.geometry.quad_weights)
        set_(self, "_dmodes_w_signed", self.dmodes[rows] * self.geometry.quad_weights)

    @property
    def shape(self) -> tuple[int, int]:
        return (2 * self.m_max + 1, self.l_max + 1)

    @property
    def n_modes(self) -> int:
        return int(self.mask.sum())

    def labels(self):
        """``(l, m)`` pairs of the stored modes with ``m >= 0``, ordered by m then l."""
        return [(l, m) for m in range(self.m_max + 1) for l in range(self.l_max + 1) if self.mask_half[m, l]]

    def eigenvalue(self, l: int, m: int) -> float:
        if not self.mask_half[abs(m), l]:
            raise KeyError(f"mode (l={l}, m={m}) is not stored")
        return float(self.eigenvalues[abs(m), l])

    # -- low-level transforms; ``c`` has either all 2M+1 rows ("full") or the
    # M+1 rows m >= 0 ("half", real fields) --

    def _tables(self, c, deriv: bool, weighted: bool = False):
        full = c.shape[-2] == 2 * self.m_max + 1
        if weighted and deriv:
            return self._dmodes_w_signed if full else self._dmodes_w
        if weighted:
            return self._modes_w_signed if full else self._modes_w
        if deriv:
            return self._dmodes_signed if full else self.dmodes
        return self._modes_signed if full else self.modes

    def meridional(self, c, deriv: bool = False):
        """Fourier amplitudes on latitude nodes: ``(..., rows, n_theta)``."""
        T = self._tables(c, deriv)
        return _rmatmul(c[..., :, None, :], T)[..., 0, :]

    def to_grid_half(self, G):
        """Real grid field(s) from m >= 0 Fourier amplitudes ``(..., M+1, n_theta)``."""
        nphi = self.geometry.n_phi
        padded = np.zeros(G.shape[:-2] + (self.geometry.n_theta, nphi // 2 + 1), dtype=complex)
        padded[..., : self.m_max + 1] = np.swapaxes(G, -1, -2)
        return np.fft.irfft(padded, n=nphi, axis=-1) * nphi

    def to_grid_full(self, G):
        nphi = self.geometry.n_phi
        padded = np.zeros(G.shape[:-2] + (self.geometry.n_theta, nphi), dtype=complex)
        padded[..., self.ms % nphi] = np.swapaxes(G, -1, -2)
        return np.fft.ifft(padded, axis=-1) * nphi

    def fourier_half(self, f):
        """Zonal Fourier coefficients ``(1/2pi) int f e^{-im phi} dphi`` for m = 0..M."""
        F = np.fft.rfft(f, axis=-1)[..., : self.m_max + 1] / self.geometry.n_phi
        return np.swapaxes(F, -1, -2)

    def fourier_full(self, f):
        F = np.fft.fft(f, axis=-1)[..., self.ms % self.geometry.n_phi] / self.geometry.n_phi
        return np.swapaxes(F, -1, -2)

    def project(self, F, deriv: bool = False):
        """Coefficients from Fourier amplitudes ``(..., rows, n_theta)``.

        With ``deriv=True`` the amplitudes are tested against ``dY/dtheta``
        instead of ``Y`` (used by the weak-form curl and divergence).
        """
        T = self._tables(F, deriv, weighted=True)
        return 2.0 * np.pi * _lmatmul(T, F[..., :, :, None])[..., 0]

    @property
    def m_half(self) -> np.ndarray:
        return self.ms[self.m_max :]

    def synth_half(self, c, deriv: bool = False):
        return self.to_grid_half(self.meridional(c, deriv))

    def analyze_half(self, f):
        return self.project(self.fourier_half(f))

    def full_from_half(self, h):
        M = self.m_max
        out = np.empty(h.shape[:-2] + self.shape, dtype=complex)
        out[..., M:, :] = h
        out[..., :M, :] = np.conj(h[..., :0:-1, :])
        return out

    # -- arbitrary points --

    def profiles(self, theta):
        """Mode profiles and their theta-derivatives at arbitrary latitudes.

        Returns arrays of shape ``(m_max+1, l_max+1, len(theta))``.
        """
        if self.galerkin is None:
            raise BasisError("basis was loaded without Galerkin data; off-grid evaluation unavailable")
        theta = np.atleast_1d(np.asarray(theta, float))
        s, c = np.sin(theta), np.cos(theta)
        Y = np.zeros((self.m_max + 1, self.l_max + 1, theta.size))
        dY = np.zeros_like(Y)
        for M, V in enumerate(self.galerkin):
            P, A = alf_table(M, V.shape[0], s)
            cols = np.flatnonzero(self.mask_half[M])
            Y[M, cols] = V.T @ P
            dY[M, cols] = (V.T @ A) / c
        return Y, dY


def build_basis(geometry: Geometry, l_max: int) -> Basis:
    """Solve the per-m eigenproblems and tabulate the profiles on ``geometry``."""
    if l_max < 2:
        raise ValueError(f"l_max must be >= 2, got {l_max}")
    if geometry.n_theta < 2 * l_max:
        raise ValueError(f"n_theta={geometry.n_theta} is below the resolution rule 2*l_max={2 * l_max}")
    if geometry.n_phi < 2 * l_max + 2:
        raise ValueError(f"n_phi={geometry.n_phi} cannot resolve zonal wavenumber {l_max}")
    L = M = int(l_max)
    b = geometry.b
    s, c = geometry.s_nodes, geometry.cos_vals

    eig = np.zeros((M + 1, L + 1))
    Y = np.zeros((M + 1, L + 1, geometry.n_theta))
    dY = np.zeros_like(Y)
    gal = []
    for m in range(M + 1):
        lam, V, n_gal = _solve_order(m, L, b)
        l0 = max(m, 1)
        eig[m, l0:] = lam
        P, A = alf_table(m, n_gal, s)
        Y[m, l0:] = V.T @ P
        dY[m, l0:] = (V.T @ A) / c
        gal.append(V)
    log.debug("basis b=%g l_max=%d: Lambda range [%.6g, %.6g]", b, L, eig[eig > 0].min(), eig.max())
    return Basis(geometry, L, M, eig, Y, dY, tuple(gal))


@dataclass(frozen=True, eq=False)
class GridScalar:
    values: np.ndarray
    geometry: Geometry

    def __post_init__(self):
        if self.values.shape != self.geometry.shape:
            raise ValueError(f"grid field shape {self.values.shape} != geometry shape {self.geometry.shape}")


@dataclass(eq=False)
class SpectralScalar:
    """Zero-mean scalar field in the eigenbasis.

    ``mean`` carries the excluded ``l = 0`` part (surface average) when the
    field came from a grid analysis; spectral operators ignore it.
    """

    coeffs: np.ndarray
    basis: Basis
    mean: complex = 0.0

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != self.basis.shape:
            raise ValueError(f"coefficient shape {self.coeffs.shape} != basis shape {self.basis.shape}")

    @classmethod
    def zeros(cls, basis: Basis) -> "SpectralScalar":
        return cls(np.zeros(basis.shape, complex), basis)

    @classmethod
    def from_half(cls, half, basis: Basis) -> "SpectralScalar":
        return cls(basis.full_from_half(half), basis)

    @property
    def half(self) -> np.ndarray:
        return self.coeffs[self.basis.m_max :]

    @property
    def is_real(self) -> bool:
        c = self.coeffs
        return bool(np.array_equal(c, np.conj(c[::-1])))

    def enforce_reality(self) -> "SpectralScalar":
        c = self.coeffs
        return SpectralScalar(0.5 * (c + np.conj(c[::-1])), self.basis, np.real(self.mean))

    def __getitem__(self, lm):
        l, m = lm
        return self.coeffs[m + self.basis.m_max, l]

    def with_coeffs(self, coeffs) -> "SpectralScalar":
        return SpectralScalar(coeffs, self.basis)

    def __add__(self, other):
        return SpectralScalar(self.coeffs + other.coeffs, self.basis, self.mean + other.mean)

    def __sub__(self, other):
        return SpectralScalar(self.coeffs - other.coeffs, self.basis, self.mean - other.mean)

    def __neg__(self):
        return SpectralScalar(-self.coeffs, self.basis, -self.mean)

    def __mul__(self, a):
        return SpectralScalar(self.coeffs * a, self.basis, self.mean * a)

    __rmul__ = __mul__

    def __truediv__(self, a):
        return SpectralScalar(self.coeffs / a, self.basis, self.mean / a)

    def zonal(self) -> "SpectralScalar":
        """The m = 0 part."""
        c = np.zeros_like(self.coeffs)
        c[self.basis.m_max] = self.coeffs[self.basis.m_max]
        return SpectralScalar(c, self.basis)

    def to_basis(self, other: Basis) -> "SpectralScalar":
        """Copy shared ``(l, m)`` coefficients into another basis (same ``b``)."""
        if other.geometry.b != self.basis.geometry.b:
            raise ValueError("bases describe different ellipsoids")
        out = np.zeros(other.shape, complex)
        M = min(self.basis.m_max, other.m_max)
        L = min(self.basis.l_max, other.l_max)
        src = self.coeffs[self.basis.m_max - M : self.basis.m_max + M + 1, : L + 1]
        out[other.m_max - M : other.m_max + M + 1, : L + 1] = src
        if np.any(self.coeffs[np.abs(self.basis.ms) > M]) or np.any(self.coeffs[:, L + 1 :]):
            log.debug("to_basis: truncating modes beyond the target band limit")
        return SpectralScalar(out, other)


def _as_values(field, basis: Basis) -> np.ndarray:
    values = field.values if isinstance(field, GridScalar) else np.asarray(field)
    if values.shape != basis.geometry.shape:
        raise ValueError(f"grid field shape {values.shape} != geometry shape {basis.geometry.shape}")
    return values


def analysis(field, basis: Basis) -> SpectralScalar:
    """Coefficients ``<f, Y_l^m>`` by Gauss x trapezoid quadrature.

    Accepts a :class:`GridScalar` or a raw ``(n_theta, n_phi)`` array. The
    surface average goes to ``.mean``.
    """
    f = _as_values(field, basis)
    geo = basis.geometry
    mean = geo.integrate(f) / geo.area()
    if np.iscomplexobj(f):
        coeffs = basis.project(basis.fourier_full(f))
    else:
        coeffs = basis.full_from_half(basis.analyze_half(f))
    return SpectralScalar(coeffs, basis, mean)


def synthesis(coeffs: SpectralScalar) -> GridScalar:
    """Pointwise sum of the expansion (plus the stored mean).

    Real output whenever the coefficients are conjugate-symmetric.
    """
    basis = coeffs.basis
    if coeffs.is_real:
        values = basis.synth_half(coeffs.half) + np.real(coeffs.mean)
    else:
        values = basis.to_grid_full(basis.meridional(coeffs.coeffs)) + coeffs.mean
    return GridScalar(values, basis.geometry)


def apply_laplacian(psi: SpectralScalar) -> SpectralScalar:
    return SpectralScalar(-psi.basis.lam_full * psi.coeffs, psi.basis)


def invert_laplacian(zeta: SpectralScalar) -> SpectralScalar:
    return SpectralScalar(-zeta.basis.inv_lam_full * zeta.coeffs, zeta.basis)


def evaluate(coeffs: SpectralScalar, theta, phi) -> np.ndarray:
    """Evaluate the expansion at scattered points (no mean)."""
    basis = coeffs.basis
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    Y, _ = basis.profiles(theta.ravel())
    Ys = Y[np.abs(basis.ms)]  # (2M+1, L+1, npts)
    G = np.einsum("ml,mlp->mp", coeffs.coeffs, Ys)
    out = np.einsum("mp,mp->p", G, np.exp(1j * np.outer(basis.ms, phi.ravel())))
    out = out.reshape(theta.shape)
    return out.real if coeffs.is_real else out
