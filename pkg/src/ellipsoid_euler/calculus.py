"""Vector calculus on the ellipsoid in physical components ``(u_phi, u_theta)``.

Orientation convention: the perpendicular gradient is

    perp_grad(psi) = (d_theta psi / m, -d_phi psi / cos(theta))

so that ``curl(perp_grad(psi)) = Laplacian(psi)``. The quarter turn acting on
a vector is ``perp(u) = (u_theta, -u_phi)``, and ``div(u) = curl(perp(u))``.

Curl and divergence are computed in weak form: the coefficient against
``Y_l^m`` is obtained after one integration by parts, so only grid values of
``u`` (never its derivatives) enter. On the sphere the integrands are
polynomials and the Gauss rule makes these projections exact for band-limited
input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import Basis, GridScalar, SpectralScalar, analysis
from .geometry import Geometry, cartesian_to_components, components_to_cartesian


class ResolutionError(ValueError):
    """Grid too coarse for an alias-free quadratic product."""


@dataclass(eq=False)
class VelocityField:
    """Tangent vector field sampled on the grid as unit-frame components."""

    u_phi: np.ndarray
    u_theta: np.ndarray
    geometry: Geometry

    def __post_init__(self):
        self.u_phi = _values(self.u_phi)
        self.u_theta = _values(self.u_theta)
        shape = self.geometry.shape
        if self.u_phi.shape != shape or self.u_theta.shape != shape:
            raise ValueError(f"velocity components must have shape {shape}")

    @classmethod
    def zeros(cls, geometry: Geometry) -> "VelocityField":
        return cls(np.zeros(geometry.shape), np.zeros(geometry.shape), geometry)

    def __add__(self, other):
        return VelocityField(self.u_phi + other.u_phi, self.u_theta + other.u_theta, self.geometry)

    def __sub__(self, other):
        return VelocityField(self.u_phi - other.u_phi, self.u_theta - other.u_theta, self.geometry)

    def __mul__(self, a):
        return VelocityField(a * self.u_phi, a * self.u_theta, self.geometry)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def perp(self) -> "VelocityField":
        """Quarter turn ``(u_phi, u_theta) -> (u_theta, -u_phi)``."""
        return VelocityField(self.u_theta, -self.u_phi, self.geometry)

    def scaled(self, profile) -> "VelocityField":
        """Multiply both components by a grid field or a latitude profile."""
        p = np.asarray(profile)
        if p.ndim == 1:
            p = p[:, None]
        return VelocityField(p * self.u_phi, p * self.u_theta, self.geometry)

    def max_speed(self) -> float:
        return float(np.sqrt(np.max(np.abs(self.u_phi) ** 2 + np.abs(self.u_theta) ** 2)))


def _values(x):
    return np.asarray(x.values if isinstance(x, GridScalar) else x)


# -- grid derivatives of spectral scalars --


def _grid_derivatives(psi: SpectralScalar, values: bool = False):
    """``(d_phi psi, d_theta psi[, psi])`` on the grid; real when ``psi`` is real."""
    basis = psi.basis
    if psi.is_real:
        h = psi.half
        im = 1j * basis.m_half[:, None]
        out = [basis.synth_half(im * h), basis.synth_half(h, deriv=True)]
        if values:
            out.append(basis.synth_half(h) + np.real(psi.mean))
    else:
        c = psi.coeffs
        im = 1j * basis.ms[:, None]
        out = [
            basis.to_grid_full(basis.meridional(im * c)),
            basis.to_grid_full(basis.meridional(c, deriv=True)),
        ]
        if values:
            out.append(basis.to_grid_full(basis.meridional(c)) + psi.mean)
    return tuple(out)


def grad(psi: SpectralScalar) -> VelocityField:
    """Surface gradient ``(d_phi psi / cos(theta), d_theta psi / m)``."""
    geo = psi.basis.geometry
    dphi, dtheta = _grid_derivatives(psi)
    return VelocityField(dphi / geo.cos_vals[:, None], dtheta / geo.m_vals[:, None], geo)


def perp_grad(psi: SpectralScalar) -> VelocityField:
    """Rotated gradient ``(d_theta psi / m, -d_phi psi / cos(theta))``."""
    geo = psi.basis.geometry
    dphi, dtheta = _grid_derivatives(psi)
    return VelocityField(dtheta / geo.m_vals[:, None], -dphi / geo.cos_vals[:, None], geo)


def _weak(basis: Basis, along_m, along_d, real: bool):
    # coefficients of  <D, Y> = int [ i m * along_m * conj(Y) / cos - along_d * conj(dY/dtheta) / m ] dA
    geo = basis.geometry
    a = along_m / geo.cos_vals[:, None]
    d = along_d / geo.m_vals[:, None]
    if real:
        im = 1j * basis.m_half[:, None]
        h = im * basis.project(basis.fourier_half(a)) - basis.project(basis.fourier_half(d), deriv=True)
        return basis.full_from_half(h)
    im = 1j * basis.ms[:, None]
    return im * basis.project(basis.fourier_full(a)) - basis.project(basis.fourier_full(d), deriv=True)


def _is_real_field(u: VelocityField) -> bool:
    return not (np.iscomplexobj(u.u_phi) or np.iscomplexobj(u.u_theta))


def curl(u: VelocityField, basis: Basis) -> SpectralScalar:
    """Scalar curl ``(1/(cos m)) [d_theta(cos u_phi) - m d_phi u_theta]`` in coefficients.

    The total circulation of a tangent field on a closed surface is zero, so
    ``mean`` is always 0.
    """
    c = _weak(basis, -u.u_theta, u.u_phi, _is_real_field(u))
    return SpectralScalar(c, basis)


def div(u: VelocityField, basis: Basis) -> SpectralScalar:
    """Divergence ``(1/(cos m)) [m d_phi u_phi + d_theta(cos u_theta)]`` in coefficients."""
    c = _weak(basis, u.u_phi, u.u_theta, _is_real_field(u))
    return SpectralScalar(c, basis)


def hodge_decompose(u: VelocityField, basis: Basis) -> tuple[SpectralScalar, SpectralScalar]:
    """Potential and stream function with ``u = grad(phi) + perp_grad(psi)``.

    The ellipsoid has genus zero, so there is no harmonic remainder.
    """
    inv = -basis.inv_lam_full
    phi = SpectralScalar(inv * div(u, basis).coeffs, basis)
    psi = SpectralScalar(inv * curl(u, basis).coeffs, basis)
    return phi, psi


def check_product_resolution(basis: Basis) -> None:
    """Raise unless quadratic products of band-limited fields are alias-free."""
    geo = basis.geometry
    if geo.n_phi < 3 * basis.m_max + 1:
        raise ResolutionError(
            f"n_phi={geo.n_phi} aliases quadratic products at m_max={basis.m_max}; need >= {3 * basis.m_max + 1}"
        )
    if 2 * geo.n_theta < 3 * basis.l_max:
        raise ResolutionError(f"n_theta={geo.n_theta} is below 1.5*l_max for quadratic products")


def jacobian(psi: SpectralScalar, q: SpectralScalar) -> SpectralScalar:
    """Advection ``u . grad(q)`` for ``u = perp_grad(psi)``, truncated to the basis.

    ``(d_theta psi d_phi q - d_phi psi d_theta q) / (cos(theta) m)``, formed on
    the grid and analyzed back; ``mean`` holds its surface average (zero up to
    quadrature error).
    """
    basis = psi.basis
    check_product_resolution(basis)
    geo = basis.geometry
    p_phi, p_theta = _grid_derivatives(psi)
    q_phi, q_theta = _grid_derivatives(q)
    J = (p_theta * q_phi - p_phi * q_theta) / (geo.cos_vals * geo.m_vals)[:, None]
    return analysis(J, basis)


def advect(u: VelocityField, basis: Basis) -> VelocityField:
    """Covariant derivative of ``u`` along itself via ambient Cartesian components.

    Each Cartesian component of ``u`` is expanded in the basis (mean
    included), differentiated spectrally along ``u`` and the result projected
    back onto the tangent plane. Accuracy is limited by how well the basis
    resolves the Cartesian components; this is a cross-check, not a solver
    path.
    """
    geo = basis.geometry
    theta, phi = geo.mesh()
    V = components_to_cartesian(u.u_phi, u.u_theta, theta, phi, geo.b)
    out = np.empty(V.shape, dtype=np.result_type(V, float))
    for i in range(3):
        comp = analysis(np.ascontiguousarray(V[..., i]), basis)
        d_phi, d_theta = _grid_derivatives(comp)
        out[..., i] = u.u_phi * d_phi / geo.cos_vals[:, None] + u.u_theta * d_theta / geo.m_vals[:, None]
    a_phi, a_theta = cartesian_to_components(out, theta, phi, geo.b)
    return VelocityField(a_phi, a_theta, geo)


# -- inner products and norms --


def l2_inner(a, b) -> complex | float:
    """``L^2`` inner product ``int a conj(b) dA``.

    Spectral scalars use the orthonormal expansion (plus the mean part);
    grid scalars and velocity fields use the surface quadrature.
    """
    if isinstance(a, SpectralScalar) and isinstance(b, SpectralScalar):
        val = np.vdot(b.coeffs, a.coeffs) + a.mean * np.conj(b.mean) * a.basis.geometry.area()
    elif isinstance(a, VelocityField) and isinstance(b, VelocityField):
        val = a.geometry.integrate(a.u_phi * np.conj(b.u_phi) + a.u_theta * np.conj(b.u_theta))
    elif isinstance(a, GridScalar) and isinstance(b, GridScalar):
        val = a.geometry.integrate(a.values * np.conj(b.values))
    else:
        raise TypeError(f"cannot pair {type(a).__name__} with {type(b).__name__}")
    if np.iscomplexobj(val) and val.imag == 0.0:
        return float(val.real)
    return val


def _check_k(k) -> int:
    if int(k) != k or k < 0:
        raise ValueError(f"Sobolev order k must be a non-negative integer, got {k}")
    return int(k)


def hk_norm_scalar(psi: SpectralScalar, k: int) -> float:
    """``sqrt(sum Lambda^k |psi_l^m|^2)`` over all stored modes."""
    k = _check_k(k)
    return float(np.sqrt(np.sum(psi.basis.lam_full**k * np.abs(psi.coeffs) ** 2)))


def hk_norm_velocity(psi: SpectralScalar, k: int) -> float:
    """``H^k`` norm of ``perp_grad(psi)``: ``sqrt(sum Lambda^(k+1) |psi_l^m|^2)``."""
    k = _check_k(k)
    return float(np.sqrt(np.sum(psi.basis.lam_full ** (k + 1) * np.abs(psi.coeffs) ** 2)))
