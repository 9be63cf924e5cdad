"""Coriolis operator, projection onto zonal flows and operator-level checks.

For a tangent field ``u`` the rotation operator is

    rot(u) = perp_grad( Laplacian^{-1} curl(F u_perp) ),   F = -2 sin(theta) / m

For divergence-free ``u = perp_grad(psi)`` this reduces to
``curl(F u_perp) = mu(theta) d_phi psi`` with ``mu = 2 b^2 / m^4``, so the
operator maps stream functions to stream functions. On the sphere ``mu = 2``
and mode ``(l, m)`` is scaled by ``-2 i m / Lambda``.

The projection onto the kernel (zonal flows) is the zonal mean of the
eastward component. The area element is independent of longitude, so this is
the ``L^2``-orthogonal projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import Basis, SpectralScalar, analysis, apply_laplacian
from .calculus import (
    VelocityField,
    _grid_derivatives,
    advect,
    curl,
    hk_norm_velocity,
    jacobian,
    perp_grad,
)

_TINY = 1e-300


def stream_multiplier(theta, b: float):
    """``mu = 2 b^2 / m^4``, the factor in ``curl(F u_perp) = mu d_phi psi``."""
    m2 = np.sin(theta) ** 2 + b * b * np.cos(theta) ** 2
    return 2.0 * b * b / (m2 * m2)


def zonal_part(psi: SpectralScalar) -> SpectralScalar:
    return psi.zonal()


def nonzonal_part(psi: SpectralScalar) -> SpectralScalar:
    return psi - psi.zonal()


@dataclass(frozen=True, eq=False)
class RotationOps:
    basis: Basis
    mu: np.ndarray = field(repr=False)  # latitude profile on the grid nodes

    @property
    def geometry(self):
        return self.basis.geometry

    # -- the operator --

    def l_apply(self, u: VelocityField) -> VelocityField:
        """Rotation operator on a general tangent field (definitional route)."""
        geo = self.geometry
        w = u.perp().scaled(geo.F_vals)
        vort = curl(w, self.basis)
        chi = SpectralScalar(-self.basis.inv_lam_full * vort.coeffs, self.basis)
        return perp_grad(chi)

    def l_apply_streamform(self, psi: SpectralScalar) -> SpectralScalar:
        """Stream function ``chi`` of ``rot(perp_grad(psi))``: ``Laplacian^{-1}(mu d_phi psi)``."""
        basis = self.basis
        dphi, _ = _grid_derivatives(psi)
        forcing = analysis(self.mu[:, None] * dphi, basis)
        return SpectralScalar(-basis.inv_lam_full * forcing.coeffs, basis)

    def gram(self, m: int) -> np.ndarray:
        """``<mu Y_l, Y_l'>`` for the stored profiles of zonal wavenumber ``m``.

        In coefficients ``chi_m = -(i m / Lambda) * gram(m) @ psi_m``.
        """
        basis = self.basis
        m = abs(m)
        cols = np.flatnonzero(basis.mask_half[m])
        Y = basis.modes[m, cols]
        w = 2.0 * np.pi * basis.geometry.quad_weights * self.mu
        return (Y * w) @ Y.T

    def linear_frequencies(self) -> np.ndarray:
        """Per-``m`` largest frequency of the linearized vorticity dynamics at unit rotation.

        The linear part ``d zeta/dt = i m G Lambda^{-1} zeta`` (``G`` from
        :meth:`gram`) is similar to the symmetric ``m Lambda^{-1/2} G
        Lambda^{-1/2}``; its spectral radius is returned for ``m = 0..m_max``.
        """
        basis = self.basis
        out = np.zeros(basis.m_max + 1)
        for m in range(1, basis.m_max + 1):
            lam = basis.eigenvalues[m, basis.mask_half[m]]
            s = 1.0 / np.sqrt(lam)
            A = s[:, None] * self.gram(m) * s[None, :]
            out[m] = m * np.linalg.eigvalsh(A)[-1]
        return out

    # -- projection onto the kernel --

    def null_projection(self, u: VelocityField) -> VelocityField:
        """Zonal mean of ``u_phi`` as an eastward field; ``u_theta`` part dropped."""
        mean_phi = np.mean(u.u_phi, axis=1, keepdims=True)
        zonal = np.broadcast_to(mean_phi, u.u_phi.shape).copy()
        return VelocityField(zonal, np.zeros_like(zonal), u.geometry)

    # -- diagnostics --

    def key_estimate_gap(self, psi: SpectralScalar, k: int) -> tuple[float, float]:
        """``(||u - P u||_{H^k}, ||rot(u)||_{H^{k+2}})`` for ``u = perp_grad(psi)``."""
        lhs = hk_norm_velocity(nonzonal_part(psi), k)
        rhs = hk_norm_velocity(self.l_apply_streamform(psi), k + 2)
        return lhs, rhs

    def commutation_residual(self, psi: SpectralScalar, j: int) -> float:
        """Normalized ``|<L^j u, L^j rot(u)>|`` with ``L^j u := perp_grad(Laplacian^j psi)``.

        Zero for ``j = 0`` (the operator is skew); for ``j >= 1`` zero on the
        sphere and a measured defect otherwise.
        """
        if j < 0:
            raise ValueError(f"j must be >= 0, got {j}")
        lam = self.basis.lam_full
        chi = self.l_apply_streamform(psi)
        a = lam**j * psi.coeffs
        c = lam**j * chi.coeffs
        inner = np.sum(lam * a * np.conj(c))
        na = np.sqrt(np.sum(lam * np.abs(a) ** 2))
        nc = np.sqrt(np.sum(lam * np.abs(c) ** 2))
        return float(abs(inner) / (na * nc + _TINY))

    def advection_commutator_residual(self, psi: SpectralScalar, j: int, use_advect: bool = True):
        """``(num, den)`` for the commutator of ``Laplacian^j`` with advection.

        ``num = ||Laplacian^j curl(grad_u u) - u . grad(Laplacian^j curl u)||``
        and ``den = ||u||_{H^(2j+1)}^2``. The first term goes through the
        Cartesian :func:`advect` route (or the Jacobian when
        ``use_advect=False``), the second through :func:`jacobian`.
        """
        if j < 1:
            raise ValueError(f"j must be >= 1, got {j}")
        basis = self.basis
        zeta = apply_laplacian(psi)
        if use_advect:
            first = curl(advect(perp_grad(psi), basis), basis)
        else:
            first = jacobian(psi, zeta)
        power = (-basis.lam_full) ** j
        zeta_j = SpectralScalar(power * zeta.coeffs, basis)
        second = jacobian(psi, zeta_j)
        diff = power * first.coeffs - second.coeffs
        num = float(np.sqrt(np.sum(np.abs(diff) ** 2)))
        den = hk_norm_velocity(psi, 2 * j + 1) ** 2
        return num, den


def build_rotation(basis: Basis) -> RotationOps:
    geo = basis.geometry
    return RotationOps(basis, stream_multiplier(geo.theta_nodes, geo.b))
