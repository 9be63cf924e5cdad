"""Biaxial ellipsoid geometry: metric factors, Coriolis profile, grid and frames.

The surface is parameterized by longitude ``phi`` and latitude ``theta``::

    (x, y, z) = (cos(theta) cos(phi), cos(theta) sin(phi), b sin(theta))

with scale factors ``h_phi = cos(theta)`` and ``h_theta = m(theta)`` where
``m(theta) = sqrt(sin^2 theta + b^2 cos^2 theta)``.

Latitude nodes are Gauss-Legendre nodes in ``s = sin(theta)``. Since
``dA = m(theta(s)) ds dphi`` the area weights are the Gauss weights times
``m``; at ``b = 1`` this is the usual Gaussian grid and integrates
polynomials in ``s`` of degree ``2 * n_theta - 1`` exactly. For ``b < 1``
the weight ``m(s)`` is analytic on ``[-1, 1]`` and the rule converges
geometrically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_legendre

MIN_NODES = 8


def metric_m(theta, b: float):
    """Scale factor ``m = sqrt(sin^2 theta + b^2 cos^2 theta)``."""
    theta = np.asarray(theta, dtype=float)
    return np.sqrt(np.sin(theta) ** 2 + b**2 * np.cos(theta) ** 2)


def coriolis_profile(theta, b: float):
    """Coriolis profile ``F = -2 sin(theta) / m(theta)``."""
    return -2.0 * np.sin(theta) / metric_m(theta, b)


def coriolis_gradient(theta, b: float):
    """``dF/dtheta = -2 b^2 cos(theta) / m^3``."""
    return -2.0 * b**2 * np.cos(theta) / metric_m(theta, b) ** 3


def surface_area(b: float) -> float:
    """Closed-form area of the oblate spheroid with semi-axes (1, 1, b)."""
    if b == 1.0:
        return 4.0 * np.pi
    e = np.sqrt(1.0 - b * b)
    return 2.0 * np.pi * (1.0 + b * b * np.arctanh(e) / e)


@dataclass(frozen=True, eq=False)
class Geometry:
    """Ellipsoid of semi-axes (1, 1, b) sampled on a Gauss x uniform grid.

    Arrays are indexed ``[j]`` over latitude and ``[i]`` over longitude; grid
    fields have shape ``(n_theta, n_phi)``.
    """

    b: float
    n_theta: int
    n_phi: int
    s_nodes: np.ndarray = field(repr=False)
    gauss_weights: np.ndarray = field(repr=False)
    theta_nodes: np.ndarray = field(repr=False)
    phi_nodes: np.ndarray = field(repr=False)
    quad_weights: np.ndarray = field(repr=False)
    m_vals: np.ndarray = field(repr=False)
    cos_vals: np.ndarray = field(repr=False)
    F_vals: np.ndarray = field(repr=False)
    dF_vals: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_theta, self.n_phi)

    @property
    def dphi(self) -> float:
        return 2.0 * np.pi / self.n_phi

    def integrate(self, values: np.ndarray) -> float | complex:
        """Quadrature of a grid field over the surface."""
        values = np.asarray(values)
        return self.dphi * np.sum(self.quad_weights[:, None] * values)

    def area(self) -> float:
        return float(2.0 * np.pi * self.quad_weights.sum())

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Broadcastable ``(theta, phi)`` arrays of grid shape."""
        return np.meshgrid(self.theta_nodes, self.phi_nodes, indexing="ij")


def build_geometry(b: float, n_theta: int, n_phi: int) -> Geometry:
    if not (0.0 < b <= 1.0):
        raise ValueError(f"flattening parameter b must lie in (0, 1], got {b}")
    if int(n_theta) != n_theta or n_theta < MIN_NODES:
        raise ValueError(f"n_theta must be an integer >= {MIN_NODES}, got {n_theta}")
    if int(n_phi) != n_phi or n_phi < MIN_NODES or n_phi % 2:
        raise ValueError(f"n_phi must be an even integer >= {MIN_NODES}, got {n_phi}")
    n_theta, n_phi = int(n_theta), int(n_phi)
    b = float(b)

    s, g = roots_legendre(n_theta)
    theta = np.arcsin(s)
    m = metric_m(theta, b)
    return Geometry(
        b=b,
        n_theta=n_theta,
        n_phi=n_phi,
        s_nodes=s,
        gauss_weights=g,
        theta_nodes=theta,
        phi_nodes=2.0 * np.pi * np.arange(n_phi) / n_phi,
        quad_weights=g * m,
        m_vals=m,
        cos_vals=np.sqrt(1.0 - s * s),
        F_vals=coriolis_profile(theta, b),
        dF_vals=coriolis_gradient(theta, b),
    )


# Embedding and frames. Physical components (v_phi, v_theta) are taken along
# the unit vectors e_phi/|e_phi| and e_theta/|e_theta|; (e_phi, e_theta, n) is
# right-handed (east, north, outward).


def embed(theta, phi, b: float):
    """Point on the surface plus the raw frame ``e_phi``, ``e_theta`` and unit normal.

    Returns ``(point, e_phi, e_theta, normal)``; each has a trailing axis of
    length 3 and broadcasts over ``theta`` and ``phi``.
    """
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    point = np.stack([ct * cp, ct * sp, b * st], axis=-1)
    e_phi = np.stack([-sp, cp, np.zeros_like(ct)], axis=-1)
    e_theta = np.stack([-st * cp, -st * sp, b * ct], axis=-1)
    grad = np.stack([ct * cp, ct * sp, st / b], axis=-1)
    normal = grad / np.linalg.norm(grad, axis=-1, keepdims=True)
    return point, e_phi, e_theta, normal


def unit_frame(theta, phi, b: float):
    """Unit tangent vectors ``(e_phi_hat, e_theta_hat)``."""
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    m = metric_m(theta, b)
    e_phi = np.stack([-sp, cp, np.zeros_like(ct)], axis=-1)
    e_theta = np.stack([-st * cp / m, -st * sp / m, b * ct / m], axis=-1)
    return e_phi, e_theta


def components_to_cartesian(v_phi, v_theta, theta, phi, b: float):
    e_phi, e_theta = unit_frame(theta, phi, b)
    return np.asarray(v_phi)[..., None] * e_phi + np.asarray(v_theta)[..., None] * e_theta


def cartesian_to_components(v, theta, phi, b: float):
    """Tangential physical components of an ambient vector (normal part dropped)."""
    e_phi, e_theta = unit_frame(theta, phi, b)
    v = np.asarray(v)
    return np.sum(v * e_phi, axis=-1), np.sum(v * e_theta, axis=-1)
