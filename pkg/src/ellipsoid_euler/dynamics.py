"""Rotating Euler flow in vorticity-stream form.

    d zeta/dt = -J(psi, zeta) + omega * mu(theta) * d_phi psi,    psi = Laplacian^{-1} zeta

where ``J(psi, q) = perp_grad(psi) . grad(q)`` and ``mu = 2 b^2 / m^4`` comes
from curling the Coriolis term. Time stepping is classical RK4 on the
spectral vorticity; the stream function is integrated alongside with the
trapezoid rule so that the time-averaged velocity is ``perp_grad`` of the
averaged stream function.

Internally a real field is carried as its ``m >= 0`` coefficient rows
("half" arrays); the ``m < 0`` rows follow from conjugate symmetry.
"""

from __future__ import annotations

import logging
import math
import weakref
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .basis import Basis, SpectralScalar, build_basis
from .calculus import VelocityField, check_product_resolution, hk_norm_velocity, perp_grad
from .geometry import build_geometry
from .rotation import RotationOps, build_rotation

log = logging.getLogger(__name__)

# |R(iz)| of classical RK4 stays <= 1 up to z = 2 sqrt(2)
RK4_STABILITY = 2.0 * math.sqrt(2.0)
# fraction of the energy tolerance targeted by the automatic step
DT_SAFETY = 0.25
IC_KINDS = ("random", "mode", "zonal")


class SimulationError(RuntimeError):
    """Time integration failed (instability or non-finite values)."""


@dataclass(frozen=True)
class RunConfig:
    """Parameters of one simulation.

    ``dt`` is a positive step or ``"auto"``. ``initial_condition`` is one of
    ``random`` (seeded band-limited field), ``mode`` (single real mode
    ``(ic_l, ic_m)``) or ``zonal`` (seeded random ``m = 0`` field); all are
    scaled so the velocity ``H^k`` norm equals ``M0``. ``diag_every`` is the
    diagnostics cadence in steps (0 picks about 200 records per run).
    """

    b: float = 0.9
    omega: float = 0.0
    l_max: int = 21
    n_theta: int = 64
    n_phi: int = 128
    dt: float | str = "auto"
    T: float = 1.0
    initial_condition: str = "random"
    ic_l: int = 2
    ic_m: int = 1
    M0: float = 1.0
    k: int = 3
    seed: int = 0
    diag_every: int = 0
    energy_tol: float = 1e-6
    cfl: float = 0.5
    spectral_filter: bool = False
    filter_order: int = 16

    def __post_init__(self):
        if not (0.0 < self.b <= 1.0):
            raise ValueError(f"b must lie in (0, 1], got {self.b}")
        if self.omega < 0:
            raise ValueError(f"omega must be >= 0, got {self.omega}")
        if not (self.T > 0):
            raise ValueError(f"T must be positive, got {self.T}")
        if self.dt != "auto" and not (isinstance(self.dt, (int, float)) and self.dt > 0):
            raise ValueError(f"dt must be a positive number or 'auto', got {self.dt!r}")
        if self.initial_condition not in IC_KINDS:
            raise ValueError(f"initial_condition must be one of {IC_KINDS}, got {self.initial_condition!r}")
        if self.M0 <= 0 or self.k < 0:
            raise ValueError("M0 must be positive and k non-negative")
        if self.energy_tol <= 0 or self.cfl <= 0:
            raise ValueError("energy_tol and cfl must be positive")
        if self.diag_every < 0:
            raise ValueError("diag_every must be >= 0")

    def with_(self, **changes) -> "RunConfig":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(eq=False)
class SolverState:
    zeta: SpectralScalar
    t: float
    psi_integral: SpectralScalar
    step_count: int
    config: RunConfig
    dt: float = float("nan")  # resolved step, kept so a resumed run repeats it

    @property
    def basis(self) -> Basis:
        return self.zeta.basis

    @property
    def psi(self) -> SpectralScalar:
        b = self.basis
        return SpectralScalar(-b.inv_lam_full * self.zeta.coeffs, b)

    def velocity(self) -> VelocityField:
        return perp_grad(self.psi)


# -- model: precomputed arrays for the right-hand side --


class _Model:
    """Right-hand side on half arrays for a fixed basis.

    Everything is done in real arithmetic: the meridional sums are one batched
    matmul against the stacked value and derivative tables, and the zonal
    transforms are small dense DFT matrices (cheaper than FFTs at these sizes).
    """

    def __init__(self, basis: Basis, rot: RotationOps | None = None):
        check_product_resolution(basis)
        self.basis = basis
        self.rot = rot if rot is not None else build_rotation(basis)
        geo = basis.geometry
        M, nth = basis.m_max, geo.n_theta
        self.nth = nth
        self.inv_lam = basis.inv_lam_half
        self.jac_scale = (1.0 / (geo.cos_vals * geo.m_vals))[:, None]
        self.mu = self.rot.mu[:, None]
        self.tables = np.concatenate([basis.modes, basis.dmodes], axis=-1)
        self.weighted = 2.0 * np.pi * basis.modes * geo.quad_weights

        ms = np.arange(M + 1)
        arg = np.outer(ms, geo.phi_nodes)
        wgt = np.where(ms == 0, 1.0, 2.0)[:, None]
        cos, sin = wgt * np.cos(arg), wgt * np.sin(arg)
        # synthesis of X_m(theta): Re sum_m X_m e^{i m phi} (m >= 1 doubled)
        self.syn_value = np.concatenate([cos, -sin])
        # synthesis of (i m X_m): the phi-derivative
        self.syn_dphi = np.concatenate([-ms[:, None] * sin, -ms[:, None] * cos])
        # analysis: (1/n_phi) sum f e^{-i m phi}
        self.ana = np.concatenate([np.cos(arg).T, -np.sin(arg).T], axis=1) / geo.n_phi
        self._freq = None

    def frequencies(self) -> np.ndarray:
        if self._freq is None:
            self._freq = self.rot.linear_frequencies()
        return self._freq

    def grid_terms(self, zh):
        """Grid fields ``psi_phi, psi_theta, zeta_phi, zeta_theta``."""
        nth = self.nth
        ph = -self.inv_lam * zh
        R = np.stack([ph.real, ph.imag, zh.real, zh.imag], axis=1)
        A = np.matmul(R, self.tables)  # (m, 4, 2 n_theta)
        A = np.ascontiguousarray(A.transpose(2, 1, 0))  # (2 n_theta, 4, m)
        psi_v = A[:nth, 0:2].reshape(nth, -1)  # [re | im] per row
        psi_d = A[nth:, 0:2].reshape(nth, -1)
        zeta_v = A[:nth, 2:4].reshape(nth, -1)
        zeta_d = A[nth:, 2:4].reshape(nth, -1)
        return (
            psi_v @ self.syn_dphi,
            psi_d @ self.syn_value,
            zeta_v @ self.syn_dphi,
            zeta_d @ self.syn_value,
        )

    def rhs(self, zh, omega: float):
        p_phi, p_theta, z_phi, z_theta = self.grid_terms(zh)
        g = (p_phi * z_theta - p_theta * z_phi) * self.jac_scale
        if omega:
            g += omega * self.mu * p_phi
        F = g @ self.ana  # (n_theta, 2 (m_max+1))
        F = np.ascontiguousarray(F.reshape(self.nth, 2, -1).transpose(2, 0, 1))  # (m, n_theta, 2)
        out = np.matmul(self.weighted, F)  # (m, l, 2)
        return out[..., 0] + 1j * out[..., 1]


_MODELS: "weakref.WeakKeyDictionary[Basis, _Model]" = weakref.WeakKeyDictionary()


def _model(basis: Basis) -> _Model:
    mdl = _MODELS.get(basis)
    if mdl is None:
        mdl = _MODELS[basis] = _Model(basis)
    return mdl


def tendency(zeta: SpectralScalar, omega: float) -> SpectralScalar:
    """``d zeta/dt`` for the rotating Euler equations (real vorticity)."""
    mdl = _model(zeta.basis)
    h = mdl.rhs(zeta.half, float(omega))
    return SpectralScalar.from_half(h, zeta.basis)


# -- diagnostics --


def energy(state_or_psi) -> float:
    """``sum Lambda |psi|^2`` (the squared ``L^2`` norm of the velocity)."""
    psi = state_or_psi.psi if isinstance(state_or_psi, SolverState) else state_or_psi
    return float(np.sum(psi.basis.lam_full * np.abs(psi.coeffs) ** 2))


def enstrophy(state_or_psi) -> float:
    """``sum Lambda^2 |psi|^2`` (the squared ``L^2`` norm of the vorticity)."""
    psi = state_or_psi.psi if isinstance(state_or_psi, SolverState) else state_or_psi
    return float(np.sum(psi.basis.lam_full**2 * np.abs(psi.coeffs) ** 2))


def _half_sums(basis: Basis, zh, k: int):
    # energy, enstrophy, H^k velocity norm and zonal energy from the half array;
    # rows m >= 1 count twice (their conjugates are implicit)
    lam = basis.lam_half
    a2 = np.abs(basis.inv_lam_half * zh) ** 2
    wts = np.full((basis.m_max + 1, 1), 2.0)
    wts[0] = 1.0
    e_rows = np.sum(lam * a2, axis=1) * wts[:, 0]
    ens = float(np.sum(wts * lam**2 * a2))
    hk = float(np.sqrt(np.sum(wts * lam ** (k + 1) * a2)))
    return float(e_rows.sum()), ens, hk, float(e_rows[0])


DIAG_COLUMNS = ("t", "energy", "enstrophy", "hk_norm", "zonal_fraction")


@dataclass
class DiagnosticsTable:
    t: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    enstrophy: list = field(default_factory=list)
    hk_norm: list = field(default_factory=list)
    zonal_fraction: list = field(default_factory=list)

    def record(self, state: SolverState) -> None:
        basis = state.basis
        e, ens, hk, ez = _half_sums(basis, state.zeta.half, state.config.k)
        self.t.append(float(state.t))
        self.energy.append(e)
        self.enstrophy.append(ens)
        self.hk_norm.append(hk)
        self.zonal_fraction.append(ez / e if e > 0 else 1.0)

    def columns(self) -> tuple[str, ...]:
        return DIAG_COLUMNS

    def rows(self):
        return list(zip(*(getattr(self, c) for c in DIAG_COLUMNS)))

    def array(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name))

    def relative_drift(self, name: str) -> float:
        x = self.array(name)
        return float(np.max(np.abs(x - x[0])) / abs(x[0]))

    def extend(self, other: "DiagnosticsTable") -> None:
        for c in DIAG_COLUMNS:
            getattr(self, c).extend(getattr(other, c))


# -- initial conditions --


def initial_stream(config: RunConfig, basis: Basis) -> SpectralScalar:
    """Stream function of the configured initial condition, ``||perp_grad psi||_{H^k} = M0``."""
    kind = config.initial_condition
    M, L = basis.m_max, basis.l_max
    h = np.zeros((M + 1, L + 1), complex)
    if kind == "mode":
        l, m = int(config.ic_l), int(config.ic_m)
        if m < 0 or m > M or l > L or not basis.mask_half[m, l]:
            raise ValueError(f"mode (l={l}, m={m}) is not in the basis")
        h[m, l] = 1.0
    else:
        rng = np.random.default_rng(config.seed)
        lam = np.where(basis.mask_half, basis.lam_half, 1.0)
        ell = np.maximum(np.arange(L + 1), 1)[None, :]
        amp = lam ** (-(config.k + 1) / 2.0) / ell * basis.mask_half
        phase = np.exp(2j * np.pi * rng.random((M + 1, L + 1)))
        h = amp * phase
        h[0] = amp[0] * np.sign(phase[0].real + 0.0)
        if kind == "zonal":
            h[1:] = 0.0
    psi = SpectralScalar.from_half(h, basis)
    return psi * (config.M0 / hk_norm_velocity(psi, config.k))


def make_basis(config: RunConfig) -> Basis:
    return build_basis(build_geometry(config.b, config.n_theta, config.n_phi), config.l_max)


def initial_state(config: RunConfig, basis: Basis | None = None) -> SolverState:
    basis = make_basis(config) if basis is None else basis
    psi = initial_stream(config, basis)
    zeta = SpectralScalar(-basis.lam_full * psi.coeffs, basis)
    return SolverState(zeta, 0.0, SpectralScalar.zeros(basis), 0, config)


# -- time step selection --


def linear_frequency(basis: Basis, omega: float) -> float:
    """Largest frequency of the linearized rotating dynamics."""
    if omega == 0:
        return 0.0
    return float(omega * _model(basis).frequencies().max())


def advective_frequency(state: SolverState) -> float:
    """``max|u| / h`` with the grid scale ``h = 1/sqrt(Lambda_max)``."""
    speed = state.velocity().max_speed()
    return speed * math.sqrt(state.basis.lam_half.max())


def auto_dt(state: SolverState) -> float:
    """Step for RK4 that keeps the expected energy drift below ``energy_tol``.

    RK4 damps an oscillation of frequency ``sigma`` by ``(sigma dt)^6 / 144``
    per step, so over the horizon ``T`` the relative energy error is about
    ``T sigma^6 dt^5 / 72``. The step solves that for ``DT_SAFETY`` times the tolerance,
    is capped at ``0.5 / sigma`` and by the advective CFL limit, and is then
    shortened so that ``T / dt`` is an integer.
    """
    cfg = state.config
    adv = advective_frequency(state)
    sigma = linear_frequency(state.basis, cfg.omega) + adv
    T = cfg.T
    if sigma == 0:
        return T
    dt = (72.0 * DT_SAFETY * cfg.energy_tol / T) ** 0.2 / sigma**1.2
    dt = min(dt, 0.5 / sigma)
    if adv > 0:
        dt = min(dt, cfg.cfl / adv)
    n = max(1, math.ceil(T / dt - 1e-9))
    return T / n


def check_stability(state: SolverState, dt: float) -> None:
    sigma = linear_frequency(state.basis, state.config.omega) + advective_frequency(state)
    if abs(dt) * sigma > RK4_STABILITY:
        raise SimulationError(
            f"dt={dt:.3g} exceeds the RK4 stability limit {RK4_STABILITY / sigma:.3g} "
            f"(fastest frequency {sigma:.3g})"
        )


# -- time stepping --


def _spectral_filter(basis: Basis, order: int) -> np.ndarray:
    ell = np.arange(basis.l_max + 1) / basis.l_max
    return np.exp(-36.0 * ell**order)[None, :]


def _rk4_half(mdl: _Model, zh, dt: float, omega: float):
    k1 = mdl.rhs(zh, omega)
    k2 = mdl.rhs(zh + 0.5 * dt * k1, omega)
    k3 = mdl.rhs(zh + 0.5 * dt * k2, omega)
    k4 = mdl.rhs(zh + dt * k3, omega)
    return zh + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _advance(mdl: _Model, zh, ih, t, n, dt, omega, filt=None):
    # one step on half arrays; returns (zeta, psi_integral, t, step_count)
    psi0 = -mdl.inv_lam * zh
    zn = _rk4_half(mdl, zh, dt, omega)
    if filt is not None:
        zn = zn * filt
    if not np.all(np.isfinite(zn)):
        raise SimulationError(f"non-finite vorticity at step {n + 1} (t={t + dt:.6g}, dt={dt:.3g})")
    ih = ih + (0.5 * dt) * (psi0 - mdl.inv_lam * zn)
    return zn, ih, t + dt, n + 1


def step_rk4(state: SolverState, dt: float) -> SolverState:
    """One RK4 step; the stream-function integral advances by the trapezoid rule."""
    basis = state.basis
    mdl = _model(basis)
    cfg = state.config
    filt = _spectral_filter(basis, cfg.filter_order) if cfg.spectral_filter else None
    zh, ih, t, n = _advance(mdl, state.zeta.half, state.psi_integral.half, state.t, state.step_count, dt, cfg.omega, filt)
    return SolverState(
        SpectralScalar.from_half(zh, basis),
        t,
        SpectralScalar.from_half(ih, basis),
        n,
        cfg,
        state.dt,
    )


def run(
    config: RunConfig,
    state: SolverState | None = None,
    basis: Basis | None = None,
    callback=None,
    callback_every: int = 0,
) -> tuple[SolverState, DiagnosticsTable]:
    """Integrate from ``state`` (or the configured initial condition) up to ``config.T``.

    ``callback(state)`` is invoked every ``callback_every`` steps (and at the
    end) when given; use it for checkpointing or dense sampling.
    """
    if state is None:
        state = initial_state(config, basis)
        state.dt = float(config.dt) if config.dt != "auto" else auto_dt(state)
    elif not np.isfinite(state.dt):
        state.dt = float(config.dt) if config.dt != "auto" else auto_dt(state)
    dt = state.dt
    check_stability(state, dt)

    basis = state.basis
    mdl = _model(basis)
    n_total = max(1, round(config.T / dt))
    every = config.diag_every or max(1, n_total // 200)
    filt = _spectral_filter(basis, config.filter_order) if config.spectral_filter else None
    log.info(
        "run: b=%g omega=%g dt=%.4g steps=%d (from step %d)", config.b, config.omega, dt, n_total, state.step_count
    )

    diags = DiagnosticsTable()
    diags.record(state)
    zh, ih, t, n = state.zeta.half, state.psi_integral.half, state.t, state.step_count
    while n < n_total:
        zh, ih, _, n = _advance(mdl, zh, ih, t, n, dt, config.omega, filt)
        t = n * dt
        done = n == n_total
        if n % every == 0 or done or (callback and callback_every and n % callback_every == 0):
            cur = SolverState(
                SpectralScalar.from_half(zh, basis), t, SpectralScalar.from_half(ih, basis), n, config, dt
            )
            if n % every == 0 or done:
                diags.record(cur)
            if callback and ((callback_every and n % callback_every == 0) or done):
                callback(cur)
    final = SolverState(SpectralScalar.from_half(zh, basis), t, SpectralScalar.from_half(ih, basis), n, config, dt)
    return final, diags


def time_average(state: SolverState) -> VelocityField:
    """``(1/t) int_0^t u dt`` as ``perp_grad`` of the averaged stream function."""
    if state.t <= 0:
        raise ValueError("time average needs t > 0")
    return perp_grad(state.psi_integral / state.t)


def averaged_stream(state: SolverState) -> SpectralScalar:
    if state.t <= 0:
        raise ValueError("time average needs t > 0")
    return state.psi_integral / state.t
