"""Numerical experiments: zonalization rate, finite-dimensional averaging, b-continuation."""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.stats

from .basis import Basis, SpectralScalar
from .calculus import VelocityField, hodge_decompose, hk_norm_velocity
from .dynamics import RunConfig, SimulationError, averaged_stream, initial_stream, make_basis, run
from .rotation import build_rotation, nonzonal_part

log = logging.getLogger(__name__)

WORKERS_ENV = "ELLIPSOID_EULER_WORKERS"


def worker_count(default: int | None = None) -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", WORKERS_ENV, raw)
    return default if default is not None else (os.cpu_count() or 1)


# -- zonalization --


def zonalization_error(ubar, k: int, basis: Basis | None = None) -> float:
    """``H^(k-3)`` norm of the non-zonal part of a divergence-free mean flow.

    ``ubar`` is either the stream function of the flow or a
    :class:`VelocityField` (then ``basis`` is required and the stream function
    is recovered by Hodge decomposition).
    """
    if k < 3:
        raise ValueError(f"k must be >= 3, got {k}")
    if isinstance(ubar, VelocityField):
        if basis is None:
            raise ValueError("a basis is needed to decompose a grid velocity field")
        _, psi = hodge_decompose(ubar, basis)
    elif isinstance(ubar, SpectralScalar):
        psi = ubar
    else:
        raise TypeError(f"expected VelocityField or SpectralScalar, got {type(ubar).__name__}")
    return hk_norm_velocity(nonzonal_part(psi), k - 3)


@dataclass
class SweepRow:
    omega: float
    T: float
    b: float
    M0: float
    error: float
    energy_drift: float
    runtime: float
    steps: int


SWEEP_COLUMNS = ("omega", "T", "b", "M0", "error", "energy_drift", "steps")


@dataclass
class SweepResult:
    """Rows of an omega sweep plus the log-log fit of error against omega."""

    rows: list[SweepRow] = field(default_factory=list)
    slope: float = float("nan")
    slope_halfwidth: float = float("nan")  # 95% confidence half-width
    intercept: float = float("nan")
    complete: bool = False

    def omegas(self) -> np.ndarray:
        return np.array([r.omega for r in self.rows])

    def errors(self) -> np.ndarray:
        return np.array([r.error for r in self.rows])

    def fit(self) -> "SweepResult":
        self.slope, self.slope_halfwidth, self.intercept = fit_loglog(self.omegas(), self.errors())
        return self

    def slope_without_smallest(self) -> float:
        return fit_loglog(self.omegas()[1:], self.errors()[1:])[0]

    def table(self):
        return [tuple(getattr(r, c) for c in SWEEP_COLUMNS) for r in self.rows]


class SweepError(RuntimeError):
    def __init__(self, message: str, partial: SweepResult):
        super().__init__(message)
        self.partial = partial


def fit_loglog(x, y) -> tuple[float, float, float]:
    """Least-squares slope of ``log y`` on ``log x``, its 95% half-width and the intercept."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.size < 2 or np.any(y <= 0):
        return float("nan"), float("nan"), float("nan")
    fit = scipy.stats.linregress(np.log(x), np.log(y))
    if x.size > 2:
        half = float(scipy.stats.t.ppf(0.975, x.size - 2) * fit.stderr)
    else:
        half = float("inf")
    return float(fit.slope), half, float(fit.intercept)


def sweep_run(config: RunConfig, basis: Basis | None = None) -> SweepRow:
    """One sweep entry: integrate and measure the non-zonal part of the mean flow."""
    start = time.perf_counter()
    final, diags = run(config, basis=basis)
    err = zonalization_error(averaged_stream(final), config.k)
    return SweepRow(
        omega=float(config.omega),
        T=float(config.T),
        b=float(config.b),
        M0=float(config.M0),
        error=err,
        energy_drift=diags.relative_drift("energy"),
        runtime=time.perf_counter() - start,
        steps=final.step_count,
    )


def omega_sweep(base: RunConfig, omegas, workers: int | None = None, progress=None) -> SweepResult:
    """Run ``base`` at each rotation rate and fit the decay of the zonalization error.

    Rows come back in the order of ``omegas`` whatever the completion order.
    On a failed run a :class:`SweepError` carries the rows finished so far.
    """
    omegas = [float(w) for w in omegas]
    if len(omegas) < 2:
        raise ValueError("a sweep needs at least two rotation rates")
    if any(b <= a for a, b in zip(omegas, omegas[1:])):
        raise ValueError("rotation rates must be strictly increasing")
    if omegas[0] < 10:
        raise ValueError("rotation rates must be >= 10")
    configs = [base.with_(omega=w) for w in omegas]
    workers = worker_count() if workers is None else max(1, int(workers))
    result = SweepResult()

    if workers == 1:
        basis = make_basis(base)
        for cfg in configs:
            try:
                row = sweep_run(cfg, basis)
            except SimulationError as exc:
                raise SweepError(f"run at omega={cfg.omega:g} failed: {exc}", result.fit()) from exc
            result.rows.append(row)
            if progress:
                progress(row)
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(configs))) as pool:
            futures = [pool.submit(sweep_run, cfg) for cfg in configs]
            for cfg, fut in zip(configs, futures):
                try:
                    row = fut.result()
                except SimulationError as exc:
                    for f in futures:
                        f.cancel()
                    raise SweepError(f"run at omega={cfg.omega:g} failed: {exc}", result.fit()) from exc
                result.rows.append(row)
                if progress:
                    progress(row)
    result.complete = True
    return result.fit()


# -- finite-dimensional averaging --


@dataclass(frozen=True, eq=False)
class ToyProblem:
    """``du/dt = omega A u + a + c cos(t)`` with a real skew ``A = Q blockdiag Q^T``.

    The first ``kernel_dim`` columns of ``Q`` span the kernel; the rest come
    in pairs rotating at the rates ``rates``.
    """

    Q: np.ndarray
    rates: np.ndarray
    kernel_dim: int
    u0: np.ndarray
    a: np.ndarray
    c: np.ndarray

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    def operator(self) -> np.ndarray:
        B = np.zeros((self.n, self.n))
        k = self.kernel_dim
        for i, s in enumerate(self.rates):
            p = k + 2 * i
            B[p, p + 1] = s
            B[p + 1, p] = -s
        return self.Q @ B @ self.Q.T

    def bound_constant(self) -> float:
        """``1 / smallest nonzero singular value``: ``||u - P u|| <= C ||A u||``."""
        sv = np.linalg.svd(self.operator(), compute_uv=False)
        return 1.0 / float(np.min(sv[sv > 1e-10 * sv[0]]))

    def kernel_projector(self) -> np.ndarray:
        K = self.Q[:, : self.kernel_dim]
        return K @ K.T

    def forcing(self, t) -> np.ndarray:
        t = np.asarray(t, float)
        return self.a[:, None] + self.c[:, None] * np.cos(t)[None, :]

    def _split(self, v):
        k = self.kernel_dim
        w = self.Q.T @ v
        return w[:k], w[k::2] + 1j * w[k + 1 :: 2]

    def _join(self, ker, z):
        k = self.kernel_dim
        w = np.empty((self.n,) + np.shape(ker)[1:])
        w[:k] = ker
        w[k::2] = z.real
        w[k + 1 :: 2] = z.imag
        return self.Q @ w

    def solution(self, omega: float, t) -> np.ndarray:
        """Exact trajectory at times ``t``; shape ``(n, len(t))``."""
        t = np.atleast_1d(np.asarray(t, float))
        k0, z0 = self._split(self.u0)
        ka, za = self._split(self.a)
        kc, zc = self._split(self.c)
        ker = k0[:, None] + ka[:, None] * t + kc[:, None] * np.sin(t)
        lam = (omega * self.rates)[:, None]
        rot = np.exp(-1j * lam * t)
        z = rot * z0[:, None] + za[:, None] * (1.0 - rot) / (1j * lam)
        z += 0.5 * zc[:, None] * ((np.exp(1j * t) - rot) / (1j * (lam + 1.0)) + (np.exp(-1j * t) - rot) / (1j * (lam - 1.0)))
        return self._join(ker, z)

    def time_integral(self, omega: float, T: float) -> np.ndarray:
        """Exact ``int_0^T u dt``."""

        def E(mu):
            mu = np.asarray(mu, float)
            return np.where(mu == 0, T, (np.exp(1j * mu * T) - 1.0) / (1j * np.where(mu == 0, 1.0, mu)))

        k0, z0 = self._split(self.u0)
        ka, za = self._split(self.a)
        kc, zc = self._split(self.c)
        ker = k0 * T + 0.5 * ka * T * T + kc * (1.0 - math.cos(T))
        lam = omega * self.rates
        Em = E(-lam)
        z = z0 * Em + za / (1j * lam) * (T - Em)
        z += 0.5 * zc * ((E(1.0) - Em) / (1j * (lam + 1.0)) + (E(-1.0) - Em) / (1j * (lam - 1.0)))
        return self._join(ker, z)


def make_toy_problem(n: int, seed, forcing: float = 1.0, u0_in_kernel: bool = False) -> ToyProblem:
    """Random skew operator with a kernel of dimension about ``n/4``, rates in [0.5, 2]."""
    if n < 4 or n > 64:
        raise ValueError(f"dimension must lie in [4, 64], got {n}")
    rng = np.random.default_rng(seed)
    kdim = n // 4
    if (n - kdim) % 2:
        kdim += 1
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    Q = Q * np.sign(np.diag(R))
    rates = rng.uniform(0.5, 2.0, (n - kdim) // 2)
    u0 = rng.standard_normal(n)
    u0 /= np.linalg.norm(u0)
    if u0_in_kernel:
        K = Q[:, :kdim]
        u0 = K @ (K.T @ u0)
    a = forcing * rng.standard_normal(n) / math.sqrt(n)
    c = forcing * rng.standard_normal(n) / math.sqrt(n)
    return ToyProblem(Q, rates, kdim, u0, a, c)


@dataclass
class ToyRow:
    omega: float
    lhs: float
    rhs: float
    M: float
    M_prime: float
    passed: bool


TOY_COLUMNS = ("seed", "omega", "lhs", "rhs", "M", "M_prime", "passed")


@dataclass
class ToyAveragingReport:
    n: int
    seed: object
    T: float
    spectrum: np.ndarray
    C: float
    rows: list[ToyRow] = field(default_factory=list)
    slope: float = float("nan")
    crosscheck_error: float = float("nan")

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def table(self):
        return [(self.seed, r.omega, r.lhs, r.rhs, r.M, r.M_prime, int(r.passed)) for r in self.rows]


def toy_averaging_verify(
    n: int,
    seed,
    omegas,
    T: float = 1.0,
    samples: int | None = None,
    forcing: float = 1.0,
    u0_in_kernel: bool = False,
    crosscheck: bool = True,
    rtol: float = 1e-10,
) -> ToyAveragingReport:
    """Check the averaging bound ``||mean(u) - mean(P u)|| <= (C/omega)(2M/T + M')``.

    The trajectory and its time integral are evaluated in closed form in the
    operator's eigen-coordinates. ``M`` and ``M'`` are maxima of ``||u||`` and
    of the forcing norm over a sampling of ``[0, T]`` fine enough to resolve the
    fastest rotation. With ``crosscheck`` the smallest rate is re-integrated
    with an adaptive 8th-order Runge-Kutta method.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    prob = make_toy_problem(n, seed, forcing=forcing, u0_in_kernel=u0_in_kernel)
    C = prob.bound_constant()
    P = prob.kernel_projector()
    report = ToyAveragingReport(n=n, seed=seed, T=T, spectrum=np.sort(prob.rates), C=C)
    t_force = np.linspace(0.0, T, 2001)
    M_prime = float(np.max(np.linalg.norm(prob.forcing(t_force), axis=0)))

    for omega in sorted(float(w) for w in omegas):
        integral = prob.time_integral(omega, T)
        lhs = float(np.linalg.norm((integral - P @ integral) / T))
        n_samp = samples or int(min(2_000_000 // n, max(2001, 20 * omega * prob.rates.max() * T)))
        ts = np.linspace(0.0, T, n_samp)
        M = 0.0
        for chunk in np.array_split(ts, max(1, n_samp // 20000)):
            M = max(M, float(np.max(np.linalg.norm(prob.solution(omega, chunk), axis=0))))
        rhs = C / omega * (2.0 * M / T + M_prime)
        report.rows.append(ToyRow(omega, lhs, rhs, M, M_prime, lhs <= rhs))

    ws = np.array([r.omega for r in report.rows])
    ls = np.array([r.lhs for r in report.rows])
    if ws.size >= 2 and np.all(ls > 0):
        report.slope = fit_loglog(ws, ls)[0]

    if crosscheck:
        report.crosscheck_error = _toy_crosscheck(prob, min(float(w) for w in omegas), T, rtol)
        if report.crosscheck_error > 1e3 * rtol * max(1.0, float(np.linalg.norm(prob.u0))):
            raise SimulationError(
                f"closed-form toy solution disagrees with adaptive integration: {report.crosscheck_error:.3e}"
            )
    return report


def _toy_crosscheck(prob: ToyProblem, omega: float, T: float, rtol: float) -> float:
    A = omega * prob.operator()

    def rhs(t, y):
        u = y[: prob.n]
        du = A @ u + prob.a + prob.c * math.cos(t)
        return np.concatenate([du, u])

    y0 = np.concatenate([prob.u0, np.zeros(prob.n)])
    sol = scipy.integrate.solve_ivp(rhs, (0.0, T), y0, method="DOP853", rtol=rtol, atol=rtol * 1e-2)
    if not sol.success:
        raise SimulationError(f"adaptive integration failed: {sol.message}")
    u_T, int_T = sol.y[: prob.n, -1], sol.y[prob.n :, -1]
    err_u = np.linalg.norm(u_T - prob.solution(omega, [T])[:, 0])
    err_i = np.linalg.norm(int_T - prob.time_integral(omega, T))
    return float(max(err_u, err_i))


# -- b-continuation --

CONTINUATION_COLUMNS = ("b", "eigdev", "gapratio", "commres")


@dataclass
class ContinuationRow:
    b: float
    eigdev: float
    gapratio: float
    commres: float
    labels: list
    eigenvalues: np.ndarray


def lowest_modes(basis: Basis, count: int = 10):
    """The ``count`` smallest eigenvalues (m >= 0) with their ``(l, m)`` labels."""
    labs = basis.labels()
    vals = np.array([basis.eigenvalue(l, m) for l, m in labs])
    order = np.argsort(vals, kind="stable")[:count]
    return [labs[i] for i in order], vals[order]


def b_continuation(bs, probe: RunConfig, samples: int = 10, gap_k: int = 0) -> list[ContinuationRow]:
    """Spectrum, key-estimate ratio and commutation defect as functions of ``b``.

    ``eigdev`` is the largest relative distance of the ten lowest eigenvalues
    from the spherical ``l(l+1)``; ``gapratio`` and ``commres`` are maxima over
    ``samples`` random stream functions drawn as the probe's initial condition
    with seeds ``probe.seed + i``.
    """
    bs = [float(b) for b in bs]
    if any(not (0 < b <= 1) for b in bs):
        raise ValueError("all b must lie in (0, 1]")
    rows = []
    for b in bs:
        cfg = probe.with_(b=b, initial_condition="random")
        basis = make_basis(cfg)
        rot = build_rotation(basis)
        labels, vals = lowest_modes(basis)
        sphere = np.array([l * (l + 1.0) for l, _ in labels])
        eigdev = float(np.max(np.abs(vals - sphere) / sphere))
        gap, comm = 0.0, 0.0
        for i in range(samples):
            psi = initial_stream(cfg.with_(seed=probe.seed + i), basis)
            lhs, rhs = rot.key_estimate_gap(psi, gap_k)
            gap = max(gap, lhs / rhs)
            comm = max(comm, rot.commutation_residual(psi, 1))
        rows.append(ContinuationRow(b, eigdev, gap, comm, labels, vals))
    return rows
