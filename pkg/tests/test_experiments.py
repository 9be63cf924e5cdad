import numpy as np
import pytest
import scipy.integrate
from conftest import cached_basis, random_stream

from ellipsoid_euler.basis import SpectralScalar
from ellipsoid_euler.calculus import hk_norm_velocity, perp_grad
from ellipsoid_euler.dynamics import RunConfig
from ellipsoid_euler.experiments import (
    SweepError,
    b_continuation,
    fit_loglog,
    lowest_modes,
    make_toy_problem,
    omega_sweep,
    toy_averaging_verify,
    worker_count,
    zonalization_error,
)

SMALL = dict(l_max=10, n_theta=32, n_phi=64)


# -- zonalization error --


def test_zonal_mean_flow_has_no_error():
    basis = cached_basis(0.9)
    assert zonalization_error(random_stream(basis, 0, zonal_only=True), 3) == 0.0


@pytest.mark.parametrize("k", [3, 4, 5])
def test_unit_nonzonal_mode(k):
    basis = cached_basis(0.9)
    c = np.zeros(basis.shape, complex)
    c[basis.m_max + 2, 6] = 1.0
    psi = SpectralScalar(c, basis)
    psi = psi / hk_norm_velocity(psi, k - 3)
    assert zonalization_error(psi, k) == pytest.approx(1.0, rel=1e-14)


def test_error_matches_direct_sum_and_grid_path():
    basis = cached_basis(0.8)
    psi = random_stream(basis, 3)
    lam = basis.lam_full
    nonzonal = np.abs(basis.ms) > 0
    direct = np.sqrt(np.sum((lam * np.abs(psi.coeffs) ** 2)[nonzonal]))
    assert zonalization_error(psi, 3) == pytest.approx(direct, rel=1e-12)
    assert zonalization_error(perp_grad(psi), 3, basis) == pytest.approx(direct, rel=1e-10)


def test_zonalization_error_input_checks():
    basis = cached_basis(0.9)
    with pytest.raises(ValueError):
        zonalization_error(random_stream(basis, 0), 2)
    with pytest.raises(ValueError):
        zonalization_error(perp_grad(random_stream(basis, 0)), 3)
    with pytest.raises(TypeError):
        zonalization_error(np.zeros(3), 3)


# -- sweep --


def test_fit_of_exact_power_law():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    slope, half, intercept = fit_loglog(x, 3.0 * x**-1.5)
    assert slope == pytest.approx(-1.5) and half == pytest.approx(0.0, abs=1e-10)
    assert intercept == pytest.approx(np.log(3.0))
    assert np.isnan(fit_loglog([1.0], [1.0])[0])


@pytest.mark.parametrize("omegas", [[100.0], [200.0, 100.0], [5.0, 100.0]])
def test_sweep_rejects_bad_rates(omegas):
    with pytest.raises(ValueError):
        omega_sweep(RunConfig(**SMALL), omegas, workers=1)


def test_sweep_serial_and_parallel_agree():
    base = RunConfig(b=0.9, T=0.1, **SMALL)
    omegas = [50.0, 100.0, 200.0]
    serial = omega_sweep(base, omegas, workers=1)
    parallel = omega_sweep(base, omegas, workers=3)
    assert serial.table() == parallel.table()
    assert serial.complete and [r.omega for r in serial.rows] == omegas
    assert serial.slope == parallel.slope
    assert all(r.energy_drift < 1e-6 for r in serial.rows)


def test_sweep_failure_keeps_partial_rows():
    base = RunConfig(b=1.0, T=0.05, dt=0.01, **SMALL)
    with pytest.raises(SweepError) as info:
        omega_sweep(base, [10.0, 100000.0], workers=1)
    assert len(info.value.partial.rows) == 1
    assert not info.value.partial.complete


def test_longer_horizon_reduces_error():
    base = RunConfig(b=0.9, omega=400.0, **SMALL)
    from ellipsoid_euler.experiments import sweep_run

    short = [sweep_run(base.with_(T=0.25, seed=s)).error for s in range(5)]
    long = [sweep_run(base.with_(T=1.0, seed=s)).error for s in range(5)]
    assert np.median(long) <= np.median(short)


def test_worker_count(monkeypatch):
    monkeypatch.setenv("ELLIPSOID_EULER_WORKERS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("ELLIPSOID_EULER_WORKERS", "lots")
    assert worker_count(2) == 2
    monkeypatch.delenv("ELLIPSOID_EULER_WORKERS")
    assert worker_count() >= 1


# -- finite-dimensional averaging --


def test_toy_operator_structure():
    prob = make_toy_problem(16, 0)
    A = prob.operator()
    P = prob.kernel_projector()
    np.testing.assert_allclose(A, -A.T, atol=1e-14)
    np.testing.assert_allclose(P @ P, P, atol=1e-14)
    np.testing.assert_allclose(A @ P, 0.0, atol=1e-14)
    assert np.linalg.matrix_rank(A) == 16 - prob.kernel_dim
    # C bounds the complement through the operator
    v = np.random.default_rng(1).standard_normal(16)
    assert np.linalg.norm(v - P @ v) <= prob.bound_constant() * np.linalg.norm(A @ v) * (1 + 1e-12)


def test_toy_closed_form_solves_the_equation():
    prob = make_toy_problem(12, 4)
    omega = 30.0
    A = omega * prob.operator()
    t = np.array([0.3, 0.7])
    h = 1e-6
    du = (prob.solution(omega, t + h) - prob.solution(omega, t - h)) / (2 * h)
    rhs = A @ prob.solution(omega, t) + prob.forcing(t)
    np.testing.assert_allclose(du, rhs, atol=1e-6)
    np.testing.assert_allclose(prob.solution(omega, [0.0])[:, 0], prob.u0, atol=1e-14)
    ref = scipy.integrate.quad_vec(lambda s: prob.solution(omega, [s])[:, 0], 0.0, 1.0, epsabs=1e-13)[0]
    np.testing.assert_allclose(prob.time_integral(omega, 1.0), ref, atol=1e-11)


def test_toy_stationary_kernel_state():
    rep = toy_averaging_verify(32, 3, [1e2, 1e3], forcing=0.0, u0_in_kernel=True)
    assert all(r.lhs < 1e-14 for r in rep.rows) and rep.passed


def test_toy_bound_and_rate():
    rep = toy_averaging_verify(32, 0, [1e2, 1e3, 1e4])
    assert rep.passed
    assert abs(rep.slope + 1.0) <= 0.1
    assert rep.crosscheck_error < 1e-7


def test_toy_rate_doubling():
    lhs_ratio, rhs_ratio = [], []
    for seed in range(5):
        rep = toy_averaging_verify(16, seed, [500.0, 1000.0], crosscheck=False)
        a, b = rep.rows
        lhs_ratio.append(b.lhs / a.lhs)
        rhs_ratio.append(b.rhs / a.rhs)
    assert np.median(lhs_ratio) <= 1.0
    np.testing.assert_allclose(rhs_ratio, 0.5, rtol=0.02)


@pytest.mark.parametrize("n", [3, 65])
def test_toy_dimension_checked(n):
    with pytest.raises(ValueError):
        toy_averaging_verify(n, 0, [100.0])


def test_toy_is_deterministic():
    a = toy_averaging_verify(32, 7, [1e2, 1e3], crosscheck=False).table()
    b = toy_averaging_verify(32, 7, [1e2, 1e3], crosscheck=False).table()
    assert a == b


# -- continuation in b --


def test_lowest_modes_on_sphere(sphere):
    labels, vals = lowest_modes(sphere)
    assert len(labels) == 10
    np.testing.assert_allclose(vals, [l * (l + 1) for l, _ in labels], rtol=1e-10)
    assert [l for l, _ in labels] == [1, 1, 2, 2, 2, 3, 3, 3, 3, 4]


def test_continuation_rows():
    probe = RunConfig(**SMALL)
    rows = b_continuation([1.0, 0.999, 0.99, 0.95, 0.9], probe, samples=4)
    sphere = rows[0]
    assert sphere.eigdev < 1e-6 and sphere.gapratio <= 1 + 1e-8 and sphere.commres < 1e-8
    assert rows[1].eigdev < 1e-2
    devs = [r.eigdev for r in rows]
    assert all(a < b for a, b in zip(devs, devs[1:]))
    with pytest.raises(ValueError):
        b_continuation([1.2], probe)
