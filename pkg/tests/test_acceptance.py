"""Acceptance criteria, each at its stated tolerance.

Every check is recorded and summarized as one PASS/FAIL line per criterion at
the end of the session (see ``conftest.pytest_terminal_summary``).
"""

import time

import numpy as np
import pytest
from conftest import record

from ellipsoid_euler.basis import SpectralScalar, analysis, apply_laplacian, build_basis, synthesis
from ellipsoid_euler.calculus import advect, curl, div, grad, jacobian, l2_inner, perp_grad
from ellipsoid_euler.dynamics import RunConfig, make_basis, run
from ellipsoid_euler.experiments import SWEEP_COLUMNS, TOY_COLUMNS, omega_sweep, toy_averaging_verify
from ellipsoid_euler.geometry import build_geometry
from ellipsoid_euler.rotation import build_rotation
from ellipsoid_euler.storage import write_csv

pytestmark = pytest.mark.slow

_CACHE = {}


def random_field(basis, rng, decay=0.0):
    lam = np.where(basis.mask, basis.lam_full, 1.0)
    c = (rng.standard_normal(basis.shape) + 1j * rng.standard_normal(basis.shape)) * basis.mask * lam ** (-decay / 2)
    return SpectralScalar(c, basis).enforce_reality()


def default_basis(b):
    key = ("basis", b)
    if key not in _CACHE:
        _CACHE[key] = make_basis(RunConfig(b=b))
    return _CACHE[key]


def test_criterion_01_sphere_spectrum():
    start = time.perf_counter()
    basis = build_basis(build_geometry(1.0, 128, 256), 10)
    elapsed = time.perf_counter() - start
    worst = max(abs(basis.eigenvalue(l, m) / (l * (l + 1)) - 1) for l, m in basis.labels())
    ok = record(1, worst <= 1e-6, f"max relative deviation from l(l+1): {worst:.2e} (tol 1e-6)")
    ok &= record(1, elapsed < 10, f"runtime {elapsed:.2f} s (limit 10 s)")
    assert ok


@pytest.mark.parametrize("b", [1.0, 0.9, 0.7])
def test_criterion_02_transform_exactness(b):
    basis = default_basis(b)
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        psi = random_field(basis, rng)
        back = analysis(synthesis(psi), basis)
        worst = max(worst, np.max(np.abs(back.coeffs - psi.coeffs)) / np.max(np.abs(psi.coeffs)))
    assert record(2, worst <= 1e-10, f"b={b}: worst analysis(synthesis) error over 100 fields {worst:.2e} (tol 1e-10)")


@pytest.mark.parametrize("b", [1.0, 0.9, 0.7])
def test_criterion_03_calculus_identities(b):
    basis = default_basis(b)
    rng = np.random.default_rng(3)
    e1 = e2 = e3 = 0.0
    for _ in range(20):
        psi = random_field(basis, rng, decay=2.0)
        lap = apply_laplacian(psi)
        scale = np.max(np.abs(lap.coeffs))
        e1 = max(e1, np.max(np.abs(curl(grad(psi), basis).coeffs)) / scale)
        e2 = max(e2, np.max(np.abs(curl(perp_grad(psi), basis).coeffs - lap.coeffs)) / scale)
        e3 = max(e3, np.max(np.abs(div(perp_grad(psi), basis).coeffs)) / scale)
    ok = record(3, max(e1, e2, e3) <= 1e-8, f"b={b}: curl.grad {e1:.1e}, div.perp_grad {e3:.1e}, curl.perp_grad-Lap {e2:.1e} (tol 1e-8)")
    assert ok


def test_criterion_03_advection_cross_check():
    b = 0.9
    L_ref = 40
    rng = np.random.default_rng(33)
    big = rng.standard_normal((2 * L_ref + 1, L_ref + 1)) + 1j * rng.standard_normal((2 * L_ref + 1, L_ref + 1))
    Ls = [8, 12, 16, 24, 32]
    errs = []
    for L in Ls:
        basis = build_basis(build_geometry(b, 2 * L + 2, 4 * L), L)
        c = big[L_ref - L : L_ref + L + 1, : L + 1] * basis.mask
        lam = np.where(basis.mask, basis.lam_full, 1.0)
        psi = SpectralScalar(c * lam**-2.5, basis).enforce_reality()
        zeta = apply_laplacian(psi)
        diff = curl(advect(perp_grad(psi), basis), basis).coeffs - jacobian(psi, zeta).coeffs
        errs.append(np.sqrt(np.sum(np.abs(diff) ** 2)))
    order = -np.polyfit(np.log(Ls), np.log(errs), 1)[0]
    errs_txt = ", ".join(f"{e:.2e}" for e in errs)
    assert record(3, order >= 1.5, f"b=0.9: curl(advect) vs jacobian errors [{errs_txt}] for l_max {Ls}; order {order:.2f} (need >= 1.5)")


@pytest.mark.parametrize("b", [1.0, 0.9, 0.8])
def test_criterion_04_operator_algebra(b):
    basis = default_basis(b)
    R = build_rotation(basis)
    rng = np.random.default_rng(4)
    idem = adj = lp = pl = skew = 0.0
    worst_gap = 0.0
    for i in range(100):
        psi = random_field(basis, rng, decay=2.0 + (i % 4))
        u = perp_grad(psi)
        v = perp_grad(random_field(basis, rng, decay=2.0))
        nu = np.sqrt(l2_inner(u, u))
        nv = np.sqrt(l2_inner(v, v))
        Pu, Pv = R.null_projection(u), R.null_projection(v)
        PPu = R.null_projection(Pu)
        idem = max(idem, np.sqrt(l2_inner(PPu - Pu, PPu - Pu)) / nu)
        adj = max(adj, abs(l2_inner(Pu, v) - l2_inner(u, Pv)) / (nu * nv))
        Lu = R.l_apply(u)
        LP = R.l_apply(Pu)
        PL = R.null_projection(Lu)
        lp = max(lp, np.sqrt(l2_inner(LP, LP)) / nu)
        pl = max(pl, np.sqrt(l2_inner(PL, PL)) / nu)
        skew = max(skew, abs(l2_inner(u, Lu)) / nu**2)
        lhs, rhs = R.key_estimate_gap(psi, i % 4)
        worst_gap = max(worst_gap, lhs / rhs)
    ok = record(4, max(idem, adj) <= 1e-10, f"b={b}: projection idempotence {idem:.1e}, self-adjointness {adj:.1e} (tol 1e-10)")
    ok &= record(4, max(lp, pl) <= 1e-8, f"b={b}: |L P u| {lp:.1e}, |P L u| {pl:.1e} (tol 1e-8)")
    ok &= record(4, skew <= 1e-10, f"b={b}: <u, L u> {skew:.1e} (tol 1e-10)")
    bound = 1 + 1e-8 if b == 1.0 else b**-4
    ok &= record(4, worst_gap <= bound, f"b={b}: max gap ratio over 100 fields {worst_gap:.4f} (bound {bound:.6g})")
    assert ok


@pytest.mark.parametrize("b", [1.0, 0.9])
@pytest.mark.parametrize("omega", [0.0, 100.0, 1000.0])
def test_criterion_05_conservation(b, omega):
    cfg = RunConfig(b=b, omega=omega, T=1.0)
    basis = default_basis(b)
    start = time.perf_counter()
    final, diags = run(cfg, basis=basis)
    elapsed = time.perf_counter() - start
    de = diags.relative_drift("energy")
    dz = diags.relative_drift("enstrophy")
    ok = record(5, de <= 1e-6, f"b={b}, omega={omega:g}: energy drift {de:.2e} (tol 1e-6)")
    ok &= record(5, dz <= 1e-6, f"b={b}, omega={omega:g}: enstrophy drift {dz:.2e} (tol 1e-6)")
    ok &= record(5, elapsed < 60, f"b={b}, omega={omega:g}: runtime {elapsed:.1f} s over {final.step_count} steps (limit 60 s)")
    assert ok


@pytest.mark.parametrize("b", [1.0, 0.9])
def test_criterion_06_uniform_regularity(b):
    M0 = 1.0
    peaks = []
    for omega in (0.0, 100.0, 1000.0):
        cfg = RunConfig(b=b, omega=omega, M0=M0, T=0.5 / M0, seed=0)
        _, diags = run(cfg, basis=default_basis(b))
        peaks.append(max(diags.hk_norm) / M0)
    spread = (max(peaks) - min(peaks)) / min(peaks)
    txt = ", ".join(f"{p:.4f}" for p in peaks)
    assert record(6, spread < 0.05, f"b={b}: max_t |u|_H3 / M0 = [{txt}] for omega 0, 100, 1000; spread {spread:.1%} (need < 5%)")


def _sweep(b, workers=1):
    base = RunConfig(b=b, k=3, M0=1.0, T=0.5, seed=0)
    return omega_sweep(base, [50.0, 100.0, 200.0, 400.0, 800.0], workers=workers)


@pytest.mark.parametrize("b", [0.9, 1.0])
def test_criterion_07_zonalization_rate(b):
    start = time.perf_counter()
    result = _sweep(b)
    elapsed = time.perf_counter() - start
    _CACHE[("sweep", b)] = result.table()
    _CACHE.setdefault("sweep_time", 0.0)
    _CACHE["sweep_time"] += elapsed
    errs = ", ".join(f"{e:.3e}" for e in result.errors())
    ok = record(
        7,
        -1.25 <= result.slope <= -0.75,
        f"b={b}: errors [{errs}]; slope {result.slope:.3f} +- {result.slope_halfwidth:.3f} (need in [-1.25, -0.75])",
    )
    ok &= record(7, _CACHE["sweep_time"] < 600, f"b={b}: cumulative sweep runtime {_CACHE['sweep_time']:.1f} s (limit 600 s)")
    assert ok


def test_criterion_08_rossby_haurwitz():
    l, m, omega = 4, 1, 100.0
    cfg = RunConfig(b=1.0, omega=omega, T=0.5, initial_condition="mode", ic_l=l, ic_m=m)
    samples = []
    run(cfg, basis=default_basis(1.0), callback=lambda s: samples.append((s.t, s.zeta[l, m])), callback_every=1)
    t = np.array([s[0] for s in samples])
    phase = np.unwrap(np.angle([s[1] for s in samples]))
    measured = -np.polyfit(t, phase, 1)[0]
    expected = 2 * omega * m / (l * (l + 1))
    err = abs(measured / expected - 1)
    assert record(8, err <= 0.01, f"precession {measured:.8f} vs 2*omega*m/(l(l+1)) = {expected:g}; relative error {err:.1e} (tol 1e-2)")


def _toy_rows():
    rows, reports = [], []
    for seed in range(10):
        rep = toy_averaging_verify(32, seed, [1e2, 1e3, 1e4], T=1.0)
        reports.append(rep)
        rows.extend(rep.table())
    return rows, reports


def test_criterion_09_toy_averaging():
    rows, reports = _toy_rows()
    _CACHE["toy"] = rows
    held = sum(int(r[-1]) for r in rows)
    slopes = [rep.slope for rep in reports]
    ok = record(9, held == len(rows), f"bound holds in {held}/{len(rows)} rows")
    ok &= record(9, all(abs(s + 1) <= 0.1 for s in slopes), f"lhs-vs-omega slopes in [{min(slopes):.3f}, {max(slopes):.3f}] (need -1 +- 0.1)")
    assert ok


def test_criterion_10_determinism(tmp_path):
    ok = True
    toy_a = _CACHE.get("toy") or _toy_rows()[0]
    toy_b = _toy_rows()[0]
    a = write_csv(tmp_path / "toy_a.csv", TOY_COLUMNS, toy_a).read_bytes()
    b = write_csv(tmp_path / "toy_b.csv", TOY_COLUMNS, toy_b).read_bytes()
    ok &= record(10, a == b, "toy verifier CSV identical on rerun")
    first = _CACHE.get(("sweep", 1.0)) or _sweep(1.0).table()
    again = _sweep(1.0, workers=5).table()
    a = write_csv(tmp_path / "sweep_a.csv", SWEEP_COLUMNS, first).read_bytes()
    b = write_csv(tmp_path / "sweep_b.csv", SWEEP_COLUMNS, again).read_bytes()
    ok &= record(10, a == b, "b=1 sweep CSV identical on rerun (serial vs parallel workers)")
    cfg = RunConfig(b=0.9, omega=100.0, T=0.2)
    rows = [run(cfg, basis=default_basis(0.9))[1].rows() for _ in range(2)]
    a = write_csv(tmp_path / "d_a.csv", ("t", "energy", "enstrophy", "hk_norm", "zonal_fraction"), rows[0]).read_bytes()
    b = write_csv(tmp_path / "d_b.csv", ("t", "energy", "enstrophy", "hk_norm", "zonal_fraction"), rows[1]).read_bytes()
    ok &= record(10, a == b, "simulation diagnostics CSV identical on rerun")
    assert ok
