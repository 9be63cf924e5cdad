import functools

import numpy as np
import pytest

from ellipsoid_euler.basis import SpectralScalar, build_basis
from ellipsoid_euler.geometry import build_geometry


@functools.lru_cache(maxsize=None)
def cached_basis(b, l_max=16, n_theta=48, n_phi=96):
    return build_basis(build_geometry(b, n_theta, n_phi), l_max)


def random_stream(basis, seed, decay=2.0, real=True, zonal_only=False):
    """Random band-limited field with Gaussian coefficients decaying like ``Lambda^-decay/2``."""
    rng = np.random.default_rng(seed)
    lam = np.where(basis.mask, basis.lam_full, 1.0)
    c = (rng.standard_normal(basis.shape) + 1j * rng.standard_normal(basis.shape)) * basis.mask
    c *= lam ** (-decay / 2.0)
    if zonal_only:
        keep = np.zeros_like(c)
        keep[basis.m_max] = c[basis.m_max]
        c = keep
    psi = SpectralScalar(c, basis)
    if real:
        psi = psi.enforce_reality()
    return psi


@pytest.fixture(scope="session")
def sphere():
    return cached_basis(1.0)


@pytest.fixture(scope="session", params=[1.0, 0.9, 0.7])
def any_basis(request):
    return cached_basis(request.param)


# -- acceptance report: one line per criterion in the terminal summary --

ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def record(criterion: int, ok: bool, detail: str) -> bool:
    ACCEPTANCE.setdefault(criterion, []).append((bool(ok), detail))
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[n]
        status = "PASS" if all(ok for ok, _ in checks) else "FAIL"
        terminalreporter.line(f"criterion {n:2d}: {status}")
        for ok, detail in checks:
            terminalreporter.line(f"    [{'ok' if ok else 'FAILED'}] {detail}")
