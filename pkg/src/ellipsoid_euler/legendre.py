"""Orthonormal associated Legendre functions in ``s = sin(theta)``.

``Pbar[l, M](s)`` is normalized so that ``int_{-1}^{1} Pbar_l Pbar_k ds`` is
``delta_lk``; no Condon-Shortley phase.
"""

from __future__ import annotations

import numpy as np


def _sectoral_factor(M: int) -> float:
    # Pbar_M^M / (1 - s^2)^(M/2), a positive constant
    val = 1.0 / np.sqrt(2.0)
    for k in range(1, M + 1):
        val *= np.sqrt((2.0 * k + 1.0) / (2.0 * k))
    return val


def alf_table(M: int, n: int, s, reduced: bool = False):
    """Values and ``(1 - s^2) d/ds`` of ``Pbar_l^M`` for ``l = M, ..., M + n - 1``.

    Returns two arrays of shape ``(n, len(s))``. With ``reduced=True`` the
    common factor ``(1 - s^2)^(M/2)`` is dropped from the values (the
    derivative table is then not returned meaningfully and is ``None``).
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    P = np.empty((n, s.size))
    if reduced:
        P[0] = _sectoral_factor(M)
    else:
        P[0] = _sectoral_factor(M) * (1.0 - s * s) ** (0.5 * M)
    if n > 1:
        P[1] = np.sqrt(2.0 * M + 3.0) * s * P[0]
    a_prev = np.sqrt(2.0 * M + 3.0)
    for k in range(2, n):
        l = M + k
        a = np.sqrt((4.0 * l * l - 1.0) / (l * l - M * M))
        P[k] = a * (s * P[k - 1] - P[k - 2] / a_prev)
        a_prev = a
    if reduced:
        return P, None

    A = np.empty_like(P)
    for k in range(n):
        l = M + k
        A[k] = -l * s * P[k]
        if k > 0:
            A[k] += np.sqrt((2.0 * l + 1.0) / (2.0 * l - 1.0) * (l * l - M * M)) * P[k - 1]
    return P, A
