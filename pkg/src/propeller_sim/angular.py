"""Angular-momentum algebra: Wigner 3j symbols, normalized associated
Legendre tables, and rank-2 spherical-tensor matrix elements.

The 3j symbol uses the Racah sum with log-factorials, combined per term in
log space.  For the rank-2 couplings needed here the alternating sum has at
most five terms, which keeps it accurate to ~1e-12 through j of a few
hundred.  Matrix elements that have no finite spherical-tensor expansion
(e.g. cos 2phi, whose theta overlaps run over all Delta-l) are built instead
by exact Gauss-Legendre quadrature: the integrands are polynomials in
cos(theta), so the quadrature is exact at machine precision.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

_LOG_FACT_CACHE = gammaln(np.arange(1, 2048))  # log(n!) = _LOG_FACT_CACHE[n]


def _logfact(n):
    return _LOG_FACT_CACHE[np.asarray(n)]


def wigner3j(j1: int, j2: int, j3: int, m1: int, m2: int, m3: int) -> float:
    """Wigner 3j symbol for integer arguments."""
    if m1 + m2 + m3 != 0:
        return 0.0
    if abs(m1) > j1 or abs(m2) > j2 or abs(m3) > j3:
        return 0.0
    if j3 < abs(j1 - j2) or j3 > j1 + j2:
        return 0.0
    if m1 == m2 == m3 == 0 and (j1 + j2 + j3) % 2 == 1:
        return 0.0      # parity zero, exact (the Racah sum only cancels in floats)
    log_delta = (_logfact(j1 + j2 - j3) + _logfact(j1 - j2 + j3)
                 + _logfact(-j1 + j2 + j3) - _logfact(j1 + j2 + j3 + 1))
    log_outer = (_logfact(j1 + m1) + _logfact(j1 - m1)
                 + _logfact(j2 + m2) + _logfact(j2 - m2)
                 + _logfact(j3 + m3) + _logfact(j3 - m3))
    k_min = max(0, j2 - j3 - m1, j1 - j3 + m2)
    k_max = min(j1 + j2 - j3, j1 - m1, j2 + m2)
    total = 0.0
    base = 0.5 * (log_delta + log_outer)
    for k in range(k_min, k_max + 1):
        log_den = (_logfact(k) + _logfact(j1 + j2 - j3 - k)
                   + _logfact(j1 - m1 - k) + _logfact(j2 + m2 - k)
                   + _logfact(j3 - j2 + m1 + k) + _logfact(j3 - j1 - m2 + k))
        total += (-1.0) ** k * math.exp(base - log_den)
    return (-1.0) ** (j1 - j2 - m3) * total


def gaunt_y2(l1: int, m1: int, q: int, l2: int, m2: int) -> float:
    """<l1 m1 | Y_{2q} | l2 m2> (spherical-harmonic triple integral)."""
    if m1 != m2 + q:
        return 0.0
    pref = math.sqrt((2 * l1 + 1) * 5 * (2 * l2 + 1) / (4.0 * math.pi))
    return ((-1.0) ** m1 * pref * wigner3j(l1, 2, l2, 0, 0, 0)
            * wigner3j(l1, 2, l2, -m1, q, m2))


def y2_components(p: np.ndarray) -> np.ndarray:
    """[Y_{2,-2} .. Y_{2,2}] evaluated at the unit vector p."""
    x, y, z = p
    c2 = math.sqrt(15.0 / (32.0 * math.pi))
    c1 = math.sqrt(15.0 / (8.0 * math.pi))
    c0 = math.sqrt(5.0 / (16.0 * math.pi))
    xp, xm = complex(x, y), complex(x, -y)
    return np.array([c2 * xm * xm, c1 * z * xm, c0 * (3 * z * z - 1),
                     -c1 * z * xp, c2 * xp * xp])


def legendre_table(l_max: int, m: int, x: np.ndarray) -> np.ndarray:
    """Fully normalized associated Legendre functions, rows l = |m| .. l_max.

    Returns Theta[l - |m|, i] = Y_{l m}(theta_i, 0) at x = cos(theta), real
    for any sign of m (Condon-Shortley phase included), stable to high l via
    upward recursion.
    """
    am = abs(m)
    if l_max < am:
        return np.zeros((0, len(x)))
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    rows = np.empty((l_max - am + 1, len(x)))
    pmm = np.full(len(x), 1.0 / math.sqrt(4.0 * math.pi))
    for k in range(1, am + 1):
        pmm = -math.sqrt((2 * k + 1) / (2.0 * k)) * s * pmm
    rows[0] = pmm
    if l_max > am:
        rows[1] = math.sqrt(2.0 * am + 3.0) * x * pmm
    for l in range(am + 2, l_max + 1):
        a = math.sqrt((4.0 * l * l - 1.0) / (l * l - am * am))
        b = math.sqrt(((l - 1.0) ** 2 - am * am) / (4.0 * (l - 1.0) ** 2 - 1.0))
        rows[l - am] = a * (x * rows[l - am - 1] - b * rows[l - am - 2])
    if m < 0:
        rows = rows * (-1.0) ** am
    return rows


def symtop_d2_element(Jp: int, Mp: int, J: int, M: int, K: int, p: int) -> float:
    """<J' K M' | D^{2*}_{p,0} | J K M> for symmetric-top eigenstates."""
    if Mp != M + p:
        return 0.0
    pref = math.sqrt((2.0 * Jp + 1) * (2.0 * J + 1))
    sign = (-1.0) ** (p + M - K)
    return (pref * sign * wigner3j(Jp, 2, J, Mp, -p, -M)
            * wigner3j(Jp, 2, J, K, 0, -K))
