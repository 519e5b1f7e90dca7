"""Closed-form integrals of polynomial-times-exponential kernels.

Everything the moment method and the energy oracle need reduces to

    I_m(z, T) = integral_0^T s**m exp(z*s) ds,

computed by the stable upward recurrence ``I_m = (T**m e^{zT} - m I_{m-1})/z``
away from z = 0 and by the Taylor series near it.  Degrees stay tiny (chain
lengths), so the recurrence is benign.  An arbitrary-precision twin backs the
moment solver, whose Gram matrices are exponentially ill conditioned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np


def poly_exp_integral(m: int, z: complex, T: float) -> complex:
    """integral_0^T s**m exp(z*s) ds for integer m >= 0."""
    if m < 0:
        raise ValueError("polynomial degree must be nonnegative")
    if abs(z) * T < 0.25:
        # Taylor series in z*T; converges in a few terms on this ball.
        total = 0.0 + 0.0j
        term_pow = 1.0 + 0.0j
        for k in range(60):
            total += term_pow * T ** (m + k + 1) / (math.factorial(k) * (m + k + 1))
            term_pow *= z
            if abs(term_pow) * T ** (m + k + 2) / math.factorial(k + 1) < 1e-18 * max(abs(total), 1e-300):
                break
        return complex(total)
    ezt = np.exp(z * T)
    val = (ezt - 1.0) / z
    for k in range(1, m + 1):
        val = (T**k * ezt - k * val) / z
    return complex(val)


def poly_exp_integral_mp(m: int, z, T) -> "mpmath.mpc":
    """Arbitrary-precision twin of :func:`poly_exp_integral`.

    Operates at the caller's working precision; ``z`` and ``T`` are converted
    to the active mpmath context.
    """
    z = mpmath.mpc(z)
    T = mpmath.mpf(T)
    if abs(z) * T < mpmath.mpf("0.25"):
        total = mpmath.mpc(0)
        term_pow = mpmath.mpc(1)
        tol = mpmath.mpf(10) ** (-mpmath.mp.dps - 5)
        for k in range(200):
            total += term_pow * T ** (m + k + 1) / (mpmath.factorial(k) * (m + k + 1))
            term_pow *= z
            if abs(term_pow) * T ** (m + k + 2) / mpmath.factorial(k + 1) < tol * max(abs(total), mpmath.mpf("1e-300")):
                break
        return total
    ezt = mpmath.exp(z * T)
    val = (ezt - 1) / z
    for k in range(1, m + 1):
        val = (T**k * ezt - k * val) / z
    return val


@dataclass(frozen=True)
class KernelTerm:
    """One summand ``coef * (T-t)**degree * exp(rate*(T-t))`` of a kernel."""

    coef: complex
    rate: complex
    degree: int


def kernel_inner(row_a: list[KernelTerm], row_b: list[KernelTerm], T: float) -> complex:
    """L2(0,T) pairing ``integral k_a(t) * conj(k_b(t)) dt`` in closed form."""
    total = 0.0 + 0.0j
    for a in row_a:
        for b in row_b:
            z = a.rate + np.conj(b.rate)
            total += a.coef * np.conj(b.coef) * poly_exp_integral(a.degree + b.degree, z, T)
    return complex(total)


def kernel_against_exponential(row: list[KernelTerm], degree: int, rate: complex, T: float) -> complex:
    """``integral_0^T conj(k(t)) * (T-t)**degree * exp(rate*(T-t)) dt``."""
    total = 0.0 + 0.0j
    for term in row:
        z = np.conj(term.rate) + rate
        total += np.conj(term.coef) * poly_exp_integral(term.degree + degree, z, T)
    return complex(total)


def signal_energy_exact(terms, T: float) -> float:
    """Exact bilinear expansion of ``integral_0^T |y(t)|**2 dt``.

    ``terms`` iterates objects carrying ``coefficient``, ``rate`` and
    ``poly_degree`` fields; used as the independent oracle against the
    quadrature-based energy.
    """
    term_list = list(terms)
    total = 0.0 + 0.0j
    for a in term_list:
        for b in term_list:
            z = a.rate + np.conj(b.rate)
            total += (
                a.coefficient
                * np.conj(b.coefficient)
                * poly_exp_integral(a.poly_degree + b.poly_degree, z, T)
            )
    return float(total.real)
