"""Specialized Gauss hypergeometric function for path-loss integrals.

Interference tail integrals of the form ``int_A^inf v dv / (1 + v^eta / c)``
reduce to ``2F1(1, 1 - 2/eta; 2 - 2/eta; -x)`` with x >= 0 and eta > 2.
Because the second and third parameters differ by one, the series collapses
to ``sum_k b / (b + k) * (-x)^k`` with ``b = 1 - 2/eta``, and the function
has the exact large-argument expansion

    f(x) = b * pi / (sin(pi b) * x^b) - b * sum_k (-1)^k x^(-1-k) / (k+1-b),

so no general-purpose hypergeometric machinery is needed.  Three regions
are used: the defining series for small x, a Pfaff-transformed series in
x/(1+x) for moderate x, and the expansion above for large x.  All are
evaluated to ~1e-14 relative accuracy, vectorized over numpy arrays.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NumericError

_SMALL_MAX = 0.4
_LARGE_MIN = 2.5
_MAX_TERMS = 400


def _series_small(x, b):
    # sum_k b/(b+k) (-x)^k, |x| <= 0.4
    out = np.ones_like(x)
    term = np.ones_like(x)
    for k in range(1, _MAX_TERMS):
        term *= -x
        out += b / (b + k) * term
        if np.all(np.abs(term) <= 1e-17 * np.abs(out)):
            return out
    raise NumericError("hypergeometric small-x series did not converge")


def _series_pfaff(x, b):
    # f(x) = (1+x)^-1 sum_k k!/( (b+1)_k ) w^k with w = x/(1+x)
    w = x / (1.0 + x)
    out = np.ones_like(x)
    term = np.ones_like(x)
    for k in range(_MAX_TERMS):
        term *= (k + 1.0) / (b + 1.0 + k) * w
        out += term
        if np.all(term <= 1e-17 * out):
            return out / (1.0 + x)
    raise NumericError("hypergeometric transformed series did not converge")


def _series_large(x, b):
    head = b * math.pi / math.sin(math.pi * b) * x ** (-b)
    tail = np.zeros_like(x)
    term = 1.0 / x
    for k in range(_MAX_TERMS):
        tail += term / (k + 1.0 - b)
        term *= -1.0 / x
        if np.all(np.abs(term) / (k + 2.0 - b) <= 1e-17 * np.abs(head)):
            return head - b * tail
    raise NumericError("hypergeometric large-x expansion did not converge")


def hyp2f1_eta(x, eta):
    """Evaluate ``2F1(1, 1 - 2/eta; 2 - 2/eta; -x)`` for x >= 0, eta > 2.

    Accepts scalars or arrays; the result lies in (0, 1] and decreases
    monotonically in x.
    """
    if eta <= 2.0:
        raise NumericError(f"path-loss exponent must exceed 2, got {eta}")
    b = 1.0 - 2.0 / eta
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if np.any(arr < 0) or np.any(~np.isfinite(arr)):
        raise NumericError("argument must be finite and non-negative")
    out = np.empty_like(arr)
    small = arr <= _SMALL_MAX
    large = arr >= _LARGE_MIN
    mid = ~small & ~large
    if np.any(small):
        out[small] = _series_small(arr[small], b)
    if np.any(mid):
        out[mid] = _series_pfaff(arr[mid], b)
    if np.any(large):
        out[large] = _series_large(arr[large], b)
    return float(out[0]) if scalar else out


def radial_tail(c, lower, eta):
    """Closed form of ``int_lower^inf v dv / (1 + v^eta / c)`` for c >= 0.

    This is the building block of every area-process interference exponent;
    equals ``c * lower^(2-eta) / (eta-2) * hyp2f1_eta(c / lower^eta, eta)``.
    """
    c = np.asarray(c, dtype=float)
    return c * lower ** (2.0 - eta) / (eta - 2.0) * hyp2f1_eta(c / lower**eta, eta)
