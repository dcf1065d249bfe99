"""
Special functions
Log-gamma, digamma and trigamma for the Beta density and its entropy.
All functions accept scalars or numpy arrays and require x > 0.
"""

import math
from typing import Union

import numpy as np

from a0c.exceptions import DomainError

ArrayLike = Union[float, np.ndarray]

# Lanczos approximation, g = 7, 9 terms
_LANCZOS_G = 7.0
_LANCZOS_COEFFS = np.array([
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
])
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# below this the recurrence is used to shift the argument up
_ASYMPTOTIC_FROM = 10.0


def _as_positive_array(x: ArrayLike, name: str) -> np.ndarray:
    arr = np.array(x, dtype=np.float64, copy=True).reshape(-1)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise DomainError(f"{name} requires finite x > 0", f"got {x!r}")
    return arr


def _shape_like(result: np.ndarray, x: ArrayLike) -> ArrayLike:
    return float(result[0]) if np.ndim(x) == 0 else result.reshape(np.shape(x))


def _lanczos(x: np.ndarray) -> np.ndarray:
    # valid for x >= 0.5
    z = x - 1.0
    series = np.full_like(z, _LANCZOS_COEFFS[0])
    for i, coeff in enumerate(_LANCZOS_COEFFS[1:], start=1):
        series = series + coeff / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * np.log(t) - t + np.log(series)


def log_gamma(x: ArrayLike) -> ArrayLike:
    """
    Natural log of the gamma function.

    Raises:
        DomainError: x <= 0 or non-finite
    """
    arr = _as_positive_array(x, "log_gamma")
    out = np.empty_like(arr)
    upper = arr >= 0.5
    out[upper] = _lanczos(arr[upper])
    lower = ~upper
    if np.any(lower):
        # reflection: Gamma(x) Gamma(1 - x) = pi / sin(pi x), 0 < x < 0.5
        xl = arr[lower]
        out[lower] = math.log(math.pi) - np.log(np.sin(math.pi * xl)) - _lanczos(1.0 - xl)
    return _shape_like(out, x)


def log_beta(a: ArrayLike, b: ArrayLike) -> ArrayLike:
    """log B(a, b)"""
    a_arr, b_arr = np.broadcast_arrays(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
    out = np.asarray(log_gamma(a_arr)) + np.asarray(log_gamma(b_arr)) - np.asarray(log_gamma(a_arr + b_arr))
    return float(out) if out.ndim == 0 else out


def digamma(x: ArrayLike) -> ArrayLike:
    """
    psi(x) = d/dx log Gamma(x), via psi(x) = psi(x + 1) - 1/x and the
    asymptotic series.

    Raises:
        DomainError: x <= 0 or non-finite
    """
    arr = _as_positive_array(x, "digamma")
    acc = np.zeros_like(arr)
    small = arr < _ASYMPTOTIC_FROM
    while np.any(small):
        acc[small] -= 1.0 / arr[small]
        arr[small] += 1.0
        small = arr < _ASYMPTOTIC_FROM

    inv = 1.0 / arr
    inv2 = inv * inv
    series = inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))))
    out = acc + np.log(arr) - 0.5 * inv - series
    return _shape_like(out, x)


def trigamma(x: ArrayLike) -> ArrayLike:
    """
    psi'(x), via psi'(x) = psi'(x + 1) + 1/x^2 and the asymptotic series.

    Raises:
        DomainError: x <= 0 or non-finite
    """
    arr = _as_positive_array(x, "trigamma")
    acc = np.zeros_like(arr)
    small = arr < _ASYMPTOTIC_FROM
    while np.any(small):
        acc[small] += 1.0 / (arr[small] * arr[small])
        arr[small] += 1.0
        small = arr < _ASYMPTOTIC_FROM

    inv = 1.0 / arr
    inv2 = inv * inv
    series = inv * (1.0 + inv * (0.5 + inv * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * (5.0 / 66.0)))))))
    out = acc + series
    return _shape_like(out, x)
