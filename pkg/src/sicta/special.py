"""Complex Gamma function (Lanczos approximation with reflection)."""
from __future__ import annotations

import cmath
import math

from .errors import PoleOfGamma

# Lanczos g = 7, n = 9 coefficients; relative error around 1e-15 for Re(s) >= 1/2.
_G = 7
_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)
_LOG_PI = math.log(math.pi)


def _check_pole(s: complex) -> None:
    if s.imag == 0 and s.real <= 0 and s.real == math.floor(s.real):
        raise PoleOfGamma(f"Gamma has a pole at {s.real:g}")


def _log_sin_pi(s: complex) -> complex:
    """log(sin(pi s)) that stays finite when |Im s| is large."""
    if abs(s.imag) < 20:
        return cmath.log(cmath.sin(math.pi * s))
    # sin(pi s) = (e^{i pi s} - e^{-i pi s}) / 2i; keep the dominant exponential
    if s.imag > 0:
        big = -1j * math.pi * s  # e^{-i pi s} dominates
        return big + cmath.log(1 - cmath.exp(2j * math.pi * s)) - cmath.log(-2j)
    big = 1j * math.pi * s
    return big + cmath.log(1 - cmath.exp(-2j * math.pi * s)) - cmath.log(2j)


def complex_loggamma(s: complex) -> complex:
    """A branch of log Gamma(s); only ``exp`` of it is meaningful."""
    s = complex(s)
    _check_pole(s)
    if s.real < 0.5:
        return _LOG_PI - _log_sin_pi(s) - complex_loggamma(1 - s)
    z = s - 1
    acc = _COEF[0]
    for k in range(1, _G + 2):
        acc += _COEF[k] / (z + k)
    t = z + _G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * cmath.log(t) - t + cmath.log(acc)


def complex_gamma(s: complex) -> complex:
    """Gamma(s) for complex ``s``; raises :class:`PoleOfGamma` at 0, -1, -2, ..."""
    s = complex(s)
    _check_pole(s)
    if s.real < 0.5 and abs(s.imag) < 20:
        return math.pi / (cmath.sin(math.pi * s) * complex_gamma(1 - s))
    if s.real >= 0.5 and abs(s) < 60:
        z = s - 1
        acc = _COEF[0]
        for k in range(1, _G + 2):
            acc += _COEF[k] / (z + k)
        t = z + _G + 0.5
        return math.sqrt(2 * math.pi) * t ** (z + 0.5) * cmath.exp(-t) * acc
    return cmath.exp(complex_loggamma(s))
