"""Scalar special functions with log-scaled variants.

Everything downstream (GIG moments, hypergeometric moments, the closed-form
coefficient marginals) funnels through this module.  Ratios of modified
Bessel functions are always formed as differences of log values so they
survive arguments far outside the linearly representable range.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.special as sp

EULER_GAMMA = 0.5772156649015328606

# d/dnu [ (gamma(1+nu) - gamma(1-nu)) / (2 nu) ] expansion coefficient:
# gamma'''(1)/6, used for nu below the cancellation threshold.
_GAMMA3_OVER_6 = -0.9074790760808862

# Below this argument the leading small-z expansion of K_nu is exact to
# well beyond 1e-10 relative; above it scipy's kve is finite for every
# order this package ever requests.
_SMALL_Z = 1e-8


@dataclass(frozen=True)
class SpecialValue:
    """A special-function value, possibly carried on the log scale."""

    value: float
    log_scale: bool = False

    def linear(self) -> float:
        """The value on the linear scale (may overflow to inf)."""
        if not self.log_scale:
            return self.value
        return math.exp(self.value)


def log_gamma(x: float) -> float:
    """ln Gamma(x) for x > 0."""
    if not math.isfinite(x) or x <= 0.0:
        raise ValueError(f"log_gamma requires finite x > 0, got {x}")
    return math.lgamma(x)


def _log_k_small_z(order: float, z: float) -> float:
    """ln K_order(z) from the leading terms of the z -> 0 expansion.

    Valid for z <= _SMALL_Z where the dropped terms are O(z^2) relative.
    Stable across order -> 0 and order -> integer because the two
    reflection terms are combined before exponentiation.
    """
    nu = abs(order)
    ln_half_z = math.log(0.5 * z)
    if nu == 0.0:
        # K_0(z) ~ -ln(z/2) - euler_gamma
        return math.log(-ln_half_z - EULER_GAMMA)
    x = nu * ln_half_z
    if x < -25.0:
        # single dominant term; the reflected term is < e^{-50} relative
        return math.lgamma(nu) - math.log(2.0) - x
    # K_nu ~ -Gamma(1+nu) sinh(nu L)/nu + e^{nu L} (Gamma(1+nu)-Gamma(1-nu))/(2 nu)
    # The second factor tends to -euler_gamma as nu -> 0; switch to its
    # Taylor form when the direct difference would cancel.
    if nu < 1e-4:
        gdiff = -EULER_GAMMA + _GAMMA3_OVER_6 * nu * nu
    else:
        gdiff = (math.gamma(1.0 + nu) - math.gamma(1.0 - nu)) / (2.0 * nu)
    val = -math.gamma(1.0 + nu) * math.sinh(x) / nu + math.exp(x) * gdiff
    return math.log(val)


def _debye_u(k: int, p: float) -> float:
    """Polynomials of the uniform large-order expansion, orders 0..4."""
    if k == 0:
        return 1.0
    if k == 1:
        return (3.0 * p - 5.0 * p**3) / 24.0
    if k == 2:
        return (81.0 * p**2 - 462.0 * p**4 + 385.0 * p**6) / 1152.0
    if k == 3:
        return (30375.0 * p**3 - 369603.0 * p**5 + 765765.0 * p**7
                - 425425.0 * p**9) / 414720.0
    return (4465125.0 * p**4 - 94121676.0 * p**6 + 349922430.0 * p**8
            - 446185740.0 * p**10 + 185910725.0 * p**12) / 39813120.0


def _log_k_uniform(order: float, z: float) -> float:
    """ln K_order(z) by the uniform large-order expansion.

    Fallback for the large-order/small-argument corner where the linear
    scaled routine overflows; relative error ~ order^-5.
    """
    nu = abs(order)
    w = z / nu
    root = math.hypot(1.0, w)
    p = 1.0 / root
    eta = root + math.log(w / (1.0 + root))
    series = sum((-1.0) ** k * _debye_u(k, p) / nu**k for k in range(5))
    return 0.5 * math.log(math.pi / (2.0 * nu)) - nu * eta \
        - 0.5 * math.log(root) + math.log(series)


def _log_kv_scalar(order: float, z: float) -> float:
    nu = abs(order)
    if z <= _SMALL_Z:
        return _log_k_small_z(nu, z)
    scaled = sp.kve(nu, z)
    if math.isfinite(scaled) and scaled > 0.0:
        return math.log(scaled) - z
    return _log_k_uniform(nu, z)


def log_bessel_k(order, z):
    """ln K_order(z), elementwise over numpy arrays.

    Finite for any real order and any z in (0, 1e6], including regimes
    where K itself overflows or underflows the double range.
    """
    if np.isscalar(order) and np.isscalar(z):
        if z <= 0.0 or not math.isfinite(z):
            raise ValueError(f"bessel_k requires z > 0, got {z}")
        return _log_kv_scalar(float(order), float(z))
    order_arr, z_arr = np.broadcast_arrays(np.asarray(order, dtype=float),
                                           np.asarray(z, dtype=float))
    if np.any(z_arr <= 0.0) or not np.all(np.isfinite(z_arr)):
        raise ValueError("bessel_k requires z > 0")
    nu = np.abs(order_arr)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        scaled = sp.kve(nu, z_arr)
        out = np.log(scaled) - z_arr
    bad = ~np.isfinite(out) | (z_arr <= _SMALL_Z)
    if np.any(bad):
        out = np.array(out, copy=True)
        flat_nu = nu[bad].ravel()
        flat_z = z_arr[bad].ravel()
        out[bad] = [_log_kv_scalar(n, x) for n, x in zip(flat_nu, flat_z)]
    return out


def bessel_k(order: float, z: float, log_scale: bool = False) -> SpecialValue:
    """Modified Bessel function of the second kind, K_order(z).

    With ``log_scale=True`` the result carries ln K, which stays finite
    far beyond the range where K itself is representable.
    """
    if not (math.isfinite(z) and z > 0.0):
        raise ValueError(f"bessel_k requires z > 0, got {z}")
    logval = _log_kv_scalar(float(order), float(z))
    if log_scale:
        return SpecialValue(logval, log_scale=True)
    return SpecialValue(math.exp(logval), log_scale=False)


def gauss_2f1(p: float, q: float, r: float, z: float) -> float:
    """Gauss hypergeometric 2F1(p, q; r; z) on the region z < 1, p,q,r > 0."""
    if z >= 1.0:
        raise ValueError(f"gauss_2f1 requires z < 1, got {z}")
    if p <= 0.0 or q <= 0.0 or r <= 0.0:
        raise ValueError("gauss_2f1 is restricted to positive parameters")
    out = float(sp.hyp2f1(p, q, r, z))
    if not math.isfinite(out):
        raise ValueError(f"gauss_2f1 did not converge at ({p}, {q}, {r}, {z})")
    return out


def _exp_scaled_e1_series(z: float) -> float:
    # e^z * E1(z) via the ascending series, for z <= 1.
    total = -EULER_GAMMA - math.log(z)
    term = 1.0
    for k in range(1, 60):
        term *= -z / k
        inc = -term / k
        total += inc
        if abs(inc) < 1e-18 * abs(total):
            break
    return math.exp(z) * total


def _exp_scaled_e1_cf(z: float) -> float:
    # e^z * E1(z) via the continued fraction 1/(z+1- 1/(z+3- 4/(z+5- ...))),
    # modified Lentz recursion; for z > 1.
    tiny = 1e-300
    b = z + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for k in range(1, 500):
        a = -(k * k)
        b += 2.0
        d = a * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + a / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h
    raise ArithmeticError(f"exponential-integral continued fraction stalled at z={z}")


def exp_scaled_upper_inc_gamma0(z: float) -> float:
    """e^z * Gamma(0, z), the overflow-safe product needed for |z| large.

    Series branch for z <= 1, continued fraction above; the naive product
    e^z * Gamma(0, z) overflows past z ~ 700 while this stays O(1/z).
    """
    if not (math.isfinite(z) and z > 0.0):
        raise ValueError(f"exp_scaled_upper_inc_gamma0 requires z > 0, got {z}")
    if z <= 1.0:
        return _exp_scaled_e1_series(z)
    return _exp_scaled_e1_cf(z)


def upper_inc_gamma(s: float, z: float) -> float:
    """Upper incomplete gamma Gamma(s, z) for s >= 0, z >= 0.

    The s = 0 case (the exponential integral) is fully supported; it is
    what the half-integer coefficient marginals consume.
    """
    if s < 0.0 or not math.isfinite(s):
        raise ValueError(f"upper_inc_gamma requires s >= 0, got {s}")
    if z < 0.0 or not math.isfinite(z):
        raise ValueError(f"upper_inc_gamma requires z >= 0, got {z}")
    if s == 0.0:
        if z == 0.0:
            raise ValueError("Gamma(0, 0) diverges")
        if z > 700.0:
            # e^{-z} underflows; the linear value is a true underflow-zero
            return math.exp(-z + math.log(exp_scaled_upper_inc_gamma0(z))) if z < 745 else 0.0
        return math.exp(-z) * exp_scaled_upper_inc_gamma0(z)
    if z == 0.0:
        return math.gamma(s)
    return float(sp.gammaincc(s, z)) * math.gamma(s)


def erf(x: float) -> float:
    """Error function erf(x) for finite real x."""
    if not math.isfinite(x):
        raise ValueError(f"erf requires finite input, got {x}")
    return math.erf(x)
