"""Adaptive quadrature helpers shared by the covariance and limit modules.

Everything here reduces to 1D integrals handed to Gauss-Kronrod adaptive
quadrature (scipy's QUADPACK).  Half-line integrals with algebraic endpoint
behavior are regularized by power substitutions so the integrand seen by
the quadrature routine is smooth; this is what lets the limit formulas be
evaluated to ~1e-10 instead of fighting oscillatory tails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

# Relative tolerances: inner integrals / nested outer integrals.
INNER_RTOL = 1e-8
OUTER_RTOL = 1e-6

# Domain-doubling divergence detection: an integral is declared infinite
# when this many successive doublings each grow the partial integral by
# more than GROWTH_TOL relative.
DOUBLING_PASSES = 3
GROWTH_TOL = 0.01


@dataclass(frozen=True)
class QuadResult:
    """Value of an integral together with an absolute error estimate."""

    value: float
    error: float

    def __mul__(self, c: float) -> "QuadResult":
        return QuadResult(self.value * c, self.error * abs(c))

    __rmul__ = __mul__

    def __add__(self, other: "QuadResult") -> "QuadResult":
        return QuadResult(self.value + other.value, self.error + other.error)


def _quad(f, a, b, rtol=INNER_RTOL, limit=200) -> QuadResult:
    val, err = integrate.quad(f, a, b, epsabs=1e-300, epsrel=rtol, limit=limit)
    return QuadResult(val, err)


def half_line(
    f: Callable[[float], float],
    power_zero: float = 0.0,
    power_inf: float = -2.0,
    rtol: float = INNER_RTOL,
    split: float = 1.0,
) -> QuadResult:
    """Integrate f over (0, inf) when f ~ s^power_zero at 0 and ~ s^power_inf at inf.

    The interval is split at `split`; each piece is mapped to a finite
    interval with a power substitution chosen so the transformed integrand is
    bounded.  Requires power_zero > -1 and power_inf < -1.
    """
    if power_zero <= -1:
        raise ValueError(f"non-integrable origin: power {power_zero}")
    if power_inf >= -1:
        raise ValueError(f"non-integrable tail: power {power_inf}")

    # (0, split]: s = split * w^q with q = 1/(1+power_zero) flattens s^power_zero.
    q = 1.0 / (1.0 + power_zero)

    def near(w):
        s = split * w**q
        return f(s) * split * q * w ** (q - 1.0)

    r1 = _quad(near, 0.0, 1.0, rtol)

    # [split, inf): s = split/v, then the same flattening at v -> 0.
    pz2 = -power_inf - 2.0  # transformed power at v=0
    q2 = 1.0 / (1.0 + pz2) if pz2 < 0 else 1.0

    def far(w):
        v = w**q2
        s = split / v
        return f(s) * split / v**2 * q2 * w ** (q2 - 1.0)

    r2 = _quad(far, 0.0, 1.0, rtol)
    return r1 + r2


def declared_divergent(
    f: Callable[[float], float],
    start: float = 1.0,
    passes: int = DOUBLING_PASSES,
    rtol: float = OUTER_RTOL,
    max_passes: int = 48,
) -> tuple[bool, float]:
    """Domain-doubling divergence check for integrals of f over (0, inf).

    Integrates over (0, D] and keeps doubling D.  Convergent integrals see
    the per-doubling growth drop below GROWTH_TOL and stay there; an
    integral is declared divergent when the doubling budget is exhausted
    with the last `passes` doublings each still growing the total by more
    than GROWTH_TOL relative (a convergent integral with a slow initial
    transient settles long before the budget).  Returns (diverged, value).
    """
    total = _quad(f, 0.0, start, rtol).value
    lo = start
    growths = []
    for _ in range(max_passes):
        piece = _quad(f, lo, 2 * lo, rtol).value
        new = total + piece
        growth = abs(piece) / abs(new) if new != 0 else 0.0
        growths.append(growth)
        total, lo = new, 2 * lo
        if len(growths) >= passes and all(g <= GROWTH_TOL for g in growths[-passes:]):
            return False, total
    return all(g > GROWTH_TOL for g in growths[-passes:]), total


def gamma_fn(x: float) -> float:
    """Euler gamma via scipy's Lanczos-type implementation."""
    return float(special.gamma(x))


# ---------------------------------------------------------------------------
# Gaussian-weighted building blocks.
#
# gauss_cos_moment(a, u) = int (1 - cos(a z)) / z^2 * exp(-u z^2) dz over R,
# in closed form.  It is the per-coordinate factor of every Fourier-side
# tent integral once a Gaussian factor exp(-u z^2) is present, either from
# a Gaussian spectral density or from the Gaussian-mixture representation
# of a Riesz weight.
# ---------------------------------------------------------------------------


def gauss_cos_moment(a, u):
    a = np.abs(np.asarray(a, dtype=float))
    u = np.asarray(u, dtype=float)
    x = a * a / (4.0 * u)
    su = np.sqrt(u)
    # the exact form loses the subtracted term to cancellation once
    # 1 - exp(-x) underflows; switch to the series in x = a^2/(4u)
    small = x < 0.01
    xs = np.where(small, x, 0.0)
    series = (
        (a * a / 2.0)
        * np.sqrt(np.pi / u)
        * (1.0 - xs / 6.0 + xs * xs / 30.0 - xs**3 / 168.0)
    )
    af = np.where(small, 1.0, a)
    exact = af * np.pi * special.erf(af / (2.0 * su)) - 2.0 * np.sqrt(np.pi * u) * (
        1.0 - np.exp(-(af * af) / (4.0 * u))
    )
    out = np.where(small, series, exact)
    return out if out.ndim else float(out)


def box_pair_gauss_factor(m: float, n: float, u, scale: float = 1.0):
    """int Re[psi-coordinate-factor](scale*z) exp(-u z^2) dz, closed form.

    The coordinate factor of the tent transform with box widths (m, n) has
    real part [(1-cos(m w)) + (1-cos(n w)) - (1-cos((n-m) w))]/(m n w^2).
    """
    g = (
        gauss_cos_moment(m * scale, u)
        + gauss_cos_moment(n * scale, u)
        - gauss_cos_moment((n - m) * scale, u)
    )
    return g / (m * n * scale * scale)


def trapezoid_gauss_integral(m: float, n: float, scale, u):
    """int tent1d(x/scale; m, n) exp(-u x^2) dx in closed form.

    tent1d is the convolution of normalized box indicators of widths m <= n:
    a trapezoid rising on [-n, m-n], flat at 1/n on [m-n, 0], falling on
    [0, m].  Each linear piece integrates against the Gaussian via erf/exp.
    """
    if m > n:
        m, n = n, m
    total = 0.0
    su = np.sqrt(u)
    pieces = (
        (-n, m - n, 1.0 / m, 1.0 / (m * n)),  # a + b*y with y = x/scale
        (m - n, 0.0, 1.0 / n, 0.0),
        (0.0, m, 1.0 / n, -1.0 / (m * n)),
    )
    for y0, y1, aa, bb in pieces:
        if y1 <= y0:
            continue
        x0, x1 = y0 * scale, y1 * scale
        t1 = aa * np.sqrt(np.pi) / (2.0 * su) * (special.erf(su * x1) - special.erf(su * x0))
        # exp(-u x1^2) - exp(-u x0^2) via expm1 anchored at the smaller
        # exponent, surviving both underflow of the difference and overflow
        a_, b_ = u * x0 * x0, u * x1 * x1
        lo = np.minimum(a_, b_)
        diff = np.where(
            b_ >= a_,
            np.exp(-lo) * np.expm1(-np.abs(b_ - a_)),
            -np.exp(-lo) * np.expm1(-np.abs(a_ - b_)),
        )
        t2 = (bb / scale) * (-1.0 / (2.0 * u)) * diff
        total = total + t1 + t2
    return total


def psi_riesz_integral(m: float, n: float, dim: int, alpha: float, rtol: float = INNER_RTOL) -> QuadResult:
    """int_{R^d} Re psi_{m,n}(z) ||z||^(alpha-d) dz for 0 < alpha < 2.

    Evaluated exactly through the Gaussian-mixture representation
    ||z||^(-gamma) = Gamma(gamma/2)^{-1} int_0^inf u^{gamma/2-1} e^{-u||z||^2} du
    with gamma = d - alpha, which tensorizes the d-dimensional oscillatory
    integral into closed-form erf factors under a single 1D u-integral.
    """
    gamma = dim - alpha
    if gamma <= 0:
        raise ValueError("requires alpha < d")

    def integrand(u):
        return u ** (gamma / 2.0 - 1.0) * box_pair_gauss_factor(m, n, u) ** dim

    # u->0: u^{gamma/2-1};  u->inf: coordinate factor ~ sqrt(pi/u) each.
    res = half_line(integrand, power_zero=gamma / 2.0 - 1.0,
                    power_inf=gamma / 2.0 - 1.0 - dim / 2.0, rtol=rtol)
    return res * (1.0 / gamma_fn(gamma / 2.0))


def tent_riesz_integral(m: float, n: float, dim: int, gamma: float, rtol: float = INNER_RTOL) -> QuadResult:
    """int_{R^d} (I_m * I~_n)(x) ||x||^(-gamma) dx for 0 < gamma < d.

    d = 1 is integrated exactly piecewise (the weight is a power and the
    tent is piecewise linear); d >= 2 goes through the Gaussian mixture.
    """
    if not 0 < gamma < dim:
        raise ValueError("requires 0 < gamma < d")
    if m > n:
        m, n = n, m
    if dim == 1:
        def seg(y0, y1, aa, bb):
            # int (aa + bb*y) |y|^-gamma dy on [y0, y1] with y0, y1 same sign
            def F(y):
                ay = abs(y)
                if ay == 0.0:
                    return 0.0
                sgn = math.copysign(1.0, y)
                return sgn * (aa * ay ** (1 - gamma) / (1 - gamma)
                              + sgn * bb * ay ** (2 - gamma) / (2 - gamma))
            return F(y1) - F(y0)

        val = (
            seg(-n, m - n, 1.0 / m, 1.0 / (m * n))
            + seg(m - n, 0.0, 1.0 / n, 0.0)
            + seg(0.0, m, 1.0 / n, -1.0 / (m * n))
        )
        return QuadResult(val, abs(val) * 1e-14)

    def integrand(u):
        return u ** (gamma / 2.0 - 1.0) * trapezoid_gauss_integral(m, n, 1.0, u) ** dim

    res = half_line(integrand, power_zero=gamma / 2.0 - 1.0,
                    power_inf=gamma / 2.0 - 1.0 - dim / 2.0, rtol=rtol)
    return res * (1.0 / gamma_fn(gamma / 2.0))
