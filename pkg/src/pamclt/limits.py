"""Limiting covariances of rescaled spatial averages.

Four families, selected by the kernel regime:

  g          d >= 2, R(f) < inf: the time-pair functional built from the
             tent transform against the spectral measure
  d1-finite  d = 1, finite mass: (t1 ^ t2) f(R) in the Rajchman case, and
             in general only the bracket [(t1^t2) f(R), 2 (t1^t2) f(R)]
  c1/c2/c3   Riesz kernel with beta < 1, = 1, in (1, 2^d)

All time dependence enters through the harmonic-mean reparameterization
(tau, tau1, tau2) of the pair (t1, t2), so every family is symmetric in
its time arguments by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .kernels import CovarianceModel, classify_regime, riesz_fourier_constant, total_mass
from .quadrature import (
    OUTER_RTOL,
    QuadResult,
    box_pair_gauss_factor,
    gamma_fn,
    half_line,
    psi_riesz_integral,
    tent_riesz_integral,
    trapezoid_gauss_integral,
)

# Taylor switch-over for the box Fourier factor (e^{i w} - 1)/(i w).
_SERIES_CUT = 1e-4


class LimitError(Exception):
    """Requested limit family is not defined for the model/regime."""


@dataclass(frozen=True)
class TauParams:
    """Harmonic-mean reparameterization of a time pair.

    tau = 2 t1 t2/(t1+t2), tau1 = 2 t2/(t1+t2), tau2 = 2 t1/(t1+t2), so that
    tau1 + tau2 = 2 and tau = tau1 t1 = tau2 t2.
    """

    tau: float
    tau1: float
    tau2: float

    @classmethod
    def from_times(cls, t1: float, t2: float) -> "TauParams":
        if t1 <= 0 or t2 <= 0:
            raise ValueError(f"times must be positive, got ({t1}, {t2})")
        s = t1 + t2
        return cls(tau=2.0 * t1 * t2 / s, tau1=2.0 * t2 / s, tau2=2.0 * t1 / s)

    @property
    def box_small(self) -> float:
        return min(self.tau1, self.tau2)

    @property
    def box_large(self) -> float:
        return max(self.tau1, self.tau2)


@dataclass(frozen=True)
class TentTransform:
    """The convolution I_m * I~_n of normalized box indicators and its FT psi.

    m <= n are the box widths (tau1 ^ tau2, tau1 v tau2).  Spatially the
    tent is a product of per-coordinate trapezoids supported on [-n, m];
    on the Fourier side psi(0) = 1 and |psi| <= 1 with quadratic decay.
    """

    m: float
    n: float
    dim: int

    def __post_init__(self):
        if self.m <= 0 or self.n <= 0:
            raise ValueError("box widths must be positive")
        if self.m > self.n:
            raise ValueError("tent expects m <= n")

    @classmethod
    def from_tau(cls, tp: TauParams, dim: int) -> "TentTransform":
        return cls(m=tp.box_small, n=tp.box_large, dim=dim)

    def spatial(self, z) -> np.ndarray:
        """Tent values at points z, shape (..., dim); nonnegative, integral one."""
        z = np.asarray(z, dtype=float)
        if z.ndim == 0:
            z = z.reshape(1)
        if z.shape[-1] != self.dim and self.dim == 1:
            z = z[..., np.newaxis]
        m, n = self.m, self.n
        per = (np.minimum(m, z + n) - np.maximum(0.0, z)).clip(min=0.0) / (m * n)
        return np.prod(per, axis=-1)

    def psi(self, z) -> np.ndarray:
        """Fourier transform at z: prod_j boxft(m z_j) conj(boxft(n z_j))."""
        z = np.asarray(z, dtype=float)
        if z.ndim == 0:
            z = z.reshape(1)
        if z.shape[-1] != self.dim and self.dim == 1:
            z = z[..., np.newaxis]
        return np.prod(_box_ft(self.m * z) * np.conj(_box_ft(self.n * z)), axis=-1)

    def coordinate_bound(self, z) -> np.ndarray:
        """Per-coordinate product bound min(1, 2/(m|z_j|)) min(1, 2/(n|z_j|))."""
        z = np.abs(np.asarray(z, dtype=float))
        if z.ndim == 0:
            z = z.reshape(1)
        if z.shape[-1] != self.dim and self.dim == 1:
            z = z[..., np.newaxis]
        with np.errstate(divide="ignore"):
            b = np.minimum(1.0, 2.0 / (self.m * z)) * np.minimum(1.0, 2.0 / (self.n * z))
        return np.prod(b, axis=-1)


def _box_ft(w):
    """(e^{iw} - 1)/(i w), elementwise, Taylor series below the cancellation cut."""
    w = np.asarray(w, dtype=float)
    small = np.abs(w) < _SERIES_CUT
    ws = np.where(small, 1.0, w)
    exact = (np.exp(1j * ws) - 1.0) / (1j * ws)
    iw = 1j * w
    series = 1.0 + iw / 2.0 + iw**2 / 6.0 + iw**3 / 24.0 + iw**4 / 120.0
    return np.where(small, series, exact)


def tau_params(t1: float, t2: float) -> TauParams:
    return TauParams.from_times(t1, t2)


def psi(tent: TentTransform, z):
    return tent.psi(z)


# ---------------------------------------------------------------------------
# Limit families
# ---------------------------------------------------------------------------


def g_limit(model: CovarianceModel, t1: float, t2: float, rtol: float = OUTER_RTOL) -> QuadResult:
    """Prop.-3.1 family: tau (2 pi)^-d int_0^inf ds/s^d [FT of dilated tent](z) f^(dz).

    After rescaling the dilated-tent transform this is
    tau int_0^inf A(s) ds with A(s) = (2 pi)^-d int psi(s z) f^(dz).  For the
    Gaussian kernel A(s) factorizes over coordinates into closed-form erf
    factors; for general isotropic kernels the s-integral factors out as a
    model-independent tent constant times a radial moment of f^.
    """
    cls = classify_regime(model)
    if cls.limit_family != "g":
        raise LimitError(f"g limit requires MultiDimFinite regime, got {cls.regime}")
    tp = tau_params(t1, t2)
    m, n, d = tp.box_small, tp.box_large, model.dim

    if model.kind == kernels.GAUSSIAN:
        def integrand(s):
            return box_pair_gauss_factor(m, n, 0.5, scale=s) ** d

        res = half_line(integrand, power_zero=0.0, power_inf=-float(d), rtol=rtol)
        return res * (tp.tau / (2.0 * math.pi) ** d)

    # general isotropic: int_0^inf psi(s z) ds = B(z/|z|)/|z| makes the
    # spectral part a radial moment and the tent part the alpha=1 integral
    tent_const = psi_riesz_integral(m, n, d, 1.0, rtol=rtol)
    mom = kernels._spectral_radial_moment(model, d - 2.0)
    pref = tp.tau / (2.0 * math.pi) ** d
    return QuadResult(
        pref * tent_const.value * mom.value,
        pref * (tent_const.error * abs(mom.value) + abs(tent_const.value) * mom.error),
    )


@dataclass(frozen=True)
class D1FiniteLimit:
    """d = 1 finite-mass limit data: Rajchman point value and general bracket."""

    rajchman_value: float
    bracket_low: float
    bracket_high: float
    is_rajchman: bool


def d1_finite_limit(model: CovarianceModel, t1: float, t2: float) -> D1FiniteLimit:
    """(t1 ^ t2) f(R) when f^ vanishes at infinity; bracket [1, 2] x that in general."""
    if model.dim != 1:
        raise LimitError("d1 limit requires d = 1")
    mass = total_mass(model)
    if not math.isfinite(mass):
        raise LimitError("d1 limit requires finite total mass")
    if t1 <= 0 or t2 <= 0:
        raise ValueError("times must be positive")
    base = min(t1, t2) * mass
    return D1FiniteLimit(base, base, 2.0 * base, model.is_rajchman)


def riesz_limit(model: CovarianceModel, t1: float, t2: float, rtol: float = OUTER_RTOL) -> QuadResult:
    """Riesz-kernel limit covariance, dispatching on beta.

    beta < 1:  (t1^t2)^(1-beta) tau^beta / (1-beta) * int tent(z) ||z||^-beta dz
    beta = 1:  2 tau kappa_{1,d} (2 pi)^-d int psi(z) ||z||^(1-d) dz
    beta > 1:  tau^(2-beta) kappa_{beta,d} (2 pi)^-d Gamma(beta-1)
               * int psi(z) ||z||^(2-beta-d) dz
    The psi integrals are evaluated through the exact Gaussian-mixture
    tensorization (see quadrature.psi_riesz_integral).
    """
    if model.kind != kernels.RIESZ:
        raise LimitError("riesz limit requires a riesz kernel model")
    b, d = model.beta, model.dim
    tp = tau_params(t1, t2)
    m, n = tp.box_small, tp.box_large
    if b < 1.0:
        tent = tent_riesz_integral(m, n, d, b, rtol=rtol)
        pref = min(t1, t2) ** (1.0 - b) * tp.tau**b / (1.0 - b)
        return tent * pref
    if b == 1.0:
        core = psi_riesz_integral(m, n, d, 1.0, rtol=rtol)
        pref = 2.0 * tp.tau * riesz_fourier_constant(1.0, d) / (2.0 * math.pi) ** d
        return core * pref
    core = psi_riesz_integral(m, n, d, 2.0 - b, rtol=rtol)
    pref = (
        tp.tau ** (2.0 - b)
        * riesz_fourier_constant(b, d)
        / (2.0 * math.pi) ** d
        * gamma_fn(b - 1.0)
    )
    return core * pref


def riesz_limit_alternate(model: CovarianceModel, t1: float, t2: float) -> float:
    """Plancherel-rewritten evaluation of the Riesz limits for cross-checks.

    For beta < 1 the primary path is spatial, so this evaluates the Fourier
    rewrite; for beta >= 1 the primary is Fourier-side, so this evaluates
    the spatial rewrite.  The two paths share no quadrature machinery.
    """
    b, d = model.beta, model.dim
    tp = tau_params(t1, t2)
    m, n = tp.box_small, tp.box_large
    if b < 1.0:
        # Fourier-side rewrite of c1 (the primary path is spatial here)
        kap = riesz_fourier_constant(b, d)
        core = psi_riesz_integral(m, n, d, b)
        pref = min(t1, t2) ** (1.0 - b) * tp.tau**b / (1.0 - b) * kap / (2.0 * math.pi) ** d
        return core.value * pref
    if b == 1.0:
        tent = tent_riesz_integral(m, n, d, 1.0)
        return 2.0 * tp.tau * tent.value
    tent = tent_riesz_integral(m, n, d, 2.0 - b)
    pref = (
        tp.tau ** (2.0 - b)
        * riesz_fourier_constant(b, d)
        / riesz_fourier_constant(2.0 - b, d)
        * gamma_fn(b - 1.0)
    )
    return tent.value * pref


def g_limit_spatial(model: CovarianceModel, t1: float, t2: float, rtol: float = OUTER_RTOL) -> QuadResult:
    """Spatial-side evaluation of the g family for the Gaussian kernel.

    g = tau int_0^inf s^-d [int tent1d(x/s) phi(x) dx]^d ds, with the inner
    factor in closed form.  Exactly equal to g_limit by Parseval; kept as an
    independent oracle route.
    """
    if model.kind != kernels.GAUSSIAN:
        raise LimitError("spatial g route implemented for the gaussian kernel")
    tp = tau_params(t1, t2)
    m, n, d = tp.box_small, tp.box_large, model.dim
    norm = 1.0 / math.sqrt(2.0 * math.pi)

    def integrand(s):
        return (trapezoid_gauss_integral(m, n, s, 0.5) * norm / s) ** d

    res = half_line(integrand, power_zero=0.0, power_inf=-float(d), rtol=rtol)
    return res * tp.tau


# ---------------------------------------------------------------------------
# Limit matrices over a time grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LimitCovariance:
    """Symmetric matrix of limit covariances on a time grid."""

    times: tuple
    values: np.ndarray
    errors: np.ndarray
    family: str
    bracket_low: Optional[np.ndarray] = None
    bracket_high: Optional[np.ndarray] = None


def limit_matrix(model: CovarianceModel, time_grid, family: Optional[str] = None) -> LimitCovariance:
    """Fill the symmetric limit matrix entrywise (one evaluation per unordered pair)."""
    cls = classify_regime(model)
    if family is None:
        family = cls.limit_family
    elif family != cls.limit_family:
        raise LimitError(
            f"family {family!r} inconsistent with regime {cls.regime} "
            f"(expects {cls.limit_family!r})"
        )
    times = tuple(float(t) for t in time_grid)
    if any(t <= 0 for t in times) or len(times) == 0:
        raise ValueError("time grid must be nonempty and positive")
    if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
        raise ValueError("time grid must be strictly increasing")
    k = len(times)
    vals = np.zeros((k, k))
    errs = np.zeros((k, k))
    blo = bhi = None
    if family == "d1-finite":
        blo = np.zeros((k, k))
        bhi = np.zeros((k, k))
    for i in range(k):
        for j in range(i, k):
            t1, t2 = times[i], times[j]
            try:
                if family == "g":
                    r = g_limit(model, t1, t2)
                    v, e = r.value, r.error
                elif family == "d1-finite":
                    lim = d1_finite_limit(model, t1, t2)
                    v, e = lim.rajchman_value, 0.0
                    blo[i, j] = blo[j, i] = lim.bracket_low
                    bhi[i, j] = bhi[j, i] = lim.bracket_high
                else:
                    r = riesz_limit(model, t1, t2)
                    v, e = r.value, r.error
            except Exception as exc:
                raise LimitError(f"limit evaluation failed at entry ({i},{j}): {exc}") from exc
            vals[i, j] = vals[j, i] = v
            errs[i, j] = errs[j, i] = e
    return LimitCovariance(times, vals, errs, family, blo, bhi)
