"""Monte Carlo verification harness.

Builds replica ensembles of rescaled spatial averages, estimates their
covariance with jackknife errors, regresses the variance scaling exponent
across box sizes, computes Gaussianity diagnostics, and compares against
the limit-covariance module.  Every statistic is a deterministic function
of (model, grids, replica count, master seed): replicas own splittable
counter-based streams and reductions are order-fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .kernels import CovarianceModel, RegimeClassification, classify_regime
from .limits import LimitCovariance
from .mildsolver import RayGrid, simulate_averages
from .simulate import AveragePath

MIN_REPLICAS_COV = 2
MIN_REPLICAS_SE = 30
MIN_REPLICAS_NORMALITY = 500
MIN_REGRESSION_POINTS = 4
DEGENERACY_EPS = 1e-300


class HarnessError(ValueError):
    """Invalid harness inputs."""


class InsufficientDataError(HarnessError):
    """Too few samples for the requested statistic."""


@dataclass(frozen=True)
class GridFamily:
    """Common discretization shared by all boxes of a scaling study."""

    dim: int
    h: float
    dt: float
    horizon: float
    n_list: tuple
    ray_period: Optional[float] = None

    def __post_init__(self):
        if not self.n_list or any(n <= 0 for n in self.n_list):
            raise HarnessError("n_list must be nonempty and positive")
        if any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise HarnessError("n_list must be strictly increasing")
        if self.h <= 0 or self.dt <= 0 or self.horizon <= 0:
            raise HarnessError("h, dt, horizon must be positive")

    def ray_grid(self, times: Sequence[float]) -> RayGrid:
        return RayGrid.plan(
            self.dim, self.h, self.dt, self.horizon, self.n_list, times, self.ray_period
        )


@dataclass
class FieldEnsemble:
    """Replicated average paths: S[replica, box, time] plus rescaled values."""

    model: CovarianceModel
    family: GridFamily
    replicas: int
    master_seed: int
    times: tuple
    averages: np.ndarray
    rescaled: np.ndarray
    regime: RegimeClassification
    negativity: np.ndarray
    zero_noise: bool = False

    def paths(self) -> list[AveragePath]:
        out = []
        for ni, n_phys in enumerate(self.family.n_list):
            for r in range(self.replicas):
                out.append(
                    AveragePath(
                        n_phys=n_phys,
                        times=self.times,
                        values=tuple(self.averages[r, ni]),
                        rescaled=tuple(self.rescaled[r, ni]),
                    )
                )
        return out

    def samples(self, n_phys: float, t: Optional[float] = None, rescaled: bool = True):
        ni = self.family.n_list.index(n_phys)
        data = self.rescaled if rescaled else self.averages
        if t is None:
            return data[:, ni, :]
        ti = self.times.index(t)
        return data[:, ni, ti]


def run_ensemble(
    model: CovarianceModel,
    family: GridFamily,
    replicas: int,
    master_seed: int,
    time_grid: Sequence[float],
    threads: int = 1,
    zero_noise: bool = False,
) -> FieldEnsemble:
    """M independent average paths per box size, deterministic in master_seed.

    One field run per replica serves every box in the family (the boxes are
    nested subsets of the same field), which keeps per-box variances
    unbiased while sharing the integration cost across the N-list.
    """
    if replicas < MIN_REPLICAS_COV:
        raise HarnessError("need at least 2 replicas")
    regime = classify_regime(model)
    times = tuple(float(t) for t in time_grid)
    grid = family.ray_grid(times)
    res = simulate_averages(
        model,
        grid,
        family.n_list,
        times,
        replicas,
        master_seed,
        threads=threads,
        zero_noise=zero_noise,
    )
    sigma = regime.sigma(np.asarray(family.n_list))[np.newaxis, :, np.newaxis]
    return FieldEnsemble(
        model=model,
        family=family,
        replicas=replicas,
        master_seed=master_seed,
        times=times,
        averages=res.averages,
        rescaled=res.averages * sigma,
        regime=regime,
        negativity=res.negativity,
        zero_noise=zero_noise,
    )


# ---------------------------------------------------------------------------
# Covariance estimation with jackknife errors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CovarianceEstimate:
    matrix: np.ndarray
    stderr: np.ndarray
    degenerate: bool


def jackknife_covariance(samples: np.ndarray) -> CovarianceEstimate:
    """Unbiased sample covariance of row vectors with leave-one-out errors."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, np.newaxis]
    m, k = x.shape
    if m < MIN_REPLICAS_COV:
        raise InsufficientDataError("need at least 2 replicas")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (m - 1)
    if float(np.max(np.abs(cov))) < DEGENERACY_EPS:
        return CovarianceEstimate(np.zeros((k, k)), np.zeros((k, k)), True)
    if m < MIN_REPLICAS_SE:
        return CovarianceEstimate(cov, np.full((k, k), np.nan), False)
    # leave-one-out covariances from sufficient statistics of the globally
    # centered data (shift-invariant, avoids cancellation for large means)
    s2 = np.einsum("mi,mj->ij", xc, xc)
    mm = m - 1
    loo_mean = -xc / mm                                          # (m, k)
    outer_x = np.einsum("mi,mj->mij", xc, xc)                    # (m, k, k)
    outer_mu = np.einsum("mi,mj->mij", loo_mean, loo_mean)
    cov_i = (s2[np.newaxis] - outer_x - mm * outer_mu) / (mm - 1)
    cbar = cov_i.mean(axis=0)
    se = np.sqrt((m - 1) / m * np.sum((cov_i - cbar) ** 2, axis=0))
    return CovarianceEstimate(cov, se, False)


def empirical_covariance(ensemble: FieldEnsemble, n_phys: float, rescaled: bool = True) -> CovarianceEstimate:
    """Covariance over replicas of the (rescaled) average path at one box size."""
    return jackknife_covariance(ensemble.samples(n_phys, rescaled=rescaled))


# ---------------------------------------------------------------------------
# Scaling-exponent regression
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateRegression:
    slope: float
    intercept: float
    stderr: float
    ci_low: float
    ci_high: float
    log_corrected: bool


def rate_regression(
    variances: Sequence[float],
    n_values: Sequence[float],
    log_corrected: bool = False,
) -> RateRegression:
    """Least-squares slope of log Var(S_N) against log N.

    With log_corrected=True the log-compensated variance Var * N / log N is
    regressed instead and the slope reported is the residual exponent
    (zero for a clean sqrt(N / log N) law).  The 95% interval uses the
    t-distribution on the regression residuals.
    """
    v = np.asarray(variances, dtype=float)
    n = np.asarray(n_values, dtype=float)
    if v.shape != n.shape or v.ndim != 1:
        raise HarnessError("variances and n_values must be matching 1-d sequences")
    if len(v) < MIN_REGRESSION_POINTS:
        raise HarnessError(f"need at least {MIN_REGRESSION_POINTS} box sizes")
    if np.any(v <= 0):
        raise HarnessError("variances must be positive")
    if np.any(np.diff(n) <= 0):
        raise HarnessError("n_values must be strictly increasing")
    y = np.log(v * n / np.log(n)) if log_corrected else np.log(v)
    x = np.log(n)
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    dof = len(v) - 2
    s2 = float(np.sum(resid**2) / dof) if dof > 0 else 0.0
    stderr = math.sqrt(s2 / sxx)
    tq = _student_t_975(dof)
    return RateRegression(
        slope=slope,
        intercept=intercept,
        stderr=stderr,
        ci_low=slope - tq * stderr,
        ci_high=slope + tq * stderr,
        log_corrected=log_corrected,
    )


def _student_t_975(dof: int) -> float:
    if dof <= 0:
        return math.inf
    from scipy import stats

    return float(stats.t.ppf(0.975, dof))


# ---------------------------------------------------------------------------
# Normality diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalityStats:
    skewness: float
    excess_kurtosis: float
    ks_distance: float
    n_samples: int


def normality_stats(samples: Sequence[float]) -> NormalityStats:
    """Moment statistics and KS distance against a normal fit (mean/variance).

    The KS distance is affine-invariant because the reference normal is fit
    to the sample's own first two moments.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or len(x) < MIN_REPLICAS_NORMALITY:
        raise InsufficientDataError(
            f"need at least {MIN_REPLICAS_NORMALITY} samples, got {len(x)}"
        )
    mu = x.mean()
    sd = x.std(ddof=1)
    if sd <= 0:
        raise InsufficientDataError("degenerate sample (zero variance)")
    z = np.sort((x - mu) / sd)
    m2 = np.mean(z**2)
    skew = float(np.mean(z**3) / m2**1.5)
    kurt = float(np.mean(z**4) / m2**2 - 3.0)
    cdf = special.ndtr(z)
    n = len(z)
    up = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    ks = float(max(np.max(up - cdf), np.max(cdf - lo)))
    return NormalityStats(skew, kurt, ks, n)


# ---------------------------------------------------------------------------
# Comparison against the limit covariances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LimitComparison:
    zscores: np.ndarray
    deltas: np.ndarray
    bracket_pass: Optional[np.ndarray]


def compare_to_limit(est: CovarianceEstimate, limits: LimitCovariance, times: Sequence[float]) -> LimitComparison:
    """Per-entry (empirical - limit) / stderr, plus bracket verdicts for d=1.

    Bracket containment allows 3 standard errors of slack on each side, per
    the general finite-measure case where only the bracket is pinned.
    """
    times = tuple(float(t) for t in times)
    if times != tuple(limits.times):
        raise HarnessError(f"time grids differ: {times} vs {limits.times}")
    if est.matrix.shape != limits.values.shape:
        raise HarnessError("covariance shape mismatch")
    deltas = est.matrix - limits.values
    with np.errstate(divide="ignore", invalid="ignore"):
        z = deltas / est.stderr
    bracket = None
    if limits.bracket_low is not None:
        slack = 3.0 * est.stderr
        bracket = (est.matrix + slack >= limits.bracket_low) & (
            est.matrix - slack <= limits.bracket_high
        )
    return LimitComparison(zscores=z, deltas=deltas, bracket_pass=bracket)


# ---------------------------------------------------------------------------
# Field covariance probe (chi diagnostics)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChiEstimate:
    offsets: tuple
    values: np.ndarray
    stderr: np.ndarray


def chi_estimate(field_samples: np.ndarray, base_col: int = 0) -> ChiEstimate:
    """Empirical chi(y) = Cov[U(t, x0), U(t, x0 + y)] over replicas.

    field_samples: (replicas, n_offsets) array of U values, column 0 at the
    base point.  Returns covariance of each column with the base column and
    jackknife-free standard errors from the replica products.
    """
    x = np.asarray(field_samples, dtype=float)
    m, k = x.shape
    base = x[:, base_col]
    prods = (x - x.mean(axis=0)) * (base - base.mean())[:, np.newaxis]
    vals = prods.sum(axis=0) / (m - 1)
    se = prods.std(axis=0, ddof=1) / math.sqrt(m)
    return ChiEstimate(tuple(range(k)), vals, se)


# ---------------------------------------------------------------------------
# Bundled report
# ---------------------------------------------------------------------------


@dataclass
class McReport:
    """Everything the verify workflow computes, ready for CSV emission."""

    model: CovarianceModel
    times: tuple
    n_list: tuple
    covariances: dict                      # n_phys -> CovarianceEstimate (rescaled)
    regression: Optional[RateRegression]
    regression_time: Optional[float]
    normality: dict                        # (n_phys, t) -> NormalityStats
    comparison: Optional[dict] = None      # n_phys -> LimitComparison
    negativity_mean: float = 0.0


def build_report(
    ensemble: FieldEnsemble,
    regression_time: Optional[float] = None,
    limits: Optional[LimitCovariance] = None,
    normality_min: int = MIN_REPLICAS_NORMALITY,
) -> McReport:
    """Assemble covariances, the scaling regression, normality, and z-scores."""
    times = ensemble.times
    n_list = ensemble.family.n_list
    covs = {n: empirical_covariance(ensemble, n) for n in n_list}
    regression = None
    rtime = None
    if len(n_list) >= MIN_REGRESSION_POINTS:
        rtime = regression_time if regression_time is not None else times[-1]
        ti = times.index(rtime)
        raw_vars = [ensemble.samples(n, rescaled=False)[:, ti].var(ddof=1) for n in n_list]
        regression = rate_regression(raw_vars, n_list, ensemble.regime.log_correction)
    normality = {}
    if ensemble.replicas >= normality_min:
        n_big = n_list[-1]
        for t in times:
            normality[(n_big, t)] = normality_stats(ensemble.samples(n_big, t))
    comparison = None
    if limits is not None:
        comparison = {n: compare_to_limit(covs[n], limits, times) for n in n_list}
    return McReport(
        model=ensemble.model,
        times=times,
        n_list=n_list,
        covariances=covs,
        regression=regression,
        regression_time=rtime,
        normality=normality,
        comparison=comparison,
        negativity_mean=float(np.mean(ensemble.negativity)),
    )
