"""Limit-covariance oracles: tent transform properties, the four limit
families against independent quadrature routes, and limit matrices."""

import math

import numpy as np
import pytest
from scipy import integrate, special

from pamclt.kernels import CovarianceModel, r_quantity
from pamclt.limits import (
    LimitError,
    TentTransform,
    d1_finite_limit,
    g_limit,
    g_limit_spatial,
    limit_matrix,
    riesz_limit,
    riesz_limit_alternate,
    tau_params,
)

# frozen fixtures, computed at 10x tighter tolerance during development
GAUSS_D2_R = 0.5930695086180845
GAUSS_D2_G_1_3 = 0.5476124276139749


# ---------------------------------------------------------------------------
# tau parameters
# ---------------------------------------------------------------------------


def test_tau_equal_times():
    for t in (0.25, 1.0, 3.0):
        tp = tau_params(t, t)
        assert (tp.tau, tp.tau1, tp.tau2) == (t, 1.0, 1.0)


def test_tau_example():
    tp = tau_params(1.0, 3.0)
    assert (tp.tau, tp.tau1, tp.tau2) == (1.5, 1.5, 0.5)


def test_tau_identities_fuzz():
    rng = np.random.default_rng(3)
    for _ in range(200):
        t1, t2 = rng.uniform(0.05, 10.0, size=2)
        tp = tau_params(t1, t2)
        assert abs(tp.tau1 + tp.tau2 - 2.0) < 1e-12
        assert abs(tp.tau - tp.tau1 * t1) < 1e-12
        assert abs(tp.tau - tp.tau2 * t2) < 1e-12
        assert tp.tau > 0


def test_tau_rejects_nonpositive():
    with pytest.raises(ValueError):
        tau_params(0.0, 1.0)
    with pytest.raises(ValueError):
        tau_params(1.0, -2.0)


# ---------------------------------------------------------------------------
# tent transform
# ---------------------------------------------------------------------------


def test_psi_at_zero_is_one():
    for dim in (1, 2, 3):
        tent = TentTransform(0.7, 1.3, dim)
        assert tent.psi(np.zeros(dim)) == pytest.approx(1.0, abs=1e-14)


def test_psi_symbolic_form_unit_boxes():
    # m = n = 1, d = 1: psi(z) = 2 (1 - cos z)/z^2, checked at random points
    tent = TentTransform(1.0, 1.0, 1)
    rng = np.random.default_rng(5)
    z = rng.uniform(-30, 30, size=100)
    want = 2.0 * (1.0 - np.cos(z)) / (z * z)
    got = tent.psi(z[:, None])
    assert np.allclose(got.real, want, atol=1e-12)
    assert np.max(np.abs(got.imag)) < 1e-12


def test_psi_bounds_fuzz():
    rng = np.random.default_rng(11)
    for dim in (1, 2, 3):
        for _ in range(4):
            m = rng.uniform(0.2, 1.4)
            n = m + rng.uniform(0.0, 1.2)
            tent = TentTransform(m, n, dim)
            z = rng.uniform(-60, 60, size=(10_000, dim))
            vals = tent.psi(z)
            mags = np.abs(vals)
            assert np.all(mags <= 1.0 + 1e-12)
            assert np.all(mags <= tent.coordinate_bound(z) + 1e-12)


def test_tent_spatial_support_and_mass():
    rng = np.random.default_rng(13)
    for dim in (1, 2):
        m, n = 0.6, 1.1
        tent = TentTransform(m, n, dim)
        z = rng.uniform(-2.0, 2.0, size=(20_000, dim))
        vals = tent.spatial(z)
        assert np.all(vals >= 0.0)
        outside = np.any((z < -n - 1e-12) | (z > m + 1e-12), axis=-1)
        assert np.all(vals[outside] == 0.0)
        # Riemann mass over the support box
        grid = np.linspace(-n, m, 801)
        if dim == 1:
            mass = np.trapezoid(tent.spatial(grid[:, None]), grid)
        else:
            gx, gy = np.meshgrid(grid, grid, indexing="ij")
            pts = np.stack([gx, gy], axis=-1)
            mass = np.trapezoid(np.trapezoid(tent.spatial(pts), grid, axis=1), grid)
        assert abs(mass - 1.0) < 5e-4


@pytest.mark.parametrize("dim", [1, 2])
def test_psi_matches_numerical_transform_of_spatial_tent(dim):
    # Riemann Fourier transform of the spatial tent reproduces psi to 1e-6
    m, n = 0.8, 1.3
    tent = TentTransform(m, n, dim)
    grid = np.linspace(-n, m, 4097)
    zs = [np.full(dim, 0.7), np.full(dim, -1.9), np.linspace(0.5, 2.0, dim)]
    for z in zs:
        if dim == 1:
            f = tent.spatial(grid[:, None])
            num = np.trapezoid(f * np.exp(1j * grid * z[0]), grid)
        else:
            gx, gy = np.meshgrid(grid, grid, indexing="ij")
            f = tent.spatial(np.stack([gx, gy], axis=-1))
            phase = np.exp(1j * (gx * z[0] + gy * z[1]))
            num = np.trapezoid(np.trapezoid(f * phase, grid, axis=1), grid)
        assert abs(num - tent.psi(z)) < 1e-6


def test_tent_constructor_validation():
    with pytest.raises(ValueError):
        TentTransform(1.5, 1.0, 1)
    with pytest.raises(ValueError):
        TentTransform(-1.0, 1.0, 2)


# ---------------------------------------------------------------------------
# g family (MultiDimFinite)
# ---------------------------------------------------------------------------


def test_g_requires_multidim_regime():
    with pytest.raises(LimitError):
        g_limit(CovarianceModel.gaussian(1), 1.0, 1.0)
    with pytest.raises(LimitError):
        g_limit(CovarianceModel.riesz(0.5, 2), 1.0, 1.0)


def test_g_diagonal_consistency_with_r_quantity():
    model = CovarianceModel.gaussian(2)
    r = r_quantity(model)
    for t in (0.5, 1.0):
        g = g_limit(model, t, t)
        tol = 5.0 * (g.error + t * r.error) + 5e-9
        assert abs(g.value - t * r.value) < max(tol, 1e-7 * g.value)


def test_g_symmetry_and_fixture():
    model = CovarianceModel.gaussian(2)
    a = g_limit(model, 1.0, 3.0)
    b = g_limit(model, 3.0, 1.0)
    assert abs(a.value - b.value) < 1e-12
    assert abs(a.value - GAUSS_D2_G_1_3) < 1e-6 * GAUSS_D2_G_1_3
    assert a.value > 0


def test_g_fourier_vs_spatial_routes():
    model = CovarianceModel.gaussian(2)
    for t1, t2 in [(1.0, 1.0), (1.0, 3.0), (0.5, 4.0)]:
        f = g_limit(model, t1, t2).value
        s = g_limit_spatial(model, t1, t2).value
        assert abs(f - s) < 1e-8 * abs(f)


def test_g_doubling_identity():
    # for t2 = 2 t1 the tent has n = 2m and g collapses to t1 * R(f) exactly
    model = CovarianceModel.gaussian(2)
    r = r_quantity(model).value
    for t1 in (0.5, 1.0, 2.0):
        g = g_limit(model, t1, 2.0 * t1).value
        assert abs(g - t1 * r) < 1e-7 * g


def test_g_tabulated_isotropic_route():
    model = CovarianceModel.tabulated([0.05, 0.5, 2.0, 8.0], [1.0, 0.8, 0.1, 1e-4], 2)
    r = r_quantity(model)
    g = g_limit(model, 1.0, 1.0)
    assert abs(g.value - r.value) < 5.0 * (g.error + r.error) + 1e-8


# ---------------------------------------------------------------------------
# d = 1 finite-mass family
# ---------------------------------------------------------------------------


def test_d1_gaussian_diag():
    for t in (0.3, 1.0, 2.5):
        lim = d1_finite_limit(CovarianceModel.gaussian(1), t, t)
        assert lim.rajchman_value == pytest.approx(t)
        assert lim.is_rajchman


def test_d1_cauchy_example():
    lim = d1_finite_limit(CovarianceModel.cauchy(), 2.0, 3.0)
    assert lim.rajchman_value == pytest.approx(2.0 * math.pi)


def test_d1_bracket_factor_two():
    rng = np.random.default_rng(2)
    for _ in range(20):
        t1, t2 = rng.uniform(0.1, 5.0, size=2)
        lim = d1_finite_limit(CovarianceModel.white(), t1, t2)
        assert lim.bracket_low == pytest.approx(lim.rajchman_value)
        assert lim.bracket_high == pytest.approx(2.0 * lim.rajchman_value)
        assert not lim.is_rajchman


def test_d1_rejects_wrong_models():
    with pytest.raises(LimitError):
        d1_finite_limit(CovarianceModel.gaussian(2), 1.0, 1.0)
    with pytest.raises(LimitError):
        d1_finite_limit(CovarianceModel.riesz(0.5, 1), 1.0, 1.0)


# ---------------------------------------------------------------------------
# Riesz families
# ---------------------------------------------------------------------------


def test_riesz_beta_half_exact_value():
    # tent integral 2 int_0^1 (1-z) z^(-1/2) dz = 8/3, prefactor t/(1-beta) = 2t
    got = riesz_limit(CovarianceModel.riesz(0.5, 1), 1.0, 1.0)
    assert abs(got.value - 16.0 / 3.0) < 1e-6 * 16.0 / 3.0
    got2 = riesz_limit(CovarianceModel.riesz(0.5, 1), 2.0, 2.0)
    assert abs(got2.value - 2.0 * 16.0 / 3.0) < 1e-6 * got2.value


def test_gamma_factor_identity():
    # int_0^inf r^(beta-2) e^-r dr = Gamma(beta - 1) for beta in (1, 2)
    for b in (1.3, 1.5, 1.8):
        val, _ = integrate.quad(lambda r: r ** (b - 2.0) * math.exp(-r), 0, np.inf, limit=400)
        assert abs(val - special.gamma(b - 1.0)) < 1e-9 * val


def test_riesz_symmetry_all_cases():
    for model in (CovarianceModel.riesz(0.5, 2), CovarianceModel.riesz(1.0, 2),
                  CovarianceModel.riesz(1.5, 3)):
        a = riesz_limit(model, 0.7, 2.2).value
        b = riesz_limit(model, 2.2, 0.7).value
        assert abs(a - b) < 1e-12 * max(1.0, abs(a))
        assert a > 0


@pytest.mark.parametrize("beta", [0.25, 0.5, 0.75])
def test_riesz_c1_fourier_vs_spatial(beta):
    model = CovarianceModel.riesz(beta, 1)
    for t1, t2 in [(1.0, 1.0), (0.5, 2.0)]:
        spatial = riesz_limit(model, t1, t2).value
        fourier = riesz_limit_alternate(model, t1, t2)
        assert abs(spatial - fourier) < 1e-5 * abs(spatial)


def test_riesz_c2_c3_dual_routes():
    for model, times in [
        (CovarianceModel.riesz(1.0, 2), (1.0, 2.0)),
        (CovarianceModel.riesz(1.5, 2), (0.5, 1.5)),
        (CovarianceModel.riesz(1.5, 3), (1.0, 1.0)),
    ]:
        a = riesz_limit(model, *times).value
        b = riesz_limit_alternate(model, *times)
        assert abs(a - b) < 1e-6 * abs(a)


def test_riesz_limit_positive_for_positive_times():
    rng = np.random.default_rng(17)
    for model in (CovarianceModel.riesz(0.5, 1), CovarianceModel.riesz(1.5, 2)):
        for _ in range(5):
            t1, t2 = rng.uniform(0.1, 4.0, size=2)
            assert riesz_limit(model, t1, t2).value > 0


def test_riesz_rejects_other_kernels():
    with pytest.raises(LimitError):
        riesz_limit(CovarianceModel.gaussian(2), 1.0, 1.0)


# ---------------------------------------------------------------------------
# limit matrices
# ---------------------------------------------------------------------------


def test_limit_matrix_single_point():
    model = CovarianceModel.riesz(0.5, 1)
    lm = limit_matrix(model, [1.0])
    assert lm.values.shape == (1, 1)
    assert abs(lm.values[0, 0] - 16.0 / 3.0) < 1e-6 * 16 / 3
    assert lm.family == "c1"


def test_limit_matrix_symmetric_and_psd():
    model = CovarianceModel.gaussian(2)
    lm = limit_matrix(model, [0.5, 1.0, 1.5, 2.0])
    assert np.array_equal(lm.values, lm.values.T)
    eig = np.linalg.eigvalsh(lm.values)
    max_err = float(np.max(lm.errors))
    assert eig.min() >= -(lm.values.shape[0] * max_err + 1e-10)


def test_limit_matrix_d1_brackets():
    lm = limit_matrix(CovarianceModel.gaussian(1), [0.5, 1.0])
    assert lm.family == "d1-finite"
    assert np.allclose(lm.bracket_high, 2.0 * lm.bracket_low)
    assert np.allclose(lm.values, lm.bracket_low)
    assert lm.values[0, 1] == pytest.approx(0.5)


def test_limit_matrix_riesz_families():
    for model, family in ((CovarianceModel.riesz(1.0, 2), "c2"),
                          (CovarianceModel.riesz(1.5, 3), "c3")):
        lm = limit_matrix(model, [0.5, 1.0])
        assert lm.family == family
        assert np.array_equal(lm.values, lm.values.T)
        assert np.all(lm.values > 0)
        assert np.all(np.linalg.eigvalsh(lm.values) > -1e-8)


def test_limit_matrix_validation():
    with pytest.raises(LimitError):
        limit_matrix(CovarianceModel.gaussian(2), [1.0], family="c1")
    with pytest.raises(ValueError):
        limit_matrix(CovarianceModel.gaussian(2), [1.0, 0.5])
    with pytest.raises(ValueError):
        limit_matrix(CovarianceModel.gaussian(2), [])
