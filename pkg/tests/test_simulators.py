import numpy as np
import pytest
import scipy.stats

from stmix.errors import MarginTagError, ParameterError
from stmix.simulators import (GaussianField, Margin, Mode, ProcessSample, SpaceTimeLayout,
                              VariogramSpec, extremal_functions, lag_matrices,
                              sample_brown_resnick, sample_gaussian_field, sample_inverted_br,
                              to_standard_exponential, truncated_spectral)


def br_chi(gamma):
    return 2 - 2 * scipy.stats.norm.cdf(np.sqrt(gamma) / 2)


def empirical_chi_pair(z1, z2, tau, cdf):
    u1, u2 = cdf(z1), cdf(z2)
    e1, e2 = u1 > tau, u2 > tau
    return 2 * np.sum(e1 & e2) / (e1.sum() + e2.sum())


def frechet_cdf(z):
    return np.exp(-1 / z)


def test_variogram_modes():
    v = VariogramSpec(0.4, 0.2)
    assert v(0.4, 0.0) == pytest.approx(1.0)
    assert v(0.0, 0.2) == pytest.approx(1.0)
    assert v(0.4, 0.2) == pytest.approx(2.0)
    assert v.with_mode("spatial")(0.4, 0.2) == pytest.approx(1.0)
    assert v.with_mode(Mode.TEMPORAL)(0.4, 0.2) == pytest.approx(1.0)
    with pytest.raises(ParameterError):
        VariogramSpec(0.0, 1.0)
    with pytest.raises(ParameterError):
        VariogramSpec(1.0, 1.0, alpha=2.5)


def test_layout_grid_and_points():
    lay = SpaceTimeLayout.grid(3, 4, 7)
    assert lay.shape == (7, 9, 4)
    pts = lay.points()
    assert pts.shape == (36, 3)
    # point p = site * T + t
    np.testing.assert_allclose(pts[5], [*lay.sites[1], lay.times[1]])
    with pytest.raises(ParameterError):
        SpaceTimeLayout(np.zeros((2, 2)), [0.0, 1.0])
    with pytest.raises(ParameterError):
        SpaceTimeLayout(np.eye(2), [1.0, 0.0])


def test_gaussian_field_variogram():
    # Var(eps(a) - eps(b)) equals the variogram
    lay = SpaceTimeLayout(np.array([[0, 0], [0.3, 0], [0, 0.5]]), [0.0, 0.2], 40_000)
    v = VariogramSpec(0.4, 0.3)
    eps = sample_gaussian_field(v, lay, seed=1).values.reshape(40_000, -1)
    hs, ht = lag_matrices(lay.points())
    g = v(hs, ht)
    emp = np.var(eps[:, :, None] - eps[:, None, :], axis=0)
    np.testing.assert_allclose(emp, g, atol=0.06 * g.max())
    assert np.all(eps[:, 0] == 0)


def test_gaussian_field_merges_coincident_points():
    g = np.array([[0, 0, 1], [0, 0, 1], [1, 1, 0.0]])
    f = GaussianField(g, anchor=2)
    x = f.draw(np.random.default_rng(0), 5)
    np.testing.assert_array_equal(x[:, 0], x[:, 1])


def test_br_margins_unit_frechet():
    lay = SpaceTimeLayout(np.array([[0, 0], [0.2, 0.0]]), [0.0], 20_000)
    z = sample_brown_resnick(VariogramSpec(0.4, 0.4), lay, seed=3)
    assert z.margin is Margin.FRECHET
    assert scipy.stats.kstest(z.values[:, 0, 0], frechet_cdf).pvalue > 0.01
    assert scipy.stats.kstest(z.values[:, 1, 0], frechet_cdf).pvalue > 0.01


def test_br_pair_extremal_coefficient():
    # P(Z1 <= z, Z2 <= z) = exp(-theta / z) with theta = 2 Phi(sqrt(gamma) / 2)
    h = 0.3
    v = VariogramSpec(0.4, 0.4)
    lay = SpaceTimeLayout(np.array([[0, 0], [h, 0.0]]), [0.0], 40_000)
    z = sample_brown_resnick(v, lay, seed=5).values[:, :, 0]
    theta = 2 - br_chi(v(h, 0.0))
    zz = 2.0
    emp = np.mean(np.max(z, axis=1) <= zz)
    sd = np.sqrt(emp * (1 - emp) / z.shape[0])
    assert abs(emp - np.exp(-theta / zz)) < 4 * sd


def test_truncated_reference_agrees_in_bulk():
    g = np.array([[0, 0.8], [0.8, 0.0]])
    rng = np.random.default_rng(2)
    ex = extremal_functions(g, 20_000, rng)
    tr = truncated_spectral(g, 20_000, rng, n_terms=300)
    for q in (0.5, 0.9):
        assert np.quantile(ex.max(1), q) == pytest.approx(np.quantile(tr.max(1), q), rel=0.05)


def test_spatial_mode_independent_over_time():
    lay = SpaceTimeLayout(np.array([[0, 0], [0.1, 0]]), [0.0, 0.5], 20_000)
    z = sample_brown_resnick(VariogramSpec(0.4, 0.4, mode=Mode.SPATIAL), lay, seed=7).values
    u = frechet_cdf(z)
    # same time: strong dependence; same site across time: none
    assert empirical_chi_pair(z[:, 0, 0], z[:, 1, 0], 0.95, frechet_cdf) > 0.6
    assert abs(np.corrcoef(u[:, 0, 0], u[:, 0, 1])[0, 1]) < 0.03


def test_temporal_mode_independent_over_space():
    lay = SpaceTimeLayout(np.array([[0, 0], [0.1, 0]]), [0.0, 0.05], 20_000)
    z = sample_brown_resnick(VariogramSpec(0.4, 0.4, mode=Mode.TEMPORAL), lay, seed=8).values
    u = frechet_cdf(z)
    assert empirical_chi_pair(z[:, 0, 0], z[:, 0, 1], 0.95, frechet_cdf) > 0.6
    assert abs(np.corrcoef(u[:, 0, 0], u[:, 1, 0])[0, 1]) < 0.03


def test_inverted_br_is_asymptotically_independent_but_associated():
    lay = SpaceTimeLayout(np.array([[0, 0], [0.1, 0]]), [0.0], 50_000)
    w = sample_inverted_br(VariogramSpec(0.4, 0.4), lay, seed=9)
    assert w.margin is Margin.PARETO
    e = to_standard_exponential(w).values[:, :, 0]
    assert scipy.stats.kstest(e[:, 0], "expon").pvalue > 0.01
    u = 1 - np.exp(-e)
    assert np.corrcoef(u.T)[0, 1] > 0.3
    # inverted max-stable: P(U1 > u, U2 > u) = (1 - u)^theta exactly
    theta = 2 - br_chi(VariogramSpec(0.4, 0.4)(0.1, 0.0))
    for tau in (0.9, 0.99):
        chi = empirical_chi_pair(e[:, 0], e[:, 1], tau, lambda x: 1 - np.exp(-x))
        assert chi == pytest.approx((1 - tau) ** (theta - 1), abs=0.04)


def test_to_exponential_is_increasing_and_tag_checked():
    z = np.array([[[0.1, 1.0, 10.0, 1e6]]])
    e = to_standard_exponential(ProcessSample(z, Margin.FRECHET)).values.ravel()
    assert np.all(np.diff(e) > 0)
    with pytest.raises(MarginTagError):
        to_standard_exponential(ProcessSample(z, Margin.UNIFORM))


def test_seed_determinism():
    lay = SpaceTimeLayout.grid(2, 2, 10)
    v = VariogramSpec(0.4, 0.4)
    a = sample_brown_resnick(v, lay, seed=42).values
    b = sample_brown_resnick(v, lay, seed=42).values
    c = sample_brown_resnick(v, lay, seed=43).values
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_unknown_method():
    with pytest.raises(ParameterError):
        sample_brown_resnick(VariogramSpec(0.4, 0.4), SpaceTimeLayout.grid(2, 2), method="x")
