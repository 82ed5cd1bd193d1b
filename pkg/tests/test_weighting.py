"""Voronoi reuse weights and the weighted projection onto span(1, T)."""

import numpy as np
import pytest
from scipy.special import ndtr

from pacbayes import (
    EvalStack,
    GaussianFamily,
    QuadraticRisk,
    SurrogateFit,
    eval_risk,
    exact_voronoi_weights_1d,
    importance_weights,
    project,
    standard_normal_params,
    uniform_weights,
    voronoi_weights,
)
from pacbayes.weighting import GRAM_CONDITION_LIMIT

from _oracles import gauss_nodes, quad_projection, random_spd


def stack_from_points(points, values=None):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if values is None:
        values = np.zeros(points.shape[0])
    stack = EvalStack(points.shape[1])
    stack.record(points, values, step=0)
    return stack


def test_voronoi_single_point_gets_all_mass():
    fam = GaussianFamily(1)
    stack = stack_from_points([[0.7]])
    w = voronoi_weights(stack, fam, standard_normal_params(fam), n_mc=100, seed=0)
    np.testing.assert_allclose(w, [1.0])


def test_voronoi_symmetric_pair_splits_evenly():
    fam = GaussianFamily(1)
    stack = stack_from_points([[-1.3], [1.3]])
    w = voronoi_weights(stack, fam, standard_normal_params(fam), n_mc=100_000, seed=1)
    assert w.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(w, [0.5, 0.5], atol=0.01)


def test_voronoi_three_point_cells_match_normal_cdf():
    # cells of {-1, 0, 2} under N(0,1) split at -0.5 and 1
    fam = GaussianFamily(1)
    stack = stack_from_points([[-1.0], [0.0], [2.0]])
    n_mc = 100_000
    w = voronoi_weights(stack, fam, standard_normal_params(fam), n_mc=n_mc, seed=0)
    exact = np.array([ndtr(-0.5), ndtr(1.0) - ndtr(-0.5), 1.0 - ndtr(1.0)])
    np.testing.assert_allclose(w, exact, atol=3.0 / np.sqrt(n_mc))


def test_voronoi_deterministic_and_consistent_in_n_mc():
    fam = GaussianFamily(1)
    rng = np.random.default_rng(2)
    stack = stack_from_points(rng.standard_normal((12, 1)))
    theta = fam.natural_from_moments([0.3], [[1.5]])
    again = [voronoi_weights(stack, fam, theta, n_mc=5000, seed=7) for _ in range(2)]
    np.testing.assert_array_equal(again[0], again[1])
    exact = exact_voronoi_weights_1d(stack, fam, theta)
    for n_mc in (1000, 100_000):
        w = voronoi_weights(stack, fam, theta, n_mc=n_mc, seed=3)
        np.testing.assert_allclose(w, exact, atol=3.0 / np.sqrt(n_mc))


def test_voronoi_chunked_search_matches_direct_assignment():
    # force multiple distance chunks and compare with a one-shot 1-NN count
    from pacbayes import weighting as wmod

    fam = GaussianFamily(2, structure="full")
    rng = np.random.default_rng(5)
    stack = stack_from_points(rng.standard_normal((400, 2)))
    theta = fam.natural_from_moments(
        np.array([0.2, -0.1]), np.array([[1.0, 0.3], [0.3, 0.8]])
    )
    w_small_chunks = voronoi_weights(stack, fam, theta, n_mc=30_000, seed=11)
    assert 400 * 30_000 > wmod._CHUNK_BUDGET
    old = wmod._CHUNK_BUDGET
    wmod._CHUNK_BUDGET = 400 * 30_000
    try:
        w_one_chunk = voronoi_weights(stack, fam, theta, n_mc=30_000, seed=11)
    finally:
        wmod._CHUNK_BUDGET = old
    np.testing.assert_array_equal(w_small_chunks, w_one_chunk)


def test_exact_voronoi_weights_1d():
    fam = GaussianFamily(1)
    stack = stack_from_points([[2.0], [-1.0], [0.0]])  # unsorted on purpose
    theta = standard_normal_params(fam)
    w = exact_voronoi_weights_1d(stack, fam, theta)
    np.testing.assert_allclose(
        w, [1.0 - ndtr(1.0), ndtr(-0.5), ndtr(1.0) - ndtr(-0.5)], rtol=1e-12
    )
    assert w.sum() == pytest.approx(1.0)
    fam2 = GaussianFamily(2, structure="diag")
    with pytest.raises(ValueError):
        exact_voronoi_weights_1d(stack_from_points([[0.0, 0.0]]), fam2, standard_normal_params(fam2))


def test_uniform_weights_whole_and_per_step():
    stack = EvalStack(1)
    stack.record(np.zeros((3, 1)), [1.0, 2.0, 3.0], step=0)
    stack.record(np.ones((2, 1)), [4.0, 5.0], step=1)
    np.testing.assert_allclose(uniform_weights(stack), np.full(5, 0.2))
    np.testing.assert_allclose(uniform_weights(stack, step=1), [0, 0, 0, 0.5, 0.5])
    with pytest.raises(ValueError):
        uniform_weights(stack, step=9)
    with pytest.raises(ValueError):
        uniform_weights(EvalStack(1))


def test_importance_weights_ratio_and_normalization():
    fam = GaussianFamily(1)
    theta_gen = standard_normal_params(fam)
    theta_new = fam.natural_from_moments([1.0], [[1.0]])
    stack = stack_from_points([[0.0], [1.0]])
    w = importance_weights(stack, fam, theta_gen, {0: theta_gen})
    np.testing.assert_allclose(w, [0.5, 0.5])
    w = importance_weights(stack, fam, theta_new, {0: theta_gen})
    # ratio at x is exp(x - 1/2); normalized over the two stored points
    raw = np.exp(np.array([0.0, 1.0]) - 0.5)
    np.testing.assert_allclose(w, raw / raw.sum(), rtol=1e-12)
    with pytest.raises(ValueError):
        importance_weights(stack, fam, theta_new, {})


def test_project_recovers_in_span_risk_exactly():
    rng = np.random.default_rng(13)
    for fam in (GaussianFamily(1), GaussianFamily(2, structure="full")):
        eta_true = rng.standard_normal(fam.dim)
        offset_true = rng.standard_normal()
        risk = QuadraticRisk(fam, eta=eta_true, offset=offset_true)
        pts = rng.standard_normal((4 * fam.dim, fam.predictor_dim))
        stack = stack_from_points(pts, eval_risk(risk, pts))
        weights = rng.uniform(0.5, 2.0, size=len(stack))
        fit = project(stack, weights, fam, theta=standard_normal_params(fam))
        np.testing.assert_allclose(fit.eta, eta_true, atol=1e-8)
        assert fit.offset == pytest.approx(offset_true, abs=1e-8)
        assert fit.weighted_rss <= 1e-12


def test_project_cubic_under_standard_normal_weights():
    # population projection of x^3 onto span(1, x, x^2) under N(0,1) is 3x
    fam = GaussianFamily(1)
    pts, w = gauss_nodes([0.0], [[1.0]], n_nodes=64)
    stack = stack_from_points(pts, pts[:, 0] ** 3)
    fit = project(stack, w, fam, theta=standard_normal_params(fam))
    np.testing.assert_allclose(fit.eta, [3.0, 0.0], atol=1e-8)
    assert fit.offset == pytest.approx(0.0, abs=1e-8)


def test_project_with_fixed_proxy_offset():
    # offset callable equal to the risk leaves nothing to fit
    fam = GaussianFamily(1)
    rng = np.random.default_rng(17)
    pts = rng.standard_normal((10, 1))
    vals = np.tanh(pts[:, 0])
    stack = stack_from_points(pts, vals)
    fit = project(
        stack,
        np.full(10, 0.1),
        fam,
        theta=standard_normal_params(fam),
        offset=lambda x: np.tanh(np.atleast_2d(x)[:, 0]),
    )
    np.testing.assert_allclose(fit.eta, np.zeros(2), atol=1e-12)
    assert fit.offset == pytest.approx(0.0, abs=1e-12)
    assert fit.weighted_rss == pytest.approx(0.0, abs=1e-14)


def test_project_matches_population_projection():
    fam = GaussianFamily(1)
    theta = fam.natural_from_moments([0.4], [[0.8]])
    mean, cov = np.array([0.4]), np.array([[0.8]])
    risk = lambda x: np.sin(np.atleast_2d(x)[:, 0]) + 0.2 * np.atleast_2d(x)[:, 0] ** 2
    pts, w = gauss_nodes(mean, cov, n_nodes=64)
    stack = stack_from_points(pts, risk(pts))
    fit = project(stack, w, fam, theta=theta)
    eta_oracle, c_oracle = quad_projection(fam, theta, risk, n_nodes=64)
    np.testing.assert_allclose(fit.eta, eta_oracle, rtol=1e-8)
    assert fit.offset == pytest.approx(c_oracle, abs=1e-8)


def test_project_moment_matching_residual_orthogonality():
    # sum w (R - f) = 0 and sum w (R - f) T = 0 within 1e-8
    rng = np.random.default_rng(19)
    fam = GaussianFamily(2, structure="full")
    pts = rng.standard_normal((40, 2))
    vals = np.cos(pts[:, 0]) * pts[:, 1] + 0.3 * pts[:, 0] ** 3
    stack = stack_from_points(pts, vals)
    weights = rng.uniform(0.1, 1.0, size=40)
    fit = project(stack, weights, fam, theta=standard_normal_params(fam))
    wn = weights / weights.sum()
    resid = vals - (fam.suff_stat(pts) @ fit.eta + fit.offset)
    assert abs(wn @ resid) < 1e-8
    np.testing.assert_allclose(fam.suff_stat(pts).T @ (wn * resid), 0.0, atol=1e-8)


def test_project_normal_equation_optimality():
    # perturbing the fit by norm-1e-3 directions never lowers the weighted rss
    rng = np.random.default_rng(23)
    fam = GaussianFamily(1)
    pts = rng.standard_normal((25, 1))
    vals = np.exp(-pts[:, 0]) + 0.5 * pts[:, 0]
    stack = stack_from_points(pts, vals)
    weights = rng.uniform(0.2, 1.0, size=25)
    wn = weights / weights.sum()
    fit = project(stack, weights, fam, theta=standard_normal_params(fam))
    t = fam.suff_stat(pts)

    def rss(eta, c):
        resid = vals - (t @ eta + c)
        return float(wn @ (resid * resid))

    base = rss(fit.eta, fit.offset)
    assert base == pytest.approx(fit.weighted_rss, rel=1e-12)
    for _ in range(100):
        d = rng.standard_normal(fam.dim + 1)
        d *= 1e-3 / np.linalg.norm(d)
        assert rss(fit.eta + d[:-1], fit.offset + d[-1]) >= base - 1e-15


def test_project_reports_condition_and_applies_ridge_when_degenerate():
    fam = GaussianFamily(1)
    # two distinct points cannot identify three coefficients
    stack = stack_from_points([[0.0], [1.0], [1.0]], [0.0, 1.0, 1.0])
    fit = project(stack, np.ones(3), fam, theta=standard_normal_params(fam))
    assert not np.isfinite(fit.gram_condition) or fit.gram_condition > GRAM_CONDITION_LIMIT
    assert np.all(np.isfinite(fit.eta)) and np.isfinite(fit.weighted_rss)
    # a healthy design reports a modest condition number
    rng = np.random.default_rng(29)
    good = stack_from_points(rng.standard_normal((30, 1)), rng.standard_normal(30))
    fit_good = project(good, np.ones(30), fam, theta=standard_normal_params(fam))
    assert fit_good.gram_condition < 1e4


def test_project_weight_validation():
    fam = GaussianFamily(1)
    stack = stack_from_points([[0.0], [1.0], [2.0]], [0.0, 1.0, 2.0])
    with pytest.raises(ValueError):
        project(stack, np.ones(2), fam)
    with pytest.raises(ValueError):
        project(stack, np.array([1.0, -1.0, 1.0]), fam)
    with pytest.raises(ValueError):
        project(stack, np.zeros(3), fam)


def test_surrogate_fit_json_round_trip():
    fit = SurrogateFit(
        eta=np.array([1.5, -2.0]), offset=0.25, weighted_rss=1e-6, gram_condition=12.0
    )
    back = SurrogateFit.from_json(fit.to_json())
    np.testing.assert_allclose(back.eta, fit.eta)
    assert back.offset == fit.offset
    assert back.weighted_rss == fit.weighted_rss
    assert np.isnan(back.gram_condition)


def test_gradient_invariance_of_projection():
    # with population weights, the objective gradient computed through the
    # risk and through its projection agree (1-D quadrature, 1e-4 relative)
    fam = GaussianFamily(1)
    rng = np.random.default_rng(31)
    risk = lambda x: np.tanh(np.atleast_2d(x)[:, 0]) + 0.1 * np.atleast_2d(x)[:, 0] ** 2
    lam = 0.5
    theta_p = standard_normal_params(fam)

    from _oracles import family_moments, fd_grad, gauss_expect

    for _ in range(10):
        mean = rng.uniform(-1.0, 1.0)
        var = np.exp(rng.uniform(-0.7, 0.7))
        theta = fam.natural_from_moments([mean], [[var]])
        eta, c = quad_projection(fam, theta, risk, n_nodes=80)

        def obj_risk(th):
            m, v = family_moments(fam, th)
            return gauss_expect(risk, m, v, n_nodes=80) + lam * fam.kl(th, theta_p)

        def obj_proxy(th):
            return float(eta @ fam.mean_suff_stat(th)) + c + lam * fam.kl(th, theta_p)

        g_risk = fd_grad(obj_risk, theta, h=1e-6)
        g_proxy = fd_grad(obj_proxy, theta, h=1e-6)
        np.testing.assert_allclose(g_risk, g_proxy, rtol=1e-4, atol=1e-8)
