"""Tests for constrained and full maximum-likelihood fitting."""

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from src.models.base import ParamPoint, stratum_information
from src.models.dataset import StratifiedDataset
from src.models.registry import build
from src.services.estimation import (FitOptions, efficient_score, fit_constrained, fit_mle,
                                     partial_expected_info, profile_curve, profile_info,
                                     profile_loglik, profile_score, retained)
from src.utils.errors import AllStrataDiverged, StratumDiverged
from src.utils.rng import stream
from src.utils.solvers import maximize


def grid_argmax(f, lo, hi, resolution=1e-7, points=41):
    """Nested grid search: refine around the best point until the spacing is below resolution."""
    while True:
        grid = np.linspace(lo, hi, points)
        values = np.array([f(p) for p in grid])
        best = int(np.argmax(values))
        step = grid[1] - grid[0]
        if step < resolution:
            return grid[best]
        lo, hi = grid[max(best - 2, 0)], grid[min(best + 2, points - 1)]


# Pairs of strata with concordant and discordant responses plus one all-zero stratum
MATCHED_PAIRS_STRATA = [[1, 0, 0, 1], [1, 1, 0, 0], [0, 1, 1, 0], [1, 0, 1, 1], [0, 0, 0, 0]]


@pytest.mark.unit
class TestSolver:

    def test_independent_quadratics(self):
        targets = np.array([-3.0, 0.5, 10.0])
        result = maximize(lambda x: (targets - x, np.ones_like(x)), np.zeros(3),
                          grad_tol=1e-12, max_iter=20, bound=50.0)
        np.testing.assert_allclose(result.x, targets, atol=1e-12)
        assert result.converged.all()

    def test_root_on_bracket_endpoint(self):
        # Bracket expansion from 0 with unit steps lands exactly on both roots
        targets = np.array([3.0, -1.0])
        result = maximize(lambda x: (targets - x, np.ones_like(x)), np.zeros(2),
                          grad_tol=1e-12, max_iter=5, bound=50.0)
        np.testing.assert_array_equal(result.x, targets)
        assert result.converged.all()
        assert result.iterations <= 2

    def test_unbounded_problem_diverges(self):
        result = maximize(lambda x: (np.exp(-x), np.exp(-x)), np.zeros(2),
                          grad_tol=1e-10, max_iter=50, bound=50.0)
        assert result.diverged.all()

    def test_results_do_not_depend_on_batch(self):
        def fun(x):
            return np.tanh(1.0 - x), 1.0 / np.cosh(1.0 - x) ** 2
        alone = maximize(fun, [4.0], grad_tol=1e-12, max_iter=50, bound=50.0)
        batch = maximize(fun, [4.0, -7.0], grad_tol=1e-12, max_iter=50, bound=50.0)
        assert alone.x[0] == pytest.approx(batch.x[0], abs=1e-14)


@pytest.mark.unit
class TestConstrainedFit:

    def test_gamma_closed_form(self):
        data = StratifiedDataset.from_strata([[2.0, 4.0], [5.0, 7.0]])
        fit = fit_constrained(build('gamma'), data, np.log(2.0))
        np.testing.assert_allclose(fit.theta.lam, [np.log(1.5), np.log(3.0)], atol=1e-12)
        assert fit.iterations == 0

    def test_gamma_newton_matches_closed_form(self, make_data):
        model = build('gamma')
        data = make_data('gamma', 8, 5)
        closed = fit_constrained(model, data, 0.4)
        newton = fit_constrained(model, data, 0.4, options=FitOptions(use_closed_form=False))
        np.testing.assert_allclose(newton.theta.lam, closed.theta.lam, atol=1e-8)

    def test_behrens_fisher_closed_form(self):
        data = StratifiedDataset.from_strata([[-1.0, 1.0]])
        fit = fit_constrained(build('behrens_fisher'), data, 0.0)
        assert fit.theta.lam[0] == pytest.approx(0.0, abs=1e-14)

    @pytest.mark.parametrize('name', ['beta', 'curved_normal', 'matched_pairs'])
    def test_newton_matches_golden_section_oracle(self, name, make_data):
        model = build(name)
        for seed in range(1, 6):
            data = make_data(name, 6, 6, seed=seed)
            psi = float(stream(seed, 7).uniform(-0.3, 0.3))
            fit = fit_constrained(model, data, psi, options=FitOptions(drop_divergent=True))
            kept = retained(data, fit)
            covariates = np.split(kept.xs, np.cumsum(kept.sizes)[:-1])
            for i, (y, x) in enumerate(zip(kept.strata, covariates)):
                def loss(lam):
                    return -float(np.sum(model.log_density(y, x, psi, np.full(y.shape, lam))))
                lam_hat = fit.theta.lam[i]
                oracle = minimize_scalar(loss, bounds=(lam_hat - 1.0, lam_hat + 1.0), method='bounded',
                                         options={'xatol': 1e-10})
                assert lam_hat == pytest.approx(oracle.x, abs=1e-6)

    def test_discrete_strata_are_dropped(self):
        model = build('matched_pairs')
        data = model.prepare(StratifiedDataset.from_strata(MATCHED_PAIRS_STRATA))
        fit = fit_constrained(model, data, 0.5)
        assert fit.dropped_strata == (4,)
        assert fit.theta.q == 4

    def test_strict_fit_raises_for_divergent_stratum(self):
        model = build('matched_pairs')
        data = model.prepare(StratifiedDataset.from_strata(MATCHED_PAIRS_STRATA))
        with pytest.raises(StratumDiverged) as excinfo:
            fit_constrained(model, data, 0.5, options=FitOptions(drop_divergent=False))
        assert excinfo.value.stratum == 4

    def test_all_strata_diverged(self):
        model = build('matched_pairs')
        data = model.prepare(StratifiedDataset.from_strata([[0, 0], [1, 1]]))
        with pytest.raises(AllStrataDiverged):
            fit_constrained(model, data, 0.0)


@pytest.mark.unit
class TestFullFit:

    def test_behrens_fisher_single_stratum(self, bf_pair):
        fit = fit_mle(build('behrens_fisher'), bf_pair)
        assert fit.psi == pytest.approx(1.0, abs=1e-12)
        assert fit.theta.lam[0] == pytest.approx(0.0, abs=1e-12)
        assert fit.converged

    def test_gamma_stationary_local_maximum(self, make_data):
        model = build('gamma')
        data = make_data('gamma', 10, 4)
        fit = fit_mle(model, data)
        assert abs(profile_score(model, data, fit.psi)) < 1e-8
        top = profile_loglik(model, data, fit.psi)
        assert top >= profile_loglik(model, data, fit.psi + 0.01)
        assert top >= profile_loglik(model, data, fit.psi - 0.01)
        assert fit.loglik == pytest.approx(top, abs=1e-10)

    def test_curved_matches_nested_grid(self, make_data):
        model = build('curved_normal')
        data = make_data('curved_normal', 5, 8, seed=3)
        fit = fit_mle(model, data)
        oracle = grid_argmax(lambda p: profile_loglik(model, data, p), fit.psi - 0.5, fit.psi + 0.5)
        assert fit.psi == pytest.approx(oracle, abs=1e-5)

    def test_matched_pairs_drop_recorded(self):
        model = build('matched_pairs')
        data = model.prepare(StratifiedDataset.from_strata(MATCHED_PAIRS_STRATA))
        fit = fit_mle(model, data)
        assert fit.dropped_strata == (4,)
        assert np.isfinite(fit.psi)
        assert fit.to_dict()['dropped_strata'] == [4]

    @pytest.mark.parametrize('name', ['gamma', 'beta', 'curved_normal', 'behrens_fisher', 'matched_pairs'])
    def test_score_vanishes_at_mle(self, name, make_data):
        model = build(name)
        data = make_data(name, 12, 6, seed=2)
        fit = fit_mle(model, data)
        assert abs(profile_score(model, data, fit.psi, fit=fit)) < 1e-7

    def test_warm_start_reaches_same_fit(self, make_data):
        model = build('beta')
        data = make_data('beta', 6, 5)
        cold = fit_mle(model, data)
        warm = fit_mle(model, data, psi_start=cold.psi + 0.3, lam_start=cold.theta.lam)
        assert warm.psi == pytest.approx(cold.psi, abs=1e-8)


@pytest.mark.unit
class TestProfileQuantities:

    def test_profile_score_matches_finite_difference(self, make_data):
        model = build('gamma')
        data = make_data('gamma', 6, 5)
        psi = fit_mle(model, data).psi + 0.3
        h = 1e-4
        fd = (profile_loglik(model, data, psi + h) - profile_loglik(model, data, psi - h)) / (2 * h)
        assert profile_score(model, data, psi) == pytest.approx(fd, rel=1e-5)

    @pytest.mark.parametrize('name', ['gamma', 'beta', 'curved_normal'])
    def test_profile_info_matches_finite_difference(self, name, make_data):
        model = build(name)
        data = make_data(name, 6, 6, seed=4)
        psi = fit_mle(model, data).psi + 0.1
        tight = FitOptions(grad_tol=1e-11)
        h = 1e-4
        fd = -(profile_score(model, data, psi + h, options=tight)
               - profile_score(model, data, psi - h, options=tight)) / (2 * h)
        assert profile_info(model, data, psi, options=tight) == pytest.approx(fd, rel=1e-5)

    def test_behrens_fisher_score_positive_below_data(self):
        data = StratifiedDataset.from_strata([[1.0, 2.0, 4.0], [3.0, 1.5]])
        assert profile_score(build('behrens_fisher'), data, 0.5) > 0

    def test_behrens_fisher_profile_info_positive(self, make_data):
        model = build('behrens_fisher')
        data = make_data('behrens_fisher', 4, 5)
        fit = fit_mle(model, data)
        assert profile_info(model, data, fit.psi, fit=fit) > 0

    def test_behrens_fisher_partial_information(self):
        model = build('behrens_fisher')
        data = StratifiedDataset.balanced(np.zeros((2, 4)))
        theta = ParamPoint(psi=0.0, lam=[0.0, np.log(2.0)])
        assert partial_expected_info(model, data, theta) == pytest.approx(6.0, abs=1e-12)

    def test_profile_curve_matches_pointwise(self, make_data):
        model = build('beta')
        data = make_data('beta', 4, 5)
        psis = np.linspace(0.0, 1.5, 4)
        curve = profile_curve(model, data, psis)
        for psi, value in zip(psis, curve):
            assert value == pytest.approx(profile_loglik(model, data, psi), abs=1e-9)

    def test_gamma_partial_information_is_efficient_score_variance(self):
        # Var of the efficient score per observation under theta, by simulation
        model = build('gamma')
        q, m, draws = 3, 5, 100_000
        theta = ParamPoint(psi=np.log(2.0), lam=[0.1, -0.4, 0.7])
        data = StratifiedDataset.balanced(np.ones((q, m)))
        rng = stream(99, 1)
        lam = np.broadcast_to(data.expand(theta.lam), (draws, data.n))
        y = model.sample(np.zeros((draws, data.n)), theta.psi, lam, rng)
        u_psi, u_lam = model.score(y, 0.0, theta.psi, lam)
        i_pp, i_pl, i_ll = model.expected_info(0.0, theta.psi, lam)
        efficient = np.sum(u_psi - i_pl / i_ll * u_lam, axis=1)
        centered = efficient - efficient.mean()
        var = np.mean(centered ** 2)
        se = np.sqrt((np.mean(centered ** 4) - var ** 2) / draws)
        assert abs(var - partial_expected_info(model, data, theta)) <= 3.0 * se

    def test_efficient_score_helper_agrees_with_formula(self, make_data):
        model = build('beta')
        data = make_data('beta', 3, 4)
        theta = ParamPoint(psi=0.5, lam=[0.0, 0.3, -0.2])
        i_pp, i_pl, i_ll = stratum_information(model, data, theta, expected=True)
        u_psi = np.sum(model.score(data.y, data.xs, 0.5, data.expand(theta.lam))[0])
        u_lam = data.stratum_sum(model.score(data.y, data.xs, 0.5, data.expand(theta.lam))[1])
        expected = u_psi - np.sum(i_pl / i_ll * u_lam)
        assert efficient_score(model, data, theta) == pytest.approx(expected, rel=1e-12)
