"""Tests for R, S, T pivots and moment adjustment."""

import numpy as np
import pytest

from src.models.base import ParamPoint
from src.models.dataset import StratifiedDataset
from src.models.registry import build
from src.services.estimation import FitResult, fit_mle
from src.services.pivots import (MomentAdjustment, adjust, compute_pivots, inverse_normal,
                                 normal_pvalue, null_fit, score_stat, signed_root, wald_stat)
from src.utils.errors import NegativeDeviance, ValidationError


def _fit(psi, loglik, dropped=()):
    return FitResult(theta=ParamPoint(psi=psi, lam=[0.0]), loglik=loglik, iterations=1,
                     converged=True, dropped_strata=dropped)


@pytest.mark.unit
class TestSignedRoot:

    def test_loglik_drop_of_two(self):
        r = signed_root(None, None, 0.0, _fit(1.0, -10.0), _fit(0.0, -12.0))
        assert r == pytest.approx(2.0)

    def test_sign_follows_estimate(self):
        r = signed_root(None, None, 2.0, _fit(1.0, -10.0), _fit(2.0, -12.0))
        assert r == pytest.approx(-2.0)

    def test_small_negative_drop_clamped(self):
        assert signed_root(None, None, 0.0, _fit(1.0, -10.0), _fit(0.0, -10.0 + 1e-9)) == 0.0

    def test_negative_drop_raises(self):
        with pytest.raises(NegativeDeviance):
            signed_root(None, None, 0.0, _fit(1.0, -10.0), _fit(0.0, -9.0))

    def test_mismatched_strata_rejected(self):
        with pytest.raises(ValidationError):
            signed_root(None, None, 0.0, _fit(1.0, -10.0, (2,)), _fit(0.0, -12.0))

    def test_behrens_fisher_matches_t_statistic(self):
        model = build('behrens_fisher')
        y = np.array([0.3, -1.2, 2.5, 0.9, 1.7, -0.4])
        data = StratifiedDataset.from_strata([y])
        psi0 = 0.3
        full = fit_mle(model, data)
        r = signed_root(model, data, psi0, full, null_fit(model, data, psi0, full))
        m = y.size
        t_classic = (y.mean() - psi0) / (y.std(ddof=1) / np.sqrt(m))
        assert r ** 2 == pytest.approx(m * np.log1p(t_classic ** 2 / (m - 1)), rel=1e-10)
        assert np.sign(r) == np.sign(y.mean() - psi0)


@pytest.mark.unit
class TestScoreAndWald:

    def test_behrens_fisher_pair_score(self, bf_pair):
        model = build('behrens_fisher')
        full = fit_mle(model, bf_pair)
        null = null_fit(model, bf_pair, 0.0, full)
        assert score_stat(model, bf_pair, 0.0, null) == pytest.approx(1.0, abs=1e-12)

    def test_wald_direct_formula(self):
        # psi_hat = 1 and sigma_hat^2 = 1 over four observations give j_p = 4
        model = build('behrens_fisher')
        data = StratifiedDataset.from_strata([[0.0, 2.0, 0.0, 2.0]])
        full = fit_mle(model, data)
        assert wald_stat(model, data, 0.0, full) == pytest.approx(2.0, abs=1e-12)

    @pytest.mark.parametrize('name', ['gamma', 'beta', 'curved_normal', 'behrens_fisher', 'matched_pairs'])
    def test_all_zero_at_mle(self, name, make_data):
        model = build(name)
        data = make_data(name, 8, 6, seed=5)
        full = fit_mle(model, data)
        pivots = compute_pivots(model, data, full.psi, full_fit=full)
        assert pivots.r == pytest.approx(0.0, abs=1e-6)
        assert pivots.s == pytest.approx(0.0, abs=1e-6)
        assert pivots.t == 0.0

    def test_root_non_increasing_in_psi0(self, any_model, make_data):
        data = make_data(any_model.name, 8, 6, seed=5)
        full = fit_mle(any_model, data)
        roots = [compute_pivots(any_model, data, psi0, full_fit=full).r
                 for psi0 in full.psi + np.linspace(-0.6, 0.6, 13)]
        assert np.all(np.diff(roots) <= 1e-9)
        assert roots[0] > 0 > roots[-1]

    def test_pivots_share_sign(self, make_data):
        model = build('gamma')
        data = make_data('gamma', 10, 5)
        full = fit_mle(model, data)
        pivots = compute_pivots(model, data, full.psi - 0.3, full_fit=full)
        assert pivots.r > 0 and pivots.s > 0 and pivots.t > 0
        assert pivots.to_dict()['psi0'] == pytest.approx(full.psi - 0.3)

    def test_null_fit_uses_retained_strata(self):
        model = build('matched_pairs')
        data = model.prepare(StratifiedDataset.from_strata(
            [[1, 0, 0, 1], [1, 1, 0, 0], [0, 1, 1, 0], [1, 0, 1, 1], [0, 0, 0, 0]]))
        full = fit_mle(model, data)
        null = null_fit(model, data, 0.0, full)
        assert null.dropped_strata == full.dropped_strata == (4,)
        assert null.theta.q == 4
        assert np.isfinite(compute_pivots(model, data, 0.0, full, null).r)

    def test_score_close_to_root_for_large_stratum(self, make_data):
        # |S - R| shrinks as the stratum grows
        model = build('behrens_fisher')
        gaps = []
        for m in (50, 800):
            data = make_data('behrens_fisher', 1, m, seed=6)
            full = fit_mle(model, data)
            psi0 = full.psi - 2.0 / np.sqrt(m)
            pivots = compute_pivots(model, data, psi0, full_fit=full)
            gaps.append(abs(pivots.s - pivots.r))
        assert gaps[1] < gaps[0]


@pytest.mark.unit
class TestAdjustment:

    def test_location(self):
        assert adjust(2.0, MomentAdjustment(0.5, 1.25, 'constrained'), 'location') == pytest.approx(1.5)

    def test_location_scale(self):
        assert adjust(2.0, MomentAdjustment(0.5, 1.25, 'constrained'), 'location_scale') == pytest.approx(1.2)

    def test_identity(self):
        adj = MomentAdjustment(0.0, 1.0, 'unconstrained')
        assert adjust(-0.7, adj, 'location') == -0.7
        assert adjust(-0.7, adj, 'location_scale') == -0.7

    def test_unknown_mode(self):
        with pytest.raises(ValidationError):
            adjust(1.0, MomentAdjustment(0.0, 1.0, 'constrained'), 'scale')

    def test_zero_sd_rejected(self):
        with pytest.raises(ValidationError):
            MomentAdjustment(0.0, 0.0, 'constrained')

    def test_unknown_source_rejected(self):
        with pytest.raises(ValidationError):
            MomentAdjustment(0.0, 1.0, 'jackknife')


@pytest.mark.unit
class TestNormalScale:

    def test_normal_cdf(self):
        assert normal_pvalue(1.959964) == pytest.approx(0.975, abs=1e-6)

    def test_inverse_normal(self):
        assert inverse_normal(0.975) == pytest.approx(1.959964, abs=1e-6)

    @pytest.mark.parametrize('p', [0.0, 1.0, -0.2])
    def test_inverse_normal_domain(self, p):
        with pytest.raises(ValidationError):
            inverse_normal(p)
