"""Tests for the constrained and unconstrained parametric bootstrap."""

import numpy as np
import pytest
from pydantic import ValidationError as PydanticValidationError

from src.models.base import layout, simulate
from src.models.registry import build, default_truths
from src.services import bootstrap
from src.services.bootstrap import (BootstrapPlan, bootstrap_moments, constrained_pvalue,
                                    run_bootstrap, sample_moments, tail_pvalue,
                                    unconstrained_pvalue)
from src.services.estimation import fit_mle
from src.services.pivots import null_fit
from src.utils.errors import DegenerateSample, TooManyFailures, ValidationError
from src.utils.rng import stream


@pytest.mark.unit
class TestTally:

    def test_half_below(self):
        assert tail_pvalue([-1.2, 0.3, 0.8, 2.0], 0.5) == 0.5

    def test_observed_below_every_replicate(self):
        assert tail_pvalue([0.1, 0.2, 0.3], -5.0) == 0.0

    def test_ties_count_as_below(self):
        assert tail_pvalue([0.7], 0.7) == 1.0

    def test_empty_sample(self):
        with pytest.raises(ValidationError):
            tail_pvalue([], 0.0)

    def test_moments(self):
        moments = sample_moments([0.0, 1.0, 2.0], 'constrained')
        assert moments.mean == pytest.approx(1.0)
        assert moments.sd == pytest.approx(1.0)
        assert moments.source == 'constrained'

    @pytest.mark.parametrize('stats', [[0.4] * 3, [0.1] * 7, [-2.3] * 50])
    def test_constant_sample_is_degenerate(self, stats):
        with pytest.raises(DegenerateSample):
            sample_moments(stats, 'unconstrained')


@pytest.mark.unit
class TestPlan:

    def test_defaults(self, test_config):
        plan = BootstrapPlan(variant='constrained', seed=3)
        assert plan.k >= 1 and plan.workers == 1 and plan.statistic == 'r'

    @pytest.mark.parametrize('changes', [{'k': 0}, {'seed': -1}, {'seed': 2 ** 64},
                                         {'variant': 'both'}, {'statistic': 'rstar'},
                                         {'fail_budget': 1.5}, {'workers': 0}, {'extra': 1}])
    def test_invalid_plans(self, changes):
        fields = {'variant': 'constrained', 'seed': 3, **changes}
        with pytest.raises(PydanticValidationError):
            BootstrapPlan(**fields)


@pytest.fixture(scope='module')
def gamma_setup():
    model = build('gamma')
    theta = default_truths('gamma', 6, 21)
    data = simulate(model, model.prepare(layout(model, 6, 4)), theta, stream(21, 0, 0))
    full = fit_mle(model, data)
    psi0 = float(np.log(2.0))
    return model, data, psi0, full, null_fit(model, data, psi0, full)


@pytest.mark.integration
class TestRunBootstrap:

    def test_joint_statistics(self, gamma_setup):
        model, data, psi0, full, null = gamma_setup
        plan = BootstrapPlan(variant='constrained', k=40, seed=5)
        results = run_bootstrap(model, data, psi0, plan, full_fit=full, constrained_fit=null)
        assert set(results) == {'r', 's', 't'}
        for name, result in results.items():
            assert 0.0 <= result.pvalue <= 1.0
            assert result.replicate_stats.size == 40 - result.failures
            assert result.moments is not None and result.moments.sd > 0
            assert result.to_dict()['k'] == 40

    def test_same_seed_same_replicates(self, gamma_setup):
        model, data, psi0, full, null = gamma_setup
        plan = BootstrapPlan(variant='unconstrained', k=25, seed=9)
        a = run_bootstrap(model, data, psi0, plan, full_fit=full, constrained_fit=null)['r']
        b = run_bootstrap(model, data, psi0, plan, full_fit=full, constrained_fit=null)['r']
        np.testing.assert_array_equal(a.replicate_stats, b.replicate_stats)
        assert a.pvalue == b.pvalue

    def test_worker_count_does_not_change_result(self, gamma_setup):
        model, data, psi0, full, null = gamma_setup
        serial = BootstrapPlan(variant='constrained', k=24, seed=4)
        parallel = serial.model_copy(update={'workers': 2})
        a = run_bootstrap(model, data, psi0, serial, full_fit=full, constrained_fit=null)
        b = run_bootstrap(model, data, psi0, parallel, full_fit=full, constrained_fit=null)
        for name in ('r', 's', 't'):
            np.testing.assert_array_equal(a[name].replicate_stats, b[name].replicate_stats)

    def test_seeds_and_variants_differ(self, gamma_setup):
        model, data, psi0, full, null = gamma_setup
        base = BootstrapPlan(variant='constrained', k=10, seed=1)
        a = run_bootstrap(model, data, psi0, base, full_fit=full, constrained_fit=null)['r']
        b = run_bootstrap(model, data, psi0, base.model_copy(update={'seed': 2}),
                          full_fit=full, constrained_fit=null)['r']
        c = run_bootstrap(model, data, psi0, base.model_copy(update={'variant': 'unconstrained'}),
                          full_fit=full, constrained_fit=null)['r']
        assert not np.array_equal(a.replicate_stats, b.replicate_stats)
        assert not np.array_equal(a.replicate_stats, c.replicate_stats)

    def test_wrappers_agree_with_joint_run(self, gamma_setup):
        model, data, psi0, full, null = gamma_setup
        plan = BootstrapPlan(variant='constrained', k=20, seed=6, statistic='s')
        joint = run_bootstrap(model, data, psi0, plan, full_fit=full, constrained_fit=null)['s']
        single = constrained_pvalue(model, data, psi0, plan, full_fit=full, constrained_fit=null)
        assert single.pvalue == joint.pvalue
        moments = bootstrap_moments(model, data, psi0, plan, full_fit=full, constrained_fit=null)
        assert moments.mean == pytest.approx(joint.moments.mean)
        unconstrained = unconstrained_pvalue(model, data, psi0, plan, full_fit=full, constrained_fit=null)
        assert unconstrained.variant == 'unconstrained'

    def test_fits_computed_when_missing(self, gamma_setup):
        model, data, psi0, full, null = gamma_setup
        plan = BootstrapPlan(variant='constrained', k=10, seed=6)
        given = run_bootstrap(model, data, psi0, plan, full_fit=full, constrained_fit=null)['r']
        derived = run_bootstrap(model, data, psi0, plan)['r']
        assert derived.observed == pytest.approx(given.observed, abs=1e-8)

    def test_unknown_statistic(self, gamma_setup):
        model, data, psi0, full, null = gamma_setup
        plan = BootstrapPlan(variant='constrained', k=5, seed=6)
        with pytest.raises(ValidationError):
            run_bootstrap(model, data, psi0, plan, statistics=('rstar',))

    def test_too_many_failures(self, gamma_setup, monkeypatch):
        model, data, psi0, full, null = gamma_setup
        real = bootstrap._replicate

        def flaky(job, index):
            return None if index % 4 == 0 else real(job, index)

        monkeypatch.setattr(bootstrap, '_replicate', flaky)
        plan = BootstrapPlan(variant='constrained', k=20, seed=6, fail_budget=0.1)
        with pytest.raises(TooManyFailures) as excinfo:
            run_bootstrap(model, data, psi0, plan, full_fit=full, constrained_fit=null)
        assert excinfo.value.exit_code == 2
        assert excinfo.value.payload['failures'] == 5

    def test_failures_within_budget(self, gamma_setup, monkeypatch):
        model, data, psi0, full, null = gamma_setup
        real = bootstrap._replicate
        monkeypatch.setattr(bootstrap, '_replicate',
                            lambda job, index: None if index == 3 else real(job, index))
        plan = BootstrapPlan(variant='constrained', k=20, seed=6, fail_budget=0.1)
        result = run_bootstrap(model, data, psi0, plan, full_fit=full, constrained_fit=null)['r']
        assert result.failures == 1
        assert result.replicate_stats.size == 19


@pytest.mark.integration
class TestDiscreteBootstrap:

    def test_matched_pairs_constrained(self, make_data):
        model = build('matched_pairs')
        data = make_data('matched_pairs', 15, 4, seed=3)
        plan = BootstrapPlan(variant='constrained', k=30, seed=2, fail_budget=0.5)
        result = run_bootstrap(model, data, 1.0, plan)['r']
        assert 0.0 <= result.pvalue <= 1.0


@pytest.mark.integration
class TestRefitStart:

    def test_warm_and_cold_starts_agree(self, make_data):
        model = build('curved_normal')
        data = make_data('curved_normal', 6, 5, seed=8)
        full = fit_mle(model, data)
        psi0 = full.psi - 0.2
        null = null_fit(model, data, psi0, full)
        warm = BootstrapPlan(variant='constrained', k=15, seed=8)
        cold = warm.model_copy(update={'warm_start': False})
        a = run_bootstrap(model, data, psi0, warm, full_fit=full, constrained_fit=null)
        b = run_bootstrap(model, data, psi0, cold, full_fit=full, constrained_fit=null)
        for name in ('r', 's', 't'):
            np.testing.assert_allclose(a[name].replicate_stats, b[name].replicate_stats, atol=1e-6)
            assert a[name].pvalue == b[name].pvalue


@pytest.mark.integration
class TestPvalueOrdering:

    def test_pvalue_tracks_observed_root(self, gamma_setup):
        model, data, psi0, full, null = gamma_setup
        plan = BootstrapPlan(variant='constrained', k=60, seed=12)
        stats = run_bootstrap(model, data, psi0, plan, full_fit=full, constrained_fit=null)['r'].replicate_stats
        observed = np.linspace(-3.0, 3.0, 61)
        lower = np.array([tail_pvalue(stats, value) for value in observed])
        # Lower-tail tally rises with R; the upper-tail complement falls
        assert np.all(np.diff(lower) >= 0)
        assert np.all(np.diff(1.0 - lower) <= 0)
