"""Tests for gamma-family special functions."""

import numpy as np
import pytest

from src.utils.errors import ValidationError
from src.utils.special import digamma, log_beta, log_gamma, trigamma


@pytest.mark.unit
class TestSpecialFunctions:

    def test_digamma_at_one_is_minus_euler_gamma(self):
        assert digamma(1.0) == pytest.approx(-0.5772156649015329, abs=1e-14)

    def test_trigamma_at_one(self):
        assert trigamma(1.0) == pytest.approx(np.pi ** 2 / 6.0, rel=1e-14)

    def test_log_gamma_integers(self):
        np.testing.assert_allclose(log_gamma(np.array([1.0, 2.0, 5.0])),
                                   np.log([1.0, 1.0, 24.0]), atol=1e-14)

    def test_log_beta_uniform(self):
        assert log_beta(1.0, 1.0) == pytest.approx(0.0, abs=1e-15)

    def test_digamma_recurrence(self):
        x = np.linspace(0.3, 7.0, 15)
        np.testing.assert_allclose(digamma(x + 1.0), digamma(x) + 1.0 / x, rtol=1e-12)

    @pytest.mark.parametrize('func', [log_gamma, digamma, trigamma])
    def test_rejects_non_positive(self, func):
        with pytest.raises(ValidationError):
            func(np.array([1.0, 0.0]))

    def test_log_beta_rejects_negative(self):
        with pytest.raises(ValidationError):
            log_beta(1.0, -0.5)
