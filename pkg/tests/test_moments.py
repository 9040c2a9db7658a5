import math

import numpy as np
import pytest

from switchlsm import (
    StrengthMomentSpec,
    dispersion_index,
    expected_strength,
    g_double_prime,
    g_prime,
    mc_strength_oracle,
    pgf_derivative_m,
    strength_variance,
)
from switchlsm.moments import simulate_strengths
from switchlsm.validation import DegenerateInputError, ValidationError

# frozen with a 40-digit arbitrary-precision evaluation
GPRIME_N100 = 70.0035713374682
GDPRIME_N100 = 5067.24893330369
ES_MIXED = 47.0072991080326


def spec_k1(n=100, d=1, alpha=0.0, beta=1.0, s2=0.25):
    return StrengthMomentSpec(n_nodes=n, latent_dim=d, alpha=alpha, beta=beta,
                              sigma2=(s2,), q_row=(1.0,))


class TestFirstMoment:
    def test_two_nodes_zero_spread(self):
        assert g_prime(spec_k1(n=2, s2=0.0), 0) == pytest.approx(1.0)

    def test_single_node_has_no_neighbors(self):
        assert g_prime(spec_k1(n=1), 0) == 0.0

    def test_reference_value(self):
        assert g_prime(spec_k1(), 0) == pytest.approx(GPRIME_N100, rel=1e-12)


class TestSecondMoment:
    def test_zero_spread_collapses(self):
        n = 17
        assert g_double_prime(spec_k1(n=n, s2=0.0), 0) == pytest.approx((n - 1) ** 2)

    def test_two_nodes_drop_second_summand(self):
        s = spec_k1(n=2, s2=0.3)
        expected = math.exp(0.0) * 1 * (8 * 0.3 + 1) ** -0.5
        assert g_double_prime(s, 0) == pytest.approx(expected)

    def test_reference_value(self):
        assert g_double_prime(spec_k1(), 0) == pytest.approx(GDPRIME_N100, rel=1e-12)


class TestExpectedStrength:
    def test_one_hot_mixture_recovers_single_regime(self):
        s = StrengthMomentSpec(n_nodes=40, latent_dim=1, alpha=0.2, beta=1.0,
                               sigma2=(0.25, 4.0), q_row=(1.0, 0.0))
        assert expected_strength(s) == pytest.approx(g_prime(s, 0))

    def test_mixed_reference_value(self):
        s = StrengthMomentSpec(n_nodes=100, latent_dim=1, alpha=0.0, beta=1.0,
                               sigma2=(0.25, 4.0), q_row=(0.5, 0.5))
        assert expected_strength(s) == pytest.approx(ES_MIXED, rel=1e-12)

    def test_monotonicity_sweep(self):
        base = dict(latent_dim=1, beta=1.0)
        es = lambda n, a, s2, b: expected_strength(StrengthMomentSpec(
            n_nodes=n, latent_dim=1, alpha=a, beta=b, sigma2=(s2,), q_row=(1.0,)))
        for a in np.linspace(-1, 1, 5):
            for s2 in np.linspace(0.1, 4.0, 5):
                assert es(100, a + 0.1, s2, 1.0) > es(100, a, s2, 1.0)
                assert es(101, a, s2, 1.0) > es(100, a, s2, 1.0)
                assert es(100, a, s2 + 0.1, 1.0) < es(100, a, s2, 1.0)
                assert es(100, a, s2, 1.1) < es(100, a, s2, 1.0)


class TestVarianceAndDispersion:
    def test_pure_poisson_equal_dispersion(self):
        s = spec_k1(n=60, s2=0.0)
        assert strength_variance(s) == pytest.approx(59.0)
        assert expected_strength(s) == pytest.approx(59.0)
        assert dispersion_index(s) == pytest.approx(1.0, abs=1e-12)

    def test_single_regime_between_term_vanishes(self):
        s = spec_k1(s2=0.7)
        gp = g_prime(s, 0)
        gpp = g_double_prime(s, 0)
        assert strength_variance(s) == pytest.approx(gpp + gp - gp * gp, rel=1e-12)
        # K = 1: the mixing correction v is zero, so D equals the
        # single-regime 1 + G''/G' - G'
        assert dispersion_index(s) == pytest.approx(1.0 + gpp / gp - gp, rel=1e-12)

    def test_dispersion_undefined_for_single_node(self):
        with pytest.raises(DegenerateInputError):
            dispersion_index(spec_k1(n=1))

    def test_variance_to_mean_is_one_for_all_zero_spread(self):
        for k in range(1, 4):
            s = StrengthMomentSpec(n_nodes=30, latent_dim=1, alpha=0.3, beta=2.0,
                                   sigma2=(0.0,) * k, q_row=(1.0 / k,) * k)
            assert strength_variance(s) / expected_strength(s) == pytest.approx(
                1.0, abs=1e-12)


class TestPgfDerivative:
    def test_m1_reduces_to_first_moment(self, rng):
        for _ in range(10):
            s = StrengthMomentSpec(
                n_nodes=int(rng.integers(2, 8)), latent_dim=int(rng.integers(1, 3)),
                alpha=rng.normal(), beta=rng.gamma(2.0, 0.5) + 0.05,
                sigma2=(rng.gamma(2.0, 0.3),), q_row=(1.0,))
            assert pgf_derivative_m(s, 0, 1) == pytest.approx(
                g_prime(s, 0), rel=1e-10)

    def test_m2_reduces_to_second_moment(self, rng):
        for _ in range(10):
            s = StrengthMomentSpec(
                n_nodes=int(rng.integers(2, 8)), latent_dim=int(rng.integers(1, 3)),
                alpha=rng.normal(), beta=rng.gamma(2.0, 0.5) + 0.05,
                sigma2=(rng.gamma(2.0, 0.3),), q_row=(1.0,))
            assert pgf_derivative_m(s, 0, 2) == pytest.approx(
                g_double_prime(s, 0), rel=1e-10)

    def test_uniform_per_node_alpha_matches_common(self):
        s = spec_k1(n=5, alpha=0.6, s2=0.4)
        hom = pgf_derivative_m(s, 0, 2)
        het = pgf_derivative_m(s, 0, 2, per_node_alpha=np.full(5, 0.3))
        assert het == pytest.approx(hom, rel=1e-12)

    def test_zero_spread_matches_plain_poisson_moments(self):
        # sigma2 = 0 collapses to composition counting: the m-th factorial
        # moment of a Poisson sum with total rate (N-1) e^alpha
        s = spec_k1(n=6, alpha=0.2, s2=0.0)
        lam_tot = 5 * math.exp(0.2)
        for m in (1, 2, 3):
            assert pgf_derivative_m(s, 0, m) == pytest.approx(lam_tot**m, rel=1e-10)

    def test_explosion_guard(self):
        s = spec_k1(n=1000)
        with pytest.raises(ValidationError):
            pgf_derivative_m(s, 0, 4)

    def test_third_factorial_moment_against_monte_carlo(self, rng):
        spec = StrengthMomentSpec(n_nodes=4, latent_dim=1, alpha=0.0, beta=1.0,
                                  sigma2=(0.3,), q_row=(1.0,))
        per_alpha = np.array([0.2, -0.1, 0.4, -0.3])
        exact = pgf_derivative_m(spec, 0, 3, per_node_alpha=per_alpha)
        strengths = simulate_strengths(spec, 200_000, rng, per_node_alpha=per_alpha)
        s0 = strengths[:, 0]
        fac = s0 * (s0 - 1) * (s0 - 2)
        se = fac.std(ddof=1) / math.sqrt(fac.shape[0])
        assert abs(fac.mean() - exact) < 3 * se


class TestMcOracle:
    def test_zero_spread_mean(self, rng):
        s = spec_k1(s2=0.0)
        out = mc_strength_oracle(s, 500, rng)
        assert abs(out["mean"] - 99.0) < 3 * out["se_mean"]

    def test_fixed_seed_deterministic(self):
        s = spec_k1(s2=0.5)
        a = mc_strength_oracle(s, 50, np.random.default_rng(7))
        b = mc_strength_oracle(s, 50, np.random.default_rng(7))
        assert a == b

    def test_mixed_spec_matches_closed_forms(self, rng):
        s = StrengthMomentSpec(n_nodes=100, latent_dim=1, alpha=0.0, beta=1.0,
                               sigma2=(0.25, 4.0), q_row=(0.5, 0.5))
        out = mc_strength_oracle(s, 200, rng)
        assert abs(out["mean"] - expected_strength(s)) < 3 * out["se_mean"]
        assert abs(out["sd"] - math.sqrt(strength_variance(s))) < 3 * out["se_sd"]
        assert abs(out["dispersion"] - dispersion_index(s)) < 3 * out["se_dispersion"]

    def test_needs_two_reps(self, rng):
        with pytest.raises(ValidationError):
            mc_strength_oracle(spec_k1(), 1, rng)
