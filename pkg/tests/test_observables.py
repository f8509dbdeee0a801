import math

import numpy as np
import pytest

from hslab.ensemble import GCConfig, InitialLaw, run_replicas
from hslab.hardsphere import SystemState
from hslab.observables import (
    PhaseBins,
    TestFunction,
    empirical_measure,
    estimate_F1,
    estimate_F2_connected,
    estimate_covariance,
    estimate_log_mgf,
    fluctuation_field,
    fluctuation_values,
    k_statistics,
    named_test_function,
    variance_decomposition_residual,
)

H_ONE = TestFunction(lambda x, v: np.ones(len(v)), name="one", bound=1.0)
H_VX = named_test_function("polynomial", terms=[(1.0, 0, 1)], name="vx")
H_BUMP = named_test_function("gaussian_bump", center=(0.3, -0.2), width=0.8)


def poisson_ensemble(seed, intensity=60.0, replicas=400, beta=1.0, times=(0.0,)):
    """Effectively exclusion-free ensemble (diameter so small it never binds)."""
    cfg = GCConfig(
        dimension=2, diameter=1e-7, intensity=intensity, seed=seed, replicas=replicas,
        law=InitialLaw("maxwellian", beta=beta),
    )
    return run_replicas(cfg, observables=[], sample_times=list(times))


class TestPointwise:
    def test_empty_state_measures_zero(self):
        state = SystemState(np.zeros((0, 2)), np.zeros((0, 2)), 0.01)
        assert empirical_measure(state, H_ONE, mu=50.0) == 0.0

    def test_constant_counts_particles(self):
        state = SystemState([[0.1, 0.2], [0.5, 0.6], [0.9, 0.9]], np.zeros((3, 2)), 0.01)
        assert empirical_measure(state, H_ONE, mu=50.0) == pytest.approx(3 / 50.0)

    def test_single_particle_bump(self):
        state = SystemState([[0.5, 0.5]], [[0.3, -0.2]], 0.01)
        val = empirical_measure(state, H_BUMP, mu=10.0)
        assert val == pytest.approx(1.0 / 10.0, rel=1e-12)

    def test_fluctuation_centering(self):
        state = SystemState([[0.1, 0.2], [0.4, 0.4]], np.ones((2, 2)), 0.01)
        pi = empirical_measure(state, H_ONE, mu=25.0)
        assert fluctuation_field(state, H_ONE, pi, mu=25.0) == 0.0

    def test_fluctuation_sqrt_mu_scaling(self):
        state = SystemState([[0.1, 0.2]], [[0.0, 0.0]], 0.01)
        z1 = fluctuation_field(state, H_ONE, 0.0, mu=100.0)
        # fixing pi and the reference, quadrupling mu doubles zeta
        z2 = math.sqrt(4 * 100.0) * (empirical_measure(state, H_ONE, 100.0) - 0.0)
        assert z2 == pytest.approx(2 * z1)

    def test_linearity_in_h(self):
        rng = np.random.default_rng(0)
        state = SystemState(rng.random((20, 2)), rng.normal(size=(20, 2)), 1e-6)
        combo = TestFunction(lambda x, v: 2.0 * H_VX.evaluator(x, v) + 3.0 * H_BUMP.evaluator(x, v))
        lhs = empirical_measure(state, combo, mu=30.0)
        rhs = 2.0 * empirical_measure(state, H_VX, 30.0) + 3.0 * empirical_measure(state, H_BUMP, 30.0)
        assert lhs == pytest.approx(rhs, rel=1e-12)


class TestKStatistics:
    def test_constant_samples(self):
        x = np.full(50, 3.7)
        assert k_statistics(x, 2) == pytest.approx(0.0, abs=1e-12)
        assert k_statistics(x, 3) == pytest.approx(0.0, abs=1e-12)
        assert k_statistics(x, 4) == pytest.approx(0.0, abs=1e-12)

    def test_two_samples_unbiased_variance(self):
        assert k_statistics([0.0, 2.0], 2) == pytest.approx(2.0)

    def test_gaussian_higher_cumulants_vanish(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=10**5)
        se3 = math.sqrt(6 / len(x))
        se4 = math.sqrt(24 / len(x))
        assert abs(k_statistics(x, 3)) <= 4 * se3
        assert abs(k_statistics(x, 4)) <= 4 * se4

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            k_statistics([1.0, 2.0], 3)


class TestEnsembleEstimators:
    def test_poisson_baseline_connected_correlation_vanishes(self):
        ens = poisson_ensemble(seed=21)
        for h in (H_ONE, H_BUMP, H_VX):
            val, err = estimate_F2_connected(ens, h, 0.0)
            assert abs(val) <= 3.5 * err, f"{h.name}: {val} +- {err}"

    def test_variance_decomposition_is_algebraic_identity(self):
        ens = poisson_ensemble(seed=22, replicas=150)
        for h in (H_ONE, H_BUMP):
            assert abs(variance_decomposition_residual(ens, h, 0.0)) < 1e-12

    def test_covariance_symmetry_and_positivity(self):
        ens = poisson_ensemble(seed=23, replicas=200)
        var, _ = estimate_covariance(ens, H_BUMP, H_BUMP, 0.0, 0.0)
        assert var >= 0.0
        c12, _ = estimate_covariance(ens, H_BUMP, H_VX, 0.0, 0.0)
        c21, _ = estimate_covariance(ens, H_VX, H_BUMP, 0.0, 0.0)
        assert c12 == pytest.approx(c21, rel=1e-9)

    def test_initial_covariance_matches_f0_integral(self):
        # at time zero Cov(zeta(h1), zeta(h2)) ~ int h1 h2 f0 + O(eps)
        ens = poisson_ensemble(seed=24, intensity=80.0, replicas=1500)
        val, err = estimate_covariance(ens, H_VX, H_VX, 0.0, 0.0)
        assert abs(val - 1.0) <= 3 * err

    def test_fluctuation_values_loo_vs_mean(self):
        ens = poisson_ensemble(seed=25, replicas=50)
        loo = fluctuation_values(ens, H_ONE, 0.0, reference="loo")
        mean = fluctuation_values(ens, H_ONE, 0.0, reference="mean")
        r = len(loo)
        # loo centering rescales mean-centered values by r/(r-1)
        assert np.allclose(loo, mean * r / (r - 1), rtol=1e-10)
        assert abs(mean.mean()) < 1e-12 * max(1.0, np.abs(mean).max())

    def test_log_mgf_zero_function(self):
        ens = poisson_ensemble(seed=26, replicas=30)
        zero = TestFunction(lambda x, v: np.zeros(len(v)), name="zero", bound=0.0)
        val, err = estimate_log_mgf(ens, zero, 0.0)
        assert val == 0.0

    def test_log_mgf_constant_matches_poisson(self):
        # E exp(c N) = exp(lam (e^c - 1)) for exclusion-free sampling
        lam = 40.0
        c = 0.05
        ens = poisson_ensemble(seed=27, intensity=lam, replicas=3000)
        const = TestFunction(lambda x, v: np.full(len(v), c), name="const", bound=c)
        val, err = estimate_log_mgf(ens, const, 0.0)
        exact = lam * (math.exp(c) - 1.0) / lam
        assert abs(val - exact) <= 4 * err

    def test_log_mgf_small_h_expansion(self):
        ens = poisson_ensemble(seed=28, intensity=50.0, replicas=3000)
        small = TestFunction(lambda x, v: 0.02 * H_BUMP.evaluator(x, v), bound=0.02)
        mu = ens.cfg.mu
        val, err = estimate_log_mgf(ens, small, 0.0)
        sums = np.array([small(p, v).sum() if len(v) else 0.0 for p, v in ens.iter_snapshots(0)])
        taylor = (sums.mean() + 0.5 * sums.var(ddof=1)) / mu
        # third-order remainder budget
        budget = abs(sums - sums.mean()).max() ** 3 / (6 * mu)
        assert abs(val - taylor) <= 4 * err + budget

    def test_requires_minimum_replicas(self):
        ens = poisson_ensemble(seed=29, replicas=20)
        with pytest.raises(ValueError):
            estimate_F2_connected(ens, H_ONE, 0.0)


class TestF1Binning:
    def test_empty_law_gives_zero_density(self):
        cfg = GCConfig(dimension=2, diameter=1e-6, intensity=10.0, seed=30, replicas=5,
                       law=InitialLaw(mass=0.0))
        ens = run_replicas(cfg, sample_times=[0.0])
        bins = PhaseBins([np.linspace(-3, 3, 7), np.linspace(-3, 3, 7)])
        density, _, overflow = estimate_F1(ens, bins, 0.0)
        assert np.all(density == 0.0)
        assert overflow == 0

    def test_maxwellian_bins_match_analytic_masses(self):
        beta = 1.0
        cfg = GCConfig(dimension=2, diameter=1e-6, intensity=60.0, seed=31, replicas=600,
                       law=InitialLaw("maxwellian", beta=beta))
        ens = run_replicas(cfg, sample_times=[0.0])
        edges = np.linspace(-2.0, 2.0, 5)
        bins = PhaseBins([edges, edges])
        density, stderr, overflow = estimate_F1(ens, bins, 0.0)
        from scipy.stats import norm

        masses = np.diff(norm.cdf(edges * math.sqrt(beta)))
        vol = bins.volumes()
        expected = np.multiply.outer(masses, masses) / vol
        miss = np.abs(density - expected) > 3 * stderr
        # allow a small number of 3-sigma misses among 16 bins
        assert miss.sum() <= 2

    def test_histogram_consistency_with_pi(self):
        cfg = GCConfig(dimension=2, diameter=1e-6, intensity=50.0, seed=32, replicas=300)
        ens = run_replicas(cfg, sample_times=[0.0])
        edges = np.linspace(-4.5, 4.5, 19)
        bins = PhaseBins([edges, edges])
        density, _, overflow = estimate_F1(ens, bins, 0.0)
        vol = bins.volumes()
        lhs = float((density * vol).sum())
        pis = [len(v) / cfg.mu for _, v in ens.iter_snapshots(0)]
        assert lhs == pytest.approx(np.mean(pis), rel=0.01)
        assert overflow < 0.001


class TestGrowthTags:
    def test_bounded_tag_checks(self):
        rng = np.random.default_rng(33)
        assert H_BUMP.check_growth(rng)
        assert H_VX.check_growth(rng)

    def test_indicator_box(self):
        h = named_test_function("indicator_box", lower=(-1, -1), upper=(1, 1))
        vals = h(np.zeros((3, 2)), np.array([[0.0, 0.0], [2.0, 0.0], [0.5, -0.5]]))
        assert vals.tolist() == [1.0, 0.0, 1.0]
