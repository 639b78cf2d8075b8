import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tempertune.mixture import (
    GalaxyData,
    MixturePriors,
    MixtureState,
    component_counts,
    initial_mixture_state,
    level_scan,
    load_galaxy_data,
    mixture_energy,
    mixture_family,
    update_allocations,
    update_means,
    update_variances,
    update_weights,
)


@pytest.fixture(scope="module")
def galaxy() -> GalaxyData:
    return load_galaxy_data()


def random_state(rng: np.random.Generator, m: int = 82) -> MixtureState:
    return MixtureState(
        z=rng.integers(0, 3, size=m),
        w=rng.dirichlet([1.0, 1.0, 1.0]),
        mu=rng.normal(20.0, 5.0, size=3),
        sigma2=rng.uniform(0.5, 10.0, size=3),
    )


class TestGalaxyData:
    def test_bundled_file_has_82_velocities(self, galaxy):
        assert len(galaxy) == 82
        # classic data set spans roughly 9 to 35 (thousand km/s)
        assert 9.0 < galaxy.y.min() < 10.0
        assert 34.0 < galaxy.y.max() < 35.0

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("")
        with pytest.raises(ValueError, match="no values"):
            load_galaxy_data(path)

    def test_trailing_blank_line_tolerated(self, tmp_path):
        path = tmp_path / "ok.txt"
        path.write_text("\n".join(str(v) for v in range(82)) + "\n\n")
        assert len(load_galaxy_data(path)) == 82

    def test_non_numeric_line_named(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1.0\nnot-a-number\n3.0\n")
        with pytest.raises(ValueError, match="line 2"):
            load_galaxy_data(path, expected_count=3)

    def test_wrong_count_rejected(self, tmp_path):
        path = tmp_path / "short.txt"
        path.write_text("1.0\n2.0\n")
        with pytest.raises(ValueError, match="expected 82"):
            load_galaxy_data(path)


class TestMixtureEnergy:
    def test_empty_component_contributes_nothing(self):
        data = GalaxyData(np.array([1.0, 2.0, 3.0]))
        state = MixtureState(
            z=np.array([0, 0, 0]),
            w=np.array([0.5, 0.25, 0.25]),
            mu=np.array([2.0, 100.0, -50.0]),
            sigma2=np.array([1.0, 1e-8, 1e8]),
        )
        only_first = MixtureState(
            z=state.z, w=state.w, mu=state.mu, sigma2=np.array([1.0, 1.0, 1.0])
        )
        assert mixture_energy(state, data) == pytest.approx(mixture_energy(only_first, data), rel=1e-12)

    def test_perfect_fit_single_datum(self):
        data = GalaxyData(np.array([5.0]))
        state = MixtureState(z=np.array([1]), w=np.array([0.2, 0.6, 0.2]),
                             mu=np.array([0.0, 5.0, 0.0]), sigma2=np.array([1.0, 1.0, 1.0]))
        assert mixture_energy(state, data) == 0.0

    def test_matches_brute_force_log_likelihood(self, galaxy):
        rng = np.random.default_rng(17)
        for _ in range(10):
            state = random_state(rng)
            loglik = 0.0
            for i, y in enumerate(galaxy.y):
                j = state.z[i]
                loglik += -0.5 * math.log(2 * math.pi * state.sigma2[j]) - (y - state.mu[j]) ** 2 / (
                    2 * state.sigma2[j]
                )
            expected = -loglik - 0.5 * len(galaxy) * math.log(2 * math.pi)
            assert mixture_energy(state, galaxy) == pytest.approx(expected, rel=1e-10)

    def test_nonpositive_variance_rejected(self, galaxy):
        state = random_state(np.random.default_rng(0))
        bad = state._replace(sigma2=np.array([1.0, -0.5, 2.0]))
        with pytest.raises(ValueError, match="positive"):
            mixture_energy(bad, galaxy)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000), st.permutations([0, 1, 2]))
    def test_label_permutation_invariance(self, seed, perm):
        data = GalaxyData(np.linspace(9.0, 34.0, 82))
        state = random_state(np.random.default_rng(seed))
        perm = np.asarray(perm)
        inverse = np.empty(3, dtype=int)
        inverse[perm] = np.arange(3)
        permuted = MixtureState(
            z=perm[state.z], w=state.w[inverse], mu=state.mu[inverse], sigma2=state.sigma2[inverse]
        )
        assert mixture_energy(permuted, data) == pytest.approx(mixture_energy(state, data), rel=1e-12)


class TestWeightUpdate:
    def test_concentrates_on_dominant_component(self):
        state = MixtureState(z=np.zeros(82, dtype=int), w=np.full(3, 1 / 3),
                             mu=np.zeros(3), sigma2=np.ones(3))
        rng = np.random.default_rng(5)
        draws = np.array([update_weights(state, rng).w for _ in range(4000)])
        # Dirichlet(83, 1, 1): mean of the loaded coordinate is 83/85
        assert draws[:, 0].mean() == pytest.approx(83.0 / 85.0, abs=0.005)

    def test_empty_counts_give_uniform_prior(self):
        # hypothetical all-empty state: Dirichlet(1,1,1) is uniform on the simplex
        state = MixtureState(z=np.zeros(0, dtype=int), w=np.full(3, 1 / 3),
                             mu=np.zeros(3), sigma2=np.ones(3))
        rng = np.random.default_rng(6)
        draws = np.array([update_weights(state, rng).w for _ in range(6000)])
        assert np.allclose(draws.mean(axis=0), 1 / 3, atol=0.01)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_simplex_invariant_exact(self, seed):
        rng = np.random.default_rng(seed)
        state = random_state(rng)
        w = update_weights(state, rng).w
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(w > 0)


class TestTemperedConditionals:
    def test_beta_zero_reverts_to_priors(self, galaxy):
        rng = np.random.default_rng(31)
        state = random_state(rng)
        mus = np.array([update_means(state, galaxy, 0.0, rng).mu for _ in range(4000)])
        # prior N(0, 1000): sd of the sample mean over 12000 draws ~ 0.29
        assert abs(mus.mean()) < 3 * math.sqrt(1000.0 / mus.size)
        assert mus.var() == pytest.approx(1000.0, rel=0.05)
        sigmas = np.array([update_variances(state, galaxy, 0.0, rng).sigma2 for _ in range(4000)])
        # InvGam(1, 1): P(X <= 1) = exp(-1)
        assert (sigmas <= 1.0).mean() == pytest.approx(math.exp(-1.0), abs=0.01)

    def test_empty_component_draws_from_prior_at_beta_one(self, galaxy):
        rng = np.random.default_rng(32)
        state = random_state(rng)._replace(z=np.zeros(82, dtype=int))  # components 1, 2 empty
        mus = np.array([update_means(state, galaxy, 1.0, rng).mu[1:] for _ in range(4000)])
        assert abs(mus.mean()) < 3 * math.sqrt(1000.0 / mus.size)
        assert mus.var() == pytest.approx(1000.0, rel=0.05)

    def test_mean_conditional_matches_grid_density(self, galaxy):
        # long Gibbs run at fixed z against the normal conditional CDF on a grid
        beta = 1.0
        rng = np.random.default_rng(33)
        state = initial_mixture_state(galaxy)
        draws = np.empty(10_000)
        for t in range(draws.size):
            state = update_means(state, galaxy, beta, rng)
            draws[t] = state.mu[0]
        n0 = int(component_counts(state.z)[0])
        ysum = float(galaxy.y[state.z == 0].sum())
        precision = beta * n0 / state.sigma2[0] + 1.0 / 1000.0
        mean = beta * ysum / state.sigma2[0] / precision
        grid = np.linspace(draws.min(), draws.max(), 1000)
        cdf = 0.5 * (1 + np.vectorize(math.erf)((grid - mean) / math.sqrt(2.0 / precision)))
        empirical = np.searchsorted(np.sort(draws), grid) / draws.size
        ks = np.max(np.abs(empirical - cdf))
        assert ks < 0.02

    def test_variance_conditional_matches_inverse_gamma_moments(self, galaxy):
        beta = 0.7
        rng = np.random.default_rng(34)
        state = initial_mixture_state(galaxy)
        n, = np.where(component_counts(state.z) > 5)[0][:1]
        draws = np.empty((8000, 3))
        for t in range(draws.shape[0]):
            draws[t] = update_variances(state, galaxy, beta, rng).sigma2
        counts = component_counts(state.z)
        resid2 = (galaxy.y - state.mu[state.z]) ** 2
        ss = np.bincount(state.z, weights=resid2, minlength=3)
        shape = 1.0 + 0.5 * beta * counts[n]
        rate = 1.0 + 0.5 * beta * ss[n]
        expected_mean = rate / (shape - 1.0)
        assert draws[:, n].mean() == pytest.approx(expected_mean, rel=0.05)

    def test_allocation_sweep_matches_enumeration(self):
        # identical observations make all sites replicas of one single-site
        # chain; tally against the exact conditional
        y_value = 21.0
        data = GalaxyData(np.full(82, y_value))
        w = np.array([0.5, 0.3, 0.2])
        mu = np.array([19.0, 21.0, 23.0])
        sigma2 = np.array([4.0, 1.0, 9.0])
        log_phi = -0.5 * np.log(2 * math.pi * sigma2) - (y_value - mu) ** 2 / (2 * sigma2)
        beta = 1.0
        post = w * np.exp(beta * log_phi)
        post /= post.sum()
        rng = np.random.default_rng(35)
        state = MixtureState(z=rng.integers(0, 3, 82), w=w, mu=mu, sigma2=sigma2)
        tallies = np.zeros(3)
        scans = 2000
        for _ in range(scans):
            state = update_allocations(state, data, beta, rng)
            tallies += np.bincount(state.z, minlength=3)
        freq = tallies / tallies.sum()
        # the site chains are correlated in time; 3 batch-mean standard errors
        se = np.sqrt(post * (1 - post) / (scans * 82 / 10))
        assert np.all(np.abs(freq - post) < 3 * np.maximum(se, 1e-3))

    def test_allocation_beta_zero_uses_weights_only(self):
        data = GalaxyData(np.linspace(0, 1, 82))
        w = np.array([0.6, 0.3, 0.1])
        state = MixtureState(z=np.zeros(82, dtype=int), w=w,
                             mu=np.array([0.0, 100.0, -100.0]), sigma2=np.array([1.0, 1.0, 1.0]))
        rng = np.random.default_rng(36)
        tallies = np.zeros(3)
        for _ in range(3000):
            state = update_allocations(state, data, 0.0, rng)
            tallies += np.bincount(state.z, minlength=3)
        freq = tallies / tallies.sum()
        assert np.all(np.abs(freq - w) < 0.02)

    def test_identical_components_always_accept(self):
        data = GalaxyData(np.linspace(0, 1, 82))
        state = MixtureState(z=np.zeros(82, dtype=int), w=np.full(3, 1 / 3),
                             mu=np.full(3, 0.5), sigma2=np.full(3, 2.0))
        rng = np.random.default_rng(37)
        new = update_allocations(state, data, 1.0, rng)
        assert np.all(new.z != state.z)  # the two-way proposal always moves


class TestLevelScanInvariance:
    def test_flat_level_runs_agree_across_seeds(self, galaxy):
        # two independent long runs of the full scan at beta = 1/16 must
        # agree on the pooled mean of the component means
        beta = 1.0 / 16.0

        def pooled_mu(seed):
            rng = np.random.default_rng(seed)
            state = initial_mixture_state(galaxy)
            total = 0.0
            n = 15_000
            mus = np.empty((n, 3))
            for t in range(n):
                state = level_scan(state, galaxy, beta, rng)
                mus[t] = state.mu
            return mus[2000:]

        mus_a, mus_b = pooled_mu(101), pooled_mu(202)
        from tempertune.diagnostics import batch_means_standard_error

        pooled_a = mus_a.mean(axis=1)
        pooled_b = mus_b.mean(axis=1)
        se = math.hypot(
            batch_means_standard_error(pooled_a), batch_means_standard_error(pooled_b)
        )
        assert abs(pooled_a.mean() - pooled_b.mean()) < 4 * se

    def test_beta_one_conditionals_are_standard_conjugate(self, galaxy):
        # at beta = 1 the tempered precision/shape reduce to the textbook
        # untempered updates
        state = initial_mixture_state(galaxy)
        counts = component_counts(state.z)
        precision = 1.0 * counts / state.sigma2 + 1.0 / 1000.0
        assert np.all(precision > counts / state.sigma2)
        shape = 1.0 + 0.5 * 1.0 * counts
        assert np.all(shape == 1.0 + counts / 2.0)


class TestFamilyWiring:
    def test_kernel_energy_matches_direct_evaluation(self, galaxy):
        family = mixture_family(galaxy)
        rng = np.random.default_rng(40)
        state = family.start_state(rng)
        for _ in range(20):
            state = family.kernel(0.3, state, rng)
            assert state.energy == pytest.approx(mixture_energy(state.value, galaxy), abs=1e-9)

    def test_trace_columns(self, galaxy):
        family = mixture_family(galaxy)
        assert family.trace_columns == (
            "w_1", "w_2", "w_3", "mu_1", "mu_2", "mu_3", "sigma2_1", "sigma2_2", "sigma2_3",
        )
        state = family.start_state(np.random.default_rng(0))
        assert len(family.trace_row(state)) == 9

    def test_allocation_columns_behind_flag(self, galaxy):
        family = mixture_family(galaxy, include_allocations=True)
        assert family.trace_columns[-1] == "z_82"
        state = family.start_state(np.random.default_rng(0))
        assert len(family.trace_row(state)) == 9 + 82

    def test_initial_state_deterministic(self, galaxy):
        s1 = initial_mixture_state(galaxy)
        s2 = initial_mixture_state(galaxy)
        np.testing.assert_array_equal(s1.z, s2.z)
        np.testing.assert_array_equal(s1.mu, s2.mu)
        assert np.all(np.diff(s1.mu) > 0)  # groups ordered by the sort
