import math
from dataclasses import dataclass

import numpy as np
import pytest

from jsdrazor.bolfi import (GPSurrogate, LowerConfidenceBound, MaxVariance, acquire,
                            bolfi_minimize, discrepancy, gp_fit, sic_bolfi)
from jsdrazor.categorical import Categorical, CountVector, empirical_from_counts, sample_multinomial
from jsdrazor.divergence import LN2
from jsdrazor.errors import SampleTooSmall, SimulatorContractError
from jsdrazor.estimate import min_jsd_fit
from jsdrazor.model import multilogit_model
from jsdrazor.simulators import multilogit_simulator

UNIT_BOX_2D = np.array([[0.0, 1.0], [0.0, 1.0]])


@dataclass
class EchoSimulator:
    """Deterministic test double emitting fixed counts."""

    counts: np.ndarray
    d: int = 1
    theta_box: np.ndarray = None

    def __post_init__(self):
        if self.theta_box is None:
            self.theta_box = np.array([[0.0, 1.0]])

    @property
    def k(self):
        return len(self.counts)

    def run(self, theta, n, seed):
        return CountVector(self.counts)


class TestDiscrepancy:
    def test_zero_for_matching_deterministic_output(self):
        p_hat = Categorical(np.array([0.5, 0.3, 0.2]))
        sim = EchoSimulator(np.array([50, 30, 20]))
        assert discrepancy(sim, np.array([0.5]), p_hat, 100, reps=3, seed=1) == 0.0

    def test_small_at_true_parameters_large_sample(self):
        m = multilogit_model(np.eye(2), 1)
        sim = multilogit_simulator(m)
        theta = np.array([0.7])
        p_hat = empirical_from_counts(sample_multinomial(m.probs(theta), 100_000, seed=3))
        assert discrepancy(sim, theta, p_hat, 100_000, reps=1, seed=4) < 0.001

    def test_always_in_range(self, rng):
        m = multilogit_model(np.eye(2), 2)
        sim = multilogit_simulator(m)
        p_hat = Categorical(np.array([0.8, 0.1, 0.1]))
        for i in range(20):
            theta = rng.uniform(-3, 3, 2)
            value = discrepancy(sim, theta, p_hat, 50, reps=1, seed=i)
            assert 0.0 <= value <= LN2

    def test_wrong_k_rejected(self):
        p_hat = Categorical(np.array([0.5, 0.5]))
        sim = EchoSimulator(np.array([50, 30, 20]))
        with pytest.raises(SimulatorContractError):
            discrepancy(sim, np.array([0.5]), p_hat, 100, reps=1, seed=1)

    def test_reps_average_and_seed_derivation(self):
        m = multilogit_model(np.eye(2), 1)
        sim = multilogit_simulator(m)
        p_hat = Categorical(np.array([0.4, 0.3, 0.3]))
        a = discrepancy(sim, np.array([0.2]), p_hat, 200, reps=5, seed=42)
        b = discrepancy(sim, np.array([0.2]), p_hat, 200, reps=5, seed=42)
        assert a == b

    def test_upward_bias_of_expected_discrepancy(self):
        # the noisy simulated summary keeps E[jsd] above the exact value
        from jsdrazor.divergence import jsd

        m = multilogit_model(np.eye(2), 1)
        sim = multilogit_simulator(m)
        p_hat = empirical_from_counts(sample_multinomial(m.probs(np.array([0.7])), 1000, seed=8))
        grid = np.linspace(-2.0, 2.0, 20)
        for i, t in enumerate(grid):
            theta = np.array([t])
            expected = discrepancy(sim, theta, p_hat, 1000, reps=200, seed=100 + i)
            exact = jsd(p_hat, m.probs(theta))
            assert expected >= exact


class TestGPFit:
    def test_interpolates_smooth_noise_free_data(self, rng):
        x = rng.random((50, 2))
        y = np.sin(3 * x[:, 0]) + np.cos(2 * x[:, 1])
        gp = gp_fit(x, y)
        mean, _ = gp.predict(x)
        assert np.abs(mean - y).max() < 1e-4

    def test_degenerate_outputs_flagged_and_constant(self):
        gp = gp_fit(np.array([[0.2], [0.8]]), np.array([1.5, 1.5]))
        assert gp.degenerate
        assert gp.noise_var == pytest.approx(1e-8)
        mean, _ = gp.predict(np.array([[0.1], [0.5], [0.9]]))
        assert np.abs(mean - 1.5).max() < 1e-6

    def test_variance_smaller_at_training_points(self):
        gp = gp_fit(np.array([[0.5, 0.5], [0.52, 0.5], [0.5, 0.52]]),
                    np.array([1.0, 1.1, 0.9]))
        _, var_train = gp.predict(np.array([[0.5, 0.5]]))
        _, var_corner = gp.predict(np.array([[1.0, 1.0]]))
        assert var_train[0] <= var_corner[0]

    def test_marginal_likelihood_not_worse_than_initial(self, rng):
        x = rng.random((40, 2))
        y = np.sin(4 * x[:, 0]) + 0.05 * rng.standard_normal(40)
        gp = gp_fit(x, y)
        assert gp.log_marginal_likelihood() >= gp.lml_initial - 1e-9

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            gp_fit(np.array([[0.5]]), np.array([1.0]))

    def test_gradient_of_marginal_likelihood(self, rng):
        from jsdrazor.bolfi import _lml_and_grad, _sq_dists

        x = rng.random((20, 2))
        z = np.sin(3 * x[:, 0]) + 0.1 * rng.standard_normal(20)
        z = (z - z.mean()) / z.std()
        d2 = _sq_dists(x, x)
        params = np.array([math.log(0.4), math.log(0.7), math.log(1.2), math.log(0.05)])
        _, grad = _lml_and_grad(params, x, z, d2)
        for j in range(4):
            h = 1e-6
            up, dn = params.copy(), params.copy()
            up[j] += h
            dn[j] -= h
            fd = (_lml_and_grad(up, x, z, d2)[0] - _lml_and_grad(dn, x, z, d2)[0]) / (2 * h)
            assert grad[j] == pytest.approx(fd, abs=1e-5)


class TestAcquire:
    def test_max_variance_from_center_goes_to_corner(self):
        gp = GPSurrogate(np.array([[0.5, 0.5]]), np.array([0.3]),
                         np.array([1.0, 1.0]), 1.0, 0.01)
        theta = acquire(gp, MaxVariance(), UNIT_BOX_2D, seed=0)
        assert np.all((theta < 0.05) | (theta > 0.95))

    def test_lcb_zero_beta_is_posterior_mean_minimizer(self, rng):
        x = rng.random((60, 1))
        y = (x[:, 0] - 0.3) ** 2
        gp = gp_fit(x, y)
        theta = acquire(gp, LowerConfidenceBound(0.0), np.array([[0.0, 1.0]]), seed=1)
        grid = np.linspace(0, 1, 4001)[:, None]
        mean, _ = gp.predict(grid)
        brute = grid[int(np.argmin(mean)), 0]
        assert abs(theta[0] - brute) < 5e-3

    def test_acquired_point_inside_box(self, rng):
        x = rng.random((30, 2))
        y = rng.standard_normal(30)
        gp = gp_fit(x, y)
        box = np.array([[-2.0, 3.0], [1.0, 4.0]])
        for seed in range(5):
            theta = acquire(gp, LowerConfidenceBound(2.0), box, seed=seed)
            assert np.all(theta >= box[:, 0]) and np.all(theta <= box[:, 1])

    def test_negative_beta_rejected(self):
        with pytest.raises(ValueError):
            LowerConfidenceBound(-1.0)


class TestBolfiMinimize:
    def test_close_to_exact_minimizer(self):
        m = multilogit_model(np.eye(2), 1)
        sim = multilogit_simulator(m)
        counts = sample_multinomial(m.probs(np.array([0.7])), 1000, seed=11)
        p_hat = empirical_from_counts(counts)
        exact = min_jsd_fit(m, p_hat, seed=0)
        fit = bolfi_minimize(sim, p_hat, budget=200, n_per_sim=1000, seed=5)
        assert abs(fit.theta_hat[0] - exact.theta_hat[0]) < 0.1
        assert fit.evaluations == 200

    def test_budget_equal_to_initialization(self):
        m = multilogit_model(np.eye(2), 1)
        sim = multilogit_simulator(m)
        p_hat = Categorical(np.array([0.5, 0.3, 0.2]))
        fit = bolfi_minimize(sim, p_hat, budget=10, n_per_sim=500, seed=2, init_points=10)
        assert m.contains(fit.theta_hat)
        assert 0.0 <= fit.objective <= LN2

    def test_objective_within_divergence_range(self):
        m = multilogit_model(np.eye(2), 2)
        sim = multilogit_simulator(m)
        p_hat = Categorical(np.array([0.05, 0.05, 0.9]))
        fit = bolfi_minimize(sim, p_hat, budget=30, n_per_sim=200, seed=3)
        assert 0.0 <= fit.objective <= LN2

    def test_bit_reproducible(self):
        m = multilogit_model(np.eye(2), 1)
        sim = multilogit_simulator(m)
        p_hat = Categorical(np.array([0.45, 0.35, 0.2]))
        a = bolfi_minimize(sim, p_hat, budget=40, n_per_sim=300, seed=9)
        b = bolfi_minimize(sim, p_hat, budget=40, n_per_sim=300, seed=9)
        assert np.array_equal(a.theta_hat, b.theta_hat)
        assert a.objective == b.objective

    def test_requires_sample_size(self):
        sim = multilogit_simulator(multilogit_model(np.eye(2), 1))
        with pytest.raises(ValueError):
            bolfi_minimize(sim, Categorical(np.array([0.5, 0.3, 0.2])), budget=30, seed=1)

    def test_budget_improves_localization(self):
        # statistical: the median distance to the exact minimizer shrinks with
        # a larger simulation budget
        m = multilogit_model(np.eye(2), 1)
        sim = multilogit_simulator(m)
        errs = {50: [], 400: []}
        for seed in range(20):
            counts = sample_multinomial(m.probs(np.array([0.7])), 1000, seed=seed * 5 + 1)
            p_hat = empirical_from_counts(counts)
            exact = min_jsd_fit(m, p_hat, seed=seed)
            for budget in errs:
                fit = bolfi_minimize(sim, p_hat, budget=budget, n_per_sim=1000,
                                     seed=seed * 2 + 1)
                errs[budget].append(abs(fit.theta_hat[0] - exact.theta_hat[0]))
        assert np.median(errs[400]) < np.median(errs[50])


class TestSicBolfi:
    def test_penalty_matches_exact_rule(self):
        from jsdrazor.razor import dimension_penalty
        from jsdrazor.estimate import FitResult

        fit = FitResult(np.zeros(1), 0.0, 100, True, 0)
        assert sic_bolfi(fit, 1, 100) == pytest.approx(dimension_penalty(1, 100), abs=1e-15)
        assert sic_bolfi(fit, 1, 100) == pytest.approx(0.69054, abs=1e-4)

    def test_zero_objective_leaves_penalty_only(self):
        from jsdrazor.estimate import FitResult

        fit = FitResult(np.zeros(2), 0.0, 100, True, 0)
        assert sic_bolfi(fit, 0, 1000) == 0.0

    def test_sample_gate(self):
        from jsdrazor.estimate import FitResult

        with pytest.raises(SampleTooSmall):
            sic_bolfi(FitResult(np.zeros(1), 0.1, 10, True, 0), 1, 25)
