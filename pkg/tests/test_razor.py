import math

import numpy as np
import pytest

from jsdrazor.categorical import Categorical, CountVector, empirical_from_counts, sample_multinomial
from jsdrazor.errors import ConfigError, SampleTooSmall, UnsupportedDimension
from jsdrazor.estimate import FitResult, min_jsd_fit, mle_fit
from jsdrazor.model import multilogit_model
from jsdrazor.razor import (EIGHT_PI, ModelScore, dimension_penalty, model_volume,
                            razor_laplace, refined_penalty, select, sic, sic_jsd)


def nested_logit(active):
    return multilogit_model(np.eye(2), active)


def fake_fit(objective, d=0):
    return FitResult(theta_hat=np.zeros(d), objective=objective, evaluations=1,
                     converged=True, restarts_used=0)


def volume_closed_form(a, b):
    """Independent antiderivative for the 1-parameter three-category family:
    sqrt(I(t)) = sqrt(2) e^{t/2} / (2 + e^t) integrates to 2 arctan(e^{t/2}/sqrt(2))."""
    return 2 * (math.atan(math.exp(b / 2) / math.sqrt(2))
                - math.atan(math.exp(a / 2) / math.sqrt(2)))


class TestSicJsd:
    def test_zero_dim_penalty_free(self):
        m = nested_logit(0)
        c = CountVector(np.array([40, 30, 30]))
        fit = fake_fit(0.0123)
        assert sic_jsd(m, c, fit) == pytest.approx(2 * 100 * 0.0123, abs=1e-12)

    def test_penalty_arithmetic(self):
        assert dimension_penalty(1, 100) == pytest.approx(0.5 * math.log(100 / EIGHT_PI),
                                                          abs=1e-15)
        assert dimension_penalty(1, 100) == pytest.approx(0.69054, abs=1e-4)

    def test_dimension_gap_at_equal_fit(self):
        c = CountVector(np.array([40, 30, 30]))
        s1 = sic_jsd(nested_logit(1), c, fake_fit(0.01, d=1))
        s2 = sic_jsd(nested_logit(2), c, fake_fit(0.01, d=2))
        assert s2 - s1 == pytest.approx(0.5 * math.log(100 / EIGHT_PI), abs=1e-12)

    def test_sample_too_small(self):
        c = CountVector(np.array([13, 12]))  # total 25 <= 8*pi
        with pytest.raises(SampleTooSmall):
            sic_jsd(multilogit_model(np.eye(1), 1), c, fake_fit(0.01, d=1))

    def test_penalty_increases_with_dimension(self):
        values = [dimension_penalty(d, 1000) for d in range(4)]
        assert all(b > a for a, b in zip(values, values[1:]))


class TestSic:
    def test_uniform_two_cells(self):
        m = multilogit_model(np.eye(1), 0)
        c = CountVector(np.array([50, 50]))
        fit = mle_fit(m, c)
        assert sic(m, c, fit) == pytest.approx(100 * math.log(2), abs=1e-10)

    def test_penalty_arithmetic(self):
        m = multilogit_model(np.eye(3), 3)
        c = CountVector(np.array([250, 250, 250, 250]))
        fit = mle_fit(m, c, seed=1)
        assert sic(m, c, fit) - fit.objective == pytest.approx(1.5 * math.log(1000), abs=1e-12)
        assert 1.5 * math.log(1000) == pytest.approx(10.362, abs=1e-3)


class TestModelVolume:
    def test_matches_antiderivative(self):
        m = multilogit_model(np.eye(2), 1, box=np.array([[-3.0, 3.0]]))
        assert model_volume(m, 64) == pytest.approx(volume_closed_form(-3, 3), abs=1e-8)
        assert model_volume(m, 64) == pytest.approx(2.217, abs=1e-3)

    def test_bounded_by_two_pi_on_random_intervals(self, rng):
        for _ in range(50):
            a = rng.uniform(-5, 2)
            b = a + rng.uniform(0.3, 6)
            m = multilogit_model(np.eye(2), 1, box=np.array([[a, b]]))
            v = model_volume(m, 48)
            assert 0 < v < 2 * math.pi
            assert v == pytest.approx(volume_closed_form(a, b), abs=1e-8)

    def test_zero_dim_unit_volume(self):
        assert model_volume(nested_logit(0)) == 1.0

    def test_dimension_gate(self):
        m = multilogit_model(np.eye(4), 4)
        with pytest.raises(UnsupportedDimension):
            model_volume(m)


class TestRefinedPenalty:
    def test_difference_to_coarse_is_log_volume(self):
        m = nested_logit(1)
        fit = fake_fit(0.01, d=1)
        for n in (50, 500, 5000):
            c = CountVector(np.array([n - 20, 10, 10]))
            gap = refined_penalty(m, c, fit) - dimension_penalty(1, c.total)
            assert gap == pytest.approx(math.log(model_volume(m)), abs=1e-12)

    def test_zero_dim_is_free(self):
        c = CountVector(np.array([40, 30, 30]))
        assert refined_penalty(nested_logit(0), c, fake_fit(0.01)) == 0.0


class TestRazorLaplace:
    def test_zero_dim_reduces_to_fit_term(self):
        m = nested_logit(0)
        c = CountVector(np.array([40, 30, 30]))
        fit = min_jsd_fit(m, empirical_from_counts(c))
        assert razor_laplace(m, c, fit) == pytest.approx(2 * 100 * fit.objective, abs=1e-12)

    def test_finite_positive_on_fitted_instance(self):
        m = nested_logit(1)
        counts = sample_multinomial(m.probs(np.array([0.7])), 10_000, seed=5)
        fit = min_jsd_fit(m, empirical_from_counts(counts), seed=5)
        value = razor_laplace(m, c := counts, fit)
        assert math.isfinite(value) and value > 0

    def test_approaches_coarse_plus_log_volume(self):
        # razor_laplace - sic_jsd - ln V -> 0 as the sample grows (the exact
        # Hessian approaches a quarter of the information matrix).
        m = nested_logit(1)
        log_v = math.log(model_volume(m))
        medians = []
        for n in (1_000, 10_000, 100_000):
            gaps = []
            for seed in range(50):
                counts = sample_multinomial(m.probs(np.array([0.7])), n, seed=seed * 3 + 1)
                p_hat = empirical_from_counts(counts)
                fit = min_jsd_fit(m, p_hat, seed=seed)
                gaps.append(abs(razor_laplace(m, counts, fit)
                                - sic_jsd(m, counts, fit) - log_v))
            medians.append(float(np.median(gaps)))
        assert medians[0] > medians[1] > medians[2]


class TestSelect:
    def test_parsimony_tie_break(self):
        s1 = ModelScore("small", 1, fake_fit(0.0, d=1), sic_jsd=5.0)
        s2 = ModelScore("large", 2, fake_fit(0.0, d=2), sic_jsd=5.0)
        report = select([s2, s1], n_o=100)
        assert report.model_names[report.selected_index] == "small"

    def test_argmin_selection(self):
        s1 = ModelScore("a", 1, fake_fit(0.0, d=1), sic_jsd=4.0)
        s2 = ModelScore("b", 2, fake_fit(0.0, d=2), sic_jsd=3.0)
        report = select([s1, s2], n_o=100)
        assert report.selected_index == 1
        assert report.criterion == "sic_jsd"

    def test_needs_two_candidates(self):
        with pytest.raises(ConfigError):
            select([ModelScore("a", 1, fake_fit(0.0), sic_jsd=1.0)], n_o=100)

    def test_missing_criterion_value(self):
        s1 = ModelScore("a", 1, fake_fit(0.0), sic_jsd=1.0)
        s2 = ModelScore("b", 2, fake_fit(0.0), sic_jsd=2.0)
        with pytest.raises(ConfigError):
            select([s1, s2], n_o=100, criterion="sic")

    def test_json_round_trip(self):
        import json

        s1 = ModelScore("a", 1, fake_fit(0.25, d=1), sic_jsd=1.0, sic=2.0)
        s2 = ModelScore("b", 2, fake_fit(0.5, d=2), sic_jsd=2.0, sic=1.0)
        report = select([s1, s2], n_o=100)
        payload = json.loads(report.to_json())
        assert payload["model_names"] == ["a", "b"]
        assert payload["selected_index"] == 0
        assert payload["sic"] == [2.0, 1.0]
        assert payload["refined"] is None
        assert payload["n_o"] == 100


class TestRazorInequality:
    def test_jsd_score_strictly_below_likelihood_score(self, rng):
        # structural inequality between the two rules, on random fitted data
        candidates = [nested_logit(l) for l in (0, 1, 2)]
        gen = nested_logit(2)
        for i in range(25):
            theta = rng.uniform(-1, 1, 2)
            counts = sample_multinomial(gen.probs(theta), 300, seed=i * 11 + 2)
            p_hat = empirical_from_counts(counts)
            for j, m in enumerate(candidates):
                fit_j = min_jsd_fit(m, p_hat, seed=i * 10 + j)
                fit_m = mle_fit(m, counts, seed=i * 10 + j)
                assert sic_jsd(m, counts, fit_j) < sic(m, counts, fit_m)
