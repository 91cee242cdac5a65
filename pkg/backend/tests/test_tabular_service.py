"""
Tests for the tabular bandit service.
"""
import numpy as np
import pytest
from hypothesis import given, seed
from hypothesis import strategies as st
from pydantic import ValidationError

from app.core.exceptions import DomainError
from app.core.rng import derive_rng
from app.models.policy import PolicyTable
from app.schemas.gate import EstimatorKind, GateParams
from app.schemas.tabular import SymmetricBanditSpec
from app.services.tabular_service import TabularService, cosine_or_zero


def spec(k=100, eps=0.5, b=0.5, eta=1.0):
    return SymmetricBanditSpec(num_actions=k, error=eps, baseline=b, eta=eta)


class TestSpec:
    def test_probabilities(self):
        s = spec(k=5, eps=0.2)
        assert s.correct_prob == pytest.approx(0.8)
        assert s.incorrect_prob == pytest.approx(0.05)
        np.testing.assert_allclose(PolicyTable.symmetric(5, 0.2).probs, [0.8, 0.05, 0.05, 0.05, 0.05])

    @pytest.mark.parametrize(
        "values",
        [dict(num_actions=2, error=0.5), dict(num_actions=5, error=1.0), dict(num_actions=5, error=0.5, correct_action=5)],
    )
    def test_invalid(self, values):
        with pytest.raises(ValidationError):
            SymmetricBanditSpec(**values)


class TestScores:
    def test_score_is_indicator_minus_policy(self):
        policy = PolicyTable.from_probs([0.2, 0.3, 0.5])
        np.testing.assert_allclose(TabularService.score(policy, 1), [-0.2, 0.7, -0.5])

    def test_score_index_out_of_range(self):
        with pytest.raises(DomainError):
            TabularService.score(PolicyTable.from_probs([0.5, 0.5]), 2)

    @seed(3)
    @given(st.lists(st.floats(min_value=-5, max_value=5), min_size=2, max_size=12))
    def test_scores_average_to_zero(self, logits):
        policy = PolicyTable.from_logits(logits)
        assert np.max(np.abs(policy.probs @ TabularService.score_matrix(policy))) < 1e-12

    def test_log_prob_gradient(self, rng):
        z = rng.normal(size=4)
        h = 1e-6
        fd = [(TabularService.log_prob(z + h * e, 2) - TabularService.log_prob(z - h * e, 2)) / (2 * h) for e in np.eye(4)]
        np.testing.assert_allclose(fd, TabularService.score(PolicyTable.from_logits(z), 2), atol=1e-6)

    def test_entropy_gradient(self, rng):
        probs = rng.dirichlet(np.ones(6))
        grad = TabularService.entropy_grad(probs)
        assert grad.sum() == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(TabularService.entropy_grad(np.full(4, 0.25)), 0.0, atol=1e-15)

    def test_symmetry_identity(self):
        for k in (3, 10, 100):
            for eps in (0.05, 0.5, 0.95):
                assert TabularService.symmetry_residual(k, eps) < 1e-10


class TestGateValues:
    @pytest.mark.parametrize("eps,expected", [(0.5, 0.0414), (0.1, 0.0128)])
    def test_gap_ratio(self, eps, expected):
        assert TabularService.gap_ratio(spec(eps=eps)) == pytest.approx(expected, abs=2e-4)

    def test_scale(self):
        values = TabularService.gate_values(spec())
        assert values.s == pytest.approx(0.5 * values.w_plus + 0.5 * values.w_minus)
        assert values.w_plus > 0.5 > values.w_minus

    def test_gap_ratio_shrinks_with_actions(self):
        ratios = [TabularService.gap_ratio(spec(k=k)) for k in (10, 100, 1000)]
        assert ratios[0] > ratios[1] > ratios[2]


class TestExpectations:
    def test_pg_mean_ignores_baseline(self):
        means = [TabularService.expected_gradient(spec(k=10, eps=0.3, b=b), EstimatorKind.pg()) for b in (0.1, 0.9)]
        np.testing.assert_allclose(means[0], means[1], atol=1e-14)

    def test_dg_is_scaled_pg(self):
        s = spec(k=20, eps=0.4, b=0.3, eta=0.7)
        dg = TabularService.expected_gradient(s, EstimatorKind.dg(s.eta))
        pg = TabularService.expected_gradient(s, EstimatorKind.pg())
        np.testing.assert_allclose(dg, TabularService.gate_values(s).s * pg, atol=1e-14)

    def test_expectation_matches_monte_carlo(self):
        s = spec(k=5, eps=0.6)
        policy = PolicyTable.symmetric(5, 0.6)
        batch = TabularService.sample_batch(policy, 0, s.baseline, 200_000, derive_rng(5, 0), EstimatorKind.dg())
        mc = TabularService.batch_gradient(batch, policy)
        np.testing.assert_allclose(mc, TabularService.expected_gradient(s, EstimatorKind.dg()), atol=5e-3)

    def test_perp_variance_ratio_is_squared_negative_gate(self):
        s = spec(k=50, eps=0.3)
        dg = TabularService.perp_variance(s, EstimatorKind.dg(s.eta))
        pg = TabularService.perp_variance(s, EstimatorKind.pg())
        assert dg.perp_variance / pg.perp_variance == pytest.approx(TabularService.gate_values(s).w_minus ** 2)
        assert dg.cosine_gap == pytest.approx(0.0, abs=1e-12)

    def test_entropy_pg_adds_entropy_gradient(self):
        s = spec(k=10, eps=0.5)
        plain = TabularService.expected_gradient(s, EstimatorKind.pg())
        reg = TabularService.expected_gradient(s, EstimatorKind.entropy_pg(0.1))
        policy = PolicyTable.symmetric(s.num_actions, s.error, s.correct_action)
        np.testing.assert_allclose(reg - plain, 0.1 * TabularService.entropy_grad(policy.probs))

    def test_dg_without_baseline_follows_correct_score(self):
        s = spec(k=10, eps=0.4, b=0.0, eta=0.5)
        policy = PolicyTable.symmetric(10, 0.4)
        w_plus = TabularService.gate_values(s).w_plus
        dg = TabularService.expected_gradient(s, EstimatorKind.dg(s.eta))
        np.testing.assert_allclose(dg, 0.6 * w_plus * TabularService.score(policy, 0), atol=1e-14)

    def test_pg_without_baseline_has_no_perpendicular_variance(self):
        diag = TabularService.perp_variance(spec(k=10, eps=0.4, b=0.0), EstimatorKind.pg())
        assert diag.perp_variance == pytest.approx(0.0, abs=1e-14)
        assert diag.cosine_gap == pytest.approx(0.0, abs=1e-12)


class TestBatches:
    def test_batch_gradient_matches_explicit_scores(self, rng):
        policy = PolicyTable.from_logits(rng.normal(size=6))
        batch = TabularService.sample_batch(policy, 2, 0.4, 50, rng, EstimatorKind.dg(), GateParams(eta=0.5))
        explicit = (batch.coeffs[:, None] * batch.scores(policy.probs)).mean(axis=0)
        np.testing.assert_allclose(TabularService.batch_gradient(batch, policy), explicit, atol=1e-14)

    def test_terms_agree_with_arrays(self, rng):
        policy = PolicyTable.symmetric(4, 0.5)
        batch = TabularService.sample_batch(policy, 0, 0.5, 8, rng)
        terms = batch.terms()
        assert [t.action for t in terms] == batch.actions.tolist()
        np.testing.assert_allclose([t.effective_coeff for t in terms], batch.coeffs)

    def test_batch_size_must_be_positive(self, rng):
        with pytest.raises(DomainError):
            TabularService.sample_batch(PolicyTable.symmetric(4, 0.5), 0, 0.5, 0, rng)

    def test_normalized_step_has_step_length(self):
        z = np.zeros(3)
        out = TabularService.normalized_step(z, np.array([3.0, 0.0, 4.0]), 0.1)
        assert np.linalg.norm(out - z) == pytest.approx(0.1)

    def test_zero_gradient_skips_step(self):
        z = np.array([1.0, 2.0])
        np.testing.assert_array_equal(TabularService.normalized_step(z, np.zeros(2), 0.1), z)

    def test_non_positive_step_size(self):
        with pytest.raises(DomainError):
            TabularService.normalized_step(np.zeros(2), np.ones(2), 0.0)

    def test_cosine_of_zero_vector(self):
        assert cosine_or_zero(np.zeros(3), np.ones(3)) == 0.0


class TestRuns:
    def test_trace_shape_and_progress(self):
        s = spec(k=10, eps=0.9)
        traces = TabularService.run_symmetric_bandit(s, EstimatorKind.dg(), 20, 0.1, 30, 3)
        assert len(traces) == 3
        assert all(len(t) == 30 for t in traces)
        assert traces[0].steps == list(range(1, 31))
        finals = [t.final("error") for t in traces]
        assert np.mean(finals) < 0.9
        misalignment = np.concatenate([t.column("misalignment") for t in traces])
        assert np.all((misalignment >= 0) & (misalignment <= 2))

    def test_seed_streams_are_independent_of_seed_count(self):
        s = spec(k=10, eps=0.9)
        few = TabularService.run_symmetric_bandit(s, EstimatorKind.pg(), 10, 0.1, 10, 2, base_seed=4)
        many = TabularService.run_symmetric_bandit(s, EstimatorKind.pg(), 10, 0.1, 10, 4, base_seed=4)
        assert few[1].columns == many[1].columns

    def test_workers_do_not_change_results(self):
        s = spec(k=10, eps=0.9)
        serial = TabularService.run_symmetric_bandit(s, EstimatorKind.dg(), 10, 0.1, 5, 2, workers=1)
        parallel = TabularService.run_symmetric_bandit(s, EstimatorKind.dg(), 10, 0.1, 5, 2, workers=2)
        assert [t.columns for t in serial] == [t.columns for t in parallel]

    def test_zero_step_size_freezes_policy(self):
        trace = TabularService.run_bandit_seed(0, spec(k=10, eps=0.5), EstimatorKind.pg(), 10, 0.0, 5)
        np.testing.assert_allclose(trace.column("error"), 0.5)

    def test_negative_step_size(self):
        with pytest.raises(DomainError):
            TabularService.run_symmetric_bandit(spec(), EstimatorKind.pg(), 10, -0.1, 5, 1)


class TestChecks:
    def test_tail_bounds_on_random_policies(self, rng):
        for _ in range(50):
            policy = PolicyTable.from_probs(rng.dirichlet(np.ones(8)))
            report = TabularService.nonsymmetric_tail_bound_check(policy, 3, float(rng.uniform(0, 0.95)), 1.0)
            assert report.holds

    def test_tail_bound_rejects_baseline_one(self):
        with pytest.raises(DomainError):
            TabularService.nonsymmetric_tail_bound_check(PolicyTable.symmetric(4, 0.5), 0, 1.0, 1.0)

    def test_empirical_gap_favours_dg(self, rng):
        report = TabularService.empirical_gap_ratio(spec(), 100, 50, rng)
        assert report.gap_dg < report.gap_pg
        assert report.ratio is not None and report.ratio < 0.5
        assert report.predicted == pytest.approx(TabularService.gap_ratio(spec()))

    @pytest.mark.parametrize("z,noise", [(-2.0, 0.0), (0.0, 0.0), (1.0, 0.5), (3.0, 5.0)])
    def test_progress_bound(self, z, noise):
        report = TabularService.progress_bound_check(z, 0.1, noise)
        assert report.holds
        assert -1.0 <= report.mean_cosine <= 1.0

    def test_noiseless_progress_is_exact(self):
        report = TabularService.progress_bound_check(2.0, 0.1)
        # z: 2.0 -> 1.9
        assert report.expected_improvement == pytest.approx(0.5 * (4.0 - 3.61))
        assert report.mean_cosine == 1.0
