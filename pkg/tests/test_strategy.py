import math
from unittest.mock import Mock

import numpy as np
import pytest
from scipy.stats import norm

from app.exceptions import InvalidInputError, InvalidSpecError
from app.models.decision import AcquisitionKind, BetaKind, BetaSchedule, PolicyKind, QueryPolicySpec
from app.models.kernelSpec import CompositeKernelSpec, SpatialFamily, SpatialKernelSpec, TemporalKernelSpec
from app.models.observation import summary_from_lists
from app.service.environment import unit_grid
from app.service.strategy import (CeGpUcb, acquisition, ce_gp_ucb_step, lcb_ucb_equivalent_kappa,
                                  local_optima_candidates, region_representatives, select_point,
                                  should_query, superiority_probability)


def confidence(kappa=0.9, **kwargs):
    return QueryPolicySpec(kind=PolicyKind.CONFIDENCE_RULE, kappa=kappa, **kwargs)


class TestSelectPoint:
    def test_picks_largest_ucb(self):
        post = summary_from_lists(0, [0.2, 0.5], [0.1, 0.1])
        index, ucb = select_point(post, 4.0)
        assert index == 1
        assert np.allclose(ucb, [0.4, 0.7])

    def test_ties_go_to_lowest_index(self):
        assert select_point(summary_from_lists(0, [1.0, 1.0, 1.0], [0.0, 0.0, 0.0]), 1.0)[0] == 0

    def test_shift_invariance(self, rng):
        means, stddevs = rng.standard_normal(20), rng.random(20)
        base = summary_from_lists(0, means, stddevs)
        shifted = summary_from_lists(0, means + 3.5, stddevs)
        assert select_point(base, 2.0)[0] == select_point(shifted, 2.0)[0]

    @pytest.mark.parametrize("beta", [0.0, -1.0])
    def test_beta_must_be_positive(self, beta):
        with pytest.raises(InvalidInputError):
            select_point(summary_from_lists(0, [0.0], [1.0]), beta)


class TestAcquisition:
    def test_pi_at_incumbent_is_half(self):
        post = summary_from_lists(0, [0.3], [0.2])
        assert acquisition(post, AcquisitionKind.PI, incumbent=0.3)[0] == pytest.approx(0.5)

    def test_ei_zero_sigma_below_incumbent(self):
        post = summary_from_lists(0, [0.1], [0.0])
        assert acquisition(post, AcquisitionKind.EI, incumbent=0.5)[0] == 0.0

    def test_ei_at_incumbent(self):
        post = summary_from_lists(0, [1.0], [1.0])
        assert acquisition(post, AcquisitionKind.EI, incumbent=1.0)[0] == pytest.approx(0.39894, abs=1e-5)

    def test_ucb_matches_select_point(self):
        post = summary_from_lists(0, [0.2, 0.5], [0.1, 0.1])
        assert np.allclose(acquisition(post, AcquisitionKind.UCB, beta=4.0), [0.4, 0.7])

    def test_default_incumbent_is_best_mean(self):
        post = summary_from_lists(0, [0.0, 1.0], [1.0, 1.0])
        assert acquisition(post, AcquisitionKind.PI)[1] == pytest.approx(0.5)


class TestSuperiority:
    def test_unit_gap(self):
        assert superiority_probability(1.0, 0.5, 0.0, 0.5) == pytest.approx(0.8413, abs=1e-4)

    def test_equal_means(self):
        assert superiority_probability(0.4, 0.3, 0.4, 0.2) == pytest.approx(0.5)

    def test_degenerate_variances(self):
        assert superiority_probability(1.0, 0.0, 1.0, 0.0) == 0.5
        assert superiority_probability(2.0, 0.0, 1.0, 0.0) == 1.0

    def test_far_behind(self):
        expected = norm.cdf(-10.0 / math.sqrt(2.0))
        assert superiority_probability(0.0, 1.0, 10.0, 1.0) == pytest.approx(expected, rel=1e-2)
        assert superiority_probability(0.0, 1.0, 10.0, 1.0) < 1e-11

    def test_negative_variance_rejected(self):
        with pytest.raises(InvalidInputError):
            superiority_probability(0.0, -0.1, 0.0, 1.0)

    @pytest.mark.parametrize("ma, va, mb, vb", [
        (0.0, 1.0, 0.0, 1.0),
        (0.5, 0.2, 0.1, 0.3),
        (-0.3, 0.05, 0.2, 0.5),
        (1.0, 0.01, 0.4, 0.09),
        (0.2, 0.8, 0.9, 0.1),
        (0.0, 0.5, -0.6, 0.25),
    ])
    def test_monte_carlo_agreement(self, rng, ma, va, mb, vb):
        a = rng.normal(ma, math.sqrt(va), size=100_000)
        b = rng.normal(mb, math.sqrt(vb), size=100_000)
        p = superiority_probability(ma, va, mb, vb)
        standard_error = math.sqrt(p * (1.0 - p) / 100_000)
        assert abs(np.mean(a > b) - p) <= 3 * standard_error


class TestLocalOptima:
    grid = np.linspace(0.0, 1.0, 101).reshape(-1, 1)

    def _post(self, means):
        return summary_from_lists(0, means, np.zeros_like(means))

    def test_monotone_has_single_mode(self):
        means = np.linspace(0.0, 1.0, 101)
        assert local_optima_candidates(self._post(means), self.grid, 0.2) == [100]

    def test_two_separated_peaks(self):
        x = self.grid[:, 0]
        means = np.maximum(np.exp(-0.5 * ((x - 0.2) / 0.05) ** 2), 0.8 * np.exp(-0.5 * ((x - 0.8) / 0.05) ** 2))
        assert local_optima_candidates(self._post(means), self.grid, 0.2) == [20, 80]

    def test_close_peaks_suppressed(self):
        x = self.grid[:, 0]
        means = np.maximum(np.exp(-0.5 * ((x - 0.45) / 0.02) ** 2), 0.8 * np.exp(-0.5 * ((x - 0.5) / 0.02) ** 2))
        assert local_optima_candidates(self._post(means), self.grid, 0.2) == [45]

    def test_flat_prior_spreads_by_bandwidth(self):
        grid = unit_grid(50)
        post = summary_from_lists(0, np.zeros(50), np.ones(50))
        assert local_optima_candidates(post, grid, 0.2) == [0, 10, 20, 30, 40]

    def test_two_dimensional_grid(self):
        axis = np.linspace(0.0, 1.0, 11)
        grid = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
        means = np.exp(-20 * np.sum((grid - [0.2, 0.2]) ** 2, axis=1)) \
            + 0.5 * np.exp(-20 * np.sum((grid - [0.8, 0.8]) ** 2, axis=1))
        modes = local_optima_candidates(self._post(means), grid, 0.3)
        assert modes == [2 * 11 + 2, 8 * 11 + 8]

    def test_bandwidth_must_be_positive(self):
        with pytest.raises(InvalidSpecError):
            local_optima_candidates(self._post(np.zeros(3)), np.arange(3.0), 0.0)


class TestRegionRepresentatives:
    grid = np.linspace(0.0, 1.0, 101).reshape(-1, 1)

    def test_monotone_slope_gets_covered(self):
        post = summary_from_lists(0, np.linspace(0.0, 1.0, 101), np.zeros(101))
        modes = local_optima_candidates(post, self.grid, 0.205)
        assert region_representatives(post, self.grid, 0.205, kept=modes) == [100, 79, 58, 37, 16]

    def test_flat_prior_adds_nothing(self):
        grid = unit_grid(50)
        post = summary_from_lists(0, np.zeros(50), np.ones(50))
        modes = local_optima_candidates(post, grid, 0.2)
        assert region_representatives(post, grid, 0.2, kept=modes) == modes

    def test_kept_entries_stay_first(self):
        post = summary_from_lists(0, np.linspace(0.0, 1.0, 101), np.zeros(101))
        reps = region_representatives(post, self.grid, 0.3, kept=[0])
        assert reps[0] == 0
        assert reps[1] == 100

    def test_every_point_is_covered(self, rng):
        post = summary_from_lists(0, rng.standard_normal(101), rng.random(101))
        reps = region_representatives(post, self.grid, 0.15)
        distance = np.abs(self.grid[:, 0][:, None] - self.grid[reps, 0][None, :])
        assert np.all(distance.min(axis=1) <= 0.15)
        assert reps[0] == int(np.argmax(post.ucb(1.0)))

    def test_bandwidth_must_be_positive(self):
        post = summary_from_lists(0, np.zeros(3), np.zeros(3))
        with pytest.raises(InvalidSpecError):
            region_representatives(post, np.arange(3.0), -1.0)


class TestShouldQuery:
    """Feedback-query policies"""

    @staticmethod
    def _confident_posterior():
        # chosen mean 1 with no variance; rivals one unit of stddev behind at levels .95 and .99
        gaps = [norm.ppf(0.95), norm.ppf(0.99)]
        return summary_from_lists(0, [1.0, 1.0 - gaps[0], 1.0 - gaps[1]], [0.0, 1.0, 1.0])

    def test_confident_choice_skips_feedback(self, rng):
        decision = should_query(confidence(0.9), self._confident_posterior(), 0, [1, 2], 1.0, rng)
        assert decision.queried is False
        assert decision.min_superiority == pytest.approx(0.95)
        assert decision.round == 1
        assert decision.rivals_considered == 2

    def test_stricter_kappa_queries(self, rng):
        assert should_query(confidence(0.97), self._confident_posterior(), 0, [1, 2], 1.0, rng).queried

    def test_no_rivals_never_queries(self, rng):
        post = summary_from_lists(4, [0.0], [1.0])
        decision = should_query(confidence(0.99), post, 0, [], 1.0, rng)
        assert decision.queried is False
        assert decision.round == 5

    def test_chosen_among_rivals_rejected(self, rng):
        with pytest.raises(InvalidInputError):
            should_query(confidence(), summary_from_lists(0, [0.0, 1.0], [1.0, 1.0]), 0, [0, 1], 1.0, rng)

    def test_always_queries(self, rng):
        policy = QueryPolicySpec(kind=PolicyKind.ALWAYS)
        assert should_query(policy, self._confident_posterior(), 0, [1, 2], 1.0, rng).queried

    def test_bernoulli_full_budget(self, rng):
        policy = QueryPolicySpec(kind=PolicyKind.BERNOULLI, budget=100, horizon=100)
        post = self._confident_posterior()
        assert all(should_query(policy, post, 0, [1, 2], 1.0, rng).queried for _ in range(200))

    def test_bernoulli_uses_given_stream(self):
        policy = QueryPolicySpec(kind=PolicyKind.BERNOULLI, budget=30, horizon=100)
        post = self._confident_posterior()
        first = [should_query(policy, post, 0, [1], 1.0, np.random.default_rng(3)).queried for _ in range(5)]
        again = [should_query(policy, post, 0, [1], 1.0, np.random.default_rng(3)).queried for _ in range(5)]
        assert first == again

    def test_lcb_ucb_rule(self, rng):
        policy = QueryPolicySpec(kind=PolicyKind.LCB_UCB_RULE)
        dominated = summary_from_lists(0, [1.0, 0.0], [0.1, 0.1])
        overlapping = summary_from_lists(0, [1.0, 0.9], [0.1, 0.1])
        assert not should_query(policy, dominated, 0, [1], 1.0, rng).queried
        assert should_query(policy, overlapping, 0, [1], 1.0, rng).queried

    def test_lcb_ucb_rule_looks_past_the_rival_list(self, rng):
        policy = QueryPolicySpec(kind=PolicyKind.LCB_UCB_RULE)
        # candidate 1 overlaps the chosen interval but is not listed as a rival
        post = summary_from_lists(0, [1.0, 0.95, 0.0], [0.1, 0.1, 0.1])
        assert should_query(policy, post, 0, [2], 1.0, rng).queried
        assert should_query(policy, post, 0, [], 1.0, rng).queried
        assert not should_query(confidence(0.6), post, 0, [2], 1.0, rng).queried

    def test_positive_covariance_raises_confidence(self, rng):
        post = summary_from_lists(0, [1.0, 0.5], [0.5, 0.5])
        independent = should_query(confidence(0.9), post, 0, [1], 1.0, rng)
        correlated = should_query(confidence(0.9, use_covariance=True), post, 0, [1], 1.0, rng,
                                  covariance=np.array([0.2]))
        assert correlated.min_superiority > independent.min_superiority

    def test_monotone_in_kappa(self, rng):
        kappas = np.linspace(0.55, 0.99, 12)
        for _ in range(1000):
            post = summary_from_lists(0, rng.standard_normal(6), rng.uniform(0.0, 1.0, 6))
            queried = [should_query(confidence(k), post, 0, [1, 2, 3, 4, 5], 1.0, rng).queried
                       for k in kappas]
            # once a kappa queries every larger kappa queries too
            assert queried == sorted(queried)

    def test_equivalent_kappa_is_at_least_as_strict_as_lcb_ucb(self, rng):
        lcb_ucb = QueryPolicySpec(kind=PolicyKind.LCB_UCB_RULE)
        for _ in range(1000):
            beta = float(rng.uniform(0.1, 4.0))
            post = summary_from_lists(0, rng.standard_normal(5) * 2.0, rng.uniform(0.0, 0.5, 5))
            chosen = select_point(post, beta)[0]
            rivals = [i for i in range(5) if i != chosen]
            strict = should_query(confidence(lcb_ucb_equivalent_kappa(beta)), post, chosen, rivals, beta, rng)
            if not strict.queried:
                assert not should_query(lcb_ucb, post, chosen, rivals, beta, rng).queried

    def test_equivalent_kappa_value(self):
        assert lcb_ucb_equivalent_kappa(1.0) == pytest.approx(norm.cdf(math.sqrt(2.0)))


class TestCeGpUcb:
    """Agent loop with each query policy"""

    kernel = CompositeKernelSpec(spatial=SpatialKernelSpec(family=SpatialFamily.MATERN32, lengthscale=0.2),
                                 temporal=TemporalKernelSpec(epsilon=0.03))

    def _agent(self, policy, grid=None, seed=0, **kwargs):
        grid = unit_grid(50) if grid is None else grid
        return CeGpUcb(self.kernel, grid, BetaSchedule(beta0=1.0), policy, np.random.default_rng(seed), **kwargs)

    def test_first_round_queries(self):
        decision = self._agent(confidence(0.9)).decide()
        assert decision.round == 1
        assert decision.chosen == 0
        assert decision.queried is True
        assert decision.min_superiority == pytest.approx(0.5)

    def test_always_pays_every_round(self):
        agent = self._agent(QueryPolicySpec(kind=PolicyKind.ALWAYS))
        channel = Mock(side_effect=lambda index, t: math.sin(6 * index / 49.0 + 0.1 * t))
        for _ in range(30):
            ce_gp_ucb_step(agent, channel)
        assert agent.cost == 30
        assert len(agent.gp) == 30
        assert channel.call_count == 30

    def test_single_candidate_never_queries(self):
        agent = self._agent(confidence(0.9), grid=np.array([[0.5]]))
        channel = Mock(return_value=1.0)
        decisions = [ce_gp_ucb_step(agent, channel)[0] for _ in range(20)]
        assert not any(d.queried for d in decisions)
        assert channel.call_count == 0
        assert all(d.chosen == 0 for d in decisions)

    def test_channel_called_only_on_queries(self):
        agent = self._agent(QueryPolicySpec(kind=PolicyKind.BERNOULLI, budget=10, horizon=40), seed=5)
        channel = Mock(return_value=0.3)
        decisions = [ce_gp_ucb_step(agent, channel)[0] for _ in range(40)]
        assert channel.call_count == sum(d.queried for d in decisions) == agent.cost

    def test_deterministic_given_seed(self):
        def run():
            agent = self._agent(QueryPolicySpec(kind=PolicyKind.BERNOULLI, budget=20, horizon=40), seed=11)
            return [ce_gp_ucb_step(agent, lambda i, t: math.cos(i + t))[0].to_dict() for _ in range(40)]

        assert run() == run()

    @pytest.mark.parametrize("kind", [AcquisitionKind.PI, AcquisitionKind.EI])
    def test_pi_ei_variants_run(self, kind):
        agent = self._agent(confidence(0.9), acquisition_kind=kind)
        for _ in range(15):
            ce_gp_ucb_step(agent, lambda i, t: -((i / 49.0 - 0.3) ** 2))
        assert agent.round == 15
        assert 1 <= agent.cost <= 15

    def test_record_without_pending_query_rejected(self):
        agent = self._agent(confidence(0.9), grid=np.array([[0.5]]))
        decision = agent.decide()
        with pytest.raises(InvalidInputError):
            agent.record(decision, 1.0)

    def test_unobserved_query_is_dropped(self):
        agent = self._agent(QueryPolicySpec(kind=PolicyKind.ALWAYS))
        decision = agent.decide()
        agent.record(decision, None)
        assert agent.cost == 0
        assert agent.decide().round == 2

    def test_independent_kernel_uses_all_rivals(self):
        kernel = CompositeKernelSpec(spatial=SpatialKernelSpec(family=SpatialFamily.INDEPENDENT),
                                     temporal=TemporalKernelSpec(epsilon=0.01))
        agent = CeGpUcb(kernel, np.arange(3.0).reshape(-1, 1), BetaSchedule(), confidence(),
                        np.random.default_rng(0))
        assert agent.decide().rivals_considered == 2

    def test_unknown_rival_mode(self):
        with pytest.raises(InvalidSpecError):
            self._agent(confidence(), rivals="nearest")

    def test_far_region_stays_a_rival_after_one_observation(self):
        covering = self._agent(confidence(0.9))
        strict = self._agent(confidence(0.9), rivals="local_optima")
        for agent in (covering, strict):
            agent.record(agent.decide(), 1.0)
        post = covering.current_posterior()
        chosen, _ = select_point(post, 1.0)
        rivals = covering.rivals_for(post, chosen, 1.0)
        grid = covering.candidates[:, 0]
        assert rivals
        assert np.max(np.abs(grid[rivals] - grid[chosen])) > 0.5
        assert set(strict.rivals_for(post, chosen, 1.0)) <= set(rivals)

        decision = covering.decide()
        assert decision.queried is True
        assert decision.rivals_considered == len(rivals)

    def test_lcb_ucb_agent_queries_on_fine_grid(self):
        agent = self._agent(QueryPolicySpec(kind=PolicyKind.LCB_UCB_RULE))
        channel = Mock(side_effect=lambda index, t: math.sin(6 * index / 49.0 + 0.1 * t))
        for _ in range(25):
            ce_gp_ucb_step(agent, channel)
        assert agent.cost == 25


class TestBetaSchedule:
    def test_constant(self):
        assert BetaSchedule(beta0=2.0).value(7) == 2.0

    def test_log_growth(self):
        beta = BetaSchedule(kind=BetaKind.LOG_GROWTH, c1=0.5, c2=2.0)
        assert beta.value(4) == pytest.approx(0.5 * math.log(8.0))

    @pytest.mark.parametrize("data", [{"kind": "Constant", "beta0": 0.0},
                                      {"kind": "LogGrowth", "c1": 1.0, "c2": 1.0}])
    def test_invalid(self, data):
        with pytest.raises(InvalidSpecError):
            BetaSchedule.from_dict(data)

    def test_kappa_range(self):
        with pytest.raises(InvalidSpecError):
            confidence(1.0)

    def test_rate_becomes_budget(self):
        policy = QueryPolicySpec.from_dict({"kind": "Bernoulli", "rate": 0.25}, 400)
        assert policy.budget == 100.0
        assert policy.query_probability == 0.25
