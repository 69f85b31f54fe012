import dataclasses
import math
from unittest.mock import patch

import numpy as np
import pytest

from app.exceptions import InvalidSpecError, NumericalFailureError, TvboError
from app.models.trialRecord import CellKey, RoundRow, TrialRecord
from app.service.configService.normalizeConfig import NormalizeConfig
from app.service.harness_service import (MODEL_NOISE_FLOOR, HarnessService, aggregate, expand_cells,
                                         run_trial, simulate, trial_seeds)
from app.service.strategy import CeGpUcb


def record_with(key, trial, regrets, queried=None, failed=False):
    queried = queried if queried is not None else [True] * len(regrets)
    rows = [RoundRow(t=t, x=0.0, queried=q, y=0.0 if q else None, regret=r)
            for t, (r, q) in enumerate(zip(regrets, queried), start=1)]
    return TrialRecord(cell=key, trial=trial, rows=[] if failed else rows, failed=failed,
                       error="boom" if failed else None)


class TestTrialSeeds:
    def test_reproducible(self):
        a, b = trial_seeds(7, 3), trial_seeds(7, 3)
        assert a.environment.random() == b.environment.random()
        assert a.coin.random() == b.coin.random()

    def test_streams_independent(self):
        streams = trial_seeds(7, 3)
        draws = {streams.environment.random(), streams.noise.random(), streams.agent.random(),
                 streams.coin.random()}
        assert len(draws) == 4
        assert trial_seeds(7, 4).environment.random() != trial_seeds(7, 3).environment.random()

    def test_negative_rejected(self):
        with pytest.raises(InvalidSpecError):
            trial_seeds(-1, 0)


class TestExpandCells:
    def test_labels_and_epsilon(self, small_bo_config):
        keys = [c.key for c in expand_cells(small_bo_config)]
        assert [(k.policy, k.param) for k in keys] == [
            ("TV-GP-UCB", ""), ("CE-GP-UCB", "kappa=0.9"),
            ("TV-GP-UCB Ber", "rate=0.2"), ("TV-GP-UCB Ber", "rate=0.5")]
        assert all(k.epsilon == 0.05 and k.environment == "tv_gp" for k in keys)

    def test_agent_kernel_follows_environment(self, small_bo_config):
        cells = expand_cells(small_bo_config)
        assert all(c.agent.kernel.epsilon == 0.05 for c in cells)
        assert cells[2].agent.policy.budget == pytest.approx(0.2 * 25)

    def test_rate_by_epsilon_grid(self, small_bo_tree):
        small_bo_tree["environment"]["epsilon"] = [0.003, 0.005, 0.01, 0.03, 0.05]
        small_bo_tree["agents"] = [{"name": "Ber", "kind": "TvGp",
                                    "policy": {"kind": "Bernoulli", "rate": [0.1 * k for k in range(1, 10)]}}]
        cells = expand_cells(NormalizeConfig(small_bo_tree).normalize())
        assert len(cells) == 45
        records = [record_with(c.key, 0, [0.1]) for c in cells]
        report = aggregate(records)
        assert len(report.aggregate) == 45
        assert len(report.tradeoff) == 45

    def test_duplicate_cells_rejected(self, small_bo_tree):
        small_bo_tree["agents"] = [{"name": "Ber", "kind": "TvGp",
                                    "policy": {"kind": "Bernoulli", "rate": [0.2, 0.2]}}]
        with pytest.raises(InvalidSpecError):
            expand_cells(NormalizeConfig(small_bo_tree).normalize())

    def test_bandit_epsilon_column(self, tmp_path):
        config = NormalizeConfig({
            "experiment": "synth-bandit", "trials": 1, "horizon": 50, "workers": 1,
            "environment": {"suites": ["sine"]},
            "agents": [{"name": "UCB", "kind": "Ucb1", "policy": {"kind": "Bernoulli", "rate": 0.1}},
                       {"name": "CE", "kind": "TvGp", "policy": {"kind": "ConfidenceRule", "kappa": 0.95}}],
        }).normalize()
        cells = expand_cells(config)
        assert cells[0].key.epsilon is None
        assert cells[1].key.epsilon == 0.005
        assert cells[1].key.environment == "sine"


class TestRunTrial:
    def test_deterministic(self, small_bo_config):
        cell = expand_cells(small_bo_config)[1]
        assert run_trial(cell, 0).rows == run_trial(cell, 0).rows

    def test_full_feedback_pays_every_round(self, small_bo_config):
        record = run_trial(expand_cells(small_bo_config)[0], 1)
        assert record.cost == 25
        assert all(row.y is not None for row in record.rows)

    def test_accounting(self, small_bo_config):
        for cell in expand_cells(small_bo_config):
            record = run_trial(cell, 0)
            assert record.horizon == 25
            assert 0 <= record.cost <= 25
            assert record.loss == record.cum_regret + record.cost
            assert all(row.regret >= 0 for row in record.rows)
            assert all((row.y is None) != row.queried for row in record.rows)

    def test_cells_share_environment(self, small_bo_config):
        cells = expand_cells(small_bo_config)
        _, _, env_a = simulate(cells[0], 2)
        _, _, env_b = simulate(cells[1], 2)
        assert np.array_equal(env_a.trajectory, env_b.trajectory)

    def test_identical_arms_have_no_regret(self):
        config = NormalizeConfig({
            "experiment": "synth-bandit", "trials": 2, "horizon": 20, "workers": 1,
            "environment": {"arms": [{"shape": "Sine"}, {"shape": "Sine"}], "noise_variance": 0.0},
            "agents": [{"name": "CE", "kind": "TvGp", "policy": {"kind": "ConfidenceRule", "kappa": 0.9}}],
        }).normalize()
        cell = expand_cells(config)[0]
        assert cell.key.environment == "custom"
        assert run_trial(cell, 0).cum_regret == 0.0

    def test_noiseless_environment_gets_model_noise_floor(self, small_bo_tree):
        small_bo_tree["environment"]["noise_variance"] = 0.0
        cells = expand_cells(NormalizeConfig(small_bo_tree).normalize())
        assert all(c.agent.noise_variance == MODEL_NOISE_FLOOR for c in cells)
        for cell in cells[:2]:
            record = run_trial(cell, 0)
            assert record.failed is False
            assert len(record.rows) == 25

    def test_explicit_model_noise_wins(self, small_bo_tree):
        small_bo_tree["environment"]["noise_variance"] = 0.0
        small_bo_tree["strategy"] = {"noise_variance": 0.02}
        cells = expand_cells(NormalizeConfig(small_bo_tree).normalize())
        assert all(c.agent.noise_variance == 0.02 for c in cells)

    def test_numerical_failure_becomes_failed_record(self, small_bo_config):
        cell = expand_cells(small_bo_config)[0]
        with patch("app.service.harness_service.simulate",
                   side_effect=NumericalFailureError("pivot", {"size": 3})):
            record = run_trial(cell, 0)
        assert record.failed is True
        assert record.diagnostics == {"size": 3}
        assert record.rows == []

    def test_bernoulli_realizes_budget(self):
        config = NormalizeConfig({
            "experiment": "synth-bandit", "trials": 50, "horizon": 200, "workers": 1,
            "environment": {"suites": ["sine"]},
            "agents": [{"name": "UCB", "kind": "Ucb1", "policy": {"kind": "Bernoulli", "rate": 0.3}}],
        }).normalize()
        cell = expand_cells(config)[0]
        mean_cost = np.mean([run_trial(cell, k).cost for k in range(50)])
        assert abs(mean_cost - 60) <= 3 * math.sqrt(200 * 0.3 * 0.7)


class TestTrialRecordVerify:
    key = CellKey(policy="p", param="", epsilon=0.05, environment="tv_gp")

    def test_consistent_record_passes(self):
        record_with(self.key, 0, [0.1, 0.0, 0.3], queried=[True, False, True]).verify()
        record_with(self.key, 0, [], failed=True).verify()

    @pytest.mark.parametrize("row", [
        RoundRow(t=2, x=0.0, queried=True, y=None, regret=0.1),
        RoundRow(t=2, x=0.0, queried=False, y=0.4, regret=0.1),
        RoundRow(t=2, x=0.0, queried=True, y=0.4, regret=-0.1),
        RoundRow(t=2, x=0.0, queried=True, y=0.4, regret=float("nan")),
        RoundRow(t=5, x=0.0, queried=True, y=0.4, regret=0.1),
    ])
    def test_broken_row_is_rejected(self, row):
        record = record_with(self.key, 0, [0.1])
        record.rows.append(row)
        with pytest.raises(TvboError):
            record.verify()

    def test_summary_loss_must_match(self):
        summary = record_with(self.key, 0, [0.2, 0.1], queried=[True, False]).summary()
        summary.verify()
        with pytest.raises(TvboError):
            dataclasses.replace(summary, loss=summary.loss + 1.0).verify()

class TestAggregate:
    key = CellKey(policy="p", param="", epsilon=0.05, environment="tv_gp")

    def test_mean_and_sample_std(self):
        report = aggregate([record_with(self.key, 0, [0.1]), record_with(self.key, 1, [0.3])])
        row = report.row("p", epsilon=0.05)
        assert row.mean_avg_regret == pytest.approx(0.2)
        assert row.std_avg_regret == pytest.approx(0.141421356, abs=1e-9)
        assert row.trials == 2
        assert row.single_trial is False

    def test_single_trial_has_zero_std(self):
        row = aggregate([record_with(self.key, 0, [0.4, 0.2], queried=[True, False])]).aggregate[0]
        assert row.std_avg_regret == 0.0
        assert row.single_trial is True
        assert row.mean_cost == 1.0
        assert row.mean_loss == pytest.approx(1.6)

    def test_failed_trials_excluded(self):
        records = [record_with(self.key, 0, [0.1]), record_with(self.key, 1, [0.3]),
                   record_with(self.key, 2, [], failed=True)]
        row = aggregate(records).aggregate[0]
        assert row.trials == 2
        assert row.failures == 1
        assert row.mean_avg_regret == pytest.approx(0.2)

    def test_all_failed_cell_has_no_tradeoff_point(self):
        report = aggregate([record_with(self.key, 0, [], failed=True)])
        assert report.tradeoff == []
        assert math.isnan(report.aggregate[0].mean_avg_regret)

    def test_rows_follow_cell_order(self):
        other = CellKey(policy="a", param="", epsilon=0.05, environment="tv_gp")
        report = aggregate([record_with(self.key, 1, [0.1]), record_with(other, 0, [0.2]),
                            record_with(self.key, 0, [0.3])])
        assert [r.policy for r in report.aggregate] == ["p", "a"]

    def test_empty(self):
        report = aggregate([])
        assert report.aggregate == [] and report.tradeoff == [] and report.trials == []


class TestHarnessService:
    def test_serial_and_parallel_agree(self, small_bo_config):
        serial, _ = HarnessService(small_bo_config).run_experiment()
        small_bo_config.workers = 2
        parallel, _ = HarnessService(small_bo_config).run_experiment()
        assert serial == parallel

    def test_report_shape(self, small_bo_config):
        report, records = HarnessService(small_bo_config).run_experiment()
        assert len(records) == 4 * 3
        assert len(report.aggregate) == 4
        assert report.row("TV-GP-UCB", epsilon=0.05).mean_cost == 25.0

    def test_run_trial_bounds(self, small_bo_config):
        service = HarnessService(small_bo_config)
        with pytest.raises(InvalidSpecError):
            service.run_trial(4, 0)
        with pytest.raises(InvalidSpecError):
            service.run_trial(0, 3)

    def test_posterior_dump_keeps_agents(self, small_bo_config):
        runs = HarnessService(small_bo_config).posterior_dump()
        assert len(runs) == 4
        cell, record, agent, env = runs[1]
        assert isinstance(agent, CeGpUcb)
        assert agent.round == 25
        assert len(agent.gp) == record.cost


class TestConfidenceRuleTradeoff:
    """Reduced-scale cost/regret checks that run with the fast suite"""

    @pytest.fixture(scope="class")
    def bo_run(self):
        config = NormalizeConfig({
            "experiment": "synth-bo", "trials": 3, "horizon": 120, "base_seed": 11, "workers": 1,
            "environment": {"grid_size": 50, "epsilon": [0.05]},
            "agents": [
                {"name": "TV-GP-UCB", "kind": "TvGp", "policy": {"kind": "Always"}},
                {"name": "CE-GP-UCB", "kind": "TvGp", "policy": {"kind": "ConfidenceRule", "kappa": [0.6, 0.9, 0.99]}},
            ],
        }).normalize()
        return HarnessService(config).run_experiment()

    @pytest.fixture(scope="class")
    def bandit_report(self):
        config = NormalizeConfig({
            "experiment": "synth-bandit", "trials": 3, "horizon": 2000, "base_seed": 11, "workers": 1,
            "environment": {"suites": ["piecewise"]},
        }).normalize()
        config.agents = [a for a in config.agents if a.name in ("epsilon-greedy", "CE-GP-UCB")]
        report, _ = HarnessService(config).run_experiment()
        return report

    @staticmethod
    def ce_row(report, kappa):
        return next(r for r in report.aggregate if r.policy == "CE-GP-UCB" and r.param == f"kappa={kappa}")

    def test_confidence_rule_keeps_querying(self, bo_run):
        _, records = bo_run
        ce = [r for r in records if r.cell.policy == "CE-GP-UCB" and r.cell.param == "kappa=0.9"]
        assert len(ce) == 3
        assert all(r.cost > 1 for r in ce)

    def test_confidence_rule_skips_some_rounds(self, bo_run):
        report, _ = bo_run
        assert self.ce_row(report, 0.9).mean_cost < 120

    def test_higher_kappa_costs_more(self, bo_run):
        report, _ = bo_run
        assert self.ce_row(report, 0.99).mean_cost >= self.ce_row(report, 0.6).mean_cost

    def test_regret_close_to_full_feedback(self, bo_run):
        report, _ = bo_run
        full = report.row("TV-GP-UCB", epsilon=0.05)
        assert self.ce_row(report, 0.9).mean_avg_regret <= 2.0 * full.mean_avg_regret

    def test_bandit_queries_stay_few(self, bandit_report):
        ce = next(r for r in bandit_report.aggregate if r.policy == "CE-GP-UCB")
        assert ce.mean_cost <= 150

    def test_bandit_beats_epsilon_greedy(self, bandit_report):
        rows = {r.policy: r for r in bandit_report.aggregate}
        assert rows["CE-GP-UCB"].mean_avg_regret < rows["epsilon-greedy"].mean_avg_regret
