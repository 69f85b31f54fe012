"""Seeded multi-trial experiment runner and aggregation of R_T/T, C_T and L_T."""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from app.exceptions import InvalidSpecError, NumericalFailureError, TvboError
from app.models.agentSpec import AgentKind, BanditAgentSpec
from app.models.decision import AcquisitionKind, BetaSchedule, PolicyKind, QueryPolicySpec
from app.models.environmentSpec import ArmCurve, BanditEnvironmentSpec, TvGpEnvironmentSpec
from app.models.experimentConfig import AgentConfig, AgentSetup, Cell, ExperimentConfig
from app.models.kernelSpec import CompositeKernelSpec, SpatialKernelSpec
from app.models.trialRecord import (AggregateReport, AggregateRow, CellKey, RoundRow,
                                    TradeoffPoint, TrialRecord)
from app.service.baselines import BernoulliFeedbackAgent, build_bandit_agent
from app.service.configService.normalizeConfig import deep_merge, sweep_product
from app.service.environment import (BanditEnvironment, Environment, TvGpEnvironment,
                                     bandit_suite, evaluate, instantaneous_regret)
from app.service.strategy import CeGpUcb
from config.logger_config import logger

STREAM_ENVIRONMENT = 0
STREAM_NOISE = 1
STREAM_AGENT = 2
STREAM_COIN = 3

MODEL_NOISE_FLOOR = 1e-6

Agent = Union[CeGpUcb, BernoulliFeedbackAgent]


@dataclass
class TrialStreams:
    environment: np.random.Generator
    noise: np.random.Generator
    agent: np.random.Generator
    coin: np.random.Generator


def trial_seeds(base_seed: int, trial: int) -> TrialStreams:
    """Independent generators for one trial, split from the base seed by (trial, stream) spawn keys.

    Every cell of an experiment sees the same environment and noise streams
    for a given trial index.
    """
    if base_seed < 0 or trial < 0:
        raise InvalidSpecError(f"seeds must be non-negative, got base={base_seed} trial={trial}")

    def stream(k: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=(trial, k)))

    return TrialStreams(environment=stream(STREAM_ENVIRONMENT), noise=stream(STREAM_NOISE),
                        agent=stream(STREAM_AGENT), coin=stream(STREAM_COIN))


def _environment_specs(config: ExperimentConfig) -> List[Tuple[str, Union[TvGpEnvironmentSpec, BanditEnvironmentSpec]]]:
    env = config.environment
    kind = env.get("kind", "tv_gp")
    if kind == "tv_gp":
        epsilons = env.get("epsilon", 0.05)
        epsilons = epsilons if isinstance(epsilons, list) else [epsilons]
        kernel = SpatialKernelSpec(**env.get("kernel", {}))
        return [("tv_gp", TvGpEnvironmentSpec(
            grid_size=int(env.get("grid_size", 1000)), kernel=kernel, epsilon=float(eps),
            noise_variance=float(env.get("noise_variance", 0.01)), horizon=config.horizon,
            seed=config.base_seed)) for eps in epsilons]
    if kind == "bandit":
        common = dict(noise_variance=float(env.get("noise_variance", 0.01)), horizon=config.horizon,
                      seed=config.base_seed, reward_bounds=tuple(env.get("reward_bounds", (0.0, 1.0))))
        if env.get("arms"):
            arms = tuple(ArmCurve.from_dict(a) for a in env["arms"])
            return [("custom", BanditEnvironmentSpec(arms=arms, name="custom", **common))]
        suites = env.get("suites", ["sine"])
        suites = suites if isinstance(suites, list) else [suites]
        return [(s, BanditEnvironmentSpec(arms=bandit_suite(s), name=s, **common)) for s in suites]
    raise InvalidSpecError(f"unknown environment kind {kind!r}")


def _policy_label(policy: Dict[str, Any]) -> str:
    kind = PolicyKind(policy.get("kind", PolicyKind.CONFIDENCE_RULE.value))
    if kind is PolicyKind.CONFIDENCE_RULE:
        return f"kappa={policy.get('kappa', 0.9)}"
    if kind is PolicyKind.BERNOULLI:
        if policy.get("budget") is not None:
            return f"budget={policy['budget']}"
        return f"rate={policy.get('rate')}"
    return ""


def _agent_setup(agent: AgentConfig, policy: Dict[str, Any], params: Dict[str, Any],
                 env_spec, config: ExperimentConfig) -> AgentSetup:
    strategy = config.strategy
    kernel_tree = deep_merge(strategy.get("kernel", {}), agent.kernel)
    if kernel_tree.get("epsilon") is None:
        kernel_tree["epsilon"] = getattr(env_spec, "epsilon", 0.0)
    kernel = CompositeKernelSpec.from_dict(kernel_tree)
    beta_tree = deep_merge(strategy.get("beta", {}), agent.beta)
    policy = dict(policy)
    policy.setdefault("suppression_bandwidth", strategy.get("suppression_bandwidth", 0.2))
    noise = strategy.get("noise_variance")
    if noise is not None:
        noise = float(noise)
    else:
        # the model likelihood variance must stay positive
        noise = max(env_spec.noise_variance, MODEL_NOISE_FLOOR)
    bandit = None
    if agent.kind is not AgentKind.TV_GP:
        bandit_params = dict(params)
        if isinstance(env_spec, BanditEnvironmentSpec):
            bandit_params.setdefault("reward_bounds", list(env_spec.reward_bounds))
        bandit = BanditAgentSpec.from_dict({"kind": agent.kind.value, "params": bandit_params,
                                            "kernel": kernel_tree, "beta": beta_tree,
                                            "acquisition": agent.acquisition})
    max_history = strategy.get("max_history")
    return AgentSetup(
        kind=agent.kind,
        policy=QueryPolicySpec.from_dict(policy, config.horizon),
        kernel=kernel,
        beta=BetaSchedule.from_dict(beta_tree),
        acquisition=AcquisitionKind(agent.acquisition),
        rivals=str(strategy.get("rivals", "covering")),
        max_history=int(max_history) if max_history is not None else None,
        noise_variance=noise,
        bandit=bandit,
    )


def expand_cells(config: ExperimentConfig) -> List[Cell]:
    """Cross-product of environments, agents and their list-valued sweep fields.

    Raises:
        InvalidSpecError: if two cells would share a (policy, param, epsilon, environment) key
    """
    cells: List[Cell] = []
    for env_label, env_spec in _environment_specs(config):
        for agent in config.agents:
            for policy, _ in sweep_product(agent.policy):
                for params, params_label in sweep_product(agent.params):
                    setup = _agent_setup(agent, policy, params, env_spec, config)
                    label = ";".join(p for p in (_policy_label(policy), params_label) if p)
                    if isinstance(env_spec, TvGpEnvironmentSpec):
                        epsilon: Optional[float] = env_spec.epsilon
                    else:
                        epsilon = setup.kernel.epsilon if agent.kind is AgentKind.TV_GP else None
                    key = CellKey(policy=agent.name, param=label, epsilon=epsilon, environment=env_label)
                    cells.append(Cell(key=key, environment=env_spec, agent=setup,
                                      horizon=config.horizon, base_seed=config.base_seed))
    keys = [c.key for c in cells]
    if len(set(keys)) != len(keys):
        raise InvalidSpecError("config expands to duplicate cells; give agents distinct names")
    return cells


def build_environment(spec, rng: np.random.Generator) -> Environment:
    if isinstance(spec, TvGpEnvironmentSpec):
        return TvGpEnvironment(spec, rng)
    return BanditEnvironment(spec)


def build_agent(setup: AgentSetup, env: Environment, horizon: int, streams: TrialStreams) -> Agent:
    if setup.kind is AgentKind.TV_GP:
        return CeGpUcb(setup.kernel, env.domain, setup.beta, setup.policy, streams.agent,
                       noise_variance=setup.noise_variance, acquisition_kind=setup.acquisition,
                       rivals=setup.rivals, max_history=setup.max_history)
    base = build_bandit_agent(setup.bandit, env.size, horizon, streams.agent,
                              candidates=env.domain, noise_variance=setup.noise_variance)
    return BernoulliFeedbackAgent(base, setup.policy, streams.coin, candidates=env.domain)


def _x_value(point: Tuple[float, ...]) -> Any:
    return point[0] if len(point) == 1 else list(point)


def simulate(cell: Cell, trial: int) -> Tuple[TrialRecord, Agent, Environment]:
    """Run the agent/environment loop of one trial and keep the final agent and environment"""
    streams = trial_seeds(cell.base_seed, trial)
    env = build_environment(cell.environment, streams.environment)
    agent = build_agent(cell.agent, env, cell.horizon, streams)
    record = TrialRecord(cell=cell.key, trial=trial)
    for t in range(1, cell.horizon + 1):
        decision = agent.decide()
        y = evaluate(env, decision.chosen, t, streams.noise) if decision.queried else None
        agent.record(decision, y)
        record.rows.append(RoundRow(t=t, x=_x_value(decision.point), queried=decision.queried,
                                    y=y, regret=instantaneous_regret(env, decision.chosen, t)))
    record.verify()
    return record, agent, env


def run_trial(cell: Cell, trial: int) -> TrialRecord:
    """One trial of one cell; a numerical failure yields a failed record instead of raising"""
    try:
        record, _, _ = simulate(cell, trial)
    except NumericalFailureError as e:
        logger.warning(f"Harness: trial {trial} of {cell.key.slug()} failed: {e}")
        return TrialRecord(cell=cell.key, trial=trial, failed=True, error=str(e),
                           diagnostics=dict(e.diagnostics))
    logger.debug(f"Harness: trial {trial} of {cell.key.slug()} R_T={record.cum_regret:.4f} C_T={record.cost}")
    return record


def _run_task(task: Tuple[Cell, int]) -> TrialRecord:
    cell, trial = task
    return run_trial(cell, trial)


def _std(values: pd.Series) -> float:
    return float(values.std(ddof=1)) if len(values) > 1 else 0.0


def aggregate(records: Sequence[TrialRecord]) -> AggregateReport:
    """Per-cell mean and sample stddev over successful trials; failed trials only count as failures.

    Rows keep the order in which cells first appear; within a cell trials are
    summed in trial-index order.
    """
    ordered = sorted(records, key=lambda r: r.trial)
    summaries = [r.summary() for r in ordered]
    report = AggregateReport(trials=sorted(summaries, key=lambda s: (s.environment, s.policy, s.param,
                                                                     -1.0 if s.epsilon is None else s.epsilon,
                                                                     s.trial)))
    if not summaries:
        return report
    cell_order: List[CellKey] = []
    for r in records:
        if r.cell not in cell_order:
            cell_order.append(r.cell)
    frame = pd.DataFrame([{"cell": cell_order.index(r.cell), "trial": r.trial, "failed": r.failed,
                           "cum_regret": r.cum_regret, "avg_regret": r.avg_regret,
                           "cost": r.cost, "loss": r.loss} for r in ordered])
    for position, key in enumerate(cell_order):
        group = frame[frame["cell"] == position]
        ok = group[~group["failed"]]
        n = len(ok)
        if n == 0:
            mean_avg = std_avg = mean_cost = std_cost = mean_cum = mean_loss = float("nan")
        else:
            mean_avg, std_avg = float(ok["avg_regret"].mean()), _std(ok["avg_regret"])
            mean_cost, std_cost = float(ok["cost"].mean()), _std(ok["cost"])
            mean_cum, mean_loss = float(ok["cum_regret"].mean()), float(ok["loss"].mean())
        report.aggregate.append(AggregateRow(
            policy=key.policy, param=key.param, epsilon=key.epsilon,
            mean_avg_regret=mean_avg, std_avg_regret=std_avg, mean_cost=mean_cost, std_cost=std_cost,
            trials=n, failures=int(group["failed"].sum()), environment=key.environment,
            mean_cum_regret=mean_cum, mean_loss=mean_loss, single_trial=n == 1,
        ))
        if n:
            report.tradeoff.append(TradeoffPoint(policy=key.policy, param=key.param, epsilon=key.epsilon,
                                                 environment=key.environment, mean_cost=mean_cost,
                                                 mean_avg_regret=mean_avg))
    return report


class HarnessService:
    """Runs every (cell, trial) pair of an experiment, in parallel when workers > 1"""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.cells = expand_cells(config)
        logger.info(f"Harness: {config.experiment} expands to {len(self.cells)} cells x {config.trials} trials")

    def run_trial(self, cell_index: int, trial: int) -> TrialRecord:
        if not 0 <= cell_index < len(self.cells):
            raise InvalidSpecError(f"cell index {cell_index} outside [0, {len(self.cells)})")
        if not 0 <= trial < self.config.trials:
            raise InvalidSpecError(f"trial {trial} outside [0, {self.config.trials})")
        return run_trial(self.cells[cell_index], trial)

    def run_experiment(self) -> Tuple[AggregateReport, List[TrialRecord]]:
        tasks = [(cell, trial) for cell in self.cells for trial in range(self.config.trials)]
        workers = min(self.config.workers, len(tasks))
        logger.info(f"Harness: running {len(tasks)} trials on {workers} worker(s)")
        try:
            if workers > 1:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    records = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
            else:
                records = [_run_task(task) for task in tasks]
        except TvboError as e:
            logger.error(f"Harness: experiment {self.config.experiment} aborted: {e}")
            raise
        failures = sum(1 for r in records if r.failed)
        if failures:
            logger.warning(f"Harness: {failures} of {len(records)} trials failed and are excluded")
        report = aggregate(records)
        logger.info(f"Harness: {self.config.experiment} finished, {len(report.aggregate)} aggregate rows")
        return report, records

    def posterior_dump(self, trial: int = 0) -> List[Tuple[Cell, TrialRecord, Agent, Environment]]:
        """Run each cell once and keep the final agent state for posterior snapshots"""
        runs = []
        for cell in self.cells:
            record, agent, env = simulate(cell, trial)
            logger.info(f"Harness: {cell.key.policy} {cell.key.param} C_T={record.cost} "
                        f"R_T/T={record.avg_regret:.4f}")
            runs.append((cell, record, agent, env))
        return runs
