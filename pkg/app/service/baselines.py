"""Time-varying bandit baselines driven by a Bernoulli feedback schedule."""
import math
from typing import Optional, Union

import numpy as np
from scipy.special import softmax

from app.exceptions import InvalidInputError, InvalidSpecError
from app.models.agentSpec import AgentKind, BanditAgentSpec
from app.models.decision import PolicyKind, QueryDecision, QueryPolicySpec
from app.models.kernelSpec import CompositeKernelSpec, TemporalKernelSpec
from app.service.strategy import select_point
from app.service.tvgp import TimeVaryingGP
from config.logger_config import logger


def _check_reward(reward: float) -> float:
    if reward is None or not math.isfinite(reward):
        raise InvalidInputError(f"reward must be finite, got {reward}")
    return float(reward)


class BanditAgent:
    """Common bookkeeping: per-arm feedback counts and empirical means"""

    def __init__(self, n_arms: int, rng: np.random.Generator):
        if n_arms < 1:
            raise InvalidSpecError(f"need at least one arm, got {n_arms}")
        self.n_arms = n_arms
        self.rng = rng
        self.counts = np.zeros(n_arms, dtype=int)
        self.means = np.zeros(n_arms)
        self.rounds_seen = 0
        self.skipped = 0

    def select(self, t: int) -> int:
        raise NotImplementedError

    def _learn(self, arm: int, reward: float, t: int) -> None:
        self.counts[arm] += 1
        self.means[arm] += (reward - self.means[arm]) / self.counts[arm]

    def update(self, arm: int, reward: Optional[float], t: int) -> None:
        self.rounds_seen += 1
        if reward is None:
            self.skipped += 1
            return
        if not 0 <= arm < self.n_arms:
            raise InvalidInputError(f"arm {arm} outside [0, {self.n_arms})")
        self._learn(arm, _check_reward(reward), t)


class EpsilonGreedy(BanditAgent):
    def __init__(self, n_arms: int, rng: np.random.Generator, exploration: float = 0.1):
        super().__init__(n_arms, rng)
        self.exploration = exploration

    def select(self, t: int) -> int:
        if self.exploration > 0 and self.rng.random() < self.exploration:
            return int(self.rng.integers(self.n_arms))
        return int(np.argmax(self.means))


class Softmax(BanditAgent):
    """Boltzmann exploration over empirical means"""

    def __init__(self, n_arms: int, rng: np.random.Generator, temperature: float = 0.1):
        super().__init__(n_arms, rng)
        self.temperature = temperature

    def probabilities(self) -> np.ndarray:
        return softmax(self.means / self.temperature)

    def select(self, t: int) -> int:
        return int(self.rng.choice(self.n_arms, p=self.probabilities()))


class Ucb1(BanditAgent):
    def select(self, t: int) -> int:
        untried = np.flatnonzero(self.counts == 0)
        if untried.size:
            return int(untried[0])
        total = self.counts.sum()
        bonus = np.sqrt(2.0 * math.log(total) / self.counts)
        return int(np.argmax(self.means + bonus))


class Exp3S(BanditAgent):
    """EXP3 with fixed-share mixing for switching best arms.

    Rewards are rescaled to [0, 1] with `reward_bounds` before the
    importance-weighted update.
    """

    def __init__(self, n_arms: int, rng: np.random.Generator, horizon: int,
                 gamma: Optional[float] = None, alpha: Optional[float] = None,
                 reward_bounds=(0.0, 1.0)):
        super().__init__(n_arms, rng)
        self.alpha = 1.0 / horizon if alpha is None else alpha
        if gamma is None:
            gamma = min(1.0, math.sqrt(n_arms * (math.log(n_arms * horizon) + math.e)
                                       / ((math.e - 1.0) * horizon)))
        self.gamma = gamma
        self.reward_bounds = tuple(reward_bounds)
        self.weights = np.ones(n_arms)

    def probabilities(self) -> np.ndarray:
        return (1.0 - self.gamma) * self.weights / self.weights.sum() + self.gamma / self.n_arms

    def select(self, t: int) -> int:
        return int(self.rng.choice(self.n_arms, p=self.probabilities()))

    def _scaled(self, reward: float) -> float:
        lo, hi = self.reward_bounds
        return min(max((reward - lo) / (hi - lo), 0.0), 1.0)

    def _learn(self, arm: int, reward: float, t: int) -> None:
        super()._learn(arm, reward, t)
        probs = self.probabilities()
        estimate = np.zeros(self.n_arms)
        estimate[arm] = self._scaled(reward) / probs[arm]
        total = self.weights.sum()
        self.weights = (self.weights * np.exp(self.gamma * estimate / self.n_arms)
                        + math.e * self.alpha / self.n_arms * total)
        if self.weights.sum() > 1e200:
            self.weights /= self.weights.sum()


class GpUcbBandit(BanditAgent):
    """GP-UCB without forgetting; observations are dropped every `reset_period` rounds when set"""

    def __init__(self, n_arms: int, rng: np.random.Generator, kernel: CompositeKernelSpec,
                 beta, candidates=None, noise_variance: float = 0.01, reset_period: Optional[int] = None):
        super().__init__(n_arms, rng)
        stationary = CompositeKernelSpec(spatial=kernel.spatial, temporal=TemporalKernelSpec(epsilon=0.0))
        if candidates is None:
            candidates = np.arange(n_arms, dtype=float).reshape(-1, 1)
        self.gp = TimeVaryingGP(stationary, candidates, noise_variance=noise_variance)
        self.beta = beta
        self.reset_period = reset_period
        self.resets = 0

    def select(self, t: int) -> int:
        if self.reset_period is not None and t > 1 and (t - 1) % self.reset_period == 0:
            self.gp.reset()
            self.resets += 1
            logger.debug(f"Strategy: GP-UCB reset at round {t}")
        post = self.gp.predict(t - 1)
        arm, _ = select_point(post, self.beta.value(t))
        return arm

    def _learn(self, arm: int, reward: float, t: int) -> None:
        super()._learn(arm, reward, t)
        self.gp.observe(arm, reward, t)


def build_bandit_agent(spec: BanditAgentSpec, n_arms: int, horizon: int, rng: np.random.Generator,
                       candidates=None, noise_variance: float = 0.01) -> BanditAgent:
    if spec.kind is AgentKind.EXP3S:
        return Exp3S(n_arms, rng, horizon, gamma=spec.exp3_gamma, alpha=spec.share_alpha,
                     reward_bounds=spec.reward_bounds)
    if spec.kind is AgentKind.EPSILON_GREEDY:
        return EpsilonGreedy(n_arms, rng, exploration=spec.exploration)
    if spec.kind is AgentKind.SOFTMAX:
        return Softmax(n_arms, rng, temperature=spec.temperature)
    if spec.kind is AgentKind.UCB1:
        return Ucb1(n_arms, rng)
    if spec.kind is AgentKind.STATIONARY_GP_UCB:
        return GpUcbBandit(n_arms, rng, spec.kernel, spec.beta, candidates, noise_variance)
    if spec.kind is AgentKind.RESETTING_GP_UCB:
        period = spec.reset_period if spec.reset_period is not None else max(1, horizon // 5)
        return GpUcbBandit(n_arms, rng, spec.kernel, spec.beta, candidates, noise_variance, reset_period=period)
    raise InvalidSpecError(f"{spec.kind.value} is not a bandit baseline")


def agent_select(agent: BanditAgent, round: int) -> int:
    return agent.select(round)


def agent_update(agent: BanditAgent, arm: int, reward: Optional[float], round: int) -> BanditAgent:
    agent.update(arm, reward, round)
    return agent


class BernoulliFeedbackAgent:
    """Two-phase adapter: a bandit agent picks the arm, a coin decides whether feedback is paid for"""

    def __init__(self, agent: BanditAgent, policy: QueryPolicySpec, coin_rng: np.random.Generator,
                 candidates=None):
        if policy.kind not in (PolicyKind.ALWAYS, PolicyKind.BERNOULLI):
            raise InvalidSpecError(f"bandit baselines support Always or Bernoulli feedback, got {policy.kind.value}")
        self.agent = agent
        self.policy = policy
        self.coin_rng = coin_rng
        self.candidates = candidates
        self.round = 0
        self.cost = 0

    def decide(self) -> QueryDecision:
        t = self.round + 1
        arm = agent_select(self.agent, t)
        if self.policy.kind is PolicyKind.ALWAYS:
            queried = True
        else:
            queried = bool(self.coin_rng.random() < self.policy.query_probability)
        self.round = t
        point = tuple(self.candidates[arm]) if self.candidates is not None else (float(arm),)
        return QueryDecision(round=t, chosen=arm, queried=queried, point=point)

    def record(self, decision: QueryDecision, reward: Union[float, None]) -> None:
        if reward is not None and not decision.queried:
            raise InvalidInputError(f"round {decision.round} did not ask for feedback")
        agent_update(self.agent, decision.chosen, reward, decision.round)
        if reward is not None:
            self.cost += 1

