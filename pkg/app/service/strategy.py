"""Acquisition rules, rival selection and feedback-query policies for CE-GP-UCB."""
import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import norm

from app.exceptions import InvalidInputError, InvalidSpecError
from app.models.decision import (AcquisitionKind, BetaSchedule, PolicyKind,
                                 QueryDecision, QueryPolicySpec)
from app.models.kernelSpec import CompositeKernelSpec, SpatialFamily
from app.models.observation import PosteriorSummary
from app.service.tvgp import TimeVaryingGP
from config.logger_config import logger

RIVAL_MODES = ("covering", "local_optima", "all")


def select_point(post: PosteriorSummary, beta: float) -> Tuple[int, np.ndarray]:
    """Index maximizing mean + sqrt(beta) * stddev; ties go to the lowest index"""
    if len(post) == 0:
        raise InvalidInputError("posterior has no candidates")
    if not beta > 0:
        raise InvalidInputError(f"beta must be positive, got {beta}")
    ucb = post.ucb(beta)
    return int(np.argmax(ucb)), ucb


def acquisition(post: PosteriorSummary, kind: AcquisitionKind, beta: float = 1.0,
                incumbent: Optional[float] = None, xi: float = 0.0) -> np.ndarray:
    """Per-candidate acquisition scores.

    PI and EI improve on `incumbent`, which defaults to the largest posterior
    mean at this round. Zero stddev falls back to the deterministic limits.
    """
    kind = AcquisitionKind(kind)
    if kind is AcquisitionKind.UCB:
        return post.ucb(beta)
    if incumbent is None:
        incumbent = float(np.max(post.means))
    mu, sigma = post.means, post.stddevs
    improvement = mu - incumbent - xi
    positive = sigma > 0
    safe_sigma = np.where(positive, sigma, 1.0)
    z = improvement / safe_sigma
    if kind is AcquisitionKind.PI:
        return np.where(positive, norm.cdf(z), (improvement > 0).astype(float))
    ei = improvement * norm.cdf(z) + safe_sigma * norm.pdf(z)
    return np.where(positive, ei, np.maximum(improvement, 0.0))


def superiority_probability(mean_a: float, var_a: float, mean_b: float, var_b: float) -> float:
    """P(y_a > y_b) for independent Gaussian predictive draws"""
    if var_a < 0 or var_b < 0:
        raise InvalidInputError(f"variances must be non-negative, got ({var_a}, {var_b})")
    total = var_a + var_b
    gap = mean_a - mean_b
    if total == 0:
        if gap == 0:
            return 0.5
        return 1.0 if gap > 0 else 0.0
    return float(norm.cdf(gap / math.sqrt(total)))


def _superiority_vector(post: PosteriorSummary, chosen: int, rivals: np.ndarray,
                        covariance: Optional[np.ndarray] = None) -> np.ndarray:
    var = post.variances
    total = var[chosen] + var[rivals]
    if covariance is not None:
        total = np.maximum(total - 2.0 * covariance, 0.0)
    gap = post.means[chosen] - post.means[rivals]
    positive = total > 0
    z = gap / np.where(positive, np.sqrt(np.where(positive, total, 1.0)), 1.0)
    degenerate = np.where(gap == 0, 0.5, (gap > 0).astype(float))
    return np.where(positive, norm.cdf(z), degenerate)


def lcb_ucb_equivalent_kappa(beta: float) -> float:
    """Confidence level at which the probability rule is at least as strict as the LCB-UCB rule"""
    return float(norm.cdf(math.sqrt(2.0) * math.sqrt(beta)))


def _as_grid(domain) -> np.ndarray:
    grid = np.asarray(domain, dtype=float)
    return grid.reshape(-1, 1) if grid.ndim == 1 else grid


def _is_sorted_line(grid: np.ndarray) -> bool:
    return grid.shape[1] == 1 and bool(np.all(np.diff(grid[:, 0]) > 0))


def _local_maxima(scores: np.ndarray, grid: np.ndarray) -> np.ndarray:
    m = scores.shape[0]
    if m == 1:
        return np.array([0])
    if _is_sorted_line(grid):
        left = np.concatenate(([True], scores[1:] >= scores[:-1]))
        right = np.concatenate((scores[:-1] >= scores[1:], [True]))
        return np.flatnonzero(left & right)
    # general grids: neighbours are points within one grid step along some axis
    steps = []
    for d in range(grid.shape[1]):
        values = np.unique(grid[:, d])
        if values.shape[0] > 1:
            steps.append(np.min(np.diff(values)))
    radius = (max(steps) if steps else 0.0) * (1.0 + 1e-9)
    dist = cdist(grid, grid)
    neighbour = (dist <= radius) & (dist > 0)
    beaten = np.any(neighbour & (scores[None, :] > scores[:, None]), axis=1)
    return np.flatnonzero(~beaten)


def local_optima_candidates(post: PosteriorSummary, domain, bandwidth: float,
                            beta: float = 1.0) -> List[int]:
    """Distinct UCB modes over the candidate grid.

    Local maxima (plateaus included) are kept greedily from the highest UCB
    down; a candidate within `bandwidth` of an already kept one is dropped.
    The first entry is always the global argmax.
    """
    if not bandwidth > 0:
        raise InvalidSpecError(f"bandwidth must be positive, got {bandwidth}")
    grid = _as_grid(domain)
    scores = post.ucb(beta)
    maxima = _local_maxima(scores, grid)
    # stable sort keeps the lowest index first among equal scores
    order = maxima[np.argsort(-scores[maxima], kind="stable")]
    kept: List[int] = []
    for i in order:
        if kept:
            dist = np.linalg.norm(grid[kept] - grid[i], axis=1)
            if np.any(dist <= bandwidth):
                continue
        kept.append(int(i))
    return kept


def region_representatives(post: PosteriorSummary, domain, bandwidth: float, beta: float = 1.0,
                           kept: Sequence[int] = ()) -> List[int]:
    """Extend `kept` until every candidate lies within `bandwidth` of some entry.

    The best remaining UCB point is added each time, so a region with no
    local maximum of its own (a slope still far from any observation) keeps a
    representative. Entries of `kept` come first, in their given order.
    """
    if not bandwidth > 0:
        raise InvalidSpecError(f"bandwidth must be positive, got {bandwidth}")
    grid = _as_grid(domain)
    scores = post.ucb(beta)
    reps = [int(i) for i in kept]
    free = np.ones(scores.shape[0], dtype=bool)
    for i in reps:
        free &= np.linalg.norm(grid - grid[i], axis=1) > bandwidth
    while np.any(free):
        remaining = np.flatnonzero(free)
        i = int(remaining[np.argmax(scores[remaining])])
        reps.append(i)
        free &= np.linalg.norm(grid - grid[i], axis=1) > bandwidth
    return reps


def should_query(policy: QueryPolicySpec, post: PosteriorSummary, chosen: int, rivals: Sequence[int],
                 beta: float, rng: np.random.Generator, covariance: Optional[np.ndarray] = None,
                 point: Tuple[float, ...] = ()) -> QueryDecision:
    """Apply the feedback-query policy to the chosen candidate.

    Args:
        policy: query policy spec
        post: posterior the choice was made from
        chosen: chosen candidate index
        rivals: competing candidate indices, not containing `chosen`; the
            LCB-UCB rule ignores them and looks at the whole candidate set
        beta: exploration weight of this round
        rng: generator used by the Bernoulli schedule
        covariance: posterior covariance between chosen and each rival, used
            only when the policy asks for it
        point: coordinates of the chosen candidate, recorded on the decision

    Returns:
        QueryDecision for round post.round + 1
    """
    rivals = np.asarray(list(rivals), dtype=int)
    if chosen in set(rivals.tolist()):
        raise InvalidInputError(f"chosen index {chosen} must not be among its rivals")

    min_superiority = 1.0
    if rivals.size:
        cov = covariance if policy.use_covariance else None
        min_superiority = float(np.min(_superiority_vector(post, chosen, rivals, cov)))

    if policy.kind is PolicyKind.ALWAYS:
        queried = True
    elif policy.kind is PolicyKind.BERNOULLI:
        queried = bool(rng.random() < policy.query_probability)
    elif policy.kind is PolicyKind.CONFIDENCE_RULE:
        queried = bool(rivals.size) and min_superiority < policy.kappa
    elif policy.kind is PolicyKind.LCB_UCB_RULE:
        # checked against every other candidate, whatever the rival set
        ucb = np.delete(post.ucb(beta), chosen)
        lcb_chosen = post.lcb(beta)[chosen]
        queried = bool(np.any(ucb > lcb_chosen))
    else:  # pragma: no cover - enum is closed
        raise InvalidSpecError(f"unknown policy kind {policy.kind}")

    return QueryDecision(
        round=post.round + 1,
        chosen=int(chosen),
        queried=queried,
        point=tuple(point),
        min_superiority=min_superiority,
        rivals_considered=int(rivals.size),
    )


class CeGpUcb:
    """Time-varying GP agent with a pluggable feedback-query policy.

    With the ConfidenceRule policy this is CE-GP-UCB; with Always it is
    TV-GP-UCB under full feedback; with Bernoulli it spends an expected
    budget. PI and EI replace the UCB choice when comparing acquisition rules.

    Each round runs in two phases: `decide()` picks the point and whether to
    pay for feedback, `record()` stores the feedback when it arrives.
    """

    def __init__(self, kernel: CompositeKernelSpec, candidates, beta: BetaSchedule,
                 policy: QueryPolicySpec, rng: np.random.Generator, noise_variance: float = 0.01,
                 acquisition_kind: AcquisitionKind = AcquisitionKind.UCB, xi: float = 0.0,
                 rivals: str = "covering", max_history: Optional[int] = None):
        if rivals not in RIVAL_MODES:
            raise InvalidSpecError(f"rivals must be one of {RIVAL_MODES}, got {rivals!r}")
        self.kernel = kernel
        self.beta = beta
        self.policy = policy
        self.rng = rng
        self.acquisition_kind = AcquisitionKind(acquisition_kind)
        self.xi = xi
        self.rival_mode = "all" if kernel.spatial.family is SpatialFamily.INDEPENDENT else rivals
        self.gp = TimeVaryingGP(kernel, candidates, noise_variance=noise_variance, max_history=max_history)
        self.round = 0
        self.cost = 0
        self._pending: Optional[QueryDecision] = None

    @property
    def candidates(self) -> np.ndarray:
        return self.gp.candidates

    def current_posterior(self) -> PosteriorSummary:
        """Posterior the next decision would use"""
        return self.gp.predict(self.round)

    def rivals_for(self, post: PosteriorSummary, chosen: int, beta: float) -> List[int]:
        """Candidates the chosen point has to beat.

        `local_optima` keeps the suppressed UCB modes only; `covering` adds
        one representative per uncovered region; `all` is every candidate.
        """
        if self.rival_mode == "all":
            return [i for i in range(len(post)) if i != chosen]
        bandwidth = self.policy.suppression_bandwidth
        modes = local_optima_candidates(post, self.candidates, bandwidth, beta)
        if self.rival_mode == "covering":
            modes = region_representatives(post, self.candidates, bandwidth, beta, kept=modes)
        return [i for i in modes if i != chosen]

    def decide(self) -> QueryDecision:
        t = self.round + 1
        post = self.gp.predict(t - 1)
        beta_t = self.beta.value(t)
        if self.acquisition_kind is AcquisitionKind.UCB:
            chosen, _ = select_point(post, beta_t)
        else:
            scores = acquisition(post, self.acquisition_kind, beta=beta_t, xi=self.xi)
            chosen = int(np.argmax(scores))
        rivals = self.rivals_for(post, chosen, beta_t)
        covariance = None
        if self.policy.use_covariance and rivals:
            covariance = self.gp.covariance(t - 1, chosen, np.asarray(rivals))
        decision = should_query(self.policy, post, chosen, rivals, beta_t, self.rng,
                                covariance=covariance, point=tuple(self.candidates[chosen]))
        self.round = t
        self._pending = decision if decision.queried else None
        logger.debug(f"Strategy: round {t} chose {chosen} queried={decision.queried} "
                     f"min_sup={decision.min_superiority:.4f} rivals={decision.rivals_considered}")
        return decision

    def record(self, decision: QueryDecision, reward: Optional[float]) -> None:
        """Store feedback for a queried decision; None means the round went unobserved"""
        if reward is None:
            self._pending = None
            return
        if self._pending is None or decision.round != self._pending.round:
            raise InvalidInputError(f"no pending query for round {decision.round}")
        self.gp.observe(decision.chosen, reward, decision.round)
        self.cost += 1
        self._pending = None


def ce_gp_ucb_step(state: CeGpUcb, env_feedback_channel: Callable[[int, int], float]
                   ) -> Tuple[QueryDecision, CeGpUcb]:
    """One round of CE-GP-UCB: choose, decide on feedback, and fold in the reply.

    `env_feedback_channel(index, round)` is only called when the policy queries.
    """
    decision = state.decide()
    if decision.queried:
        reward = env_feedback_channel(decision.chosen, decision.round)
        state.record(decision, reward)
    return decision, state

