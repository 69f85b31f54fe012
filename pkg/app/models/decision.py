import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Tuple

from app.exceptions import InvalidSpecError


class BetaKind(str, Enum):
    CONSTANT = "Constant"
    LOG_GROWTH = "LogGrowth"


class PolicyKind(str, Enum):
    ALWAYS = "Always"
    BERNOULLI = "Bernoulli"
    CONFIDENCE_RULE = "ConfidenceRule"
    LCB_UCB_RULE = "LcbUcbRule"


class AcquisitionKind(str, Enum):
    UCB = "UCB"
    PI = "PI"
    EI = "EI"


@dataclass(frozen=True)
class BetaSchedule:
    """Exploration weights beta_t: constant, or c1 * log(c2 * t)"""
    kind: BetaKind = BetaKind.CONSTANT
    beta0: float = 1.0
    c1: float = 1.0
    c2: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "kind", BetaKind(self.kind))
        if self.kind is BetaKind.CONSTANT and not self.beta0 > 0:
            raise InvalidSpecError(f"beta0 must be positive, got {self.beta0}")
        if self.kind is BetaKind.LOG_GROWTH:
            # c2 > 1 keeps log(c2 * t) > 0 from t = 1 on
            if not self.c1 > 0 or not self.c2 > 1:
                raise InvalidSpecError(f"LogGrowth needs c1 > 0 and c2 > 1, got c1={self.c1}, c2={self.c2}")

    def value(self, t: int) -> float:
        if t < 1:
            raise InvalidSpecError(f"beta is defined for t >= 1, got {t}")
        if self.kind is BetaKind.CONSTANT:
            return self.beta0
        return self.c1 * math.log(self.c2 * t)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BetaSchedule":
        return cls(
            kind=BetaKind(data.get("kind", BetaKind.CONSTANT.value)),
            beta0=float(data.get("beta0", 1.0)),
            c1=float(data.get("c1", 1.0)),
            c2=float(data.get("c2", 2.0)),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "beta0": self.beta0, "c1": self.c1, "c2": self.c2}


@dataclass(frozen=True)
class QueryPolicySpec:
    """When to pay for feedback.

    Bernoulli queries with probability budget / horizon. ConfidenceRule
    queries when some rival may beat the chosen point with probability
    above 1 - kappa. LcbUcbRule queries unless the chosen LCB dominates every
    rival UCB.
    """
    kind: PolicyKind = PolicyKind.CONFIDENCE_RULE
    kappa: float = 0.9
    budget: float = 0.0
    horizon: int = 1
    suppression_bandwidth: float = 0.2
    use_covariance: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        if self.kind is PolicyKind.CONFIDENCE_RULE and not (0.0 < self.kappa < 1.0):
            raise InvalidSpecError(f"kappa must lie in (0, 1), got {self.kappa}")
        if self.kind is PolicyKind.BERNOULLI:
            if self.horizon < 1:
                raise InvalidSpecError(f"horizon must be >= 1, got {self.horizon}")
            if self.budget < 0 or self.budget > self.horizon:
                raise InvalidSpecError(
                    f"budget must lie in [0, horizon={self.horizon}], got {self.budget}")
        if not self.suppression_bandwidth > 0:
            raise InvalidSpecError(
                f"suppression_bandwidth must be positive, got {self.suppression_bandwidth}")

    @property
    def query_probability(self) -> float:
        if self.kind is PolicyKind.ALWAYS:
            return 1.0
        if self.kind is PolicyKind.BERNOULLI:
            return self.budget / self.horizon
        raise InvalidSpecError(f"{self.kind.value} has no fixed query probability")

    @classmethod
    def from_dict(cls, data: Dict[str, Any], horizon: int) -> "QueryPolicySpec":
        kind = PolicyKind(data.get("kind", PolicyKind.CONFIDENCE_RULE.value))
        budget = data.get("budget")
        if budget is None and data.get("rate") is not None:
            budget = float(data["rate"]) * horizon
        return cls(
            kind=kind,
            kappa=float(data.get("kappa", 0.9)),
            budget=float(budget or 0.0),
            horizon=int(horizon),
            suppression_bandwidth=float(data.get("suppression_bandwidth", 0.2)),
            use_covariance=bool(data.get("use_covariance", False)),
        )


@dataclass(frozen=True)
class QueryDecision:
    """What the agent did in one round: the point it picked and whether it paid for feedback"""
    round: int
    chosen: int
    queried: bool
    point: Tuple[float, ...] = field(default=())
    min_superiority: float = 1.0
    rivals_considered: int = 0

    @property
    def cost(self) -> int:
        return 1 if self.queried else 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "round": self.round,
            "chosen": self.chosen,
            "queried": self.queried,
            "point": list(self.point),
            "min_superiority": self.min_superiority,
            "rivals_considered": self.rivals_considered,
        }

