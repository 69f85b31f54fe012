from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Tuple

from app.exceptions import InvalidSpecError
from app.models.decision import AcquisitionKind, BetaSchedule
from app.models.kernelSpec import CompositeKernelSpec, SpatialFamily, SpatialKernelSpec


class AgentKind(str, Enum):
    EXP3S = "Exp3S"
    EPSILON_GREEDY = "EpsilonGreedy"
    SOFTMAX = "Softmax"
    UCB1 = "Ucb1"
    STATIONARY_GP_UCB = "StationaryGpUcb"
    RESETTING_GP_UCB = "ResettingGpUcb"
    # time-varying GP agent; the query policy decides between TV-GP-UCB and CE-GP-UCB
    TV_GP = "TvGp"


GP_KINDS = (AgentKind.STATIONARY_GP_UCB, AgentKind.RESETTING_GP_UCB, AgentKind.TV_GP)


@dataclass(frozen=True)
class BanditAgentSpec:
    """Baseline agent and its parameters.

    `exp3_gamma` and `share_alpha` default to the horizon-tuned EXP3.S values;
    `reset_period` defaults to horizon // 5.
    """
    kind: AgentKind = AgentKind.UCB1
    exploration: float = 0.1
    temperature: float = 0.1
    exp3_gamma: Optional[float] = None
    share_alpha: Optional[float] = None
    reset_period: Optional[int] = None
    reward_bounds: Tuple[float, float] = (0.0, 1.0)
    kernel: CompositeKernelSpec = field(default_factory=lambda: CompositeKernelSpec(
        spatial=SpatialKernelSpec(family=SpatialFamily.INDEPENDENT)))
    beta: BetaSchedule = field(default_factory=BetaSchedule)
    acquisition: AcquisitionKind = AcquisitionKind.UCB

    def __post_init__(self):
        object.__setattr__(self, "kind", AgentKind(self.kind))
        if not (0.0 <= self.exploration <= 1.0):
            raise InvalidSpecError(f"exploration must lie in [0, 1], got {self.exploration}")
        if not self.temperature > 0:
            raise InvalidSpecError(f"temperature must be positive, got {self.temperature}")
        if self.exp3_gamma is not None and not (0.0 < self.exp3_gamma <= 1.0):
            raise InvalidSpecError(f"exp3_gamma must lie in (0, 1], got {self.exp3_gamma}")
        if self.share_alpha is not None and not (0.0 <= self.share_alpha <= 1.0):
            raise InvalidSpecError(f"share_alpha must lie in [0, 1], got {self.share_alpha}")
        if self.reset_period is not None and self.reset_period < 1:
            raise InvalidSpecError(f"reset_period must be >= 1, got {self.reset_period}")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BanditAgentSpec":
        params = dict(data.get("params", {}))
        return cls(
            kind=AgentKind(data["kind"]),
            exploration=float(params.get("exploration", 0.1)),
            temperature=float(params.get("temperature", 0.1)),
            exp3_gamma=params.get("exp3_gamma"),
            share_alpha=params.get("share_alpha"),
            reset_period=params.get("reset_period"),
            reward_bounds=tuple(params.get("reward_bounds", (0.0, 1.0))),
            kernel=CompositeKernelSpec.from_dict(data.get("kernel", {"family": "Independent"})),
            beta=BetaSchedule.from_dict(data.get("beta", {})),
            acquisition=AcquisitionKind(data.get("acquisition", "UCB")),
        )
