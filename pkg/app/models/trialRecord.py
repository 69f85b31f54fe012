import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from app.exceptions import TvboError


@dataclass(frozen=True)
class CellKey:
    """Identifies one (policy, parameter, environment) combination of an experiment"""
    policy: str
    param: str
    epsilon: Optional[float]
    environment: str

    def slug(self) -> str:
        raw = f"{self.environment}_{self.policy}_{self.param}_eps{self.epsilon}"
        return "".join(c if c.isalnum() or c in "-._" else "_" for c in raw)


@dataclass(frozen=True)
class RoundRow:
    t: int
    x: Any
    queried: bool
    y: Optional[float]
    regret: float


@dataclass
class TrialRecord:
    """Per-round rows of one trial plus cumulative regret R_T, cost C_T and loss L_T"""
    cell: CellKey
    trial: int
    rows: List[RoundRow] = field(default_factory=list)
    failed: bool = False
    error: Optional[str] = None
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return len(self.rows)

    @property
    def cum_regret(self) -> float:
        return math.fsum(r.regret for r in self.rows)

    @property
    def cost(self) -> int:
        return sum(1 for r in self.rows if r.queried)

    @property
    def loss(self) -> float:
        return self.cum_regret + self.cost

    @property
    def avg_regret(self) -> float:
        return self.cum_regret / self.horizon if self.rows else 0.0

    def verify(self) -> None:
        """Check the accounting identities on this trial"""
        if self.failed:
            return
        for expected, r in enumerate(self.rows, start=1):
            if r.t != expected:
                raise TvboError(f"trial {self.trial}: row {expected} is labelled round {r.t}")
            if r.queried != (r.y is not None):
                raise TvboError(f"trial {self.trial}: round {r.t} queried={r.queried} but y={r.y}")
            if not math.isfinite(r.regret) or r.regret < 0:
                raise TvboError(f"trial {self.trial}: round {r.t} has regret {r.regret}")

    def summary(self) -> "TrialSummary":
        return TrialSummary(
            policy=self.cell.policy, param=self.cell.param, epsilon=self.cell.epsilon,
            environment=self.cell.environment, trial=self.trial,
            cum_regret=self.cum_regret, avg_regret=self.avg_regret, cost=self.cost,
            loss=self.loss, failed=self.failed, error=self.error,
        )


@dataclass(frozen=True)
class TrialSummary:
    policy: str
    param: str
    epsilon: Optional[float]
    environment: str
    trial: int
    cum_regret: float
    avg_regret: float
    cost: int
    loss: float
    failed: bool
    error: Optional[str]

    def verify(self) -> None:
        """Check a summary read back from disk: L_T = R_T + C_T with non-negative parts"""
        if self.failed:
            return
        if not math.isclose(self.loss, self.cum_regret + self.cost, rel_tol=1e-9, abs_tol=1e-9):
            raise TvboError(f"trial {self.trial}: loss {self.loss} != {self.cum_regret} + {self.cost}")
        if self.cost < 0 or self.cum_regret < 0:
            raise TvboError(f"trial {self.trial}: negative cost or regret")


@dataclass(frozen=True)
class AggregateRow:
    """Mean and sample stddev (n - 1) of R_T/T and C_T over the successful trials of a cell"""
    policy: str
    param: str
    epsilon: Optional[float]
    mean_avg_regret: float
    std_avg_regret: float
    mean_cost: float
    std_cost: float
    trials: int
    failures: int
    environment: str
    mean_cum_regret: float
    mean_loss: float
    single_trial: bool


@dataclass(frozen=True)
class TradeoffPoint:
    policy: str
    param: str
    epsilon: Optional[float]
    environment: str
    mean_cost: float
    mean_avg_regret: float


AGGREGATE_COLUMNS: Tuple[str, ...] = tuple(AggregateRow.__dataclass_fields__)
TRADEOFF_COLUMNS: Tuple[str, ...] = tuple(TradeoffPoint.__dataclass_fields__)
def _verified(summary: TrialSummary) -> TrialSummary:
    summary.verify()
    return summary


TRIAL_COLUMNS: Tuple[str, ...] = tuple(TrialSummary.__dataclass_fields__)
ROUND_COLUMNS: Tuple[str, ...] = ("trial", "t", "x", "queried", "y", "regret")


@dataclass
class AggregateReport:
    aggregate: List[AggregateRow] = field(default_factory=list)
    tradeoff: List[TradeoffPoint] = field(default_factory=list)
    trials: List[TrialSummary] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "aggregate": [asdict(r) for r in self.aggregate],
            "tradeoff": [asdict(r) for r in self.tradeoff],
            "trials": [asdict(r) for r in self.trials],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AggregateReport":
        return cls(
            aggregate=[AggregateRow(**r) for r in data.get("aggregate", [])],
            tradeoff=[TradeoffPoint(**r) for r in data.get("tradeoff", [])],
            trials=[_verified(TrialSummary(**r)) for r in data.get("trials", [])],
        )

    def row(self, policy: str, param: str = "", epsilon: Optional[float] = None,
            environment: Optional[str] = None) -> AggregateRow:
        for r in self.aggregate:
            if (r.policy == policy and r.param == param and r.epsilon == epsilon
                    and (environment is None or r.environment == environment)):
                return r
        raise KeyError(f"no aggregate row for {policy!r} {param!r} eps={epsilon} env={environment}")
