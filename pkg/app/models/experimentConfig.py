from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Union

from app.models.agentSpec import AgentKind, BanditAgentSpec
from app.models.decision import AcquisitionKind, BetaSchedule, QueryPolicySpec
from app.models.environmentSpec import BanditEnvironmentSpec, TvGpEnvironmentSpec
from app.models.kernelSpec import CompositeKernelSpec
from app.models.trialRecord import CellKey


@dataclass(frozen=True)
class AgentConfig:
    """One agent entry of the config tree; list-valued policy/params fields are sweeps"""
    name: str
    kind: AgentKind
    policy: Dict[str, Any]
    params: Dict[str, Any] = field(default_factory=dict)
    kernel: Dict[str, Any] = field(default_factory=dict)
    beta: Dict[str, Any] = field(default_factory=dict)
    acquisition: str = "UCB"


@dataclass
class ExperimentConfig:
    experiment: str
    trials: int
    horizon: int
    base_seed: int
    output_dir: str
    workers: int
    environment: Dict[str, Any]
    strategy: Dict[str, Any]
    agents: List[AgentConfig]
    formats: List[str] = field(default_factory=lambda: ["CSV", "JSON"])
    write_rounds: bool = True
    raw: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class AgentSetup:
    """Fully resolved agent of one cell"""
    kind: AgentKind
    policy: QueryPolicySpec
    kernel: CompositeKernelSpec
    beta: BetaSchedule
    acquisition: AcquisitionKind = AcquisitionKind.UCB
    rivals: str = "covering"
    max_history: Optional[int] = None
    noise_variance: float = 0.01
    bandit: Optional[BanditAgentSpec] = None


@dataclass(frozen=True)
class Cell:
    key: CellKey
    environment: Union[TvGpEnvironmentSpec, BanditEnvironmentSpec]
    agent: AgentSetup
    horizon: int
    base_seed: int
