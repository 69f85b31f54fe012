"""Suggest/observe tuner sessions wrapping the CE-GP-UCB agent."""
import math
import threading
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from app.exceptions import InvalidInputError, InvalidSpecError, ProtocolError, StaleRoundError
from app.models.decision import AcquisitionKind, BetaSchedule, QueryDecision, QueryPolicySpec
from app.models.kernelSpec import CompositeKernelSpec
from app.service.environment import unit_grid
from app.service.harness_service import trial_seeds
from app.service.strategy import CeGpUcb
from app.service.tvgp import posterior_rows
from config.logger_config import logger

DEFAULT_CLIP = (-2.0, 2.0)


@dataclass(frozen=True)
class CandidateGrid:
    """Client-facing configurations and their normalized [0, 1]^d coordinates"""
    configs: List[Any]
    coords: np.ndarray

    def __len__(self) -> int:
        return len(self.configs)


def _normalize_columns(values: np.ndarray, lows: np.ndarray, highs: np.ndarray) -> np.ndarray:
    span = highs - lows
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (values - lows) / safe, 0.0)


def build_grid(grid: Dict[str, Any]) -> CandidateGrid:
    """Candidate grid from one of the supported layouts.

    `unit_grid`: n evenly spaced points on [0, 1].
    `labels`: opaque choices, spread evenly over [0, 1].
    `explicit`: numeric configurations, min-max normalized per dimension.
    `dimensions`: per-dimension quantized ranges {name, low, high, points,
    floor}; points below `floor` are dropped and the product is enumerated.
    """
    if not isinstance(grid, dict):
        raise InvalidSpecError("grid must be an object")
    if "unit_grid" in grid:
        size = int(grid["unit_grid"])
        if size < 1:
            raise InvalidSpecError(f"unit_grid needs at least one point, got {size}")
        coords = unit_grid(size) if size > 1 else np.zeros((1, 1))
        return CandidateGrid(configs=[float(v) for v in coords[:, 0]], coords=coords)
    if "labels" in grid:
        labels = list(grid["labels"])
        if not labels:
            raise InvalidSpecError("labels grid is empty")
        n = len(labels)
        coords = (np.arange(n, dtype=float) / max(n - 1, 1)).reshape(-1, 1)
        return CandidateGrid(configs=labels, coords=coords)
    if "explicit" in grid:
        rows = [list(r) if isinstance(r, (list, tuple)) else [r] for r in grid["explicit"]]
        if not rows:
            raise InvalidSpecError("explicit grid is empty")
        try:
            values = np.array(rows, dtype=float)
        except ValueError as e:
            raise InvalidSpecError(f"explicit grid must be numeric and rectangular: {e}") from e
        if not np.all(np.isfinite(values)):
            raise InvalidSpecError("explicit grid has non-finite entries")
        coords = _normalize_columns(values, values.min(axis=0), values.max(axis=0))
        return CandidateGrid(configs=[list(map(float, r)) for r in values], coords=coords)
    if "dimensions" in grid:
        axes, names, lows, highs = [], [], [], []
        for dim in grid["dimensions"]:
            low, high, points = float(dim["low"]), float(dim["high"]), int(dim.get("points", 10))
            if not high >= low or points < 1:
                raise InvalidSpecError(f"bad dimension {dim}")
            axis = np.linspace(low, high, points)
            if dim.get("floor") is not None:
                axis = axis[axis >= float(dim["floor"])]
            if axis.size == 0:
                raise InvalidSpecError(f"floor removes every point of dimension {dim.get('name')!r}")
            axes.append(axis)
            names.append(str(dim.get("name", f"x{len(names)}")))
            lows.append(low)
            highs.append(high)
        if not axes:
            raise InvalidSpecError("dimensions grid is empty")
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
        coords = _normalize_columns(mesh, np.array(lows), np.array(highs))
        configs = [dict(zip(names, map(float, row))) for row in mesh]
        return CandidateGrid(configs=configs, coords=coords)
    raise InvalidSpecError("grid needs one of unit_grid, labels, explicit or dimensions")


def _clip_bounds(value: Any) -> Optional[Tuple[float, float]]:
    if value is None or value is False:
        return None
    if value is True:
        return DEFAULT_CLIP
    low, high = float(value[0]), float(value[1])
    if not high > low:
        raise InvalidSpecError(f"clip bounds must increase, got {value}")
    return low, high


class TunerSession:
    """One suggest/observe session; requests are processed strictly one at a time"""

    def __init__(self, session_id: str, grid: CandidateGrid, kernel: CompositeKernelSpec,
                 beta: BetaSchedule, policy: QueryPolicySpec, noise_variance: float = 0.01,
                 clip: Optional[Tuple[float, float]] = None, seed: int = 0, trial: int = 0,
                 acquisition: AcquisitionKind = AcquisitionKind.UCB, rivals: str = "covering",
                 max_history: Optional[int] = None):
        self.session_id = session_id
        self.grid = grid
        self.clip = clip
        self.seed = seed
        self.trial = trial
        self.agent = CeGpUcb(kernel, grid.coords, beta, policy, trial_seeds(seed, trial).agent,
                             noise_variance=noise_variance, acquisition_kind=acquisition,
                             rivals=rivals, max_history=max_history)
        self.history: List[Dict[str, Any]] = []
        self.last_seq: Optional[int] = None
        self.closed = False
        self._last: Optional[QueryDecision] = None
        self._observed = False
        self._lock = threading.Lock()

    @classmethod
    def from_message(cls, message: Dict[str, Any]) -> "TunerSession":
        session_id = message.get("session")
        if not isinstance(session_id, str) or not session_id:
            raise ProtocolError("init needs a non-empty string 'session'")
        horizon = int(message.get("horizon", 1000))
        if horizon < 1:
            raise InvalidSpecError(f"horizon must be >= 1, got {horizon}")
        max_history = message.get("max_history")
        return cls(
            session_id=session_id,
            grid=build_grid(message.get("grid", {})),
            kernel=CompositeKernelSpec.from_dict(message.get("kernel", {})),
            beta=BetaSchedule.from_dict(message.get("beta", {})),
            policy=QueryPolicySpec.from_dict(message.get("policy", {}), horizon),
            noise_variance=float(message.get("noise_variance", 0.01)),
            clip=_clip_bounds(message.get("clip")),
            seed=int(message.get("seed", 0)),
            trial=int(message.get("trial", 0)),
            acquisition=AcquisitionKind(message.get("acquisition", "UCB")),
            rivals=str(message.get("rivals", "covering")),
            max_history=int(max_history) if max_history is not None else None,
        )

    @property
    def round(self) -> int:
        return self.agent.round

    @property
    def cost(self) -> int:
        return self.agent.cost

    def check_seq(self, seq: Any) -> None:
        if not isinstance(seq, int) or isinstance(seq, bool):
            raise ProtocolError(f"seq must be an integer, got {seq!r}")
        if self.last_seq is not None and seq <= self.last_seq:
            raise ProtocolError(f"seq {seq} is not after {self.last_seq}", code="out_of_order")
        self.last_seq = seq

    def _check_open(self) -> None:
        if self.closed:
            raise ProtocolError(f"session {self.session_id} is closed", code="session_closed")

    def suggest(self) -> Dict[str, Any]:
        with self._lock:
            self._check_open()
            if self._last is not None and self._last.queried and not self._observed:
                logger.warning(f"Tuner: session {self.session_id} round {self._last.round} "
                               f"asked for feedback that never came")
                self.agent.record(self._last, None)
            decision = self.agent.decide()
            self._last = decision
            self._observed = False
            logger.debug(f"Tuner: session {self.session_id} round {decision.round} -> "
                         f"{decision.chosen} wants_feedback={decision.queried}")
            return {
                "round": decision.round,
                "index": decision.chosen,
                "config": self.grid.configs[decision.chosen],
                "wants_feedback": decision.queried,
            }

    def observe(self, round: Any, reward: Any) -> Dict[str, Any]:
        """
        Store the reward for the latest suggestion

        Raises:
            StaleRoundError: if `round` is not the latest suggested round or was already observed
            ProtocolError: if the latest suggestion did not ask for feedback
            InvalidInputError: if the reward is not a finite number
        """
        with self._lock:
            self._check_open()
            if self._last is None or round != self._last.round:
                latest = self._last.round if self._last is not None else None
                raise StaleRoundError(f"observe for round {round}, latest suggestion is round {latest}")
            if self._observed:
                raise StaleRoundError(f"round {round} was already observed")
            if not self._last.queried:
                raise ProtocolError(f"round {round} did not ask for feedback", code="feedback_not_requested")
            if isinstance(reward, bool) or not isinstance(reward, (int, float)) or not math.isfinite(reward):
                raise InvalidInputError(f"reward must be a finite number, got {reward!r}")
            stored = float(reward)
            if self.clip is not None:
                stored = min(max(stored, self.clip[0]), self.clip[1])
            self.agent.record(self._last, stored)
            self._observed = True
            self.history.append({"round": self._last.round, "index": self._last.chosen,
                                 "config": self.grid.configs[self._last.chosen], "reward": stored})
            return {"round": self._last.round, "stored": stored, "cost": self.cost}

    def snapshot(self) -> Dict[str, Any]:
        with self._lock:
            post = self.agent.current_posterior()
            rows = posterior_rows(post, self.grid.coords)
            for row, config in zip(rows, self.grid.configs):
                row["candidate"] = config
            return {
                "round": self.round,
                "cost": self.cost,
                "posterior": rows,
                "history": [dict(h) for h in self.history],
            }

    def close(self) -> Dict[str, Any]:
        with self._lock:
            self.closed = True
            logger.info(f"Tuner: session {self.session_id} closed after {self.round} rounds, cost {self.cost}")
            return {"round": self.round, "cost": self.cost}


class TunerService:
    """Registry of independent sessions keyed by client-chosen id"""

    def __init__(self):
        self.sessions: Dict[str, TunerSession] = {}
        self._lock = threading.Lock()

    def init(self, message: Dict[str, Any]) -> TunerSession:
        session = TunerSession.from_message(message)
        with self._lock:
            existing = self.sessions.get(session.session_id)
            if existing is not None and not existing.closed:
                raise ProtocolError(f"session {session.session_id} already exists", code="session_exists")
            self.sessions[session.session_id] = session
        logger.info(f"Tuner: session {session.session_id} with {len(session.grid)} candidates, "
                    f"policy {session.agent.policy.kind.value}")
        return session

    def get(self, session_id: Any) -> TunerSession:
        with self._lock:
            session = self.sessions.get(session_id)
        if session is None:
            raise ProtocolError(f"unknown session {session_id!r}", code="unknown_session")
        return session

    def close(self, session_id: Any) -> Dict[str, Any]:
        session = self.get(session_id)
        ack = session.close()
        with self._lock:
            self.sessions.pop(session_id, None)
        return ack
