import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.exceptions import InvalidInputError, InvalidSpecError


def as_point(point) -> Tuple[float, ...]:
    """Normalize a scalar or coordinate sequence to a tuple of floats"""
    coords = tuple(float(v) for v in np.atleast_1d(np.asarray(point, dtype=float)).ravel())
    if not all(math.isfinite(v) for v in coords):
        raise InvalidInputError(f"point has non-finite coordinates: {point}")
    return coords


@dataclass(frozen=True)
class Observation:
    """One feedback receipt: the value seen at `point` in query round `round`.

    `index` is the candidate index when the point comes from a finite grid.
    """
    point: Tuple[float, ...]
    value: float
    round: int
    index: Optional[int] = None


@dataclass
class ObservationSet:
    """Ordered feedback history S_t^n with its noise variance.

    Rounds strictly increase in insertion order. `max_history` keeps only the
    most recent observations when set.
    """
    noise_variance: float = 0.01
    observations: List[Observation] = field(default_factory=list)
    max_history: Optional[int] = None

    def __post_init__(self):
        if not math.isfinite(self.noise_variance) or self.noise_variance <= 0:
            raise InvalidSpecError(f"noise_variance must be positive, got {self.noise_variance}")
        if self.max_history is not None and self.max_history < 1:
            raise InvalidSpecError(f"max_history must be >= 1, got {self.max_history}")

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def last_round(self) -> int:
        return self.observations[-1].round if self.observations else 0

    def append(self, point, value: float, round: int, index: Optional[int] = None) -> Observation:
        if not math.isfinite(value):
            raise InvalidInputError(f"observed value must be finite, got {value}")
        if round < 1:
            raise InvalidInputError(f"round must be >= 1, got {round}")
        if self.observations and round <= self.last_round:
            raise InvalidInputError(
                f"rounds must strictly increase: got {round} after {self.last_round}")
        obs = Observation(point=as_point(point), value=float(value), round=int(round), index=index)
        self.observations.append(obs)
        if self.max_history is not None and len(self.observations) > self.max_history:
            del self.observations[: len(self.observations) - self.max_history]
        return obs

    def clear(self) -> None:
        self.observations.clear()

    def points(self) -> np.ndarray:
        if not self.observations:
            return np.empty((0, 0))
        return np.array([o.point for o in self.observations], dtype=float)

    def values(self) -> np.ndarray:
        return np.array([o.value for o in self.observations], dtype=float)

    def rounds(self) -> np.ndarray:
        return np.array([o.round for o in self.observations], dtype=float)

    def indices(self) -> Optional[np.ndarray]:
        if any(o.index is None for o in self.observations):
            return None
        return np.array([o.index for o in self.observations], dtype=int)

    def copy(self) -> "ObservationSet":
        return ObservationSet(
            noise_variance=self.noise_variance,
            observations=list(self.observations),
            max_history=self.max_history,
        )


@dataclass(frozen=True)
class PosteriorSummary:
    """Posterior mean and standard deviation per candidate, predicting the round after `round`"""
    round: int
    means: np.ndarray
    stddevs: np.ndarray

    def __len__(self) -> int:
        return len(self.means)

    @property
    def variances(self) -> np.ndarray:
        return self.stddevs ** 2

    def ucb(self, beta: float) -> np.ndarray:
        return self.means + math.sqrt(beta) * self.stddevs

    def lcb(self, beta: float) -> np.ndarray:
        return self.means - math.sqrt(beta) * self.stddevs


def summary_from_lists(round: int, means: Sequence[float], stddevs: Sequence[float]) -> PosteriorSummary:
    return PosteriorSummary(round=round, means=np.asarray(means, dtype=float),
                            stddevs=np.asarray(stddevs, dtype=float))
