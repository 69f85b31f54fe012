import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict

from app.exceptions import InvalidSpecError


class SpatialFamily(str, Enum):
    SQUARED_EXPONENTIAL = "SquaredExponential"
    MATERN32 = "Matern32"
    MATERN52 = "Matern52"
    INDEPENDENT = "Independent"


@dataclass(frozen=True)
class SpatialKernelSpec:
    """Spatial covariance k_space over the candidate domain.

    The Independent family ignores the lengthscale and treats every distinct
    point as uncorrelated (the finite-arm bandit setting).
    """
    family: SpatialFamily = SpatialFamily.MATERN32
    lengthscale: float = 0.2
    amplitude: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", SpatialFamily(self.family))
        if not math.isfinite(self.amplitude) or self.amplitude <= 0:
            raise InvalidSpecError(f"amplitude must be positive, got {self.amplitude}")
        if self.family is not SpatialFamily.INDEPENDENT:
            if not math.isfinite(self.lengthscale) or self.lengthscale <= 0:
                raise InvalidSpecError(f"lengthscale must be positive, got {self.lengthscale}")

    def to_dict(self) -> Dict[str, Any]:
        return {"family": self.family.value, "lengthscale": self.lengthscale, "amplitude": self.amplitude}


@dataclass(frozen=True)
class TemporalKernelSpec:
    """Exponential forgetting kernel k_time(t, t') = (1 - epsilon)^(|t - t'| / 2)"""
    epsilon: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.epsilon) or not (0.0 <= self.epsilon <= 1.0):
            raise InvalidSpecError(f"epsilon must lie in [0, 1], got {self.epsilon}")


@dataclass(frozen=True)
class CompositeKernelSpec:
    spatial: SpatialKernelSpec = field(default_factory=SpatialKernelSpec)
    temporal: TemporalKernelSpec = field(default_factory=TemporalKernelSpec)

    @property
    def epsilon(self) -> float:
        return self.temporal.epsilon

    @property
    def amplitude(self) -> float:
        return self.spatial.amplitude

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CompositeKernelSpec":
        return cls(
            spatial=SpatialKernelSpec(
                family=SpatialFamily(data.get("family", SpatialFamily.MATERN32.value)),
                lengthscale=float(data.get("lengthscale", 0.2)),
                amplitude=float(data.get("amplitude", 1.0)),
            ),
            temporal=TemporalKernelSpec(epsilon=float(data.get("epsilon", 0.0))),
        )

    def to_dict(self) -> Dict[str, Any]:
        out = self.spatial.to_dict()
        out["epsilon"] = self.temporal.epsilon
        return out
