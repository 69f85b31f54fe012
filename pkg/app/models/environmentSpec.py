import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Tuple

from app.exceptions import InvalidSpecError
from app.models.kernelSpec import SpatialKernelSpec


class ArmShape(str, Enum):
    SINE = "Sine"
    GAUSSIAN = "Gaussian"
    PIECEWISE = "Piecewise"


@dataclass(frozen=True)
class TvGpEnvironmentSpec:
    """Markov-drifting GP objective on the unit interval quantized to `grid_size` points"""
    grid_size: int = 1000
    kernel: SpatialKernelSpec = field(default_factory=SpatialKernelSpec)
    epsilon: float = 0.05
    noise_variance: float = 0.01
    horizon: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.grid_size < 2:
            raise InvalidSpecError(f"grid_size must be >= 2, got {self.grid_size}")
        if self.horizon < 1:
            raise InvalidSpecError(f"horizon must be >= 1, got {self.horizon}")
        if not (0.0 <= self.epsilon <= 1.0):
            raise InvalidSpecError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.noise_variance < 0 or not math.isfinite(self.noise_variance):
            raise InvalidSpecError(f"noise_variance must be >= 0, got {self.noise_variance}")


@dataclass(frozen=True)
class ArmCurve:
    """Reward curve of one arm over the round index.

    Sine: offset + amplitude * sin(2 pi t / period + phase)
    Gaussian: floor + height * exp(-(t - center)^2 / (2 width^2))
    Piecewise: levels[k] on (breakpoints[k-1], breakpoints[k]]
    """
    shape: ArmShape = ArmShape.SINE
    offset: float = 0.5
    amplitude: float = 0.4
    period: float = 500.0
    phase: float = 0.0
    center: float = 1000.0
    width: float = 250.0
    height: float = 0.9
    floor: float = 0.0
    breakpoints: Tuple[float, ...] = (700.0, 1400.0)
    levels: Tuple[float, ...] = (0.2, 0.8, 0.4)

    def __post_init__(self):
        object.__setattr__(self, "shape", ArmShape(self.shape))
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        if self.shape is ArmShape.SINE and not self.period > 0:
            raise InvalidSpecError(f"sine period must be positive, got {self.period}")
        if self.shape is ArmShape.GAUSSIAN and not self.width > 0:
            raise InvalidSpecError(f"gaussian width must be positive, got {self.width}")
        if self.shape is ArmShape.PIECEWISE:
            if len(self.levels) != len(self.breakpoints) + 1:
                raise InvalidSpecError("piecewise curve needs one more level than breakpoints")
            if any(b2 <= b1 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
                raise InvalidSpecError("piecewise breakpoints must increase")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ArmCurve":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        for key in ("breakpoints", "levels"):
            if key in known:
                known[key] = tuple(known[key])
        return cls(**known)


@dataclass(frozen=True)
class BanditEnvironmentSpec:
    arms: Tuple[ArmCurve, ...]
    noise_variance: float = 0.01
    horizon: int = 2000
    seed: int = 0
    reward_bounds: Tuple[float, float] = (0.0, 1.0)
    name: str = "custom"

    def __post_init__(self):
        if len(self.arms) < 2:
            raise InvalidSpecError(f"a bandit needs at least two arms, got {len(self.arms)}")
        if self.horizon < 1:
            raise InvalidSpecError(f"horizon must be >= 1, got {self.horizon}")
        if self.noise_variance < 0:
            raise InvalidSpecError(f"noise_variance must be >= 0, got {self.noise_variance}")
        lo, hi = self.reward_bounds
        if not hi > lo:
            raise InvalidSpecError(f"reward_bounds must be increasing, got {self.reward_bounds}")
