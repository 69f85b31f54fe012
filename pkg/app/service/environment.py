"""Synthetic time-varying objectives with ground-truth regret accounting."""
import math
from typing import Optional, Tuple, Union

import numpy as np

from app.exceptions import GenerationError, InvalidInputError, InvalidSpecError, NumericalFailureError
from app.models.environmentSpec import (ArmCurve, ArmShape, BanditEnvironmentSpec,
                                        TvGpEnvironmentSpec)
from app.service.kernel import spatial_gram
from app.service.tvgp import JITTER_LADDER, cholesky_factor
from config.logger_config import logger

# sampling starts with a small jitter on the grid Gram
GENERATION_LADDER = tuple(j for j in JITTER_LADDER if j > 0)


class Environment:
    """Hidden objective f_t over a finite domain, stored as a (horizon, m) trajectory"""

    def __init__(self, domain: np.ndarray, trajectory: np.ndarray, noise_variance: float):
        self.domain = domain
        self.trajectory = trajectory
        self.noise_variance = noise_variance
        self.trajectory.setflags(write=False)

    @property
    def horizon(self) -> int:
        return self.trajectory.shape[0]

    @property
    def size(self) -> int:
        return self.trajectory.shape[1]

    def _check(self, x: int, t: int) -> None:
        if not isinstance(x, (int, np.integer)) or not 0 <= x < self.size:
            raise InvalidInputError(f"point index {x} is outside the domain of size {self.size}")
        if not 1 <= t <= self.horizon:
            raise InvalidInputError(f"round {t} is outside [1, {self.horizon}]")

    def values(self, t: int) -> np.ndarray:
        return self.trajectory[t - 1]

    def value(self, x: int, t: int) -> float:
        self._check(x, t)
        return float(self.trajectory[t - 1, x])

    def optimum(self, t: int) -> float:
        return float(np.max(self.trajectory[t - 1]))

    def index_of(self, point, atol: float = 1e-9) -> int:
        p = np.atleast_1d(np.asarray(point, dtype=float))
        dist = np.max(np.abs(self.domain - p[None, :]), axis=1)
        idx = int(np.argmin(dist))
        if dist[idx] > atol:
            raise InvalidInputError(f"point {point} is not in the domain")
        return idx


def evaluate(env: Environment, x: int, t: int, rng: np.random.Generator) -> float:
    """Noisy reward f_t(x) + N(0, sigma^2)"""
    env._check(x, t)
    f = float(env.trajectory[t - 1, x])
    if env.noise_variance == 0:
        return f
    return f + math.sqrt(env.noise_variance) * float(rng.standard_normal())


def instantaneous_regret(env: Environment, x: int, t: int) -> float:
    return env.optimum(t) - env.value(x, t)


def unit_grid(grid_size: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, grid_size).reshape(-1, 1)


def generate_tv_function(spec: TvGpEnvironmentSpec, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Sample f_1..f_T with f_{t+1} = sqrt(1 - eps) f_t + sqrt(eps) g_{t+1}.

    f_1 and every g_t are independent draws from GP(0, k_space) on the grid,
    all through one factorization of the grid Gram.

    Raises:
        GenerationError: if the grid Gram cannot be factorized
    """
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    grid = unit_grid(spec.grid_size)
    try:
        L, jitter = cholesky_factor(spatial_gram(spec.kernel, grid), ladder=GENERATION_LADDER)
    except NumericalFailureError as e:
        logger.error(f"Env: grid Gram factorization failed: {e.diagnostics}")
        raise GenerationError("could not factorize the generator Gram", e.diagnostics) from e
    draws = rng.standard_normal((spec.horizon, spec.grid_size)) @ L.T
    keep, refresh = math.sqrt(1.0 - spec.epsilon), math.sqrt(spec.epsilon)
    trajectory = np.empty_like(draws)
    trajectory[0] = draws[0]
    for t in range(1, spec.horizon):
        trajectory[t] = keep * trajectory[t - 1] + refresh * draws[t]
    logger.debug(f"Env: generated TV trajectory G={spec.grid_size} T={spec.horizon} "
                 f"eps={spec.epsilon} jitter={jitter:g}")
    return trajectory


class TvGpEnvironment(Environment):
    def __init__(self, spec: TvGpEnvironmentSpec, rng: Optional[np.random.Generator] = None):
        self.spec = spec
        super().__init__(unit_grid(spec.grid_size), generate_tv_function(spec, rng), spec.noise_variance)


def arm_value(curve: ArmCurve, t: Union[int, np.ndarray]):
    t = np.asarray(t, dtype=float)
    if curve.shape is ArmShape.SINE:
        return curve.offset + curve.amplitude * np.sin(2.0 * np.pi * t / curve.period + curve.phase)
    if curve.shape is ArmShape.GAUSSIAN:
        return curve.floor + curve.height * np.exp(-((t - curve.center) ** 2) / (2.0 * curve.width ** 2))
    # right-closed segments: (b_{k-1}, b_k] maps to levels[k]
    segment = np.searchsorted(np.asarray(curve.breakpoints), t, side="left")
    return np.asarray(curve.levels)[segment]


BANDIT_SUITES = ("sine", "gaussian", "piecewise", "mixed", "sine-rotating", "gaussian-rotating")


def bandit_suite(name: str) -> Tuple[ArmCurve, ...]:
    """Three-armed time-varying problems.

    `sine` and `gaussian` keep each arm inside its own reward band (best arm
    last), so the curves drift without the arms running level. `piecewise`
    rotates the levels (0.2, 0.8, 0.4) across arms and the best arm jumps at
    each breakpoint. The `-rotating` suites are phase and center shifted
    copies of one curve and cross every few hundred rounds; `mixed` has one
    default arm of each shape.
    """
    third = 2.0 * np.pi / 3.0
    if name == "sine":
        bands = ((0.45, 0.0), (0.2, third), (0.8, 2.0 * third))
        return tuple(ArmCurve(shape=ArmShape.SINE, offset=offset, amplitude=0.1, phase=phase)
                     for offset, phase in bands)
    if name == "gaussian":
        bands = ((0.3, 500.0), (0.1, 1500.0), (0.7, 1000.0))
        return tuple(ArmCurve(shape=ArmShape.GAUSSIAN, floor=floor, height=0.2, center=center)
                     for floor, center in bands)
    if name == "piecewise":
        levels = ArmCurve(shape=ArmShape.PIECEWISE).levels
        return tuple(ArmCurve(shape=ArmShape.PIECEWISE, levels=levels[k:] + levels[:k]) for k in range(3))
    if name == "mixed":
        return (ArmCurve(shape=ArmShape.SINE), ArmCurve(shape=ArmShape.GAUSSIAN),
                ArmCurve(shape=ArmShape.PIECEWISE))
    if name == "sine-rotating":
        return tuple(ArmCurve(shape=ArmShape.SINE, phase=k * third) for k in range(3))
    if name == "gaussian-rotating":
        return tuple(ArmCurve(shape=ArmShape.GAUSSIAN, center=c) for c in (1000.0, 500.0, 1500.0))
    raise InvalidSpecError(f"unknown bandit suite {name!r}; expected one of {BANDIT_SUITES}")


class BanditEnvironment(Environment):
    """Finite-arm bandit; the domain points are the arm indices"""

    def __init__(self, spec: BanditEnvironmentSpec):
        self.spec = spec
        rounds = np.arange(1, spec.horizon + 1)
        trajectory = np.column_stack([arm_value(arm, rounds) for arm in spec.arms]).astype(float)
        if not np.all(np.isfinite(trajectory)):
            raise InvalidSpecError("arm curves must be finite on every round")
        domain = np.arange(len(spec.arms), dtype=float).reshape(-1, 1)
        super().__init__(domain, trajectory, spec.noise_variance)

    @property
    def reward_bounds(self) -> Tuple[float, float]:
        return self.spec.reward_bounds
