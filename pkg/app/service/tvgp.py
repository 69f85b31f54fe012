"""Time-varying GP posterior over a finite candidate set from sparse observations.

Old observations are discounted by the temporal kernel: the training Gram is
K o D with D[i, j] = (1 - eps)^(|h(i) - h(j)| / 2) and the cross-covariance to a
candidate is k(x) o d with d[i] = (1 - eps)^((now + 1 - h(i)) / 2).
"""
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular

from app.exceptions import InvalidInputError, NumericalFailureError
from app.models.kernelSpec import CompositeKernelSpec
from app.models.observation import ObservationSet, PosteriorSummary
from app.service.kernel import spatial_gram, temporal_gram
from config.logger_config import logger

JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)

# candidate Grams above this size are not cached (memory grows as m^2)
_GRAM_CACHE_LIMIT = 4000


def _condition_number(matrix: np.ndarray) -> float:
    try:
        return float(np.linalg.cond(matrix))
    except LinAlgError:
        return float("inf")


def cholesky_factor(matrix: np.ndarray, ladder=JITTER_LADDER) -> Tuple[np.ndarray, float]:
    """Lower Cholesky factor of a symmetric matrix, escalating diagonal jitter on failure.

    Args:
        matrix: symmetric positive (semi)definite matrix
        ladder: increasing jitter values tried in order

    Returns:
        Tuple of (lower factor, jitter that succeeded)

    Raises:
        NumericalFailureError: if every rung of the ladder fails
    """
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError("matrix has non-finite entries")
    eye = np.eye(A.shape[0])
    for jitter in ladder:
        try:
            L = cholesky(A + jitter * eye, lower=True, check_finite=False)
        except LinAlgError:
            continue
        if jitter > 0:
            logger.warning(f"GP: Cholesky needed jitter {jitter:g} for a {A.shape[0]}x{A.shape[0]} system")
        return L, jitter
    diagnostics = {
        "condition_number": _condition_number(A),
        "max_jitter": ladder[-1],
        "size": int(A.shape[0]),
        "min_diagonal": float(np.min(np.diag(A))) if A.size else 0.0,
    }
    logger.error(f"GP: Cholesky failed after jitter ladder: {diagnostics}")
    raise NumericalFailureError("non-positive pivot after jitter escalation", diagnostics)


def cholesky_solve(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve matrix @ x = rhs through a triangular factorization"""
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {A.shape}")
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.max(np.abs(A))))):
        raise InvalidInputError("matrix must be symmetric")
    b = np.asarray(rhs, dtype=float)
    if not np.all(np.isfinite(b)):
        raise InvalidInputError("right-hand side has non-finite entries")
    L, _ = cholesky_factor(A)
    return cho_solve((L, True), b, check_finite=False)


class TimeVaryingGP:
    """Posterior over a fixed candidate set, cached per observation set.

    The factorization only changes when an observation arrives, and a new
    observation extends it by one row instead of refactoring. Between
    observations the prediction for a later round is the cached one with the
    cross-covariance scaled by (1 - eps)^((now - last_round) / 2).
    """

    def __init__(self, kernel: CompositeKernelSpec, candidates, noise_variance: float = 0.01,
                 max_history: Optional[int] = None, observations: Optional[ObservationSet] = None,
                 cache_gram: bool = True):
        self.kernel = kernel
        cand = np.asarray(candidates, dtype=float)
        if cand.ndim == 1:
            cand = cand.reshape(-1, 1)
        if cand.shape[0] == 0:
            raise InvalidInputError("candidate set must be non-empty")
        if not np.all(np.isfinite(cand)):
            raise InvalidInputError("candidates must be finite")
        self.candidates = cand
        self.observations = observations if observations is not None else ObservationSet(
            noise_variance=noise_variance, max_history=max_history)
        self._candidate_gram = None
        if cache_gram and cand.shape[0] <= _GRAM_CACHE_LIMIT:
            self._candidate_gram = spatial_gram(kernel.spatial, cand)
        self._prior_variance = np.full(cand.shape[0], kernel.amplitude)
        self._stale = True
        self._L: Optional[np.ndarray] = None
        self._jitter = 0.0
        self._cache: Dict[str, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def n_candidates(self) -> int:
        return self.candidates.shape[0]

    def observe(self, index: int, value: float, round: int) -> None:
        if not 0 <= index < self.n_candidates:
            raise InvalidInputError(f"candidate index {index} outside [0, {self.n_candidates})")
        before = len(self.observations)
        self.observations.append(self.candidates[index], value, round, index=index)
        if len(self.observations) != before + 1:
            # history cap evicted the oldest observation
            self._stale = True

    def reset(self) -> None:
        self.observations.clear()
        self._L = None
        self._stale = True

    def _cross_spatial(self) -> np.ndarray:
        idx = self.observations.indices()
        if idx is not None and self._candidate_gram is not None:
            return self._candidate_gram[idx, :]
        return spatial_gram(self.kernel.spatial, self.observations.points(), self.candidates)

    def _train_spatial(self) -> np.ndarray:
        idx = self.observations.indices()
        if idx is not None and self._candidate_gram is not None:
            return self._candidate_gram[np.ix_(idx, idx)]
        return spatial_gram(self.kernel.spatial, self.observations.points())

    def _refresh(self) -> None:
        obs = self.observations
        eps = self.kernel.epsilon
        rounds = obs.rounds()
        ref = obs.last_round
        K = self._train_spatial() * temporal_gram(self.kernel.temporal, rounds)
        A = K + obs.noise_variance * np.eye(len(obs))
        L, jitter = cholesky_factor(A)
        d_ref = (1.0 - eps) ** ((ref + 1 - rounds) / 2.0)
        B = self._cross_spatial() * d_ref[:, None]
        V = solve_triangular(L, B, lower=True, check_finite=False)
        w = solve_triangular(L, obs.values(), lower=True, check_finite=False)
        self._L, self._jitter = L, jitter
        self._cache = {
            "mean": V.T @ w,
            "quad": np.sum(V * V, axis=0),
            "V": V,
            "w": w,
            "ref": np.array(ref, dtype=float),
        }
        self._stale = False

    def _extend(self, n: int) -> bool:
        """Fold observation n (0-based) into the cached factor; False asks for a full refresh"""
        obs = self.observations.observations
        new = obs[n]
        if new.index is None or self._candidate_gram is None or self._jitter > 0:
            return False
        eps = self.kernel.epsilon
        old_idx = np.array([o.index for o in obs[:n]], dtype=int)
        old_rounds = np.array([o.round for o in obs[:n]], dtype=float)
        k_row = self._candidate_gram[old_idx, new.index] * (1.0 - eps) ** ((new.round - old_rounds) / 2.0)
        l_row = solve_triangular(self._L, k_row, lower=True, check_finite=False)
        a_nn = self._candidate_gram[new.index, new.index] + self.observations.noise_variance
        pivot = a_nn - float(l_row @ l_row)
        if not pivot > 1e-12 * a_nn:
            return False
        l_nn = np.sqrt(pivot)
        c = (1.0 - eps) ** ((new.round - float(self._cache["ref"])) / 2.0)
        V = c * self._cache["V"]
        b_new = self._candidate_gram[new.index, :] * np.sqrt(1.0 - eps)
        v_new = (b_new - l_row @ V) / l_nn
        w_new = (new.value - float(l_row @ self._cache["w"])) / l_nn
        L = np.zeros((n + 1, n + 1))
        L[:n, :n] = self._L
        L[n, :n] = l_row
        L[n, n] = l_nn
        self._L = L
        self._cache = {
            "mean": c * self._cache["mean"] + v_new * w_new,
            "quad": c * c * self._cache["quad"] + v_new * v_new,
            "V": np.vstack((V, v_new)),
            "w": np.append(self._cache["w"], w_new),
            "ref": np.array(new.round, dtype=float),
        }
        return True

    def _sync(self) -> None:
        n = len(self.observations)
        if self._stale or self._L is None or self._L.shape[0] > n:
            self._refresh()
            return
        while self._L.shape[0] < n:
            if not self._extend(self._L.shape[0]):
                self._refresh()
                return

    def _scale(self, now: int) -> float:
        ref = self.observations.last_round
        if now < ref:
            raise InvalidInputError(f"cannot predict at round {now} before the last observation {ref}")
        return (1.0 - self.kernel.epsilon) ** ((now - ref) / 2.0)

    def predict(self, now: int) -> PosteriorSummary:
        """Posterior for the decision following round `now`"""
        if len(self.observations) == 0:
            return PosteriorSummary(round=now, means=np.zeros(self.n_candidates),
                                    stddevs=np.sqrt(self._prior_variance))
        self._sync()
        s = self._scale(now)
        means = s * self._cache["mean"]
        var = np.maximum(self._prior_variance - s * s * self._cache["quad"], 0.0)
        return PosteriorSummary(round=now, means=means, stddevs=np.sqrt(var))

    def covariance(self, now: int, i: int, others: np.ndarray) -> np.ndarray:
        """Posterior covariance between candidate i and each candidate in `others`"""
        others = np.asarray(others, dtype=int)
        if self._candidate_gram is not None:
            prior = self._candidate_gram[i, others]
        else:
            prior = spatial_gram(self.kernel.spatial, self.candidates[[i]], self.candidates[others])[0]
        if len(self.observations) == 0:
            return prior
        self._sync()
        s = self._scale(now)
        V = self._cache["V"]
        return prior - s * s * (V[:, i] @ V[:, others])


def posterior(kernel: CompositeKernelSpec, obs: ObservationSet, candidates, now: int) -> PosteriorSummary:
    """Posterior mean and standard deviation at `candidates` for the round after `now`.

    Args:
        kernel: composite space-time kernel
        obs: observation set (noise variance included)
        candidates: candidate points, one row per candidate
        now: round whose data the prediction conditions on; must not precede
            any observation round

    Returns:
        PosteriorSummary over the candidates

    Raises:
        InvalidInputError: on empty candidates or a `now` before the data
        NumericalFailureError: if the training system cannot be factorized
    """
    if len(obs) and now < obs.last_round:
        raise InvalidInputError(f"now={now} precedes last observation round {obs.last_round}")
    # observations may sit off the candidate grid, so work from raw points
    model = TimeVaryingGP(kernel, candidates, observations=obs.copy(), cache_gram=False)
    return model.predict(now)


def posterior_rows(summary: PosteriorSummary, candidates) -> List[Dict[str, object]]:
    """(candidate, mean, stddev) rows for snapshots and CSV dumps"""
    cand = np.asarray(candidates, dtype=float)
    if cand.ndim == 1:
        cand = cand.reshape(-1, 1)
    rows = []
    for i in range(cand.shape[0]):
        point = cand[i]
        rows.append({
            "candidate": float(point[0]) if point.shape[0] == 1 else [float(v) for v in point],
            "mean": float(summary.means[i]),
            "stddev": float(summary.stddevs[i]),
        })
    return rows
