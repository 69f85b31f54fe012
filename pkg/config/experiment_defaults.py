"""Built-in experiment trees; a user JSON file is deep-merged over the matching one.

List values under `environment.epsilon`, `environment.suites`, an agent's
`policy` fields (kappa, rate, budget) and an agent's `params` are sweeps and
expand to a cross-product of cells.
"""
import copy
from typing import Any, Dict

from app.exceptions import InvalidSpecError

KAPPA_SWEEP = [0.6, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 0.99]
BERNOULLI_RATES = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
EPSILON_SWEEP = [0.003, 0.005, 0.01, 0.03, 0.05]

MATERN_KERNEL = {"family": "Matern32", "lengthscale": 0.2, "amplitude": 1.0}

SYNTH_BO: Dict[str, Any] = {
    "experiment": "synth-bo",
    "trials": 50,
    "horizon": 500,
    "base_seed": 2021,
    "output_dir": "results/synth_bo",
    "workers": None,
    "formats": ["CSV", "JSON"],
    "write_rounds": True,
    "environment": {
        "kind": "tv_gp",
        "grid_size": 1000,
        "kernel": dict(MATERN_KERNEL),
        "epsilon": list(EPSILON_SWEEP),
        "noise_variance": 0.01,
    },
    "strategy": {
        # epsilon None means "use the environment's forgetting rate"
        "kernel": dict(MATERN_KERNEL, epsilon=None),
        "beta": {"kind": "Constant", "beta0": 1.0},
        "suppression_bandwidth": 0.2,
        "rivals": "covering",
        "max_history": None,
        "noise_variance": None,
    },
    "agents": [
        {"name": "R-GP-UCB", "kind": "ResettingGpUcb", "policy": {"kind": "Always"},
         "params": {"reset_period": 100}},
        {"name": "TV-GP-UCB", "kind": "TvGp", "policy": {"kind": "Always"}},
        {"name": "TV-GP-UCB Ber", "kind": "TvGp",
         "policy": {"kind": "Bernoulli", "rate": list(BERNOULLI_RATES)}},
        {"name": "TV-GP-PI Ber", "kind": "TvGp", "acquisition": "PI",
         "policy": {"kind": "Bernoulli", "rate": [0.2, 0.5, 0.8]}},
        {"name": "TV-GP-EI Ber", "kind": "TvGp", "acquisition": "EI",
         "policy": {"kind": "Bernoulli", "rate": [0.2, 0.5, 0.8]}},
        {"name": "CE-GP-UCB", "kind": "TvGp",
         "policy": {"kind": "ConfidenceRule", "kappa": list(KAPPA_SWEEP)}},
        {"name": "CE-GP-UCB @*", "kind": "TvGp", "policy": {"kind": "LcbUcbRule"}},
    ],
}

SYNTH_BANDIT: Dict[str, Any] = {
    "experiment": "synth-bandit",
    "trials": 100,
    "horizon": 2000,
    "base_seed": 2021,
    "output_dir": "results/synth_bandit",
    "workers": None,
    "formats": ["CSV", "JSON"],
    "write_rounds": False,
    "environment": {
        "kind": "bandit",
        "suites": ["sine", "gaussian", "piecewise"],
        "arms": None,
        "noise_variance": 0.01,
        "reward_bounds": [0.0, 1.0],
    },
    "strategy": {
        # prior spread matched to rewards in [0, 1]; beta 4 re-explores an arm once its
        # upper bound passes the incumbent, before the confidence rule fires on the incumbent
        "kernel": {"family": "Independent", "amplitude": 0.1, "epsilon": 0.005},
        "beta": {"kind": "Constant", "beta0": 4.0},
        "suppression_bandwidth": 0.2,
        "rivals": "all",
        "max_history": None,
        "noise_variance": None,
    },
    "agents": [
        {"name": "EXP3.S", "kind": "Exp3S", "policy": {"kind": "Bernoulli", "rate": 0.1}},
        {"name": "epsilon-greedy", "kind": "EpsilonGreedy", "policy": {"kind": "Bernoulli", "rate": 0.1},
         "params": {"exploration": 0.1}},
        {"name": "Softmax", "kind": "Softmax", "policy": {"kind": "Bernoulli", "rate": 0.1},
         "params": {"temperature": 0.1}},
        {"name": "UCB", "kind": "Ucb1", "policy": {"kind": "Bernoulli", "rate": 0.1}},
        {"name": "GP-UCB", "kind": "StationaryGpUcb", "policy": {"kind": "Bernoulli", "rate": 0.1}},
        {"name": "CE-GP-UCB", "kind": "TvGp", "policy": {"kind": "ConfidenceRule", "kappa": 0.95}},
    ],
}

POSTERIOR_DUMP: Dict[str, Any] = {
    "experiment": "posterior-dump",
    "trials": 1,
    "horizon": 500,
    "base_seed": 7,
    "output_dir": "results/posterior_dump",
    "workers": 1,
    "formats": ["CSV"],
    "write_rounds": True,
    "environment": {
        "kind": "tv_gp",
        "grid_size": 1000,
        "kernel": dict(MATERN_KERNEL),
        "epsilon": 0.03,
        "noise_variance": 0.01,
    },
    "strategy": copy.deepcopy(SYNTH_BO["strategy"]),
    "agents": [
        {"name": "CE-GP-UCB", "kind": "TvGp", "policy": {"kind": "ConfidenceRule", "kappa": 0.9}},
        {"name": "TV-GP-UCB", "kind": "TvGp", "policy": {"kind": "Always"}},
        {"name": "TV-GP-UCB Ber", "kind": "TvGp", "policy": {"kind": "Bernoulli", "rate": 0.5}},
    ],
}

EXPERIMENT_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "synth-bo": SYNTH_BO,
    "synth-bandit": SYNTH_BANDIT,
    "posterior-dump": POSTERIOR_DUMP,
}


def experiment_defaults(name: str) -> Dict[str, Any]:
    """Fresh copy of the default tree for `name`"""
    if name not in EXPERIMENT_DEFAULTS:
        raise InvalidSpecError(f"unknown experiment {name!r}; expected one of {sorted(EXPERIMENT_DEFAULTS)}")
    return copy.deepcopy(EXPERIMENT_DEFAULTS[name])
