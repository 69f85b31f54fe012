import copy
import itertools
from typing import Any, Dict, Iterator, List, Optional, Tuple

from app.exceptions import InvalidSpecError
from app.models.agentSpec import AgentKind
from app.models.experimentConfig import AgentConfig, ExperimentConfig
from app.service.configService.json_reader import JSONReader
from config.experiment_defaults import experiment_defaults
from config.logger_config import logger
from config.settings import settings

SWEEP_POLICY_FIELDS = ("kappa", "rate", "budget")
FORMATS = ("CSV", "JSON")
# list-valued fields that are values, not sweeps
NON_SWEEP_FIELDS = ("reward_bounds",)


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursive dict merge; lists and scalars in `override` replace the base value"""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def sweep_product(fields: Dict[str, Any], keys: Optional[Tuple[str, ...]] = None
                  ) -> Iterator[Tuple[Dict[str, Any], str]]:
    """Expand list-valued entries into a cross-product.

    Yields (concrete dict, label) pairs in config order; the label names the
    swept values, e.g. "kappa=0.9", and is empty when nothing is swept.
    """
    swept = [k for k, v in fields.items()
              if isinstance(v, list) and k not in NON_SWEEP_FIELDS and (keys is None or k in keys)]
    if not swept:
        yield dict(fields), ""
        return
    for values in itertools.product(*(fields[k] for k in swept)):
        concrete = dict(fields)
        concrete.update(zip(swept, values))
        yield concrete, ";".join(f"{k}={v}" for k, v in zip(swept, values))


class NormalizeConfig:
    """Turns a raw experiment key-tree into an ExperimentConfig"""

    def __init__(self, data: Dict[str, Any]):
        self.data = data

    def merged(self) -> Dict[str, Any]:
        name = self.data.get("experiment")
        if not name:
            raise InvalidSpecError("config needs an 'experiment' field")
        return deep_merge(experiment_defaults(name), self.data)

    def _agent(self, entry: Dict[str, Any]) -> AgentConfig:
        try:
            kind = AgentKind(entry["kind"])
        except KeyError as e:
            raise InvalidSpecError(f"agent entry is missing {e}") from e
        except ValueError as e:
            raise InvalidSpecError(f"unknown agent kind {entry.get('kind')!r}") from e
        policy = dict(entry.get("policy", {"kind": "Always"}))
        for key in SWEEP_POLICY_FIELDS:
            if isinstance(policy.get(key), list) and not policy[key]:
                raise InvalidSpecError(f"agent {entry.get('name')!r}: empty sweep for {key}")
        return AgentConfig(
            name=str(entry.get("name", kind.value)),
            kind=kind,
            policy=policy,
            params=dict(entry.get("params", {})),
            kernel=dict(entry.get("kernel", {})),
            beta=dict(entry.get("beta", {})),
            acquisition=str(entry.get("acquisition", "UCB")),
        )

    def normalize(self) -> ExperimentConfig:
        """
        Merge over defaults and validate the top-level fields

        Raises:
            InvalidSpecError: on unknown experiments or out-of-range fields
        """
        try:
            tree = self.merged()
            trials = int(tree["trials"])
            horizon = int(tree["horizon"])
            if trials < 1:
                raise InvalidSpecError(f"trials must be >= 1, got {trials}")
            if horizon < 1:
                raise InvalidSpecError(f"horizon must be >= 1, got {horizon}")
            formats = [str(f).upper() for f in tree.get("formats", FORMATS)]
            unknown = [f for f in formats if f not in FORMATS]
            if unknown:
                raise InvalidSpecError(f"unknown output formats {unknown}")
            agents: List[AgentConfig] = [self._agent(a) for a in tree.get("agents", [])]
            if not agents:
                raise InvalidSpecError("config lists no agents")
            names = [a.name for a in agents]
            if len(set(names)) != len(names):
                raise InvalidSpecError(f"agent names must be unique, got {names}")
            workers = tree.get("workers")
            config = ExperimentConfig(
                experiment=tree["experiment"],
                trials=trials,
                horizon=horizon,
                base_seed=int(tree.get("base_seed", 0)),
                output_dir=str(tree.get("output_dir", settings.output_dir)),
                workers=max(1, int(workers if workers is not None else settings.workers)),
                environment=dict(tree["environment"]),
                strategy=dict(tree.get("strategy", {})),
                agents=agents,
                formats=formats,
                write_rounds=bool(tree.get("write_rounds", True)),
                raw=tree,
            )
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, InvalidSpecError):
                logger.error(f"Config: {e}")
                raise
            logger.error(f"Config: malformed experiment config: {e}")
            raise InvalidSpecError(f"malformed experiment config: {e}") from e
        logger.info(f"Config: {config.experiment} with {len(agents)} agents, "
                    f"{config.trials} trials, T={config.horizon}")
        return config


def load_experiment(path: Optional[str] = None, experiment: Optional[str] = None) -> ExperimentConfig:
    """Read a config file (or only the defaults of `experiment`) and normalize it"""
    data: Dict[str, Any] = JSONReader(path).read_json() if path else {}
    if experiment is not None:
        if data.get("experiment", experiment) != experiment:
            raise InvalidSpecError(f"{path} configures {data['experiment']!r}, not {experiment!r}")
        data["experiment"] = experiment
    return NormalizeConfig(data).normalize()
