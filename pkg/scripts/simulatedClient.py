"""Scripted tuner client whose rewards come from a seeded time-varying environment.

Drives a session round by round through the protocol and keeps the same
per-round rows the harness does, so both can be compared directly.
"""
import json
import os
import subprocess
import sys
from typing import Any, Callable, Dict, Optional

import click

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.exceptions import InvalidSpecError, ProtocolError  # noqa: E402
from app.models.agentSpec import AgentKind  # noqa: E402
from app.models.environmentSpec import TvGpEnvironmentSpec  # noqa: E402
from app.models.experimentConfig import Cell  # noqa: E402
from app.models.trialRecord import RoundRow, TrialRecord  # noqa: E402
from app.server.protocol import handle  # noqa: E402
from app.service.configService.normalizeConfig import load_experiment  # noqa: E402
from app.service.environment import evaluate, instantaneous_regret  # noqa: E402
from app.service.harness_service import build_environment, expand_cells, run_trial, trial_seeds  # noqa: E402
from app.service.tuner_service import TunerService  # noqa: E402
from config.logger_config import logger  # noqa: E402

Send = Callable[[Dict[str, Any]], Dict[str, Any]]


def init_message(cell: Cell, trial: int, session: str = "simulated", seq: int = 0) -> Dict[str, Any]:
    """Init request reproducing the agent the harness builds for `cell`"""
    if cell.agent.kind is not AgentKind.TV_GP:
        raise InvalidSpecError(f"the tuner serves time-varying GP agents, not {cell.agent.kind.value}")
    spec = cell.environment
    if isinstance(spec, TvGpEnvironmentSpec):
        grid = {"unit_grid": spec.grid_size}
    else:
        grid = {"explicit": [[float(k)] for k in range(len(spec.arms))]}
    policy = cell.agent.policy
    return {
        "type": "init",
        "session": session,
        "seq": seq,
        "grid": grid,
        "kernel": cell.agent.kernel.to_dict(),
        "beta": cell.agent.beta.to_dict(),
        "policy": {"kind": policy.kind.value, "kappa": policy.kappa, "budget": policy.budget,
                   "suppression_bandwidth": policy.suppression_bandwidth,
                   "use_covariance": policy.use_covariance},
        "horizon": cell.horizon,
        "noise_variance": cell.agent.noise_variance,
        "seed": cell.base_seed,
        "trial": trial,
        "acquisition": cell.agent.acquisition.value,
        "rivals": cell.agent.rivals,
        "max_history": cell.agent.max_history,
    }


def _checked(response: Dict[str, Any]) -> Dict[str, Any]:
    if not response.get("ok"):
        error = response.get("error", {})
        raise ProtocolError(error.get("message", "request failed"), code=error.get("code"))
    return response


def run_client(cell: Cell, trial: int, send: Send, session: str = "simulated") -> TrialRecord:
    """Play one trial of `cell` against the tuner reachable through `send`"""
    streams = trial_seeds(cell.base_seed, trial)
    env = build_environment(cell.environment, streams.environment)
    seq = 0
    _checked(send(init_message(cell, trial, session, seq)))
    record = TrialRecord(cell=cell.key, trial=trial)
    for t in range(1, cell.horizon + 1):
        seq += 1
        suggestion = _checked(send({"type": "suggest", "session": session, "seq": seq}))
        index = suggestion["index"]
        y = None
        if suggestion["wants_feedback"]:
            y = evaluate(env, index, t, streams.noise)
            seq += 1
            _checked(send({"type": "observe", "session": session, "seq": seq,
                           "round": suggestion["round"], "reward": y}))
        x = env.domain[index]
        record.rows.append(RoundRow(t=t, x=float(x[0]) if x.shape[0] == 1 else [float(v) for v in x],
                                    queried=bool(suggestion["wants_feedback"]), y=y,
                                    regret=instantaneous_regret(env, index, t)))
    seq += 1
    _checked(send({"type": "close", "session": session, "seq": seq}))
    record.verify()
    return record


def in_process_sender(service: Optional[TunerService] = None) -> Send:
    service = service if service is not None else TunerService()
    return lambda message: handle(service, message)


class StdioSender:
    """Talks to `main.py tune` in a child process, one JSON line each way"""

    def __init__(self, command=None):
        root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
        command = command or [sys.executable, os.path.join(root, "main.py"), "tune"]
        self.process = subprocess.Popen(command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True)

    def __call__(self, message: Dict[str, Any]) -> Dict[str, Any]:
        self.process.stdin.write(json.dumps(message) + "\n")
        self.process.stdin.flush()
        line = self.process.stdout.readline()
        if not line:
            raise ProtocolError("tuner process closed its output", code="transport_closed")
        return json.loads(line)

    def close(self) -> None:
        self.process.stdin.close()
        self.process.wait(timeout=30)


@click.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--experiment", default="synth-bo")
@click.option("--cell", "cell_index", type=int, default=0, help="Index into the expanded cells")
@click.option("--trial", type=int, default=0)
@click.option("--transport", type=click.Choice(["inprocess", "stdio"]), default="inprocess")
def main(config_path, experiment, cell_index, trial, transport):
    """Compare a protocol-driven trial against the in-process harness"""
    config = load_experiment(config_path, experiment)
    cells = [c for c in expand_cells(config) if c.agent.kind is AgentKind.TV_GP]
    if not 0 <= cell_index < len(cells):
        raise click.BadParameter(f"cell index must lie in [0, {len(cells)})")
    cell = cells[cell_index]
    sender = StdioSender() if transport == "stdio" else in_process_sender()
    try:
        client = run_client(cell, trial, sender)
    finally:
        if isinstance(sender, StdioSender):
            sender.close()
    harness = run_trial(cell, trial)
    same = client.rows == harness.rows
    logger.info(f"Tuner: simulated client on {cell.key.slug()} trial {trial}: identical={same}")
    click.echo(f"client  R_T={client.cum_regret!r} C_T={client.cost}")
    click.echo(f"harness R_T={harness.cum_regret!r} C_T={harness.cost}")
    click.echo("identical" if same else "DIFFERENT")
    sys.exit(0 if same else 1)


if __name__ == "__main__":
    main()
