import json
import os
import sys

import click
import pandas as pd
from dotenv import load_dotenv

sys.path.insert(0, os.path.dirname(__file__))

# Load environment variables from .env file
load_dotenv()

from app.dao.results_dao import ResultsDAO  # noqa: E402
from app.exceptions import TvboError  # noqa: E402
from app.models.trialRecord import AGGREGATE_COLUMNS  # noqa: E402
from app.service.configService.normalizeConfig import load_experiment  # noqa: E402
from app.service.harness_service import HarnessService, aggregate  # noqa: E402
from app.service.strategy import CeGpUcb  # noqa: E402
from app.service.tvgp import posterior_rows  # noqa: E402
from config.experiment_defaults import EXPERIMENT_DEFAULTS, experiment_defaults  # noqa: E402
from config.logger_config import logger  # noqa: E402
from config.settings import settings  # noqa: E402


def experiment_options(func):
    for option in reversed([
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                     help="JSON experiment file merged over the defaults"),
        click.option("--output-dir", help="Directory for CSV/JSON artifacts"),
        click.option("--trials", type=int, help="Override the number of trials"),
        click.option("--workers", type=int, help="Worker processes (default TVBO_WORKERS)"),
        click.option("--base-seed", type=int, help="Override the base seed"),
    ]):
        func = option(func)
    return func


def _load(experiment, config_path, output_dir, trials, workers, base_seed):
    config = load_experiment(config_path, experiment)
    if output_dir is not None:
        config.output_dir = output_dir
    if trials is not None:
        if trials < 1:
            raise click.BadParameter(f"trials must be >= 1, got {trials}")
        config.trials = trials
    if workers is not None:
        config.workers = max(1, workers)
    if base_seed is not None:
        config.base_seed = base_seed
    return config


def _print_aggregate(report) -> None:
    frame = pd.DataFrame([r.__dict__ for r in report.aggregate], columns=list(AGGREGATE_COLUMNS))
    columns = ["environment", "policy", "param", "epsilon", "mean_avg_regret", "std_avg_regret",
               "mean_cost", "std_cost", "trials", "failures"]
    click.echo(frame[columns].to_string(index=False) if len(frame) else "no aggregate rows")


def _run(experiment, **options) -> None:
    try:
        config = _load(experiment, **options)
        report, records = HarnessService(config).run_experiment()
        ResultsDAO(config.output_dir).emit(report, records, config.formats, config.write_rounds)
    except TvboError as e:
        logger.error(f"Harness: {experiment} failed: {e}")
        raise click.ClickException(str(e))
    _print_aggregate(report)


@click.group()
def cli():
    """Time-varying Bayesian optimization with costly feedback"""


@cli.command("synth-bo")
@experiment_options
def synth_bo(**options):
    """Synthetic time-varying BO sweep over forgetting rates and query policies"""
    _run("synth-bo", **options)


@cli.command("synth-bandit")
@experiment_options
def synth_bandit(**options):
    """Three-armed time-varying bandit suites against the baselines"""
    _run("synth-bandit", **options)


@cli.command("posterior-dump")
@experiment_options
@click.option("--full-trajectory", is_flag=True, help="Write every f_t, not only the final one")
def posterior_dump(full_trajectory, **options):
    """Final posteriors of each agent on one seeded environment, plus the hidden function"""
    try:
        config = _load("posterior-dump", **options)
        service = HarnessService(config)
        runs = service.posterior_dump()
        dao = ResultsDAO(config.output_dir)
        posterior, history = [], []
        for cell, record, agent, env in runs:
            if not isinstance(agent, CeGpUcb):
                logger.warning(f"Harness: {cell.key.policy} has no time-varying GP posterior to dump")
                continue
            for row in posterior_rows(agent.current_posterior(), env.domain):
                posterior.append({"policy": cell.key.policy, "param": cell.key.param,
                                  "round": agent.round, **row})
            for obs in agent.gp.observations.observations:
                history.append({"policy": cell.key.policy, "param": cell.key.param, "round": obs.round,
                                "x": obs.point[0] if len(obs.point) == 1 else list(obs.point),
                                "y": obs.value})
        dao.write_posterior_dump(posterior)
        dao.write_history(history)
        if runs:
            _, _, _, env = runs[0]
            rounds = None if full_trajectory else [env.horizon]
            dao.write_trajectory(env.domain, env.trajectory, rounds=rounds)
        report = aggregate([record for _, record, _, _ in runs])
        dao.emit(report, [record for _, record, _, _ in runs], config.formats, config.write_rounds)
    except TvboError as e:
        logger.error(f"Harness: posterior-dump failed: {e}")
        raise click.ClickException(str(e))
    _print_aggregate(report)


@cli.command("print-config")
@click.argument("experiment", type=click.Choice(sorted(EXPERIMENT_DEFAULTS)))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def print_config(experiment, config_path):
    """Dump the fully defaulted config tree"""
    try:
        tree = load_experiment(config_path, experiment).raw if config_path else experiment_defaults(experiment)
    except TvboError as e:
        raise click.ClickException(str(e))
    click.echo(json.dumps(tree, indent=2))


@cli.command("tune")
def tune():
    """Serve the tuner protocol as newline-delimited JSON on stdin/stdout"""
    from app.server.stdio_server import serve_stdio

    serve_stdio()


@cli.command("serve")
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.option("--debug/--no-debug", default=None)
def serve(host, port, debug):
    """Serve the tuner protocol over HTTP"""
    from app.server import create_app

    host = host or settings.host
    port = port or settings.port
    debug = settings.debug if debug is None else debug
    app = create_app()
    logger.info(f"API: starting Flask app on {host}:{port} (debug={debug})")
    app.run(host=host, port=port, debug=debug)


if __name__ == '__main__':
    cli()
