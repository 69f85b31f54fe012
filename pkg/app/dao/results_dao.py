import json
import os
from dataclasses import asdict
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from app.exceptions import PersistenceError, TvboError
from app.models.trialRecord import (AGGREGATE_COLUMNS, ROUND_COLUMNS, TRADEOFF_COLUMNS, TRIAL_COLUMNS,
                                    AggregateReport, TrialRecord)
from config.logger_config import logger

POSTERIOR_COLUMNS = ("policy", "param", "round", "candidate", "mean", "stddev")
HISTORY_COLUMNS = ("policy", "param", "round", "x", "y")
TRAJECTORY_COLUMNS = ("t", "x", "value")


class ResultsDAO:
    """Data Access Object for experiment artifacts on disk.

    Floats are written in their shortest round-trip form, so identical
    reports produce identical files.
    """

    def __init__(self, output_dir: str):
        """
        Initialize ResultsDAO with an output directory

        Args:
            output_dir: directory that receives every artifact; created on first write
        """
        self.output_dir = output_dir
        logger.debug(f"DAO: ResultsDAO rooted at {output_dir}")

    def _path(self, *parts: str) -> str:
        return os.path.join(self.output_dir, *parts)

    def _ensure_dir(self, path: str) -> None:
        directory = os.path.dirname(path)
        try:
            os.makedirs(directory, exist_ok=True)
        except OSError as e:
            logger.error(f"DAO: cannot create directory {directory}: {e}")
            raise PersistenceError(f"cannot create directory: {e}", directory) from e

    def _write_csv(self, rows: List[Dict], columns: Sequence[str], path: str) -> str:
        return self._write_frame(pd.DataFrame(rows, columns=list(columns)), path)

    def _write_frame(self, frame: pd.DataFrame, path: str) -> str:
        self._ensure_dir(path)
        try:
            frame.to_csv(path, index=False, lineterminator="\n")
        except OSError as e:
            logger.error(f"DAO: failed writing {path}: {e}")
            raise PersistenceError(f"failed writing CSV: {e}", path) from e
        logger.debug(f"DAO: wrote {len(frame)} rows to {path}")
        return path

    def write_aggregate_csv(self, report: AggregateReport) -> str:
        return self._write_csv([asdict(r) for r in report.aggregate], AGGREGATE_COLUMNS,
                               self._path("aggregate.csv"))

    def write_tradeoff_csv(self, report: AggregateReport) -> str:
        return self._write_csv([asdict(r) for r in report.tradeoff], TRADEOFF_COLUMNS,
                               self._path("tradeoff.csv"))

    def write_trials_csv(self, report: AggregateReport) -> str:
        return self._write_csv([asdict(r) for r in report.trials], TRIAL_COLUMNS, self._path("trials.csv"))

    def write_rounds_csv(self, records: Iterable[TrialRecord]) -> List[str]:
        """One file per cell under rounds/, rows ordered by (trial, t); failed trials have no rows"""
        by_cell: Dict[str, List[TrialRecord]] = {}
        for record in records:
            by_cell.setdefault(record.cell.slug(), []).append(record)
        paths = []
        for slug, cell_records in by_cell.items():
            rows = []
            for record in sorted(cell_records, key=lambda r: r.trial):
                for row in record.rows:
                    rows.append({
                        "trial": record.trial,
                        "t": row.t,
                        "x": row.x if not isinstance(row.x, list) else json.dumps(row.x),
                        "queried": int(row.queried),
                        "y": row.y,
                        "regret": row.regret,
                    })
            paths.append(self._write_csv(rows, ROUND_COLUMNS, self._path("rounds", f"{slug}.csv")))
        return paths

    def write_report_json(self, report: AggregateReport) -> str:
        path = self._path("report.json")
        self._ensure_dir(path)
        try:
            with open(path, "w") as handle:
                json.dump(report.to_dict(), handle, indent=2)
                handle.write("\n")
        except (OSError, TypeError) as e:
            logger.error(f"DAO: failed writing {path}: {e}")
            raise PersistenceError(f"failed writing JSON report: {e}", path) from e
        return path

    def emit(self, report: AggregateReport, records: Optional[Sequence[TrialRecord]] = None,
             formats: Sequence[str] = ("CSV", "JSON"), write_rounds: bool = True) -> List[str]:
        """
        Write the report in every requested format

        Args:
            report: aggregate report
            records: trial records whose per-round rows go to rounds/ (CSV only)
            formats: any of "CSV", "JSON"
            write_rounds: whether to write the per-round files

        Returns:
            List[str]: paths written
        """
        written: List[str] = []
        formats = [f.upper() for f in formats]
        if "CSV" in formats:
            written += [self.write_aggregate_csv(report), self.write_tradeoff_csv(report),
                        self.write_trials_csv(report)]
            if write_rounds and records:
                written += self.write_rounds_csv(records)
        if "JSON" in formats:
            written.append(self.write_report_json(report))
        logger.info(f"DAO: wrote {len(written)} files under {self.output_dir}")
        return written

    def write_posterior_dump(self, rows: List[Dict], name: str = "posterior.csv") -> str:
        """(candidate, mean, stddev) rows tagged with policy, param and round"""
        return self._write_csv(rows, POSTERIOR_COLUMNS, self._path(name))

    def write_history(self, rows: List[Dict], name: str = "history.csv") -> str:
        return self._write_csv(rows, HISTORY_COLUMNS, self._path(name))

    def write_trajectory(self, domain: np.ndarray, trajectory: np.ndarray, rounds: Optional[Sequence[int]] = None,
                         name: str = "trajectory.csv") -> str:
        """Hidden objective in long form; `rounds` selects which f_t to write (all by default)"""
        grid = np.asarray(domain, dtype=float)
        xs = grid[:, 0] if grid.ndim == 2 and grid.shape[1] == 1 else np.arange(grid.shape[0], dtype=float)
        selected = list(rounds) if rounds is not None else list(range(1, trajectory.shape[0] + 1))
        frame = pd.DataFrame({
            "t": np.repeat(selected, xs.shape[0]),
            "x": np.tile(xs, len(selected)),
            "value": np.concatenate([trajectory[t - 1] for t in selected]) if selected else np.empty(0),
        }, columns=list(TRAJECTORY_COLUMNS))
        return self._write_frame(frame, self._path(name))


def read_report_json(path: str) -> AggregateReport:
    """Parse a report written by ResultsDAO.write_report_json"""
    try:
        with open(path) as handle:
            data = json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"DAO: cannot read report {path}: {e}")
        raise PersistenceError(f"cannot read report: {e}", path) from e
    try:
        return AggregateReport.from_dict(data)
    except TvboError as e:
        logger.error(f"DAO: report {path} fails its accounting check: {e}")
        raise PersistenceError(f"inconsistent report: {e}", path) from e
