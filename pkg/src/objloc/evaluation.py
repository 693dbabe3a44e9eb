"""Relative robot-to-object error metrics, parameter sweeps and result export."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from objloc.geometry import Pose2, angle_diff, between
from objloc.pipeline import ApproachSpec, PipelineParams, PipelineResult, get_approach, run_pipeline
from objloc.sim import ConfigurationError, SensorLog

CSV_COLUMNS = ("tick", "trans_error_m", "rot_error_rad")
SWEEP_PARAMETERS = ("vartheta", "omega")


@dataclass
class ErrorReport:
    """Per-tick relative translational/rotational errors and their summary.

    ``std`` is the population standard deviation of the per-tick series.
    """

    ticks: np.ndarray
    trans: np.ndarray
    rot: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.ticks = np.asarray(self.ticks, dtype=int)
        self.trans = np.asarray(self.trans, dtype=float)
        self.rot = np.asarray(self.rot, dtype=float)
        if not (len(self.ticks) == len(self.trans) == len(self.rot)):
            raise ValueError("series lengths differ")

    def __len__(self) -> int:
        return len(self.ticks)

    @staticmethod
    def _stats(v: np.ndarray) -> tuple[float, float, float]:
        if len(v) == 0:
            return (math.nan, math.nan, math.nan)
        return float(np.mean(v)), float(np.std(v)), float(np.max(v))

    @property
    def trans_mean(self) -> float:
        return self._stats(self.trans)[0]

    @property
    def trans_std(self) -> float:
        return self._stats(self.trans)[1]

    @property
    def trans_max(self) -> float:
        return self._stats(self.trans)[2]

    @property
    def rot_mean(self) -> float:
        return self._stats(self.rot)[0]

    @property
    def rot_std(self) -> float:
        return self._stats(self.rot)[1]

    @property
    def rot_max(self) -> float:
        return self._stats(self.rot)[2]

    def summary(self) -> dict[str, float]:
        return {
            "trans_mean_m": self.trans_mean,
            "trans_std_m": self.trans_std,
            "trans_max_m": self.trans_max,
            "rot_mean_rad": self.rot_mean,
            "rot_std_rad": self.rot_std,
            "rot_max_rad": self.rot_max,
        }

    def __str__(self) -> str:
        return (
            f"{self.label or 'report'}: trans {self.trans_mean:.4f} +/- {self.trans_std:.4f} m "
            f"(max {self.trans_max:.4f}), rot {self.rot_mean:.4f} +/- {self.rot_std:.4f} rad "
            f"(max {self.rot_max:.4f}) [+/- is std]"
        )


def relative_errors(
    robot_est: Sequence[Pose2],
    object_est: Sequence[Pose2],
    robot_true: Sequence[Pose2],
    object_true: Sequence[Pose2],
    label: str = "",
) -> ErrorReport:
    """Compare the estimated robot->object relative pose against ground truth, tick by tick."""
    n = len(robot_true)
    if not (len(robot_est) == len(object_est) == len(object_true) == n):
        raise ValueError("trajectory lengths differ")
    trans = np.empty(n)
    rot = np.empty(n)
    for t in range(n):
        est = between(robot_est[t], object_est[t])
        ref = between(robot_true[t], object_true[t])
        trans[t] = math.hypot(est.x - ref.x, est.y - ref.y)
        rot[t] = abs(angle_diff(est.theta, ref.theta))
    return ErrorReport(np.arange(n), trans, rot, label)


def evaluate(
    log: SensorLog,
    approach: str | ApproachSpec = "full",
    params: PipelineParams = PipelineParams(),
    result: PipelineResult | None = None,
) -> ErrorReport:
    """Run the pipeline for ``approach`` and score it against the log's ground truth."""
    if not log.has_ground_truth:
        raise ConfigurationError("the sensor log carries no ground truth")
    approach = get_approach(approach)
    if result is None:
        result = run_pipeline(log, approach, params)
    return relative_errors(result.robot, result.object, log.robot_truth, log.object_truth, approach.name)


@dataclass
class SweepTable:
    parameter: str
    approach: str
    rows: list[tuple[float, ErrorReport]] = field(default_factory=list)

    def values(self) -> list[float]:
        return [v for v, _ in self.rows]

    def trans_means(self) -> list[float]:
        return [r.trans_mean for _, r in self.rows]

    def rot_means(self) -> list[float]:
        return [r.rot_mean for _, r in self.rows]


def _sweep_one(args):
    log, approach, params, value = args
    return value, evaluate(log, approach, params)


def sweep(
    log: SensorLog,
    parameter: str,
    values: Iterable[float],
    approach: str | ApproachSpec = "full",
    params: PipelineParams = PipelineParams(),
    workers: int = 1,
) -> SweepTable:
    """One :func:`evaluate` per value of ``parameter`` (``vartheta`` or ``omega``)."""
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigurationError(f"cannot sweep {parameter!r}; choose from {SWEEP_PARAMETERS}")
    values = [float(v) for v in values]
    if not values:
        raise ConfigurationError("sweep needs at least one value")
    approach = get_approach(approach)
    try:
        jobs = [(log, approach, params.replace(**{parameter: v}), v) for v in values]
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            out = list(pool.map(_sweep_one, jobs))
    else:
        out = [_sweep_one(j) for j in jobs]
    table = SweepTable(parameter, approach.name)
    for value, report in out:
        report.label = f"{approach.name} {parameter}={value!r}"
        table.rows.append((value, report))
    return table


# export ---------------------------------------------------------------------

SUMMARY_KEYS = ("mean", "std", "max")


def _f(v) -> str:
    return repr(float(v))


def report_to_csv(report: ErrorReport) -> str:
    """Per-tick rows, then ``# mean|std|max,<trans>,<rot>`` footer lines."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for t, a, b in zip(report.ticks, report.trans, report.rot):
        w.writerow([int(t), _f(a), _f(b)])
    for key in SUMMARY_KEYS:
        w.writerow([f"# {key}", _f(getattr(report, f"trans_{key}")), _f(getattr(report, f"rot_{key}"))])
    return buf.getvalue()


def table_to_csv(table: SweepTable | None) -> str:
    """Long format: one row per (value, tick); summaries as ``#`` footer lines."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("value",) + CSV_COLUMNS)
    rows = table.rows if table is not None else []
    for value, rep in rows:
        for t, a, b in zip(rep.ticks, rep.trans, rep.rot):
            w.writerow([_f(value), int(t), _f(a), _f(b)])
    for value, rep in rows:
        for key in SUMMARY_KEYS:
            w.writerow(
                [f"# {key}", _f(value), _f(getattr(rep, f"trans_{key}")), _f(getattr(rep, f"rot_{key}"))]
            )
    return buf.getvalue()


def report_to_jsonl(report: ErrorReport) -> str:
    lines = [
        json.dumps({"tick": int(t), "trans_error_m": float(a), "rot_error_rad": float(b)})
        for t, a, b in zip(report.ticks, report.trans, report.rot)
    ]
    lines.append(json.dumps({"summary": report.label, **report.summary()}))
    return "".join(line + "\n" for line in lines)


def table_to_jsonl(table: SweepTable | None) -> str:
    lines = []
    for value, rep in table.rows if table is not None else []:
        rec = {"parameter": table.parameter, "approach": table.approach, "value": float(value)}
        rec.update(rep.summary())
        rec.update(
            {
                "tick": [int(t) for t in rep.ticks],
                "trans_error_m": [float(v) for v in rep.trans],
                "rot_error_rad": [float(v) for v in rep.rot],
            }
        )
        lines.append(json.dumps(rec))
    return "".join(line + "\n" for line in lines)


def export(obj: ErrorReport | SweepTable | None, path, fmt: str = "csv") -> Path:
    """Write a report or sweep table as ``csv`` or ``jsonl``; returns the path."""
    if fmt not in ("csv", "jsonl"):
        raise ConfigurationError(f"unknown export format {fmt!r}")
    if isinstance(obj, ErrorReport):
        text = report_to_csv(obj) if fmt == "csv" else report_to_jsonl(obj)
    else:
        text = table_to_csv(obj) if fmt == "csv" else table_to_jsonl(obj)
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    return path


def read_report_csv(path) -> ErrorReport:
    """Parse a file written by :func:`report_to_csv` (footer lines are skipped)."""
    ticks, trans, rot = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected header {header}")
        for row in reader:
            if row and row[0].startswith("#"):
                continue
            ticks.append(int(row[0]))
            trans.append(float(row[1]))
            rot.append(float(row[2]))
    return ErrorReport(np.array(ticks, dtype=int), np.array(trans), np.array(rot))


def read_report_jsonl(path) -> ErrorReport:
    ticks, trans, rot, label = [], [], [], ""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            if "summary" in rec:
                label = rec["summary"]
                continue
            ticks.append(rec["tick"])
            trans.append(rec["trans_error_m"])
            rot.append(rec["rot_error_rad"])
    return ErrorReport(np.array(ticks, dtype=int), np.array(trans), np.array(rot), label)
