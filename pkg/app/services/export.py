"""CSV and JSON writers for trajectories and run summaries."""

import csv
import io
import json
import logging
from pathlib import Path
from typing import Any

from app.services.dynamics import Trajectory

logger = logging.getLogger("penaltynash.export")


def _fmt(value: float | None) -> str:
    return "" if value is None else format(value, ".17g")


def trajectory_rows(trajectory: Trajectory) -> list[list[str]]:
    n = trajectory.xs[0].size if trajectory.xs else 0
    rows = [["t", *[f"x_{i}" for i in range(1, n + 1)], "err", "violation"]]
    for t, x, err, violation in zip(
        trajectory.times, trajectory.xs, trajectory.errs, trajectory.violations, strict=True
    ):
        rows.append([_fmt(t), *[_fmt(float(v)) for v in x], _fmt(err), _fmt(violation)])
    return rows


def trajectory_csv(trajectory: Trajectory) -> str:
    buffer = io.StringIO()
    csv.writer(buffer, lineterminator="\n").writerows(trajectory_rows(trajectory))
    return buffer.getvalue()


def write_trajectory_csv(trajectory: Trajectory, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(trajectory_csv(trajectory), encoding="utf-8")
    logger.info("Wrote %d trajectory samples to %s", len(trajectory), path)
    return path


def write_json(document: dict[str, Any], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, indent=2, allow_nan=True) + "\n", encoding="utf-8")
    return path
