"""
Experiment output: flat CSV tables plus one Markdown report.

    <dir>/results.csv       one row per (seed, cell), scalar scores
    <dir>/ate_samples.csv   cell,seed,scope,ate; scope is "all" or robot_<i>
    <dir>/loop_errors.csv   per accepted loop error, per (seed, cell)
    <dir>/report.md         loop-closure, stage-count and ATE tables
"""

import csv
from collections import defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from burrow.evaluation.experiment import CellReport
from burrow.monitoring.loggers import get_logger

log = get_logger(__name__)

RESULT_COLUMNS = (
    "cell",
    "preset",
    "seed",
    "initializer",
    "outlier_mode",
    "loop_closure",
    "ate",
    "recall",
    "false_positive_rate",
    "mean_translation_error",
    "mean_rotation_error",
    "generated",
    "verified",
    "inliers",
    "injected_outliers",
    "rejected_outliers",
    "true_loops_verified",
    "true_loops_kept",
    "map_error_mean",
)
STAGE_CELLS = ("legacy", "current")
LOOP_TABLE_HEADER = (
    "cell",
    "recall %",
    "F/P %",
    "mean err m",
    "mean err deg",
    "outliers rejected",
)


def _mean(values: Iterable[float | None]) -> float | None:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


def _cell(value: float | None, digits: int = 2) -> str:
    return "n/a" if value is None else f"{value:.{digits}f}"


@dataclass(frozen=True)
class CellSummary:
    """Means over seeds of one configuration cell."""

    cell: str
    seeds: int
    ate: float
    ate_std: float
    ate_per_robot: dict[int, float]
    recall: float | None
    false_positive_rate: float | None
    mean_translation_error: float | None
    mean_rotation_error: float | None
    generated: float
    verified: float
    inliers: float
    rejected_outliers: float
    injected_outliers: float
    map_error_mean: float | None


def summarize(reports: Sequence[CellReport]) -> list[CellSummary]:
    """One summary per cell, in first-seen order."""
    by_cell: dict[str, list[CellReport]] = defaultdict(list)
    for report in reports:
        by_cell[report.cell].append(report)
    out: list[CellSummary] = []
    for cell, rows in by_cell.items():
        ates = np.array([r.ate for r in rows])
        samples: dict[int, list[float]] = defaultdict(list)
        for r in rows:
            for robot, value in r.ate_per_robot.items():
                samples[robot].append(value)
        per_robot = {robot: float(np.mean(v)) for robot, v in sorted(samples.items())}
        out.append(
            CellSummary(
                cell=cell,
                seeds=len(rows),
                ate=float(ates.mean()),
                ate_std=float(ates.std()),
                ate_per_robot=per_robot,
                recall=_mean(r.recall for r in rows),
                false_positive_rate=_mean(r.false_positive_rate for r in rows),
                mean_translation_error=_mean(r.mean_translation_error for r in rows),
                mean_rotation_error=_mean(r.mean_rotation_error for r in rows),
                generated=float(np.mean([r.generated for r in rows])),
                verified=float(np.mean([r.verified for r in rows])),
                inliers=float(np.mean([r.inliers for r in rows])),
                rejected_outliers=float(np.mean([r.rejected_outliers for r in rows])),
                injected_outliers=float(np.mean([r.injected_outliers for r in rows])),
                map_error_mean=_mean(r.map_error_mean for r in rows),
            )
        )
    return out


def _table(header: Sequence[str], rows: Iterable[Sequence[str]]) -> list[str]:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines.extend("| " + " | ".join(row) + " |" for row in rows)
    return lines


def markdown_report(reports: Sequence[CellReport], title: str = "Experiment") -> str:
    summaries = summarize(reports)
    seeds = sorted({r.seed for r in reports})
    lines = [f"# {title}", "", f"Seeds: {', '.join(map(str, seeds))}", ""]

    lines += ["## Loop closure", ""]
    lines += _table(
        LOOP_TABLE_HEADER,
        (
            [
                s.cell,
                _cell(s.recall, 1),
                _cell(s.false_positive_rate, 1),
                _cell(s.mean_translation_error, 3),
                _cell(s.mean_rotation_error, 2),
                f"{s.rejected_outliers:.1f} / {s.injected_outliers:.1f}",
            ]
            for s in summaries
            if s.generated or s.injected_outliers
        ),
    )

    staged = [s for s in summaries if s.cell in STAGE_CELLS]
    if staged:
        lines += ["", "## Loop closures per stage", ""]
        lines += _table(
            ["cell", "generated", "verified", "inliers"],
            (
                [s.cell, f"{s.generated:.1f}", f"{s.verified:.1f}", f"{s.inliers:.1f}"]
                for s in staged
            ),
        )

    robots = sorted({robot for s in summaries for robot in s.ate_per_robot})
    lines += ["", "## ATE [m]", ""]
    lines += _table(
        ["cell", "all", "std", *(f"robot {r}" for r in robots), "map err m"],
        (
            [
                s.cell,
                f"{s.ate:.3f}",
                f"{s.ate_std:.3f}",
                *(_cell(s.ate_per_robot.get(r), 3) for r in robots),
                _cell(s.map_error_mean, 3),
            ]
            for s in summaries
        ),
    )
    return "\n".join(lines) + "\n"


def write_results(path: Path, reports: Sequence[CellReport]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=RESULT_COLUMNS)
        writer.writeheader()
        for report in reports:
            writer.writerow(report.model_dump(include=set(RESULT_COLUMNS)))


def write_ate_samples(path: Path, reports: Sequence[CellReport]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["cell", "seed", "scope", "ate"])
        for r in reports:
            writer.writerow([r.cell, r.seed, "all", f"{r.ate:.6g}"])
            for robot, value in sorted(r.ate_per_robot.items()):
                writer.writerow([r.cell, r.seed, f"robot_{robot}", f"{value:.6g}"])


def write_loop_errors_table(path: Path, reports: Sequence[CellReport]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["cell", "seed", "translation_error", "rotation_error_deg", "true_loop"]
        )
        for r in reports:
            for translation, rotation, true_loop in r.loop_errors:
                writer.writerow(
                    [
                        r.cell,
                        r.seed,
                        f"{translation:.6g}",
                        f"{rotation:.6g}",
                        int(true_loop),
                    ]
                )


def write_report(
    out_dir: Path, reports: Sequence[CellReport], title: str = "Experiment"
) -> Path:
    """Write every table; returns the Markdown report path."""
    out_dir.mkdir(parents=True, exist_ok=True)
    write_results(out_dir / "results.csv", reports)
    write_ate_samples(out_dir / "ate_samples.csv", reports)
    write_loop_errors_table(out_dir / "loop_errors.csv", reports)
    path = out_dir / "report.md"
    path.write_text(markdown_report(reports, title))
    log.info("report for %d cell runs written to %s", len(reports), out_dir)
    return path
