from typing import Any

from celery.app.task import Task

from burrow.evaluation.experiment import CellSpec, ExperimentConfig, run_cell_group
from burrow.monitoring.decorators import monitor
from burrow.tasks.queue import burrow_task


@burrow_task(name="burrow.run_cell")
@monitor(metric_name="task_run_cell")
def run_cell_task(
    self: Task, config: dict[str, Any], seed: int, cells: list[dict[str, Any]]
) -> list[dict[str, Any]]:
    """
    Run one group of experiment cells sharing a front-end on one seed.
    Arguments and result are JSON dumps of the pydantic models.
    """
    cfg = ExperimentConfig.model_validate(config)
    specs = [CellSpec.model_validate(cell) for cell in cells]
    reports = run_cell_group(cfg, seed, specs)
    return [report.model_dump(mode="json") for report in reports]
