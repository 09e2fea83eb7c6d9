import logging
from pathlib import Path

import click

from ..dependencies.run_config import run_options, with_config
from ..experiments.plots import plot_convergence
from ..experiments.results import fmt, write_error_table, write_failures, write_summary
from ..experiments.statistics import ErrorStats
from ..experiments.studies import spatial_study, temporal_study
from ..models.pydanticmodels import RunConfig, StudyType
from ..util import error

logger = logging.getLogger(__name__)


def write_study_outputs(stats: ErrorStats, out: Path) -> dict[str, Path]:
    stem = stats.study.replace("-", "_")
    paths = {
        "errors": write_error_table(stats, out / f"{stem}_errors.tsv"),
        "summary": write_summary(stats, out / f"{stem}_summary.txt"),
    }
    if stats.failures:
        paths["failures"] = write_failures(stats.failures, out / f"{stem}_failures.tsv")
    if stats.levels and stats.levels[0].n_samples:
        paths["plot"] = plot_convergence(stats, out / f"{stem}_convergence.svg")
    return paths


def report(stats: ErrorStats, out: Path) -> None:
    write_study_outputs(stats, out)
    if len(stats.levels) >= 3 and stats.levels[0].n_samples:
        click.echo(
            f"{stats.study}: order {fmt(stats.fit.order)} "
            f"(filtered {fmt(stats.filtered_fit.order)}) over {stats.levels[0].n_samples} samples"
        )
    else:
        click.echo(f"{stats.study}: too few levels or samples for a fitted order")
    if stats.failures:
        raise error.SampleFailures(stats.study, stats.n_failures, stats.n_failures + stats.levels[0].n_samples)


@click.command("converge-time")
@run_options
@error.error_boundary
@with_config(StudyType.CONVERGE_TIME)
def converge_time(cfg: RunConfig):
    """Temporal convergence study on a fixed mesh with coupled Brownian paths."""
    report(temporal_study(cfg), Path(cfg.output_dir))


@click.command("converge-space")
@run_options
@error.error_boundary
@with_config(StudyType.CONVERGE_SPACE)
def converge_space(cfg: RunConfig):
    """Spatial convergence study at fixed tau against a finer reference mesh."""
    report(spatial_study(cfg), Path(cfg.output_dir))
