import logging
from pathlib import Path

import click

from ..dependencies.run_config import run_options, with_config
from ..experiments.plots import plot_exceedance
from ..experiments.results import write_exceedance_summary, write_exceedance_table, write_failures
from ..experiments.studies import exceedance_study
from ..models.pydanticmodels import RunConfig, StudyType
from ..util import error

logger = logging.getLogger(__name__)


@click.command("exceedance")
@run_options
@error.error_boundary
@with_config(StudyType.EXCEEDANCE)
def command(cfg: RunConfig):
    """Empirical probabilities that the scaled error exceeds each threshold, per (h, tau) pair."""
    result = exceedance_study(cfg)
    out = Path(cfg.output_dir)
    write_exceedance_table(result, out / "exceedance.tsv")
    write_exceedance_summary(result, out / "exceedance_summary.txt")
    if result.failures:
        write_failures(result.failures, out / "exceedance_failures.tsv")
    n_samples = result.curves[0].n_samples if result.curves else 0
    if n_samples:
        plot_exceedance(result, out / "exceedance.svg")

    verdict = "consistent" if result.consistent_with_decay else "NOT consistent"
    click.echo(f"exceedance: {len(result.curves)} pairs over {n_samples} samples, {verdict} with decay")
    if result.failures:
        raise error.SampleFailures("exceedance", len(result.failures), len(result.failures) + n_samples)
