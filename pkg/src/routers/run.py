import logging
from pathlib import Path

import click

from ..dependencies.database.config import open_store
from ..dependencies.database.crud import save_trajectory
from ..dependencies.run_config import run_options, with_config
from ..experiments.results import tsv_row, write_lines, fmt
from ..fem.mesh import build_mesh
from ..fem.spaces import build_space
from ..fem.stokes_ops import StokesOperators
from ..models.pydanticmodels import RunConfig, StudyType
from ..stochastic.noise import model_from_config
from ..stochastic.scheme import Trajectory, initial_field, run_trajectory
from ..util import error

logger = logging.getLogger(__name__)

STORE_NAME = "trajectory.sqlite"
STEPS_HEADER = ("step", "t", "l2_norm", "h1_seminorm", "iterations", "residual", "divergence_norm", "solver")


def write_step_table(traj: Trajectory, path: Path) -> Path:
    def lines():
        yield "\t".join(STEPS_HEADER)
        yield tsv_row((0, 0.0, float(traj.l2_norms[0]), float(traj.h1_seminorms[0]), 0, 0.0, 0.0, "-"))
        for j, report in enumerate(traj.reports, start=1):
            yield tsv_row(
                (
                    j,
                    traj.config.time(j),
                    float(traj.l2_norms[j]),
                    float(traj.h1_seminorms[j]),
                    report.iterations,
                    report.final_residual,
                    report.divergence_norm,
                    report.solver,
                )
            )

    return write_lines(path, lines())


def simulate(cfg: RunConfig) -> tuple[Trajectory, int]:
    """Run the single trajectory of cfg and store it; returns it with its store id."""
    mesh = build_mesh(cfg.mesh.domain, cfg.mesh.n, cfg.mesh.level)
    ops = StokesOperators(build_space(mesh))
    model = model_from_config(cfg.noise, cfg.mesh.domain)
    seed = cfg.seeds.start
    y0 = initial_field(cfg.study.initial_data, cfg.mesh.domain, cfg.study.initial_amplitude)
    logger.info(f"Running seed {seed} on {mesh} with {model}, J={cfg.scheme.J}")

    traj = run_trajectory(ops, cfg.scheme, model, seed, y0)

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open_store(out / STORE_NAME) as db:
        record = save_trajectory(db, traj, model)
    return traj, record.id


@click.command("run")
@run_options
@error.error_boundary
@with_config(StudyType.RUN)
def command(cfg: RunConfig):
    """Run one trajectory, store its snapshots and write per-step diagnostics."""
    traj, record_id = simulate(cfg)
    out = Path(cfg.output_dir)
    write_step_table(traj, out / "run_steps.tsv")
    write_lines(
        out / "run_summary.txt",
        [
            f"seed: {traj.seed}",
            f"mesh_hash: {traj.mesh_hash}",
            f"J: {traj.J}",
            f"tau: {fmt(traj.config.tau)}",
            f"max_l2_norm: {fmt(traj.max_l2_norm)}",
            f"final_l2_norm: {fmt(float(traj.l2_norms[-1]))}",
            f"newton_iterations: {int(traj.newton_iterations.sum())}",
        ],
    )
    click.echo(f"trajectory {record_id}: max L2 norm {fmt(traj.max_l2_norm)}")
