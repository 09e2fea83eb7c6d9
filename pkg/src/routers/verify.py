"""`verify`: exact identities, dense oracles and the manufactured Stokes order."""

import logging
from pathlib import Path
from typing import Callable

import click
import numpy as np

from ..dependencies.run_config import run_options, with_config
from ..experiments.results import fmt
from ..experiments.statistics import fit_order
from ..fem import assembly
from ..fem.mesh import build_mesh, build_unit_square_mesh
from ..fem.spaces import build_space, l2_error
from ..fem.stokes_ops import (
    StokesOperators,
    dense_projection_oracle,
    helmholtz_project,
    manufactured_force,
    manufactured_velocity,
    solve_steady_stokes,
    stokes_apply,
    stokes_eigenpairs,
)
from ..models.pydanticmodels import CheckReport, CheckResult, Domain, NoiseFamily, RunConfig, StudyType
from ..stochastic.noise import NoiseModel, check_hypothesis, coarsen_path, sample_path
from ..util import error

logger = logging.getLogger(__name__)

REPORT_NAME = "verify_report.json"
N_RANDOM_FIELDS = 20
MANUFACTURED_LEVELS = (2, 4, 8)


def _random_free(ops: StokesOperators, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal(ops.space.n_vel_free)


def check_skew_symmetry(rng: np.random.Generator) -> CheckResult:
    worst = 0.0
    for level in (0, 1):
        ops = StokesOperators(build_space(build_mesh(Domain.SQUARE, 2, level)))
        for _ in range(N_RANDOM_FIELDS):
            u = _random_free(ops, rng)
            N = assembly.convection_residual(ops.space, u)
            worst = max(worst, abs(u @ N) / (np.linalg.norm(u) * np.linalg.norm(N)))
    return CheckResult(name="skew_symmetry", passed=worst <= 1e-11, measured=worst, threshold=1e-11)


def check_projection(rng: np.random.Generator) -> CheckResult:
    ops = StokesOperators(build_space(build_unit_square_mesh(4)))
    worst = 0.0
    for _ in range(5):
        Pf = helmholtz_project(ops, _random_free(ops, rng))
        PPf = helmholtz_project(ops, Pf)
        scale = np.linalg.norm(Pf)
        worst = max(worst, np.linalg.norm(PPf - Pf) / scale, ops.divergence_norm(Pf) / scale)
    return CheckResult(name="projection_idempotence", passed=worst <= 1e-10, measured=worst, threshold=1e-10)


def check_dense_oracle(rng: np.random.Generator) -> CheckResult:
    ops = StokesOperators(build_space(build_unit_square_mesh(2)))
    f = _random_free(ops, rng)
    oracle = dense_projection_oracle(ops, f)
    measured = float(np.linalg.norm(helmholtz_project(ops, f) - oracle) / np.linalg.norm(oracle))
    return CheckResult(name="dense_projection_oracle", passed=measured <= 1e-8, measured=measured, threshold=1e-8)


def check_stokes_operator(rng: np.random.Generator) -> CheckResult:
    ops = StokesOperators(build_space(build_unit_square_mesh(2)))
    u = helmholtz_project(ops, _random_free(ops, rng))
    w = helmholtz_project(ops, _random_free(ops, rng))
    Au, Aw = stokes_apply(ops, u), stokes_apply(ops, w)
    asym = abs(w @ (ops.M @ Au) - u @ (ops.M @ Aw)) / (ops.K.quadratic_form(u) + ops.K.quadratic_form(w))
    eigvals, _ = stokes_eigenpairs(ops)
    passed = asym <= 1e-11 and eigvals[0] > 0
    return CheckResult(
        name="stokes_symmetry",
        passed=bool(passed),
        measured=float(asym),
        threshold=1e-11,
        detail=f"smallest eigenvalue {fmt(float(eigvals[0]))}",
    )


def check_manufactured_order() -> CheckResult:
    errors, hs = [], []
    for n in MANUFACTURED_LEVELS:
        ops = StokesOperators(build_space(build_unit_square_mesh(n)))
        u, _ = solve_steady_stokes(ops, manufactured_force)
        errors.append(l2_error(ops.space, u, manufactured_velocity))
        hs.append(ops.space.mesh.h)
    fit = fit_order(hs, errors)
    return CheckResult(
        name="manufactured_stokes_order",
        passed=bool(fit.ok and fit.order >= 3.5),
        measured=fit.order,
        threshold=3.5,
        detail="errors " + " ".join(fmt(e) for e in errors),
    )


def check_noise_hypothesis(cfg: RunConfig) -> CheckResult:
    worst = 0.0
    for family in NoiseFamily:
        model = NoiseModel(family, cfg.noise.N, cfg.noise.c_scale, cfg.noise.s, cfg.mesh.domain)
        check = check_hypothesis(model)
        worst = max(worst, check.value_ratio, check.jacobian_ratio)
    return CheckResult(name="hypothesis_sampler", passed=worst <= 1.0 + 1e-12, measured=worst, threshold=1.0)


def check_path_coupling(seed: int) -> CheckResult:
    path = sample_path(seed, 64, 4, 1.0 / 64)
    twice = coarsen_path(coarsen_path(path, 2), 4)
    once = coarsen_path(path, 8)
    exact = bool(np.array_equal(twice.W, once.W))
    return CheckResult(name="path_coupling", passed=exact, measured=0.0 if exact else 1.0, threshold=0.0)


def run_checks(cfg: RunConfig) -> CheckReport:
    rng = np.random.default_rng(cfg.seeds.start)
    checks: list[Callable[[], CheckResult]] = [
        lambda: check_skew_symmetry(rng),
        lambda: check_projection(rng),
        lambda: check_dense_oracle(rng),
        lambda: check_stokes_operator(rng),
        check_manufactured_order,
        lambda: check_noise_hypothesis(cfg),
        lambda: check_path_coupling(cfg.seeds.start),
    ]
    results = []
    for check in checks:
        result = check()
        log = logger.info if result.passed else logger.error
        log(f"check {result.name}: measured {result.measured:.3e} (threshold {result.threshold:.3e})")
        results.append(result)
    return CheckReport(checks=results)


@click.command("verify")
@run_options
@error.error_boundary
@with_config(StudyType.VERIFY)
def command(cfg: RunConfig):
    """Run the invariant suite and write a machine-readable check report."""
    report = run_checks(cfg)
    out = Path(cfg.output_dir)
    path = out / REPORT_NAME
    try:
        out.mkdir(parents=True, exist_ok=True)
        path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise error.ResultWriteError(str(path), str(exc))

    for result in report.checks:
        status = "PASS" if result.passed else "FAIL"
        click.echo(f"{status}\t{result.name}\t{fmt(result.measured)}\t{fmt(result.threshold)}")

    if not report.passed:
        failing = report.failing()
        raise error.CheckFailed(failing[0], [c.measured for c in report.checks if c.name == failing[0]][0])
