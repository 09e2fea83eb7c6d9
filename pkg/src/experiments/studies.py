"""
Monte Carlo convergence studies.

Every sample (one seed) is an independent task: it builds or reuses the
per-process operators, samples the finest Brownian path it needs, runs the
reference and all coarse levels on coarsenings of that path, and returns
scalars only. Aggregation sorts by seed, so results do not depend on the
worker count.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache, reduce

import numpy as np

from ..dependencies.workers import map_samples
from ..fem.mesh import build_mesh
from ..fem.spaces import build_space
from ..fem.stokes_ops import StokesOperators
from ..models.pydanticmodels import Domain, MeshConfig, NoiseConfig, RunConfig, SampleFailure
from ..stochastic.noise import NoiseModel, coarsen_path, model_from_config, sample_path
from ..stochastic.scheme import Trajectory, initial_field, run_trajectory
from ..util import error
from .statistics import (
    ErrorStats,
    ErrorTransfer,
    ExceedanceCurve,
    LevelErrors,
    curves_consistent_with_decay,
    exceedance_curve,
    pathwise_uniform_error,
)

logger = logging.getLogger(__name__)


# === Per-process caches ===


@lru_cache(maxsize=16)
def operators_for(mesh_cfg: MeshConfig, level: int) -> StokesOperators:
    mesh = build_mesh(mesh_cfg.domain, mesh_cfg.n, level)
    return StokesOperators(build_space(mesh))


@lru_cache(maxsize=16)
def transfer_for(mesh_cfg: MeshConfig, coarse_level: int, fine_level: int) -> ErrorTransfer:
    return ErrorTransfer(operators_for(mesh_cfg, coarse_level).space, operators_for(mesh_cfg, fine_level).space)


@lru_cache(maxsize=4)
def _cached_model(noise_cfg: NoiseConfig, domain: Domain) -> NoiseModel:
    return model_from_config(noise_cfg, domain)


def _noise_model(cfg: RunConfig) -> NoiseModel:
    return _cached_model(cfg.noise, cfg.mesh.domain)


def _initial(cfg: RunConfig):
    return initial_field(cfg.study.initial_data, cfg.mesh.domain, cfg.study.initial_amplitude)


def _snapshot_stride(J_ref: int, levels: list[int]) -> int:
    return reduce(math.gcd, [J_ref // J for J in levels])


# === Sample results ===


@dataclass
class SampleResult:
    seed: int
    errors: list[float] = field(default_factory=list)
    run_max_norms: list[float] = field(default_factory=list)
    reference_norm: float = math.nan
    stop_index: int = -1
    failure: SampleFailure | None = None


def _failure(seed: int, level: int, exc: error.BaseSolverError) -> SampleResult:
    logger.warning(
        f"Sample seed={seed} level={level} failed: {exc.error_code} {exc.message}",
        extra={"error_id": exc.error_id, "metadata": exc.metadata},
    )
    return SampleResult(
        seed=seed,
        failure=SampleFailure(
            seed=seed,
            level=level,
            error_code=exc.error_code or type(exc).__name__,
            message=exc.message,
            metadata={k: v for k, v in exc.metadata.items() if isinstance(v, (int, float, str))},
        ),
    )


def _finish(result: SampleResult, reference: Trajectory, R_h: float) -> SampleResult:
    result.reference_norm = reference.max_h1_seminorm
    stop = reference.stopping_index(R_h, norm="h1") if math.isfinite(R_h) else None
    result.stop_index = -1 if stop is None else stop
    return result


def _temporal_sample(task: tuple[RunConfig, int]) -> SampleResult:
    cfg, seed = task
    study = cfg.study
    J_ref = study.time_levels[-1] * study.reference_factor
    ops = operators_for(cfg.mesh, cfg.mesh.level)
    model = _noise_model(cfg)
    y0 = _initial(cfg)
    ref_cfg = cfg.scheme.model_copy(update={"J": J_ref})

    try:
        path = sample_path(seed, J_ref, model.N, ref_cfg.tau)
        reference = run_trajectory(
            ops, ref_cfg, model, seed, y0, path=path, snapshot_stride=_snapshot_stride(J_ref, study.time_levels)
        )
    except error.BaseSolverError as exc:
        return _failure(seed, -1, exc)

    transfer = transfer_for(cfg.mesh, cfg.mesh.level, cfg.mesh.level)
    result = SampleResult(seed=seed)
    for level, J in enumerate(study.time_levels):
        try:
            run = run_trajectory(
                ops, cfg.scheme.model_copy(update={"J": J}), model, seed, y0, path=coarsen_path(path, J_ref // J)
            )
        except error.BaseSolverError as exc:
            return _failure(seed, level, exc)
        result.errors.append(pathwise_uniform_error(run, reference, transfer=transfer))
        result.run_max_norms.append(run.max_l2_norm)
    return _finish(result, reference, study.R_h)


def _spatial_sample(task: tuple[RunConfig, int]) -> SampleResult:
    cfg, seed = task
    study = cfg.study
    base = cfg.mesh.level
    levels = [base + k for k in range(study.space_levels)]
    ref_level = levels[-1] + study.reference_levels
    model = _noise_model(cfg)
    y0 = _initial(cfg)
    # one path for every mesh level
    path = sample_path(seed, cfg.scheme.J, model.N, cfg.scheme.tau)

    try:
        reference = run_trajectory(operators_for(cfg.mesh, ref_level), cfg.scheme, model, seed, y0, path=path)
    except error.BaseSolverError as exc:
        return _failure(seed, -1, exc)

    result = SampleResult(seed=seed)
    for k, level in enumerate(levels):
        try:
            run = run_trajectory(operators_for(cfg.mesh, level), cfg.scheme, model, seed, y0, path=path)
        except error.BaseSolverError as exc:
            return _failure(seed, k, exc)
        transfer = transfer_for(cfg.mesh, level, ref_level)
        result.errors.append(pathwise_uniform_error(run, reference, transfer=transfer))
        result.run_max_norms.append(run.max_l2_norm)
    return _finish(result, reference, study.R_h)


def _exceedance_sample(task: tuple[RunConfig, int]) -> SampleResult:
    cfg, seed = task
    exc_cfg = cfg.exceedance
    ref_level, J_ref = exc_cfg.reference
    model = _noise_model(cfg)
    y0 = _initial(cfg)
    ref_scheme = cfg.scheme.model_copy(update={"J": J_ref})
    path = sample_path(seed, J_ref, model.N, ref_scheme.tau)

    try:
        reference = run_trajectory(
            operators_for(cfg.mesh, ref_level),
            ref_scheme,
            model,
            seed,
            y0,
            path=path,
            snapshot_stride=_snapshot_stride(J_ref, [J for _, J in exc_cfg.pairs]),
        )
    except error.BaseSolverError as exc:
        return _failure(seed, -1, exc)

    result = SampleResult(seed=seed)
    for k, (level, J) in enumerate(exc_cfg.pairs):
        try:
            run = run_trajectory(
                operators_for(cfg.mesh, level),
                cfg.scheme.model_copy(update={"J": J}),
                model,
                seed,
                y0,
                path=coarsen_path(path, J_ref // J),
            )
        except error.BaseSolverError as exc:
            return _failure(seed, k, exc)
        transfer = transfer_for(cfg.mesh, level, ref_level)
        result.errors.append(pathwise_uniform_error(run, reference, transfer=transfer))
        result.run_max_norms.append(run.max_l2_norm)
    return _finish(result, reference, cfg.study.R_h)


# === Aggregation ===


def _collect(cfg: RunConfig, sample_fn, workers: int | None) -> tuple[list[SampleResult], list[SampleFailure]]:
    seeds = cfg.seeds.seeds()
    results = map_samples(sample_fn, [(cfg, seed) for seed in seeds], workers or cfg.workers)
    results.sort(key=lambda r: r.seed)
    failures = [r.failure for r in results if r.failure is not None]
    ok = [r for r in results if r.failure is None]
    if failures:
        logger.warning(f"{len(failures)} of {len(results)} samples failed")
    return ok, failures


def _level_errors(results: list[SampleResult], k: int, level: int, h: float, tau: float) -> LevelErrors:
    return LevelErrors(
        level=level,
        h=h,
        tau=tau,
        seeds=np.array([r.seed for r in results], dtype=np.int64),
        errors=np.array([r.errors[k] for r in results], dtype=np.float64),
        run_max_norms=np.array([r.run_max_norms[k] for r in results], dtype=np.float64),
        reference_norms=np.array([r.reference_norm for r in results], dtype=np.float64),
        stop_indices=np.array([r.stop_index for r in results], dtype=np.int64),
    )


def _check_divides(J_ref: int, levels: list[int]) -> None:
    bad = [J for J in levels if J_ref % J]
    if bad:
        raise error.ValidationError("time levels must divide the reference step count", {"J": bad, "J_ref": J_ref})


def temporal_study(cfg: RunConfig, workers: int | None = None) -> ErrorStats:
    """RMS pathwise-uniform error in tau against a finer-tau run on the same mesh and path."""
    study = cfg.study
    if study.reference_factor < 4:
        raise error.ValidationError(
            "temporal reference must be at least 4x finer than the finest level",
            {"reference_factor": study.reference_factor},
        )
    J_ref = study.time_levels[-1] * study.reference_factor
    _check_divides(J_ref, study.time_levels)
    h = operators_for(cfg.mesh, cfg.mesh.level).space.mesh.h

    logger.info(f"Temporal study: J in {study.time_levels}, reference J={J_ref}, {len(cfg.seeds.seeds())} samples")
    ok, failures = _collect(cfg, _temporal_sample, workers)
    levels = [
        _level_errors(ok, k, k, h, cfg.scheme.model_copy(update={"J": J}).tau)
        for k, J in enumerate(study.time_levels)
    ]
    return ErrorStats("converge-time", levels, "tau", study.R_h, study.R_h_tau, failures)


def spatial_study(cfg: RunConfig, workers: int | None = None) -> ErrorStats:
    """RMS pathwise-uniform error in h against a finer mesh at fixed tau and path."""
    study = cfg.study
    base = cfg.mesh.level
    levels = [base + k for k in range(study.space_levels)]
    ref_level = levels[-1] + study.reference_levels
    # build meshes up front so mesh errors surface before any sample runs
    hs = [operators_for(cfg.mesh, level).space.mesh.h for level in levels]
    operators_for(cfg.mesh, ref_level)

    logger.info(f"Spatial study: levels {levels}, reference level {ref_level}, {len(cfg.seeds.seeds())} samples")
    ok, failures = _collect(cfg, _spatial_sample, workers)
    level_errors = [_level_errors(ok, k, level, hs[k], cfg.scheme.tau) for k, level in enumerate(levels)]
    return ErrorStats("converge-space", level_errors, "h", study.R_h, study.R_h_tau, failures)


@dataclass(eq=False)
class ExceedanceResult:
    levels: list[LevelErrors]
    curves: list[ExceedanceCurve]
    failures: list[SampleFailure]

    @property
    def consistent_with_decay(self) -> bool:
        return curves_consistent_with_decay(self.curves)


def exceedance_study(cfg: RunConfig, workers: int | None = None) -> ExceedanceResult:
    """Empirical in-probability exceedance curves for nested (h, tau) pairs against a common reference."""
    exc_cfg = cfg.exceedance
    ref_level, J_ref = exc_cfg.reference
    _check_divides(J_ref, [J for _, J in exc_cfg.pairs])
    pairs = []
    for level, J in exc_cfg.pairs:
        if level >= ref_level:
            raise error.ValidationError("pairs must be coarser than the reference", {"level": level})
        h = operators_for(cfg.mesh, level).space.mesh.h
        tau = cfg.scheme.model_copy(update={"J": J}).tau
        if tau > h:
            raise error.ValidationError("pairs need tau <= h", {"level": level, "J": J, "tau": tau, "h": h})
        pairs.append((level, h, tau))

    logger.info(f"Exceedance study: pairs {exc_cfg.pairs}, reference {exc_cfg.reference}")
    ok, failures = _collect(cfg, _exceedance_sample, workers)
    levels = [_level_errors(ok, k, level, h, tau) for k, (level, h, tau) in enumerate(pairs)]
    curves = [
        exceedance_curve(lv.errors, lv.h, lv.tau, exc_cfg.alpha, exc_cfg.beta, exc_cfg.eps) for lv in levels
    ]
    return ExceedanceResult(levels, curves, failures)
