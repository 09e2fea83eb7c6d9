"""
Semi-implicit Euler-Maruyama stepping for the Taylor-Hood system:

    <Y_{j+1} - Y_j, v> + tau <grad Y_{j+1}, grad v> + tau <G(Y_{j+1}), v>
        = <sum_n dbeta_n^j f_n(., Y_j), v>      for all v with B v = 0,
    B Y_{j+1} = 0.

Drift is implicit and solved by damped Newton on the constrained block system,
noise is explicit in Y_j.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from numpy.typing import NDArray

from ..fem import assembly
from ..fem.spaces import DualVector, PressureVector, TaylorHoodSpace, VectorField, VelocityVector
from ..fem.stokes_ops import StokesOperators, project_initial
from ..models.pydanticmodels import Domain, InitialData, SchemeConfig, StepReport
from ..util import error
from .noise import BrownianPath, NoiseModel, noise_load, sample_path

logger = logging.getLogger(__name__)

PICARD_ITERATION_FACTOR = 4
# inradius of the coarsest admissible polygon disk (8 segments)
DISK_VORTEX_RADIUS = math.cos(math.pi / 8)


@dataclass(eq=False)
class Trajectory:
    """
    Coefficient vectors Y_j of one noise realization.

    snapshots keeps every `snapshot_stride`-th step; the norm histories cover
    every step so path functionals (maxima, stopping indices) are exact.
    """

    config: SchemeConfig
    space: TaylorHoodSpace
    seed: int
    snapshots: NDArray[np.float64]  # (J // stride + 1, n_vel_free)
    l2_norms: NDArray[np.float64]  # (J + 1,)
    h1_seminorms: NDArray[np.float64]  # (J + 1,)
    reports: list[StepReport] = field(default_factory=list)
    path: Optional[BrownianPath] = field(default=None, repr=False)
    pressures: Optional[NDArray[np.float64]] = field(default=None, repr=False)
    snapshot_stride: int = 1

    def __str__(self):
        return f"trajectory seed={self.seed} J={self.config.J} on {self.space.mesh}"

    @property
    def J(self) -> int:
        return self.config.J

    @property
    def mesh_hash(self) -> str:
        return self.space.mesh.hash()

    @property
    def stored_steps(self) -> NDArray[np.int64]:
        return np.arange(0, self.J + 1, self.snapshot_stride)

    def snapshot(self, j: int) -> VelocityVector:
        if j % self.snapshot_stride or not 0 <= j <= self.J:
            raise error.PreconditionViolation(
                "snapshot", f"step {j} not stored (stride {self.snapshot_stride}, J={self.J})"
            )
        return VelocityVector(self.snapshots[j // self.snapshot_stride])

    @property
    def final(self) -> VelocityVector:
        return VelocityVector(self.snapshots[-1])

    @property
    def max_l2_norm(self) -> float:
        return float(self.l2_norms.max())

    @property
    def max_h1_seminorm(self) -> float:
        return float(self.h1_seminorms.max())

    def stopping_index(self, radius: float, norm: str = "l2") -> int | None:
        """First step whose norm reaches radius, or None if the path stays below it."""
        history = self.l2_norms if norm == "l2" else self.h1_seminorms
        hits = np.flatnonzero(history >= radius)
        return int(hits[0]) if hits.size else None

    @cached_property
    def newton_iterations(self) -> NDArray[np.int64]:
        return np.array([r.iterations for r in self.reports], dtype=np.int64)


# === One step ===


def _momentum_defect(
    ops: StokesOperators,
    base,
    rhs: NDArray[np.float64],
    Y: NDArray[np.float64],
    tau: float,
    include_convection: bool,
) -> NDArray[np.float64]:
    """F(Y) = (M + tau K) Y + tau N(Y) - rhs, without the pressure term."""
    defect = base @ Y - rhs
    if include_convection:
        defect += tau * assembly.convection_residual(ops.space, Y)
    return defect


def step(
    ops: StokesOperators,
    cfg: SchemeConfig,
    Y_j: VelocityVector,
    load_j: DualVector,
    solver: str | None = None,
    max_iters: int | None = None,
) -> tuple[VelocityVector, PressureVector, StepReport]:
    """
    Advance one step. The returned pressure is the mean-zero multiplier scaled
    to the units of the momentum equation; it also absorbs the gradient part
    of the noise load.

    Raises:
        NewtonDivergence: residual above tolerance after the iteration budget
        SolverFailure: singular linearized saddle system
    """
    solver = solver or cfg.nonlinear_solver
    max_iters = max_iters or cfg.newton_max_iters
    tau = cfg.tau
    M, K, Bt = ops.M.matrix, ops.K.matrix, ops.B.T

    Y_j = np.asarray(Y_j, dtype=np.float64)
    rhs = M @ Y_j + load_j
    tol = cfg.newton_tol * (1.0 + np.linalg.norm(rhs))
    base = (M + tau * K).tocsr()

    Y = Y_j.copy()
    p = np.zeros(ops.space.n_pressure)
    defect = _momentum_defect(ops, base, rhs, Y, tau, cfg.include_convection)
    residuals = [float(np.linalg.norm(defect + Bt @ p))]
    halvings = 0
    iterations = 0

    while residuals[-1] > tol:
        if iterations >= max_iters:
            raise error.NewtonDivergence(residuals[-1], iterations, solver=solver)
        iterations += 1

        if cfg.include_convection:
            part = "full" if solver == "newton" else "oseen"
            jac = (base + tau * assembly.convection_jacobian(ops.space, Y, part=part).matrix).tocsr()
        else:
            jac = base
        linear = ops.saddle(jac, name=f"{solver}_step")
        delta, p_new = linear.solve(-defect, -(ops.B @ Y))

        if solver == "picard" or not cfg.include_convection:
            Y, p = Y + delta, p_new
            defect = _momentum_defect(ops, base, rhs, Y, tau, cfg.include_convection)
            residuals.append(float(np.linalg.norm(defect + Bt @ p)))
            continue

        # damped update on the merit ||F(Y + a d) + B^T (p + a (p_new - p))||
        alpha = 1.0
        for attempt in range(cfg.max_halvings + 1):
            Y_try = Y + alpha * delta
            p_try = p + alpha * (p_new - p)
            defect_try = _momentum_defect(ops, base, rhs, Y_try, tau, True)
            r_try = float(np.linalg.norm(defect_try + Bt @ p_try))
            if r_try < residuals[-1] or r_try <= tol or attempt == cfg.max_halvings:
                break
            alpha *= 0.5
            halvings += 1
        Y, p, defect = Y_try, p_try, defect_try
        residuals.append(r_try)
        logger.debug("%s iteration %d: residual %.3e (alpha %.3g)", solver, iterations, r_try, alpha)

    report = StepReport(
        iterations=iterations,
        residuals=residuals,
        converged=True,
        divergence_norm=ops.divergence_norm(Y),
        halvings=halvings,
        solver=solver,
    )
    # <Bt p, v> = -tau <pi, div v>
    pressure = -p / tau
    return VelocityVector(Y), PressureVector(pressure), report


def _step_with_fallback(ops, cfg, Y, load):
    try:
        return step(ops, cfg, Y, load)
    except error.NewtonDivergence as exc:
        if cfg.nonlinear_solver != "newton" or not cfg.include_convection:
            raise
        logger.warning(
            "Newton stalled at residual %.3e, retrying with Picard iteration",
            exc.last_residual,
        )
        return step(
            ops, cfg, Y, load, solver="picard", max_iters=PICARD_ITERATION_FACTOR * cfg.newton_max_iters
        )


# === Trajectories ===


def run_trajectory(
    ops: StokesOperators,
    cfg: SchemeConfig,
    model: NoiseModel,
    seed: int,
    y0: VectorField | VelocityVector,
    path: BrownianPath | None = None,
    snapshot_stride: int = 1,
) -> Trajectory:
    """
    Run J steps from Y_0 = P_h y0 driven by path (sampled from seed when omitted).

    Raises:
        NumericalError: from any step, with the failing step index in metadata
    """
    s = ops.space
    if path is None:
        path = sample_path(seed, cfg.J, model.N, cfg.tau)
    if path.J != cfg.J or path.N != model.N:
        raise error.PreconditionViolation(
            "run_trajectory", f"path has J={path.J}, N={path.N}; expected J={cfg.J}, N={model.N}"
        )
    if snapshot_stride < 1 or cfg.J % snapshot_stride:
        raise error.PreconditionViolation("run_trajectory", f"stride {snapshot_stride} does not divide J={cfg.J}")

    Y = np.asarray(y0, dtype=np.float64) if isinstance(y0, np.ndarray) else project_initial(ops, y0)
    snapshots = np.empty((cfg.J // snapshot_stride + 1, s.n_vel_free))
    l2 = np.empty(cfg.J + 1)
    h1 = np.empty(cfg.J + 1)
    pressures = np.empty((cfg.J, s.n_pressure)) if cfg.store_pressure else None
    reports: list[StepReport] = []

    snapshots[0] = Y
    l2[0], h1[0] = _norms(ops, Y)
    for j in range(cfg.J):
        try:
            load = noise_load(s, model, Y, path.increments[j])
            Y, p, report = _step_with_fallback(ops, cfg, Y, load)
        except error.NumericalError as exc:
            exc.metadata["seed"] = seed
            raise error.with_step(exc, j)
        reports.append(report)
        l2[j + 1], h1[j + 1] = _norms(ops, Y)
        if (j + 1) % snapshot_stride == 0:
            snapshots[(j + 1) // snapshot_stride] = Y
        if pressures is not None:
            pressures[j] = p

    logger.debug(
        "seed %d: %d steps, max L2 norm %.6g, %d Newton iterations",
        seed,
        cfg.J,
        l2.max(),
        sum(r.iterations for r in reports),
    )
    return Trajectory(
        config=cfg,
        space=s,
        seed=seed,
        snapshots=snapshots,
        l2_norms=l2,
        h1_seminorms=h1,
        reports=reports,
        path=path,
        pressures=pressures,
        snapshot_stride=snapshot_stride,
    )


def _norms(ops: StokesOperators, Y: NDArray[np.float64]) -> tuple[float, float]:
    return math.sqrt(max(ops.l2_squared(Y), 0.0)), math.sqrt(max(ops.h1_squared(Y), 0.0))


def reference_path(cfg: SchemeConfig, model: NoiseModel, seed: int, k: int) -> BrownianPath:
    fine = cfg.refined(k)
    return sample_path(seed, fine.J, model.N, fine.tau)


def run_reference_temporal(
    ops: StokesOperators,
    cfg: SchemeConfig,
    model: NoiseModel,
    seed: int,
    y0: VectorField | VelocityVector,
    k: int,
    path: BrownianPath | None = None,
) -> Trajectory:
    """
    Run J*k steps on the same mesh. Only snapshots at multiples of k are kept,
    they sit on the coarse grid times.
    """
    if k < 2:
        raise error.PreconditionViolation("run_reference_temporal", f"refinement factor {k} < 2")
    path = path or reference_path(cfg, model, seed, k)
    return run_trajectory(ops, cfg.refined(k), model, seed, y0, path=path, snapshot_stride=k)


# === Initial data ===


def _vortex_square(x: NDArray[np.float64]) -> NDArray[np.float64]:
    x1, x2 = x[:, 0], x[:, 1]
    w = x1 * (1 - x1) * x2 * (1 - x2)
    w1 = (1 - 2 * x1) * x2 * (1 - x2)
    w2 = x1 * (1 - x1) * (1 - 2 * x2)
    # curl of 16 w^2
    return 32.0 * w[:, None] * np.column_stack((w2, -w1))


def _vortex_disk(x: NDArray[np.float64]) -> NDArray[np.float64]:
    # supported inside every inscribed polygon, so no-slip holds on the mesh boundary
    w = np.maximum(DISK_VORTEX_RADIUS**2 - np.sum(x**2, axis=1), 0.0)
    # curl of w^3 / 3 with grad w = -2x
    return -2.0 * (w**2)[:, None] * np.column_stack((x[:, 1], -x[:, 0]))


def initial_field(kind: InitialData, domain: Domain, amplitude: float = 1.0) -> VectorField:
    """Smooth divergence-free fields vanishing on the boundary."""
    if kind == InitialData.ZERO:
        return lambda x: np.zeros((np.atleast_2d(x).shape[0], 2))
    vortex: Callable = _vortex_square if domain == Domain.SQUARE else _vortex_disk
    return lambda x: amplitude * vortex(np.atleast_2d(x))
