"""
Error statistics over Monte Carlo samples: pathwise-uniform errors between
coupled trajectories, local-set filtering, slope fits and exceedance curves.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from ..fem.assembly import assemble_mass
from ..fem.spaces import TaylorHoodSpace
from ..models.pydanticmodels import SampleFailure
from ..stochastic.scheme import Trajectory
from ..util import error

logger = logging.getLogger(__name__)

MIN_FIT_LEVELS = 3
CONFIDENCE = 0.95


# === Pathwise-uniform errors ===


@dataclass(eq=False)
class ErrorTransfer:
    """
    Squared L2 distance between a field on `coarse` and one on `fine`.

    When both spaces share a mesh this is a mass-matrix quadratic form.
    Otherwise the coarse field is point-evaluated at the fine quadrature
    points (the meshes are nested, so the integrand is polynomial per fine
    element and the rule integrates it exactly).
    """

    coarse: TaylorHoodSpace
    fine: TaylorHoodSpace

    @property
    def same_mesh(self) -> bool:
        return self.coarse.mesh is self.fine.mesh or self.coarse.mesh.hash() == self.fine.mesh.hash()

    @cached_property
    def _mass(self):
        return assemble_mass(self.coarse).matrix

    @cached_property
    def _evaluation(self):
        points = self.fine.quad_points.reshape(-1, 2)
        return self.coarse.evaluation_matrix(points)

    def squared_errors(self, a: NDArray[np.float64], b: NDArray[np.float64]) -> NDArray[np.float64]:
        """Row-wise ||a_i - b_i||^2 for stacked coefficient vectors a (coarse) and b (fine)."""
        a = np.atleast_2d(a)
        b = np.atleast_2d(b)
        if self.same_mesh:
            diff = a - b
            return np.einsum("si,si->s", diff, (self._mass @ diff.T).T)
        n_points = self.fine.quad_points.shape[0] * self.fine.quad_points.shape[1]
        weights = self.fine.quad_weights.ravel()
        out = np.empty(a.shape[0])
        for i in range(a.shape[0]):
            coarse_vals = (self._evaluation @ a[i]).reshape(2, n_points).T
            fine_vals = self.fine.values_at_quadrature(b[i]).reshape(-1, 2)
            diff = fine_vals - coarse_vals
            out[i] = np.einsum("p,pc,pc->", weights, diff, diff)
        return out


def aligned_steps(a: Trajectory, b: Trajectory, stride: int | None = None) -> tuple[NDArray, NDArray]:
    """
    Step indices of a and b sitting on the same times, j = 1..J_a (every
    stride-th step of a when stride is given).

    Raises:
        PreconditionViolation: if the time grids cannot be aligned
    """
    if not math.isclose(a.config.T, b.config.T, rel_tol=1e-14):
        raise error.PreconditionViolation("pathwise_uniform_error", f"final times {a.config.T} != {b.config.T}")
    if b.J % a.J:
        raise error.PreconditionViolation(
            "pathwise_uniform_error", f"J={b.J} is not a multiple of J={a.J}"
        )
    ratio = b.J // a.J
    stride = stride or a.snapshot_stride
    if stride % a.snapshot_stride or (stride * ratio) % b.snapshot_stride or a.J % stride:
        raise error.PreconditionViolation(
            "pathwise_uniform_error",
            f"stride {stride} misses stored snapshots (strides {a.snapshot_stride}, {b.snapshot_stride})",
        )
    steps_a = np.arange(stride, a.J + 1, stride)
    return steps_a, steps_a * ratio


def pathwise_uniform_error(
    a: Trajectory, b: Trajectory, stride: int | None = None, transfer: ErrorTransfer | None = None
) -> float:
    """max_j ||Y^a_j - Y^b_j||_{L2} over the shared time points j >= 1."""
    steps_a, steps_b = aligned_steps(a, b, stride)
    transfer = transfer or ErrorTransfer(a.space, b.space)
    A = np.stack([a.snapshot(j) for j in steps_a])
    B = np.stack([b.snapshot(j) for j in steps_b])
    squared = np.maximum(transfer.squared_errors(A, B), 0.0)
    return float(np.sqrt(squared.max(initial=0.0)))


# === Local-set filter ===


@dataclass(frozen=True)
class LocalSetFilter:
    R_h: float
    R_h_tau: float
    passes: NDArray[np.bool_]

    @property
    def n_pass(self) -> int:
        return int(self.passes.sum())


def local_set_filter(
    reference_norms: NDArray[np.float64],
    run_max_norms: NDArray[np.float64],
    R_h: float = math.inf,
    R_h_tau: float = math.inf,
) -> LocalSetFilter:
    """
    Keep samples whose reference run stays in the R_h ball (surrogate norm
    sup_j ||grad y_h(t_j)||) and whose max_j ||Y_j||_{L2} is at most R_h_tau.
    """
    reference_norms = np.asarray(reference_norms, dtype=np.float64)
    run_max_norms = np.asarray(run_max_norms, dtype=np.float64)
    if reference_norms.shape != run_max_norms.shape:
        raise error.PreconditionViolation("local_set_filter", "norm arrays differ in length")
    passes = (reference_norms <= R_h) & (run_max_norms <= R_h_tau)
    return LocalSetFilter(R_h, R_h_tau, passes)


def filter_trajectories(
    references: Sequence[Trajectory], runs: Sequence[Trajectory], R_h: float, R_h_tau: float
) -> LocalSetFilter:
    return local_set_filter(
        np.array([r.max_h1_seminorm for r in references]),
        np.array([r.max_l2_norm for r in runs]),
        R_h,
        R_h_tau,
    )


# === Per-level statistics and fits ===


@dataclass(frozen=True)
class SlopeFit:
    """Least squares of log2(error) against log2(1/step size); order is minus the slope."""

    order: float
    intercept: float
    residual: float
    n_levels: int

    @property
    def ok(self) -> bool:
        return math.isfinite(self.order)


def fit_order(step_sizes: Sequence[float], errors: Sequence[float]) -> SlopeFit:
    step_sizes = np.asarray(step_sizes, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if step_sizes.size < MIN_FIT_LEVELS:
        raise error.PreconditionViolation("fit_order", f"need {MIN_FIT_LEVELS} levels, got {step_sizes.size}")
    if np.any(~np.isfinite(errors)) or np.any(errors <= 0.0):
        return SlopeFit(math.nan, math.nan, math.nan, int(errors.size))
    x = -np.log2(step_sizes)
    y = np.log2(errors)
    coeffs, residuals, *_ = np.polyfit(x, y, 1, full=True)
    residual = float(np.sqrt(residuals[0])) if residuals.size else 0.0
    return SlopeFit(-float(coeffs[0]), float(coeffs[1]), residual, int(x.size))


@dataclass(eq=False)
class LevelErrors:
    """Samples of max_j ||difference||_{L2} for one refinement level."""

    level: int
    h: float
    tau: float
    seeds: NDArray[np.int64]
    errors: NDArray[np.float64]
    run_max_norms: NDArray[np.float64]
    reference_norms: NDArray[np.float64]
    stop_indices: NDArray[np.int64] = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        if np.any(self.errors < 0):
            raise error.PreconditionViolation("LevelErrors", "negative error sample")

    @property
    def n_samples(self) -> int:
        return int(self.errors.size)

    @property
    def mean_square(self) -> float:
        return float(np.mean(self.errors**2)) if self.n_samples else math.nan

    @property
    def rms(self) -> float:
        return math.sqrt(self.mean_square)

    def filtered_rms(self, mask: NDArray[np.bool_]) -> float:
        if not mask.any():
            return math.nan
        return float(np.sqrt(np.mean(self.errors[mask] ** 2)))

    def quantiles(self, qs: Sequence[float] = (0.5, 0.9)) -> dict[float, float]:
        if not self.n_samples:
            return {q: math.nan for q in qs}
        return {q: float(np.quantile(self.errors, q)) for q in qs}

    def local_filter(self, R_h: float, R_h_tau: float) -> LocalSetFilter:
        return local_set_filter(self.reference_norms, self.run_max_norms, R_h, R_h_tau)


@dataclass(eq=False)
class ErrorStats:
    study: str
    levels: list[LevelErrors]
    step_kind: str  # "tau" or "h"
    R_h: float = math.inf
    R_h_tau: float = math.inf
    failures: list[SampleFailure] = field(default_factory=list)

    def step_sizes(self) -> list[float]:
        return [lv.tau if self.step_kind == "tau" else lv.h for lv in self.levels]

    def filters(self) -> list[LocalSetFilter]:
        return [lv.local_filter(self.R_h, self.R_h_tau) for lv in self.levels]

    @cached_property
    def fit(self) -> SlopeFit:
        return fit_order(self.step_sizes(), [lv.rms for lv in self.levels])

    @cached_property
    def filtered_fit(self) -> SlopeFit:
        rms = [lv.filtered_rms(f.passes) for lv, f in zip(self.levels, self.filters())]
        return fit_order(self.step_sizes(), rms)

    @property
    def n_failures(self) -> int:
        return len(self.failures)


# === Exceedance curves ===


def clopper_pearson(k: NDArray[np.int64], n: int, confidence: float = CONFIDENCE) -> tuple[NDArray, NDArray]:
    """Exact binomial confidence interval for k successes out of n."""
    k = np.asarray(k)
    a = 0.5 * (1.0 - confidence)
    with np.errstate(invalid="ignore"):
        low = np.where(k > 0, stats.beta.ppf(a, k, n - k + 1), 0.0)
        high = np.where(k < n, stats.beta.ppf(1.0 - a, k + 1, n - k), 1.0)
    return low, high


@dataclass(frozen=True, eq=False)
class ExceedanceCurve:
    eps: NDArray[np.float64]
    probabilities: NDArray[np.float64]
    counts: NDArray[np.int64]
    ci_low: NDArray[np.float64]
    ci_high: NDArray[np.float64]
    alpha: float
    beta: float
    h: float
    tau: float
    n_samples: int


def exceedance_curve(
    errors: Sequence[float],
    h: float,
    tau: float,
    alpha: float,
    beta: float,
    eps: Sequence[float],
) -> ExceedanceCurve:
    """Empirical P[ error^2 / (h^alpha + tau^beta) >= eps ] for each eps."""
    errors = np.asarray(errors, dtype=np.float64)
    eps = np.sort(np.asarray(eps, dtype=np.float64))
    if not 2.0 < alpha < 3.0 or not 0.0 < beta < 1.0:
        raise error.PreconditionViolation("exceedance_curve", f"alpha={alpha}, beta={beta} out of range")
    normalized = errors**2 / (h**alpha + tau**beta)
    counts = (normalized[None, :] >= eps[:, None]).sum(axis=1)
    n = errors.size
    probabilities = counts / n if n else np.full(eps.size, math.nan)
    low, high = clopper_pearson(counts, n)
    return ExceedanceCurve(eps, probabilities, counts, low, high, alpha, beta, h, tau, n)


def curves_consistent_with_decay(curves: Sequence[ExceedanceCurve]) -> bool:
    """
    Curves ordered from coarse to fine. True unless some finer curve is
    significantly above its coarser neighbour, i.e. its lower confidence
    bound exceeds the coarser upper bound at some eps.
    """
    for coarse, fine in zip(curves, curves[1:]):
        if not np.array_equal(coarse.eps, fine.eps):
            raise error.PreconditionViolation("curves_consistent_with_decay", "eps grids differ")
        if np.any(fine.ci_low > coarse.ci_high):
            return False
    return True
