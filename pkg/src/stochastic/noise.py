"""
Truncated multiplicative noise: diffusion families f_n(x, y), coupled Brownian
paths and the stochastic load sum_n dbeta_n <f_n(., u(.)), v>.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.typing import NDArray

from ..fem.spaces import DualVector, TaylorHoodSpace, VelocityVector
from ..models.pydanticmodels import Domain, NoiseConfig, NoiseFamily
from ..util import error

logger = logging.getLogger(__name__)

# max |curl(w^2 sin(x1 + x2 + n))| over the domain is below these constants
_SQUARE_STREAM_BOUND = 9.0 * math.sqrt(2.0) / 256.0
_DISK_STREAM_BOUND = 5.0 * math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class NoiseModel:
    family: NoiseFamily
    N: int
    c_scale: float
    s: float = 1.0
    domain: Domain = Domain.SQUARE

    def __str__(self):
        return f"{self.family.value} noise (N={self.N}, c={self.c_scale:g}, s={self.s:g})"

    @property
    def divergence_free_modes(self) -> bool:
        return self.family == NoiseFamily.DIVERGENCE_FREE

    @cached_property
    def weights(self) -> NDArray[np.float64]:
        """c n^{-s} for n = 1..N."""
        return self.c_scale * np.arange(1, self.N + 1, dtype=np.float64) ** (-self.s)

    @cached_property
    def C_F(self) -> float:
        squares = float(np.sum(self.weights**2))
        if self.divergence_free_modes:
            return math.sqrt(squares)
        return math.sqrt(2.0 * squares)

    def to_config(self) -> NoiseConfig:
        return NoiseConfig(family=self.family, N=self.N, c_scale=self.c_scale, s=self.s)

    # === Mode evaluation ===

    def _phases(self) -> NDArray[np.float64]:
        return np.arange(1, self.N + 1, dtype=np.float64)[:, None]

    def _default_spatial(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """a_n(x), shape (N, P, 2), |a_n| <= 1."""
        n = self._phases()
        a1 = np.sin(np.pi * (x[:, 0] + x[:, 1])[None, :] + n)
        a2 = np.cos(np.pi * (x[:, 0] - x[:, 1])[None, :] + n)
        return np.stack((a1, a2), axis=-1) / math.sqrt(2.0)

    def _curl_modes(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """b_n = curl(w^2 sin(x1 + x2 + n)) with w vanishing on the boundary, |b_n| <= 1."""
        x1, x2 = x[:, 0], x[:, 1]
        if self.domain == Domain.SQUARE:
            w = x1 * (1 - x1) * x2 * (1 - x2)
            dw = np.stack(((1 - 2 * x1) * x2 * (1 - x2), x1 * (1 - x1) * (1 - 2 * x2)), axis=-1)
            bound = _SQUARE_STREAM_BOUND
        else:
            w = 1.0 - x1**2 - x2**2
            dw = -2.0 * x
            bound = _DISK_STREAM_BOUND
        n = self._phases()
        arg = (x1 + x2)[None, :] + n
        grad = 2.0 * (w[None, :] * np.sin(arg))[..., None] * dw[None] + (w**2 * np.cos(arg))[..., None]
        return np.stack((grad[..., 1], -grad[..., 0]), axis=-1) / bound

    def values(self, x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
        """f_n(x_p, y_p) for all modes, shape (N, P, 2)."""
        weights = self.weights[:, None, None]
        if self.divergence_free_modes:
            sigma = np.sqrt(1.0 + np.sum(y**2, axis=-1))
            return weights * sigma[None, :, None] * self._curl_modes(x)
        chi = np.sqrt(1.0 + y**2) - 1.0
        return weights * (self._default_spatial(x) + chi[None])

    def y_jacobian(self, x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
        """d f_n / d y at (x_p, y_p), shape (N, P, 2, 2), indexed [n, p, component, y-direction]."""
        weights = self.weights[:, None, None, None]
        if self.divergence_free_modes:
            sigma = np.sqrt(1.0 + np.sum(y**2, axis=-1))
            dsigma = y / sigma[:, None]
            return weights * np.einsum("npc,pd->npcd", self._curl_modes(x), dsigma)
        diag = y / np.sqrt(1.0 + y**2)
        jac = np.zeros((y.shape[0], 2, 2))
        jac[:, 0, 0] = diag[:, 0]
        jac[:, 1, 1] = diag[:, 1]
        return np.broadcast_to(weights * jac[None], (self.N, y.shape[0], 2, 2))


@dataclass(frozen=True)
class HypothesisCheck:
    """Largest sampled ratios; both at most 1 when the growth and Lipschitz bounds hold."""

    value_ratio: float
    jacobian_ratio: float
    n_samples: int

    @property
    def ok(self) -> bool:
        return self.value_ratio <= 1.0 + 1e-12 and self.jacobian_ratio <= 1.0 + 1e-12


def _domain_grid(domain: Domain, n_grid: int) -> NDArray[np.float64]:
    if domain == Domain.SQUARE:
        t = np.linspace(0.0, 1.0, n_grid)
        return np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1).reshape(-1, 2)
    t = np.linspace(-1.0, 1.0, n_grid)
    pts = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1).reshape(-1, 2)
    return pts[np.sum(pts**2, axis=1) <= 1.0]


def _y_grid(n_grid: int, radius: float) -> NDArray[np.float64]:
    radii = np.concatenate(([0.0], np.geomspace(1e-3, radius, n_grid - 1)))
    angles = np.linspace(0.0, 2.0 * np.pi, n_grid, endpoint=False)
    # pair radius k with angle k so every direction and magnitude is visited once
    return np.column_stack((radii * np.cos(angles), radii * np.sin(angles)))


def check_hypothesis(model: NoiseModel, n_grid: int = 50, y_radius: float = 1e3) -> HypothesisCheck:
    """
    Sample sum_n |f_n|^2 / (C_F^2 (1+|y|)^2) and sum_n |d_y f_n|^2 / C_F^2 over an
    n_grid x n_grid spatial lattice crossed with n_grid values of y.
    """
    if model.C_F == 0.0:
        return HypothesisCheck(0.0, 0.0, 0)
    xs = _domain_grid(model.domain, n_grid)
    ys = _y_grid(n_grid, y_radius)
    x = np.repeat(xs, ys.shape[0], axis=0)
    y = np.tile(ys, (xs.shape[0], 1))

    value_sq = np.sum(model.values(x, y) ** 2, axis=(0, 2))
    growth = (model.C_F * (1.0 + np.linalg.norm(y, axis=1))) ** 2
    jac_sq = np.sum(model.y_jacobian(x, y) ** 2, axis=(0, 2, 3))
    return HypothesisCheck(
        value_ratio=float(np.max(value_sq / growth)),
        jacobian_ratio=float(np.max(jac_sq) / model.C_F**2),
        n_samples=int(x.shape[0]),
    )


def default_model(
    N: int = 16,
    c_scale: float = 0.5,
    s: float = 1.0,
    family: NoiseFamily = NoiseFamily.DEFAULT,
    domain: Domain = Domain.SQUARE,
) -> NoiseModel:
    if N < 1:
        raise error.ValidationError("noise needs at least one mode", {"N": N})
    if s <= 0.5:
        raise error.ValidationError("mode decay s must exceed 1/2", {"s": s})
    model = NoiseModel(family, N, c_scale, s, domain)
    check = check_hypothesis(model)
    if not check.ok:
        raise error.ValidationError(
            "noise family violates the sampled growth bounds",
            {"value_ratio": check.value_ratio, "jacobian_ratio": check.jacobian_ratio},
        )
    logger.debug("built %s with C_F=%.6g", model, model.C_F)
    return model


def model_from_config(cfg: NoiseConfig, domain: Domain) -> NoiseModel:
    return default_model(N=cfg.N, c_scale=cfg.c_scale, s=cfg.s, family=cfg.family, domain=domain)


def lipschitz_ratio(s: TaylorHoodSpace, model: NoiseModel, u: VelocityVector, v: VelocityVector) -> float:
    """sum_n ||f_n(., u) - f_n(., v)||^2 / (C_F^2 ||u - v||^2), by quadrature."""
    x = s.quad_points.reshape(-1, 2)
    W = s.quad_weights.ravel()
    uq = s.values_at_quadrature(u).reshape(-1, 2)
    vq = s.values_at_quadrature(v).reshape(-1, 2)
    diff = model.values(x, uq) - model.values(x, vq)
    num = np.einsum("p,npc,npc->", W, diff, diff)
    den = model.C_F**2 * np.einsum("p,pc,pc->", W, uq - vq, uq - vq)
    if den == 0.0:
        return 0.0
    return float(num / den)


# === Brownian paths ===


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """
    Truncated cylindrical Wiener process on a uniform grid.

    W holds beta_n(j tau) for j = 0..J; increments are differences of W, so a
    coarsened path is a subsample of the same W.
    """

    seed: int
    J: int
    N: int
    tau: float
    W: NDArray[np.float64] = field(repr=False)

    def __post_init__(self):
        if self.W.shape != (self.J + 1, self.N):
            raise error.PreconditionViolation(
                "BrownianPath", f"expected W of shape {(self.J + 1, self.N)}, got {self.W.shape}"
            )
        self.W.setflags(write=False)

    @cached_property
    def increments(self) -> NDArray[np.float64]:
        """(J, N) array of beta_n((j+1) tau) - beta_n(j tau)."""
        inc = np.diff(self.W, axis=0)
        inc.setflags(write=False)
        return inc


def _step_normals(seed: int, j: int, N: int) -> NDArray[np.float64]:
    # one Philox counter block per step: any subset of steps is reproducible on its own
    rng = np.random.Generator(np.random.Philox(key=seed, counter=[0, j, 0, 0]))
    return rng.standard_normal(N)


def sample_path(seed: int, J: int, N: int, tau: float) -> BrownianPath:
    if J < 1 or N < 1 or not tau > 0:
        raise error.PreconditionViolation("sample_path", f"need J, N >= 1 and tau > 0, got {J}, {N}, {tau}")
    scale = math.sqrt(tau)
    W = np.zeros((J + 1, N))
    for j in range(J):
        W[j + 1] = W[j] + scale * _step_normals(seed, j, N)
    return BrownianPath(seed, J, N, tau, W)


def coarsen_path(p: BrownianPath, k: int) -> BrownianPath:
    """Same W seen on a grid k times coarser."""
    if k < 1 or p.J % k:
        raise error.PreconditionViolation("coarsen_path", f"factor {k} does not divide J={p.J}")
    if k == 1:
        return p
    return BrownianPath(p.seed, p.J // k, p.N, p.tau * k, np.ascontiguousarray(p.W[::k]))


def noise_load(
    s: TaylorHoodSpace, model: NoiseModel, u: VelocityVector, increments_j: NDArray[np.float64]
) -> DualVector:
    """sum_n dbeta_n <f_n(., u(.)), v> as a free-dof load vector."""
    increments_j = np.asarray(increments_j, dtype=np.float64)
    if increments_j.shape != (model.N,):
        raise error.PreconditionViolation(
            "noise_load", f"expected {model.N} increments, got shape {increments_j.shape}"
        )
    if not np.any(increments_j) or model.c_scale == 0.0:
        return DualVector(np.zeros(s.n_vel_free))
    x = s.quad_points.reshape(-1, 2)
    uq = s.values_at_quadrature(u).reshape(-1, 2)
    field_values = np.einsum("n,npc->pc", increments_j, model.values(x, uq))
    return s.load_vector(field_values.reshape(s.quad_points.shape))


def mode_loads(s: TaylorHoodSpace, model: NoiseModel, u: VelocityVector) -> NDArray[np.float64]:
    """<f_n(., u(.)), v> for every mode, shape (N, n_vel_free)."""
    x = s.quad_points.reshape(-1, 2)
    uq = s.values_at_quadrature(u).reshape(-1, 2)
    modes = model.values(x, uq).reshape((model.N,) + s.quad_points.shape)
    return np.stack([s.load_vector(m) for m in modes])
