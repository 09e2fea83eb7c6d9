"""
Discrete Helmholtz projection, discrete Stokes operator and steady Stokes solves.

Every constrained solve goes through a SaddleSolver over the block system

    [ A   B^T  0 ] [u]   [f]
    [ B   0    m ] [p] = [g]
    [ 0   m^T  0 ] [l]   [0]

where m integrates pressure basis functions, so the returned pressure has mean
zero and the constant pressure mode is removed exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as la
from numpy.typing import NDArray
from scipy import sparse as sp
from scipy.sparse.linalg import splu

from ..util import error
from .assembly import (
    SparseOperator,
    assemble_divergence,
    assemble_mass,
    assemble_stiffness,
    pressure_mean_functional,
)
from .spaces import PressureVector, TaylorHoodSpace, VectorField, VelocityVector

logger = logging.getLogger(__name__)

SOLVE_RTOL = 1e-10
DIVERGENCE_TOL = 1e-8
DENSE_ORACLE_MAX_DOFS = 400


@dataclass(eq=False)
class SaddleSolver:
    """Sparse LU factorization of a bordered saddle-point matrix (immutable once built)."""

    A: sp.spmatrix
    B: sp.spmatrix
    mean: NDArray[np.float64]
    name: str = "saddle"
    bordering: str = field(default="mean-zero pressure multiplier", init=False)

    def __post_init__(self):
        n_vel, n_p = self.A.shape[0], self.B.shape[0]
        self.n_vel, self.n_p = n_vel, n_p
        m = sp.csr_matrix(self.mean.reshape(-1, 1))
        self.matrix = sp.bmat(
            [[self.A, self.B.T, None], [self.B, None, m], [None, m.T, None]],
            format="csc",
        )
        try:
            self._lu = splu(self.matrix)
        except RuntimeError as exc:
            # SuperLU reports exact singularity this way; on admissible meshes it
            # means the inf-sup condition is violated
            raise error.SolverFailure(self.name, str(exc), n_vel=n_vel, n_pressure=n_p)

    def solve(
        self, f: NDArray[np.float64], g: NDArray[np.float64] | None = None
    ) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        rhs = np.zeros(self.matrix.shape[0])
        rhs[: self.n_vel] = f
        if g is not None:
            rhs[self.n_vel : self.n_vel + self.n_p] = g

        scale = np.linalg.norm(rhs)
        if scale == 0.0:
            return np.zeros(self.n_vel), np.zeros(self.n_p)

        x = self._lu.solve(rhs)
        residual = np.linalg.norm(rhs - self.matrix @ x) / scale
        for _ in range(3):
            if residual <= SOLVE_RTOL:
                break
            x += self._lu.solve(rhs - self.matrix @ x)
            residual = np.linalg.norm(rhs - self.matrix @ x) / scale
        if not np.isfinite(residual) or residual > SOLVE_RTOL:
            raise error.SolverFailure(self.name, f"relative residual {residual:.3e}")
        return x[: self.n_vel], x[self.n_vel : self.n_vel + self.n_p]


class StokesOperators:
    """Assembled operators of one Taylor-Hood space, with lazily factorized solvers."""

    def __init__(self, space: TaylorHoodSpace):
        self.space = space

    @cached_property
    def M(self) -> SparseOperator:
        return assemble_mass(self.space)

    @cached_property
    def K(self) -> SparseOperator:
        return assemble_stiffness(self.space)

    @cached_property
    def B(self) -> SparseOperator:
        return assemble_divergence(self.space)

    @cached_property
    def pressure_mean(self) -> NDArray[np.float64]:
        return pressure_mean_functional(self.space)

    @cached_property
    def mass_solver(self) -> SaddleSolver:
        return self.saddle(self.M.matrix, name="helmholtz_project")

    @cached_property
    def stokes_solver(self) -> SaddleSolver:
        return self.saddle(self.K.matrix, name="solve_steady_stokes")

    def saddle(self, A: sp.spmatrix, name: str = "saddle") -> SaddleSolver:
        return SaddleSolver(A, self.B.matrix, self.pressure_mean, name=name)

    def divergence_norm(self, u: VelocityVector) -> float:
        return float(np.linalg.norm(self.B @ u))

    def l2_squared(self, u: VelocityVector) -> float:
        return self.M.quadratic_form(u)

    def h1_squared(self, u: VelocityVector) -> float:
        return self.K.quadratic_form(u)


def helmholtz_project(ops: StokesOperators, f: NDArray[np.float64], dual: bool = False) -> VelocityVector:
    """
    L2-orthogonal projection onto discretely divergence-free fields.

    f is a velocity coefficient vector, or with dual=True a load vector <f, v>.
    """
    load = np.asarray(f, dtype=np.float64) if dual else ops.M @ f
    u, _ = ops.mass_solver.solve(load)
    return VelocityVector(u)


def stokes_apply(ops: StokesOperators, u: VelocityVector, tol: float = DIVERGENCE_TOL) -> VelocityVector:
    """A_h u as an element of the divergence-free subspace: <A_h u, v> = <grad u, grad v>."""
    div = ops.divergence_norm(u)
    if div > tol * (1.0 + np.linalg.norm(u)):
        raise error.PreconditionViolation("stokes_apply", f"||B u|| = {div:.3e}")
    return helmholtz_project(ops, ops.K @ u, dual=True)


def solve_steady_stokes(
    ops: StokesOperators, body_force: VectorField
) -> tuple[VelocityVector, PressureVector]:
    """Solve -Laplace u + grad p = f, div u = 0, u = 0 on the boundary, mean(p) = 0."""
    load = ops.space.field_load(body_force)
    u, p = ops.stokes_solver.solve(load)
    # the saddle block carries +B^T p while the weak form has -<p, div v>
    return VelocityVector(u), PressureVector(-p)


def project_initial(ops: StokesOperators, y0: VectorField) -> VelocityVector:
    """Y_0 = P_h y0 from the load <y0, v>."""
    return helmholtz_project(ops, ops.space.field_load(y0), dual=True)


# === Dense oracles (small meshes only) ===


def _require_small(ops: StokesOperators, what: str) -> None:
    if ops.space.n_vel_free > DENSE_ORACLE_MAX_DOFS:
        raise error.PreconditionViolation(
            what,
            f"dense oracle limited to {DENSE_ORACLE_MAX_DOFS} velocity dofs, got {ops.space.n_vel_free}",
        )


def null_space_basis(ops: StokesOperators) -> NDArray[np.float64]:
    """Orthonormal (Euclidean) basis of ker B, shape (n_vel_free, k)."""
    _require_small(ops, "null_space_basis")
    return la.null_space(ops.B.matrix.toarray())


def dense_projection_oracle(ops: StokesOperators, f: VelocityVector) -> VelocityVector:
    """argmin ||u - f||_M over u in ker B via the normal equations."""
    Z = null_space_basis(ops)
    M = ops.M.matrix.toarray()
    coords = la.solve(Z.T @ M @ Z, Z.T @ M @ f, assume_a="pos")
    return VelocityVector(Z @ coords)


def stokes_eigenpairs(ops: StokesOperators) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Eigenvalues (ascending) and M-orthonormal eigenvectors of A_h."""
    Z = null_space_basis(ops)
    M = ops.M.matrix.toarray()
    K = ops.K.matrix.toarray()
    eigvals, coords = la.eigh(Z.T @ K @ Z, Z.T @ M @ Z)
    return eigvals, Z @ coords


def fractional_norm(ops: StokesOperators, u: VelocityVector, rho: float) -> float:
    """||A_h^{rho/2} u||_{L2} for discretely divergence-free u, by dense eigenbasis."""
    eigvals, vectors = stokes_eigenpairs(ops)
    coeffs = vectors.T @ (ops.M @ u)
    return float(np.sqrt(np.sum(eigvals**rho * coeffs**2)))


# === Manufactured steady solution on the unit square ===


def _g(t):
    return t**2 - 2 * t**3 + t**4


def _dg(t):
    return 2 * t - 6 * t**2 + 4 * t**3


def _d2g(t):
    return 2 - 12 * t + 12 * t**2


def _d3g(t):
    return -12 + 24 * t


def manufactured_velocity(x: NDArray[np.float64]) -> NDArray[np.float64]:
    """u = curl(g(x) g(y)) with g(t) = t^2 (1-t)^2; vanishes with its gradient on the boundary."""
    x1, x2 = x[:, 0], x[:, 1]
    return np.column_stack((_g(x1) * _dg(x2), -_dg(x1) * _g(x2)))


def manufactured_pressure(x: NDArray[np.float64]) -> NDArray[np.float64]:
    return x[:, 0] ** 3 + x[:, 1] ** 3 - 0.5


def manufactured_force(x: NDArray[np.float64]) -> NDArray[np.float64]:
    """f = -Laplace u + grad p for the pair above."""
    x1, x2 = x[:, 0], x[:, 1]
    lap1 = _d2g(x1) * _dg(x2) + _g(x1) * _d3g(x2)
    lap2 = -(_d3g(x1) * _g(x2) + _dg(x1) * _d2g(x2))
    return np.column_stack((-lap1 + 3 * x1**2, -lap2 + 3 * x2**2))
