"""
Sparse mass, stiffness and divergence operators, and the skew-symmetrized
convection term G(u) = (u.grad)u + 1/2 (div u) u with its Jacobian.

All operators act on free velocity dofs. Element integrals are evaluated on the
reference triangle with the space's quadrature rule (exact for the polynomial
integrands involved) and reduced in element order through COO -> CSR, which
makes the result independent of how element batches are produced.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import NDArray
from scipy import sparse as sp

from .spaces import DualVector, TaylorHoodSpace, VelocityVector

logger = logging.getLogger(__name__)

SKEW_WEIGHT = 0.5


@dataclass(frozen=True, eq=False)
class SparseOperator:
    matrix: sp.csr_matrix
    symmetric: bool = False

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def __matmul__(self, other):
        return self.matrix @ other

    @property
    def T(self) -> sp.csr_matrix:
        return self.matrix.T.tocsr()

    def asymmetry(self) -> float:
        """||A - A^T||_max / ||A||_max."""
        scale = abs(self.matrix).max()
        if scale == 0:
            return 0.0
        return float(abs(self.matrix - self.matrix.T).max() / scale)

    def quadratic_form(self, v: NDArray[np.float64], w: NDArray[np.float64] | None = None) -> float:
        w = v if w is None else w
        return float(w @ (self.matrix @ v))


def _finalize(rows, cols, vals, shape) -> sp.csr_matrix:
    matrix = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    matrix.sum_duplicates()
    matrix.sort_indices()
    return matrix


def _scatter_velocity(s: TaylorHoodSpace, local: NDArray[np.float64]) -> sp.csr_matrix:
    """(T, 2, 10, 2, 10) element blocks -> (n_free, n_free), Dirichlet rows/cols dropped."""
    dofs = s.local_free_dofs  # (T, 2, 10)
    rows = np.broadcast_to(dofs[:, :, :, None, None], local.shape)
    cols = np.broadcast_to(dofs[:, None, None, :, :], local.shape)
    keep = (rows >= 0) & (cols >= 0)
    return _finalize(rows[keep], cols[keep], local[keep], (s.n_vel_free, s.n_vel_free))


def _block_diagonal(scalar_local: NDArray[np.float64]) -> NDArray[np.float64]:
    n_tri, nb, _ = scalar_local.shape
    local = np.zeros((n_tri, 2, nb, 2, nb))
    local[:, 0, :, 0, :] = scalar_local
    local[:, 1, :, 1, :] = scalar_local
    return local


def assemble_mass(s: TaylorHoodSpace) -> SparseOperator:
    """Velocity mass matrix M, M[i, j] = <phi_j, phi_i>."""
    local = np.einsum("tq,qa,qb->tab", s.quad_weights, s.phi, s.phi, optimize=True)
    return SparseOperator(_scatter_velocity(s, _block_diagonal(local)), symmetric=True)


def assemble_stiffness(s: TaylorHoodSpace) -> SparseOperator:
    """Velocity stiffness matrix K, K[i, j] = <grad phi_j, grad phi_i>."""
    local = np.einsum("tq,tqad,tqbd->tab", s.quad_weights, s.grad_phi, s.grad_phi, optimize=True)
    return SparseOperator(_scatter_velocity(s, _block_diagonal(local)), symmetric=True)


def assemble_divergence(s: TaylorHoodSpace) -> SparseOperator:
    """B[q, v] = <div v, q>, shape (n_pressure, n_vel_free)."""
    local = np.einsum("tq,qk,tqad->tkda", s.quad_weights, s.psi, s.grad_phi, optimize=True)
    pdofs = s.pressure_dof_map  # (T, 6)
    vdofs = s.local_free_dofs  # (T, 2, 10)
    rows = np.broadcast_to(pdofs[:, :, None, None], local.shape)
    cols = np.broadcast_to(vdofs[:, None, :, :], local.shape)
    keep = cols >= 0
    matrix = _finalize(rows[keep], cols[keep], local[keep], (s.n_pressure, s.n_vel_free))
    return SparseOperator(matrix)


def pressure_mean_functional(s: TaylorHoodSpace) -> NDArray[np.float64]:
    """m[k] = integral of the k-th P2 basis function, so m @ p = integral of p."""
    local = np.einsum("tq,qk->tk", s.quad_weights, s.psi)
    return np.bincount(s.pressure_dof_map.ravel(), weights=local.ravel(), minlength=s.n_pressure)


def _convection_integrand(u_vals, u_grads, skew_weight: float):
    transport = np.einsum("tqd,tqcd->tqc", u_vals, u_grads)
    div = u_grads[:, :, 0, 0] + u_grads[:, :, 1, 1]
    return transport + skew_weight * div[:, :, None] * u_vals


def convection_residual(
    s: TaylorHoodSpace, u: VelocityVector, skew_weight: float | None = None
) -> DualVector:
    """N(u) with <N(u), v> = <(u.grad)u + 1/2 (div u) u, v> for every free v."""
    skew_weight = SKEW_WEIGHT if skew_weight is None else skew_weight
    u_vals = s.values_at_quadrature(u)
    u_grads = s.gradients_at_quadrature(u)
    return s.load_vector(_convection_integrand(u_vals, u_grads, skew_weight))


def convection_jacobian(
    s: TaylorHoodSpace,
    u: VelocityVector,
    part: Literal["full", "oseen"] = "full",
    skew_weight: float | None = None,
) -> SparseOperator:
    """
    Directional derivative J(u) of N at u, J(u)w = (w.grad)u + (u.grad)w
    + 1/2 (div w)u + 1/2 (div u)w.

    part="oseen" keeps only the terms linear in w with u frozen as the
    transporting field, C(u)w = (u.grad)w + 1/2 (div u)w, so that C(u)u = N(u).
    """
    skew_weight = SKEW_WEIGHT if skew_weight is None else skew_weight
    W = s.quad_weights
    u_vals = s.values_at_quadrature(u)
    u_grads = s.gradients_at_quadrature(u)
    div = u_grads[:, :, 0, 0] + u_grads[:, :, 1, 1]

    transport = np.einsum("tq,qa,tqd,tqbd->tab", W, s.phi, u_vals, s.grad_phi, optimize=True)
    stretch = np.einsum("tq,qa,tq,qb->tab", W, s.phi, div, s.phi, optimize=True)
    local = _block_diagonal(transport + skew_weight * stretch)

    if part == "full":
        local += np.einsum("tq,qa,qb,tqce->tcaeb", W, s.phi, s.phi, u_grads, optimize=True)
        local += skew_weight * np.einsum(
            "tq,qa,tqbe,tqc->tcaeb", W, s.phi, s.grad_phi, u_vals, optimize=True
        )
    return SparseOperator(_scatter_velocity(s, local))
