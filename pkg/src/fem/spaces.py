"""
P3 vector velocity / P2 scalar pressure Taylor-Hood spaces.

Velocity coefficient vectors live on the free (non-Dirichlet) scalar P3 dofs,
component blocked: [x-component over free dofs, y-component over free dofs].
Dirichlet dofs are eliminated and always read as zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, NewType

import numpy as np
from numpy.typing import NDArray
from scipy import sparse as sp

from ..util import error
from .mesh import LOCAL_EDGES, Mesh, validate
from .quadrature import DEFAULT_DEGREE, QuadratureRule, triangle_rule

logger = logging.getLogger(__name__)

VelocityVector = NewType("VelocityVector", np.ndarray)
PressureVector = NewType("PressureVector", np.ndarray)
DualVector = NewType("DualVector", np.ndarray)

VectorField = Callable[[NDArray[np.float64]], NDArray[np.float64]]


def _monomials(degree: int) -> list[tuple[int, int]]:
    return [(i, d - i) for d in range(degree + 1) for i in range(d, -1, -1)]


class LagrangeElement:
    """Lagrange basis on the reference triangle, built from the nodal Vandermonde matrix."""

    def __init__(self, degree: int, nodes: NDArray[np.float64]):
        self.degree = degree
        self.nodes = nodes  # barycentric, (nb, 3)
        self.exponents = np.array(_monomials(degree))
        vander = self._monomial_values(nodes[:, 1:])
        self.coefficients = np.linalg.solve(vander, np.eye(len(nodes)))

    @property
    def n_basis(self) -> int:
        return self.nodes.shape[0]

    def _monomial_values(self, pts: NDArray[np.float64]) -> NDArray[np.float64]:
        i, j = self.exponents[:, 0], self.exponents[:, 1]
        return pts[:, :1] ** i * pts[:, 1:] ** j

    def values(self, pts: NDArray[np.float64]) -> NDArray[np.float64]:
        """(q, nb) basis values at reference points (xi, eta)."""
        return self._monomial_values(pts) @ self.coefficients

    def gradients(self, pts: NDArray[np.float64]) -> NDArray[np.float64]:
        """(q, nb, 2) reference gradients."""
        i, j = self.exponents[:, 0], self.exponents[:, 1]
        x, y = pts[:, :1], pts[:, 1:]
        dx = np.where(i > 0, i * x ** np.maximum(i - 1, 0), 0.0) * y**j
        dy = np.where(j > 0, j * y ** np.maximum(j - 1, 0), 0.0) * x**i
        return np.stack((dx @ self.coefficients, dy @ self.coefficients), axis=-1)


def _p3_nodes() -> NDArray[np.float64]:
    nodes = list(np.eye(3))
    for a, b in LOCAL_EDGES:
        ea, eb = np.eye(3)[a], np.eye(3)[b]
        nodes.append((2 * ea + eb) / 3.0)
        nodes.append((ea + 2 * eb) / 3.0)
    nodes.append(np.full(3, 1.0 / 3.0))
    return np.array(nodes)


def _p2_nodes() -> NDArray[np.float64]:
    nodes = list(np.eye(3))
    for a, b in LOCAL_EDGES:
        nodes.append(0.5 * (np.eye(3)[a] + np.eye(3)[b]))
    return np.array(nodes)


P3 = LagrangeElement(3, _p3_nodes())
P2 = LagrangeElement(2, _p2_nodes())


@dataclass(frozen=True, eq=False)
class TaylorHoodSpace:
    mesh: Mesh
    quadrature_degree: int = DEFAULT_DEGREE

    def __str__(self):
        return (
            f"P3/P2 space on {self.mesh}: {self.n_vel_free} free velocity dofs, "
            f"{self.n_pressure} pressure dofs"
        )

    # === Degree-of-freedom maps ===

    @property
    def n_scalar(self) -> int:
        m = self.mesh
        return m.n_vertices + 2 * m.n_edges + m.n_triangles

    @property
    def n_vel_total(self) -> int:
        return 2 * self.n_scalar

    @property
    def n_pressure(self) -> int:
        return self.mesh.n_vertices + self.mesh.n_edges

    @cached_property
    def velocity_dof_map(self) -> NDArray[np.int64]:
        """(T, 10) global scalar P3 dofs: vertices, 2 per local edge, barycenter."""
        m = self.mesh
        t = m.triangles
        dofs = np.empty((m.n_triangles, 10), dtype=np.int64)
        dofs[:, :3] = t
        for k, (a, b) in enumerate(LOCAL_EDGES):
            base = m.n_vertices + 2 * m.triangle_edges[:, k]
            forward = t[:, a] < t[:, b]
            dofs[:, 3 + 2 * k] = np.where(forward, base, base + 1)
            dofs[:, 4 + 2 * k] = np.where(forward, base + 1, base)
        dofs[:, 9] = m.n_vertices + 2 * m.n_edges + np.arange(m.n_triangles)
        dofs.setflags(write=False)
        return dofs

    @cached_property
    def pressure_dof_map(self) -> NDArray[np.int64]:
        """(T, 6) global P2 dofs: vertices then edge midpoints."""
        m = self.mesh
        dofs = np.hstack((m.triangles, m.n_vertices + m.triangle_edges))
        dofs.setflags(write=False)
        return dofs

    @cached_property
    def scalar_nodes(self) -> NDArray[np.float64]:
        """(n_scalar, 2) nodal points of the scalar P3 dofs."""
        nodes = np.empty((self.n_scalar, 2))
        corners = self.mesh.vertices[self.mesh.triangles]  # (T, 3, 2)
        physical = np.einsum("nk,tkd->tnd", P3.nodes, corners)
        nodes[self.velocity_dof_map.ravel()] = physical.reshape(-1, 2)
        return nodes

    @cached_property
    def dirichlet_mask(self) -> NDArray[np.bool_]:
        """Scalar P3 dofs whose nodal point lies on the boundary."""
        m = self.mesh
        mask = np.zeros(self.n_scalar, dtype=bool)
        mask[: m.n_vertices] = m.boundary_vertex_mask
        edge_mask = np.repeat(m.boundary_edge_mask, 2)
        mask[m.n_vertices : m.n_vertices + 2 * m.n_edges] = edge_mask
        return mask

    @property
    def velocity_dirichlet_mask(self) -> NDArray[np.bool_]:
        return np.concatenate((self.dirichlet_mask, self.dirichlet_mask))

    @cached_property
    def free_scalar(self) -> NDArray[np.int64]:
        return np.flatnonzero(~self.dirichlet_mask)

    @cached_property
    def scalar_to_free(self) -> NDArray[np.int64]:
        index = np.full(self.n_scalar, -1, dtype=np.int64)
        index[self.free_scalar] = np.arange(self.free_scalar.size)
        return index

    @property
    def n_free_scalar(self) -> int:
        return int(self.free_scalar.size)

    @property
    def n_vel_free(self) -> int:
        return 2 * self.n_free_scalar

    @cached_property
    def local_free_dofs(self) -> NDArray[np.int64]:
        """(T, 2, 10) position in the free velocity vector, -1 for Dirichlet dofs."""
        local = self.scalar_to_free[self.velocity_dof_map]
        shifted = np.where(local >= 0, local + self.n_free_scalar, -1)
        return np.stack((local, shifted), axis=1)

    def expand(self, v: VelocityVector) -> NDArray[np.float64]:
        """(2, n_scalar) full nodal values with zeros on Dirichlet dofs."""
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.n_vel_free,):
            raise error.PreconditionViolation(
                "expand", f"expected {self.n_vel_free} coefficients, got {v.shape}"
            )
        full = np.zeros((2, self.n_scalar))
        full[:, self.free_scalar] = v.reshape(2, -1)
        return full

    def restrict(self, full: NDArray[np.float64]) -> NDArray[np.float64]:
        """Drop Dirichlet rows of a (2, n_scalar) array (dual or nodal)."""
        return np.ascontiguousarray(full[:, self.free_scalar]).ravel()

    def zeros(self) -> VelocityVector:
        return VelocityVector(np.zeros(self.n_vel_free))

    # === Geometry and quadrature caches ===

    @cached_property
    def rule(self) -> QuadratureRule:
        return triangle_rule(self.quadrature_degree)

    @cached_property
    def _affine(self) -> tuple[NDArray, NDArray, NDArray]:
        p = self.mesh.vertices[self.mesh.triangles]
        jac = np.stack((p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=2)  # columns
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        inv_t = np.empty_like(jac)
        inv_t[:, 0, 0] = jac[:, 1, 1] / det
        inv_t[:, 0, 1] = -jac[:, 1, 0] / det
        inv_t[:, 1, 0] = -jac[:, 0, 1] / det
        inv_t[:, 1, 1] = jac[:, 0, 0] / det
        return jac, det, inv_t

    @property
    def jacobian_det(self) -> NDArray[np.float64]:
        return self._affine[1]

    @cached_property
    def quad_weights(self) -> NDArray[np.float64]:
        """(T, q) physical quadrature weights."""
        return np.abs(self.jacobian_det)[:, None] * self.rule.weights[None, :]

    @cached_property
    def quad_points(self) -> NDArray[np.float64]:
        """(T, q, 2) physical quadrature points."""
        corners = self.mesh.vertices[self.mesh.triangles]
        return np.einsum("qk,tkd->tqd", self.rule.barycentric, corners)

    @cached_property
    def phi(self) -> NDArray[np.float64]:
        """(q, 10) P3 values at the quadrature nodes."""
        return P3.values(self.rule.points)

    @cached_property
    def psi(self) -> NDArray[np.float64]:
        """(q, 6) P2 values at the quadrature nodes."""
        return P2.values(self.rule.points)

    @cached_property
    def grad_phi(self) -> NDArray[np.float64]:
        """(T, q, 10, 2) physical P3 gradients at the quadrature nodes."""
        ref = P3.gradients(self.rule.points)
        return np.einsum("tde,qne->tqnd", self._affine[2], ref)

    # === Field evaluation ===

    def element_coefficients(self, v: VelocityVector) -> NDArray[np.float64]:
        """(T, 2, 10) local coefficients."""
        return self.expand(v)[:, self.velocity_dof_map].transpose(1, 0, 2)

    def values_at_quadrature(self, v: VelocityVector) -> NDArray[np.float64]:
        """(T, q, 2) velocity values at the quadrature points."""
        return np.einsum("tcn,qn->tqc", self.element_coefficients(v), self.phi)

    def gradients_at_quadrature(self, v: VelocityVector) -> NDArray[np.float64]:
        """(T, q, 2, 2) velocity gradients, indexed [component, derivative]."""
        return np.einsum("tcn,tqnd->tqcd", self.element_coefficients(v), self.grad_phi)

    def load_vector(self, values: NDArray[np.float64]) -> DualVector:
        """Dual vector <g, v> over free dofs for g given as (T, q, 2) quadrature values."""
        local = np.einsum("tq,tqc,qn->tcn", self.quad_weights, values, self.phi)
        return self.scatter_dual(local)

    def scatter_dual(self, local: NDArray[np.float64]) -> DualVector:
        """Sum (T, 2, 10) element contributions into a free-dof dual vector."""
        full = np.zeros((2, self.n_scalar))
        for c in range(2):
            full[c] = np.bincount(
                self.velocity_dof_map.ravel(), weights=local[:, c].ravel(), minlength=self.n_scalar
            )
        return DualVector(self.restrict(full))

    def field_load(self, g: VectorField) -> DualVector:
        pts = self.quad_points.reshape(-1, 2)
        values = np.asarray(g(pts), dtype=np.float64).reshape(self.quad_points.shape)
        return self.load_vector(values)

    def evaluation_matrix(self, points: NDArray[np.float64]) -> sp.csr_matrix:
        """
        Sparse point evaluation, shape (2P, n_vel_free).

        Row c*P + i gives component c of the field at points[i].
        """
        points = np.atleast_2d(points)
        n_points = points.shape[0]
        tri, bary = self.mesh.locate_points(points)
        basis = P3.values(bary[:, 1:])  # (P, 10)
        local = self.local_free_dofs[tri]  # (P, 2, 10)
        rows, cols, vals = [], [], []
        for c in range(2):
            cc = local[:, c, :]
            keep = cc >= 0
            rows.append(np.broadcast_to(c * n_points + np.arange(n_points)[:, None], cc.shape)[keep])
            cols.append(cc[keep])
            vals.append(basis[keep])
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(2 * n_points, self.n_vel_free),
        )


def build_space(m: Mesh, quadrature_degree: int = DEFAULT_DEGREE) -> TaylorHoodSpace:
    report = validate(m)
    if not report.ok:
        raise error.ValidationError(
            "mesh is not admissible for a Taylor-Hood space",
            {v.rule: v.detail for v in report.violations},
        )
    space = TaylorHoodSpace(m, quadrature_degree)
    logger.debug("built %s", space)
    return space


def interpolate_velocity(s: TaylorHoodSpace, g: VectorField) -> VelocityVector:
    """Nodal P3 interpolant of g; boundary nodal values are dropped (zero trace)."""
    values = np.asarray(g(s.scalar_nodes[s.free_scalar]), dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise error.PreconditionViolation("interpolate_velocity", "field is not finite at nodal points")
    return VelocityVector(np.ascontiguousarray(values.T).ravel())


def eval_velocity(s: TaylorHoodSpace, v: VelocityVector, p: NDArray[np.float64]) -> NDArray[np.float64]:
    """Value(s) of the FE field at point(s) p; returns shape (2,) or (P, 2)."""
    points = np.asarray(p, dtype=np.float64)
    single = points.ndim == 1
    tri, bary = s.mesh.locate_points(np.atleast_2d(points))
    basis = P3.values(bary[:, 1:])
    coeffs = s.element_coefficients(v)[tri]  # (P, 2, 10)
    values = np.einsum("pcn,pn->pc", coeffs, basis)
    return values[0] if single else values


def l2_norm(s: TaylorHoodSpace, v: VelocityVector) -> float:
    vals = s.values_at_quadrature(v)
    return float(np.sqrt(np.einsum("tq,tqc,tqc->", s.quad_weights, vals, vals)))


def h1_seminorm(s: TaylorHoodSpace, v: VelocityVector) -> float:
    grads = s.gradients_at_quadrature(v)
    return float(np.sqrt(np.einsum("tq,tqcd,tqcd->", s.quad_weights, grads, grads)))


def linf_norm_sampled(s: TaylorHoodSpace, v: VelocityVector) -> float:
    nodal = np.linalg.norm(s.expand(v), axis=0).max(initial=0.0)
    quad = np.linalg.norm(s.values_at_quadrature(v), axis=-1).max(initial=0.0)
    return float(max(nodal, quad))


def l2_error(s: TaylorHoodSpace, v: VelocityVector, exact: VectorField) -> float:
    """||v - exact||_{L2(O_h)} by quadrature."""
    pts = s.quad_points.reshape(-1, 2)
    diff = s.values_at_quadrature(v) - np.asarray(exact(pts)).reshape(s.quad_points.shape)
    return float(np.sqrt(np.einsum("tq,tqc,tqc->", s.quad_weights, diff, diff)))
