import numpy as np
import scipy.linalg as la
import pytest

from src.fem.mesh import build_mesh, build_unit_square_mesh
from src.fem.spaces import build_space, l2_error
from src.fem.stokes_ops import (
    StokesOperators,
    dense_projection_oracle,
    fractional_norm,
    helmholtz_project,
    manufactured_force,
    manufactured_velocity,
    null_space_basis,
    project_initial,
    solve_steady_stokes,
    stokes_apply,
    stokes_eigenpairs,
)
from src.experiments.statistics import fit_order
from src.stochastic.scheme import initial_field
from src.models.pydanticmodels import Domain, InitialData
from src.util import error


def test_projection_is_idempotent_and_divergence_free(disk_ops: StokesOperators, rng):
    f = rng.standard_normal(disk_ops.space.n_vel_free)

    Pf = helmholtz_project(disk_ops, f)
    PPf = helmholtz_project(disk_ops, Pf)

    scale = np.linalg.norm(Pf)
    assert np.linalg.norm(PPf - Pf) <= 1e-10 * scale
    assert disk_ops.divergence_norm(Pf) <= 1e-10 * scale


def test_projection_is_l2_orthogonal(square_ops: StokesOperators, rng):
    f = rng.standard_normal(square_ops.space.n_vel_free)
    g = helmholtz_project(square_ops, rng.standard_normal(square_ops.space.n_vel_free))

    Pf = helmholtz_project(square_ops, f)

    # f - Pf is M-orthogonal to every discretely divergence-free field
    assert abs(square_ops.M.quadratic_form(f - Pf, g)) <= 1e-10 * np.linalg.norm(f) * np.linalg.norm(g)


def test_projection_matches_dense_oracle(square_ops: StokesOperators, rng):
    f = rng.standard_normal(square_ops.space.n_vel_free)

    oracle = dense_projection_oracle(square_ops, f)

    assert np.linalg.norm(helmholtz_project(square_ops, f) - oracle) <= 1e-8 * np.linalg.norm(oracle)


def test_projection_of_zero_is_zero(square_ops: StokesOperators):
    assert not np.any(helmholtz_project(square_ops, square_ops.space.zeros()))


def test_dual_projection_of_mass_load(square_ops: StokesOperators, rng):
    f = rng.standard_normal(square_ops.space.n_vel_free)

    assert np.allclose(
        helmholtz_project(square_ops, square_ops.M @ f, dual=True),
        helmholtz_project(square_ops, f),
        atol=1e-12,
    )


def test_stokes_operator_symmetric_positive(square_ops: StokesOperators, rng):
    u = helmholtz_project(square_ops, rng.standard_normal(square_ops.space.n_vel_free))
    w = helmholtz_project(square_ops, rng.standard_normal(square_ops.space.n_vel_free))

    Au, Aw = stokes_apply(square_ops, u), stokes_apply(square_ops, w)

    M = square_ops.M
    scale = square_ops.h1_squared(u) + square_ops.h1_squared(w)
    assert abs(M.quadratic_form(Au, w) - M.quadratic_form(Aw, u)) <= 1e-11 * scale
    # <A_h u, u> = ||grad u||^2
    assert M.quadratic_form(Au, u) == pytest.approx(square_ops.h1_squared(u), rel=1e-9)


def test_stokes_apply_requires_divergence_free_input(square_ops: StokesOperators, rng):
    with pytest.raises(error.PreconditionViolation):
        stokes_apply(square_ops, rng.standard_normal(square_ops.space.n_vel_free))


def test_eigenpairs_and_fractional_norms(square_ops: StokesOperators, rng):
    eigvals, vectors = stokes_eigenpairs(square_ops)
    u = helmholtz_project(square_ops, rng.standard_normal(square_ops.space.n_vel_free))

    assert eigvals[0] > 0.0
    assert np.all(np.diff(eigvals) >= 0.0)
    assert vectors.shape[1] == null_space_basis(square_ops).shape[1]
    assert fractional_norm(square_ops, u, 0.0) ** 2 == pytest.approx(square_ops.l2_squared(u), rel=1e-8)
    assert fractional_norm(square_ops, u, 1.0) ** 2 == pytest.approx(square_ops.h1_squared(u), rel=1e-8)


def test_dense_oracles_refuse_large_spaces():
    ops = StokesOperators(build_space(build_unit_square_mesh(8)))

    with pytest.raises(error.PreconditionViolation):
        null_space_basis(ops)


def test_steady_stokes_pressure_has_zero_mean(disk_ops: StokesOperators):
    u, p = solve_steady_stokes(disk_ops, lambda x: np.column_stack((np.sin(3 * x[:, 1]), x[:, 0] ** 2)))

    assert abs(disk_ops.pressure_mean @ p) <= 1e-10 * (1.0 + np.linalg.norm(p))
    assert disk_ops.divergence_norm(u) <= 1e-10 * (1.0 + np.linalg.norm(u))


def test_gradient_force_is_absorbed_by_pressure(square_ops: StokesOperators):
    # f = grad(x^2 + xy) lies in the pressure space: velocity vanishes
    u, p = solve_steady_stokes(square_ops, lambda x: np.column_stack((2 * x[:, 0] + x[:, 1], x[:, 0])))

    assert np.linalg.norm(u) <= 1e-8
    assert np.linalg.norm(p) > 0.1


def test_manufactured_solution_converges_at_fourth_order():
    errors, hs = [], []
    for n in (2, 4, 8):
        ops = StokesOperators(build_space(build_unit_square_mesh(n)))
        u, _ = solve_steady_stokes(ops, manufactured_force)
        errors.append(l2_error(ops.space, u, manufactured_velocity))
        hs.append(ops.space.mesh.h)

    fit = fit_order(hs, errors)

    assert fit.order >= 3.5


@pytest.mark.parametrize("domain", [Domain.SQUARE, Domain.POLYGON_DISK])
def test_projected_vortex_is_close_to_vortex(domain, fine_square_ops):
    if domain == Domain.SQUARE:
        ops = fine_square_ops
    else:
        ops = StokesOperators(build_space(build_mesh(Domain.POLYGON_DISK, 8, level=1)))
    y0 = initial_field(InitialData.VORTEX, domain)

    Y0 = project_initial(ops, y0)

    assert ops.divergence_norm(Y0) <= 1e-10 * np.linalg.norm(Y0)
    assert l2_error(ops.space, Y0, y0) < 0.25 * np.sqrt(ops.l2_squared(Y0))


def test_inverse_estimate_scales_with_h():
    # lambda_max(K, M) h^2 stays bounded under refinement
    scaled = []
    for level in (0, 1, 2):
        ops = StokesOperators(build_space(build_mesh(Domain.SQUARE, 2, level)))
        K, M = ops.K.matrix.toarray(), ops.M.matrix.toarray()
        n = K.shape[0]
        lam_max = la.eigh(K, M, eigvals_only=True, subset_by_index=[n - 1, n - 1])[0]
        scaled.append(lam_max * ops.space.mesh.h**2)

    assert min(scaled) > 0
    assert max(scaled) / min(scaled) <= 1.5
