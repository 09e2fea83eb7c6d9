import numpy as np
import pytest

from src.fem import assembly
from src.fem.spaces import h1_seminorm, l2_norm
from src.fem.stokes_ops import StokesOperators


def test_mass_and_stiffness_symmetric_positive(square_ops: StokesOperators):
    for op in (square_ops.M, square_ops.K):
        assert op.symmetric
        assert op.asymmetry() < 1e-13
        assert np.linalg.eigvalsh(op.matrix.toarray()).min() > 0.0


def test_quadratic_forms_match_norms(square_ops: StokesOperators, rng):
    s = square_ops.space
    v = rng.standard_normal(s.n_vel_free)

    assert square_ops.M.quadratic_form(v) == pytest.approx(l2_norm(s, v) ** 2, rel=1e-12)
    assert square_ops.K.quadratic_form(v) == pytest.approx(h1_seminorm(s, v) ** 2, rel=1e-12)


def test_pressure_mean_integrates_constants(disk_ops: StokesOperators):
    m = disk_ops.pressure_mean

    assert m.shape == (disk_ops.space.n_pressure,)
    assert m.sum() == pytest.approx(disk_ops.space.mesh.area, rel=1e-13)


def test_divergence_annihilates_constant_pressure(disk_ops: StokesOperators):
    B = disk_ops.B

    assert B.shape == (disk_ops.space.n_pressure, disk_ops.space.n_vel_free)
    # <div v, 1> = 0 for every v with zero trace
    assert np.abs(B.T @ np.ones(B.shape[0])).max() < 1e-12


@pytest.mark.parametrize("ops_name", ["square_ops", "fine_square_ops", "disk_ops"])
def test_convection_is_skew(ops_name: str, request, rng):
    ops: StokesOperators = request.getfixturevalue(ops_name)
    for _ in range(5):
        u = rng.standard_normal(ops.space.n_vel_free)
        N = assembly.convection_residual(ops.space, u)

        assert abs(u @ N) <= 1e-11 * np.linalg.norm(u) * np.linalg.norm(N)


def test_plain_transport_form_is_not_skew(square_ops: StokesOperators, rng):
    u = rng.standard_normal(square_ops.space.n_vel_free)

    N = assembly.convection_residual(square_ops.space, u, skew_weight=0.0)

    assert abs(u @ N) > 1e-6 * np.linalg.norm(u) * np.linalg.norm(N)


def test_module_weight_read_at_call_time(square_ops: StokesOperators, rng, monkeypatch):
    u = rng.standard_normal(square_ops.space.n_vel_free)
    monkeypatch.setattr(assembly, "SKEW_WEIGHT", 0.0)

    patched = assembly.convection_residual(square_ops.space, u)

    assert np.array_equal(patched, assembly.convection_residual(square_ops.space, u, skew_weight=0.0))


def test_jacobian_matches_central_difference(square_ops: StokesOperators, rng):
    s = square_ops.space
    u = rng.standard_normal(s.n_vel_free)
    w = rng.standard_normal(s.n_vel_free)
    eps = 1e-3

    # N is quadratic, so the central difference is exact up to rounding
    fd = (assembly.convection_residual(s, u + eps * w) - assembly.convection_residual(s, u - eps * w)) / (2 * eps)
    Jw = assembly.convection_jacobian(s, u) @ w

    assert np.linalg.norm(Jw - fd) <= 1e-8 * np.linalg.norm(Jw)


def test_oseen_part_reproduces_residual(square_ops: StokesOperators, rng):
    s = square_ops.space
    u = rng.standard_normal(s.n_vel_free)

    C = assembly.convection_jacobian(s, u, part="oseen")

    N = assembly.convection_residual(s, u)
    assert np.linalg.norm(C @ u - N) <= 1e-12 * np.linalg.norm(N)
