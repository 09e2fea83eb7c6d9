import math

import numpy as np
import pytest

from src.fem.stokes_ops import StokesOperators, helmholtz_project, project_initial
from src.models.pydanticmodels import Domain, InitialData, NoiseConfig, NoiseFamily
from src.stochastic.noise import (
    NoiseModel,
    check_hypothesis,
    coarsen_path,
    default_model,
    lipschitz_ratio,
    mode_loads,
    model_from_config,
    noise_load,
    sample_path,
)
from src.stochastic.scheme import initial_field
from src.util import error


def test_growth_constant_per_family():
    weights_sq = sum((0.5 * n**-1.0) ** 2 for n in range(1, 9))

    assert NoiseModel(NoiseFamily.DEFAULT, 8, 0.5).C_F == pytest.approx(math.sqrt(2 * weights_sq))
    assert NoiseModel(NoiseFamily.DIVERGENCE_FREE, 8, 0.5).C_F == pytest.approx(math.sqrt(weights_sq))


@pytest.mark.parametrize("family", list(NoiseFamily))
@pytest.mark.parametrize("domain", list(Domain))
def test_hypothesis_holds_on_sampled_lattice(family, domain):
    check = check_hypothesis(NoiseModel(family, 16, 0.5, 1.0, domain))

    assert check.ok
    assert check.n_samples > 0
    assert check.value_ratio > 0.0


def test_zero_scale_noise_is_trivially_admissible():
    check = check_hypothesis(NoiseModel(NoiseFamily.DEFAULT, 4, 0.0))

    assert check.ok
    assert check.n_samples == 0


def test_default_model_validates_inputs():
    with pytest.raises(error.ValidationError):
        default_model(N=0)
    with pytest.raises(error.ValidationError):
        default_model(s=0.5)


def test_model_from_config_round_trip():
    cfg = NoiseConfig(family=NoiseFamily.DIVERGENCE_FREE, N=6, c_scale=0.25, s=1.5)

    model = model_from_config(cfg, Domain.POLYGON_DISK)

    assert model.domain == Domain.POLYGON_DISK
    assert model.to_config() == cfg


def test_mode_values_shapes():
    model = NoiseModel(NoiseFamily.DIVERGENCE_FREE, 5, 0.5)
    x = np.random.default_rng(0).uniform(size=(7, 2))
    y = np.zeros((7, 2))

    assert model.values(x, y).shape == (5, 7, 2)
    assert model.y_jacobian(x, y).shape == (5, 7, 2, 2)


def test_divergence_free_modes_vanish_on_square_boundary():
    model = NoiseModel(NoiseFamily.DIVERGENCE_FREE, 3, 1.0)
    t = np.linspace(0.0, 1.0, 11)
    edge = np.concatenate(
        [np.column_stack((t, 0 * t)), np.column_stack((t, 1 + 0 * t)), np.column_stack((0 * t, t))]
    )

    values = model.values(edge, np.ones_like(edge))

    assert np.abs(values).max() < 1e-14


@pytest.mark.parametrize("family", list(NoiseFamily))
def test_lipschitz_ratio_bounded(square_ops: StokesOperators, family, rng):
    model = NoiseModel(family, 8, 0.5)
    n = square_ops.space.n_vel_free

    for _ in range(3):
        u, v = 10.0 * rng.standard_normal(n), 10.0 * rng.standard_normal(n)
        assert lipschitz_ratio(square_ops.space, model, u, v) <= 1.0 + 1e-12


def test_path_shape_and_start():
    path = sample_path(7, 16, 4, 1.0 / 16)

    assert path.W.shape == (17, 4)
    assert not np.any(path.W[0])
    assert path.increments.shape == (16, 4)
    with pytest.raises(ValueError):
        path.W[1, 0] = 1.0


def test_path_is_reproducible_and_seed_dependent():
    a = sample_path(3, 8, 4, 0.125)

    assert np.array_equal(a.W, sample_path(3, 8, 4, 0.125).W)
    assert not np.array_equal(a.W, sample_path(4, 8, 4, 0.125).W)


def test_longer_path_extends_shorter_one():
    short = sample_path(11, 8, 3, 0.01)
    long = sample_path(11, 16, 3, 0.01)

    assert np.array_equal(long.W[:9], short.W)


def test_coarsening_composes_exactly():
    path = sample_path(5, 64, 4, 1.0 / 64)

    twice = coarsen_path(coarsen_path(path, 2), 4)
    once = coarsen_path(path, 8)

    assert np.array_equal(twice.W, once.W)
    assert once.J == 8
    assert once.tau == pytest.approx(1.0 / 8)
    assert coarsen_path(path, 1) is path


def test_coarse_increments_are_sums_of_fine_increments():
    path = sample_path(5, 32, 4, 1.0 / 32)

    coarse = coarsen_path(path, 4)

    summed = path.increments.reshape(8, 4, 4).sum(axis=1)
    assert np.allclose(coarse.increments, summed, rtol=0.0, atol=1e-14)


def test_coarsening_needs_divisor():
    with pytest.raises(error.PreconditionViolation):
        coarsen_path(sample_path(0, 12, 2, 0.1), 5)


def test_invalid_path_request():
    with pytest.raises(error.PreconditionViolation):
        sample_path(0, 0, 2, 0.1)


def test_increment_variance_matches_step():
    path = sample_path(123, 4000, 8, 0.01)

    assert path.increments.var() == pytest.approx(0.01, rel=0.05)


def test_noise_load_is_linear_in_increments(square_ops: StokesOperators, noise: NoiseModel, rng):
    s = square_ops.space
    u = rng.standard_normal(s.n_vel_free)
    dW = rng.standard_normal(noise.N)

    load = noise_load(s, noise, u, dW)

    assert np.allclose(load, dW @ mode_loads(s, noise, u), rtol=1e-12, atol=1e-14)
    assert np.allclose(noise_load(s, noise, u, 2 * dW), 2 * load, rtol=1e-12, atol=1e-14)
    assert not np.any(noise_load(s, noise, u, np.zeros(noise.N)))


def test_noise_load_checks_increment_count(square_ops: StokesOperators, noise: NoiseModel):
    with pytest.raises(error.PreconditionViolation):
        noise_load(square_ops.space, noise, square_ops.space.zeros(), np.ones(noise.N + 1))


def test_discrete_ito_isometry(square_ops: StokesOperators, noise: NoiseModel):
    s = square_ops.space
    u = project_initial(square_ops, initial_field(InitialData.VORTEX, Domain.SQUARE))
    tau = 0.01
    path = sample_path(11, 1000, noise.N, tau)

    samples = np.array(
        [
            square_ops.l2_squared(helmholtz_project(square_ops, noise_load(s, noise, u, dW), dual=True))
            for dW in path.increments
        ]
    )
    # E ||P_h sum_n dbeta_n f_n||^2 = tau sum_n ||P_h f_n||^2
    expected = tau * sum(
        square_ops.l2_squared(helmholtz_project(square_ops, load, dual=True)) for load in mode_loads(s, noise, u)
    )

    standard_error = samples.std(ddof=1) / np.sqrt(samples.size)
    assert abs(samples.mean() - expected) <= 5 * standard_error
