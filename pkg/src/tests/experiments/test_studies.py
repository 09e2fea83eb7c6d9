import math

import numpy as np
import pytest

from src.experiments.studies import exceedance_study, spatial_study, temporal_study
from src.models.pydanticmodels import Domain, MeshConfig, RunConfig, SeedRange, StudyType
from src.tests.factories import pydantic_factories as factories
from src.util import error


def _temporal_config(reference_factor: int = 4, **noise) -> RunConfig:
    return factories.run_config.build(
        mesh=factories.mesh.build(n=2),
        scheme=factories.scheme.build(T=0.01, J=4),
        noise=factories.noise.build(**noise),
        study=factories.study.build(
            type=StudyType.CONVERGE_TIME, time_levels=[4, 8, 16], reference_factor=reference_factor
        ),
        seeds=SeedRange(start=0, stop=1),
    )


def test_deterministic_temporal_study_is_first_order():
    stats = temporal_study(_temporal_config(reference_factor=16, c_scale=0.0))

    assert [lv.n_samples for lv in stats.levels] == [2, 2, 2]
    assert stats.step_sizes() == pytest.approx([0.01 / 4, 0.01 / 8, 0.01 / 16])
    rms = [lv.rms for lv in stats.levels]
    assert rms[0] > rms[1] > rms[2] > 0.0
    # both seeds see the same deterministic run
    assert np.all(stats.levels[0].errors == stats.levels[0].errors[0])
    assert 0.9 <= stats.fit.order <= 1.1
    assert stats.n_failures == 0


def test_stochastic_temporal_study_collects_every_seed():
    stats = temporal_study(_temporal_config(c_scale=0.5))

    for lv in stats.levels:
        assert lv.seeds.tolist() == [0, 1]
        assert np.all(np.isfinite(lv.errors)) and np.all(lv.errors > 0.0)
        assert np.all(np.isfinite(lv.reference_norms))
        assert np.all(lv.stop_indices == -1)


def test_temporal_study_rejects_shallow_reference():
    cfg = _temporal_config()
    shallow = cfg.model_copy(update={"study": cfg.study.model_copy(update={"reference_factor": 2})})

    with pytest.raises(error.ValidationError):
        temporal_study(shallow)


def test_spatial_study_errors_shrink_with_h():
    cfg = factories.run_config.build(
        mesh=MeshConfig(domain=Domain.SQUARE, n=1, level=0),
        scheme=factories.scheme.build(T=0.01, J=2),
        noise=factories.noise.build(c_scale=0.5),
        study=factories.study.build(type=StudyType.CONVERGE_SPACE),
        seeds=SeedRange(start=0, stop=0),
    )

    stats = spatial_study(cfg)

    assert [lv.level for lv in stats.levels] == [0, 1, 2]
    rms = [lv.rms for lv in stats.levels]
    assert rms[0] > rms[1] > rms[2] > 0.0
    assert stats.fit.order > 1.0
    assert stats.step_sizes() == pytest.approx([1.0, 0.5, 0.25])


def _exceedance_config(**exceedance) -> RunConfig:
    return factories.run_config.build(
        mesh=MeshConfig(domain=Domain.SQUARE, n=1, level=0),
        scheme=factories.scheme.build(T=0.1, J=4),
        noise=factories.noise.build(c_scale=0.5),
        study=factories.study.build(type=StudyType.EXCEEDANCE),
        exceedance={"pairs": [(0, 4), (1, 8)], "reference": (2, 16), **exceedance},
        seeds=SeedRange(start=0, stop=2),
    )


def test_exceedance_study_curves():
    result = exceedance_study(_exceedance_config())

    assert len(result.curves) == 2
    for curve in result.curves:
        assert curve.n_samples == 3
        assert np.all((curve.probabilities >= 0.0) & (curve.probabilities <= 1.0))
        assert np.all(np.diff(curve.probabilities) <= 0.0)
    assert result.curves[0].tau == pytest.approx(0.025)
    assert isinstance(result.consistent_with_decay, bool)
    assert not result.failures


def test_exceedance_pairs_must_be_coarser_than_reference():
    with pytest.raises(error.ValidationError):
        exceedance_study(_exceedance_config(pairs=[(2, 4)]))


def test_exceedance_pairs_need_small_steps():
    cfg = _exceedance_config()
    long_horizon = cfg.model_copy(update={"scheme": cfg.scheme.model_copy(update={"T": 10.0})})

    with pytest.raises(error.ValidationError):
        exceedance_study(long_horizon)


def test_failed_samples_are_recorded_not_dropped():
    cfg = _temporal_config(c_scale=0.5)
    starved = cfg.model_copy(
        update={
            "scheme": cfg.scheme.model_copy(update={"newton_max_iters": 1, "nonlinear_solver": "picard"}),
            "study": cfg.study.model_copy(update={"initial_amplitude": 50.0}),
        }
    )

    stats = temporal_study(starved)

    assert stats.n_failures == 2
    assert {f.seed for f in stats.failures} == {0, 1}
    assert all(f.error_code == "NEWTON_DIVERGENCE" for f in stats.failures)
    assert all(f.metadata["step"] == 0 for f in stats.failures)
    assert all(lv.n_samples == 0 for lv in stats.levels)
    assert math.isnan(stats.levels[0].rms)


@pytest.mark.slow
def test_worker_count_does_not_change_results():
    cfg = _temporal_config(c_scale=0.5)

    serial = temporal_study(cfg, workers=1)
    parallel = temporal_study(cfg, workers=2)

    for a, b in zip(serial.levels, parallel.levels):
        assert np.array_equal(a.errors, b.errors)
        assert np.array_equal(a.seeds, b.seeds)


def _disk_config(study, scheme, n_seeds: int) -> RunConfig:
    return factories.run_config.build(
        mesh=MeshConfig(domain=Domain.POLYGON_DISK, n=8, level=0),
        scheme=scheme,
        noise=factories.noise.build(N=16, c_scale=0.5),
        study=study,
        seeds=SeedRange(start=0, stop=n_seeds - 1),
        workers=4,
    )


@pytest.mark.slow
def test_stochastic_temporal_order_on_disk():
    cfg = _disk_config(
        factories.study.build(
            type=StudyType.CONVERGE_TIME, time_levels=[16, 32, 64, 128], reference_factor=8
        ),
        factories.scheme.build(T=0.25, J=16),
        n_seeds=32,
    )

    stats = temporal_study(cfg)

    assert stats.n_failures == 0
    assert stats.fit.order >= 0.4


@pytest.mark.slow
def test_stochastic_spatial_order_on_disk():
    cfg = _disk_config(
        factories.study.build(type=StudyType.CONVERGE_SPACE, space_levels=3, reference_levels=1),
        factories.scheme.build(T=0.05, J=8),
        n_seeds=32,
    )

    stats = spatial_study(cfg)

    assert stats.n_failures == 0
    assert [lv.level for lv in stats.levels] == [0, 1, 2]
    assert stats.fit.order >= 1.2
