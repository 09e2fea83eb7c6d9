import pytest
import yaml
from pydantic import ValidationError as PydanticValidationError

from src.dependencies.run_config import _deep_merge, flag_overrides, load_run_config
from src.models.pydanticmodels import (
    Domain,
    ExceedanceConfig,
    MeshConfig,
    RunConfig,
    SchemeConfig,
    SeedRange,
    StudyType,
)
from src.tests.factories.pydantic_factories import run_config
from src.util import error


def test_deep_merge_keeps_siblings():
    base = {"mesh": {"domain": "square", "n": 4}, "workers": 1}

    merged = _deep_merge(base, {"mesh": {"level": 2}, "workers": 3})

    assert merged == {"mesh": {"domain": "square", "n": 4, "level": 2}, "workers": 3}
    assert base["mesh"] == {"domain": "square", "n": 4}


def test_flag_overrides():
    assert flag_overrides() == {}
    assert flag_overrides(seed=5) == {"seeds": {"start": 5, "stop": 5}}
    assert flag_overrides(seeds="2..9", level=1) == {"seeds": {"start": 2, "stop": 9}, "mesh": {"level": 1}}
    assert flag_overrides(out="x", workers=4) == {"output_dir": "x", "workers": 4}


@pytest.mark.parametrize("flags", [{"seed": 1, "seeds": "0..2"}, {"seeds": "a..b"}])
def test_flag_overrides_rejects(flags):
    with pytest.raises(error.ValidationError):
        flag_overrides(**flags)


def test_flags_win_over_file(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"mesh": {"n": 3, "level": 0}, "seeds": {"start": 0, "stop": 9}}))

    cfg = load_run_config(str(path), StudyType.RUN, seed=4, level=2)

    assert cfg.mesh == MeshConfig(n=3, level=2)
    assert cfg.seeds.seeds() == [4]
    assert cfg.study.type == StudyType.RUN


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("")

    assert load_run_config(str(path)) == RunConfig()


def test_non_mapping_file(tmp_path):
    path = tmp_path / "list.yaml"
    path.write_text("- 1\n- 2\n")

    with pytest.raises(error.ConfigurationError):
        load_run_config(str(path))


def test_missing_file(tmp_path):
    with pytest.raises(error.NotFoundError):
        load_run_config(str(tmp_path / "missing.yaml"))


def test_tau_is_exact():
    cfg = SchemeConfig(T=1.0, J=3)

    assert cfg.tau == 1.0 / 3.0
    assert cfg.time(3) == 1.0
    assert cfg.refined(4).J == 12


def test_seed_range_parse():
    assert SeedRange.parse("3").seeds() == [3]
    assert SeedRange.parse("0..2").seeds() == [0, 1, 2]
    with pytest.raises(PydanticValidationError):
        SeedRange.parse("5..1")


@pytest.mark.parametrize(
    "data",
    [
        {"mesh": {"domain": "polygon-disk", "n": 6}},
        {"study": {"time_levels": [8, 16]}},
        {"study": {"time_levels": [8, 8, 16]}},
        {"study": {"type": "converge-time", "reference_factor": 2}},
        {"exceedance": {"alpha": 3.0}},
        {"exceedance": {"eps": []}},
        {"noise": {"s": 0.5}},
        {"scheme": {"J": 0}},
    ],
)
def test_invalid_configs(data):
    with pytest.raises(PydanticValidationError):
        RunConfig.model_validate(data)


def test_eps_grid_sorted():
    assert ExceedanceConfig(eps=[1.0, 0.1]).eps == [0.1, 1.0]


def test_factory_builds_valid_config():
    cfg = run_config.build()

    assert cfg.mesh.domain == Domain.SQUARE
    assert cfg.study.type == StudyType.RUN


def test_reference_factor_only_binds_temporal_studies():
    temporal = RunConfig.model_validate({"study": {"type": "converge-time", "reference_factor": 4}})
    spatial = RunConfig.model_validate({"study": {"type": "converge-space", "reference_factor": 2}})

    assert temporal.study.reference_factor == 4
    assert spatial.study.reference_factor == 2
    with pytest.raises(PydanticValidationError, match="at least 4x finer than J=32"):
        RunConfig.model_validate({"study": {"type": "converge-time", "reference_factor": 3}})
