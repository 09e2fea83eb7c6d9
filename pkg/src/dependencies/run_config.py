import functools
import logging
from pathlib import Path
from typing import Any, Callable, Dict, Optional

import click
import yaml

from ..models.pydanticmodels import RunConfig, SeedRange, StudyType
from ..util import error

logger = logging.getLogger(__name__)


def _deep_merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def read_config_file(path: str | Path) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise error.NotFoundError("Config file", path)
    with path.open(encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise error.ConfigurationError("Config file must hold a key-value tree", f"got {type(data).__name__}")
    return data


def flag_overrides(
    seed: Optional[int] = None,
    seeds: Optional[str] = None,
    out: Optional[str] = None,
    workers: Optional[int] = None,
    level: Optional[int] = None,
) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {}
    if seed is not None and seeds is not None:
        raise error.ValidationError("--seed and --seeds are exclusive", {"seed": seed, "seeds": seeds})
    if seed is not None:
        overrides["seeds"] = {"start": seed, "stop": seed}
    if seeds is not None:
        try:
            seed_range = SeedRange.parse(seeds)
        except ValueError:
            raise error.ValidationError("--seeds expects A..B", {"seeds": seeds})
        overrides["seeds"] = seed_range.model_dump()
    if out is not None:
        overrides["output_dir"] = out
    if workers is not None:
        overrides["workers"] = workers
    if level is not None:
        overrides["mesh"] = {"level": level}
    return overrides


def load_run_config(
    config_path: Optional[str], study_type: Optional[StudyType] = None, **flags: Any
) -> RunConfig:
    """Config file, then flag overrides (flags win), then validation."""
    data = read_config_file(config_path) if config_path else {}
    data = _deep_merge(data, flag_overrides(**flags))
    if study_type is not None:
        data = _deep_merge(data, {"study": {"type": study_type.value}})
    cfg = RunConfig.model_validate(data)
    logger.debug(f"Resolved configuration: {cfg.model_dump_json()}")
    return cfg


def run_options(func: Callable) -> Callable:
    """Flags shared by every command."""
    options = [
        click.option("--config", "config", type=click.Path(dir_okay=False), default=None, help="YAML config file"),
        click.option("--seed", type=int, default=None, help="single seed"),
        click.option("--seeds", type=str, default=None, help="inclusive seed range A..B"),
        click.option("--out", type=click.Path(file_okay=False), default=None, help="output directory"),
        click.option("--workers", type=int, default=None, help="worker processes"),
        click.option("--level", type=int, default=None, help="mesh refinement level"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def with_config(study_type: Optional[StudyType]):
    """Resolve the shared flags into a RunConfig passed as the `cfg` argument."""

    def decorator(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(config=None, seed=None, seeds=None, out=None, workers=None, level=None, **kwargs):
            cfg = load_run_config(config, study_type, seed=seed, seeds=seeds, out=out, workers=workers, level=level)
            return func(cfg, **kwargs)

        return wrapper

    return decorator
