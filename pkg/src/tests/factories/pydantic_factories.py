from __future__ import annotations

import itertools
from typing import Any, Callable, Dict, Generic, Type, TypeVar

from pydantic import BaseModel
from src.models import pydanticmodels

T = TypeVar("T", bound=BaseModel)
_counter = itertools.count(1)


class ModelFactory(Generic[T]):
    """
    Generic factory for Pydantic models that provides:
    - build(**overrides) -> T instance
    - dict(**overrides) -> dict payload
    You pass a model class and a defaults() function that returns base fields.
    """

    def __init__(self, model: Type[T], defaults: Callable[[int], Dict[str, Any]]):
        self._model = model
        self._defaults = defaults

    def build(self, **overrides: Any) -> T:
        n = next(_counter)
        data = {**self._defaults(n), **overrides}
        return self._model(**data)

    def dict(self, **overrides: Any) -> Dict[str, Any]:
        return self.build(**overrides).model_dump(mode="json")


def _mesh_defaults(n: int) -> Dict[str, Any]:
    return {"domain": pydanticmodels.Domain.SQUARE, "n": 2, "level": 0}


mesh = ModelFactory[pydanticmodels.MeshConfig](pydanticmodels.MeshConfig, _mesh_defaults)


def _scheme_defaults(n: int) -> Dict[str, Any]:
    return {"T": 0.01, "J": 4, "newton_tol": 1e-10, "newton_max_iters": 20}


scheme = ModelFactory[pydanticmodels.SchemeConfig](pydanticmodels.SchemeConfig, _scheme_defaults)


def _noise_defaults(n: int) -> Dict[str, Any]:
    return {"family": pydanticmodels.NoiseFamily.DEFAULT, "N": 4, "c_scale": 0.5, "s": 1.0}


noise = ModelFactory[pydanticmodels.NoiseConfig](pydanticmodels.NoiseConfig, _noise_defaults)


def _study_defaults(n: int) -> Dict[str, Any]:
    return {
        "type": pydanticmodels.StudyType.RUN,
        "initial_data": pydanticmodels.InitialData.VORTEX,
        "time_levels": [4, 8, 16],
        "reference_factor": 4,
    }


study = ModelFactory[pydanticmodels.StudyConfig](pydanticmodels.StudyConfig, _study_defaults)


def _run_defaults(n: int) -> Dict[str, Any]:
    return {
        "mesh": mesh.build(),
        "scheme": scheme.build(),
        "noise": noise.build(),
        "study": study.build(),
        "seeds": pydanticmodels.SeedRange(start=n, stop=n),
        "output_dir": f"results-{n}",
    }


run_config = ModelFactory[pydanticmodels.RunConfig](pydanticmodels.RunConfig, _run_defaults)
