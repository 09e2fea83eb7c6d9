from enum import Enum
from fractions import Fraction
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# === Enums ===


class Domain(str, Enum):
    SQUARE = "square"
    POLYGON_DISK = "polygon-disk"


class NoiseFamily(str, Enum):
    DEFAULT = "default"
    DIVERGENCE_FREE = "divergence_free"


class StudyType(str, Enum):
    VERIFY = "verify"
    RUN = "run"
    CONVERGE_TIME = "converge-time"
    CONVERGE_SPACE = "converge-space"
    EXCEEDANCE = "exceedance"


class InitialData(str, Enum):
    ZERO = "zero"
    VORTEX = "vortex"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# === Config sections ===


class MeshConfig(_Strict):
    """Base triangulation and how many uniform refinements to apply."""

    domain: Domain = Domain.SQUARE
    n: int = Field(default=2, ge=1, description="cells per side (square) or boundary segments (disk)")
    level: int = Field(default=0, ge=0, le=6)

    @model_validator(mode="after")
    def disk_needs_eight_segments(self):
        if self.domain == Domain.POLYGON_DISK and self.n < 8:
            raise ValueError("polygon-disk needs at least 8 boundary segments")
        return self


class SchemeConfig(_Strict):
    T: float = Field(default=1.0, gt=0)
    J: int = Field(default=16, ge=1)
    newton_tol: float = Field(default=1e-10, gt=0, lt=1e-2)
    newton_max_iters: int = Field(default=20, ge=1)
    max_halvings: int = Field(default=8, ge=0)
    nonlinear_solver: Literal["newton", "picard"] = "newton"
    include_convection: bool = True
    store_pressure: bool = False

    @property
    def tau(self) -> float:
        return float(Fraction(self.T).limit_denominator(10**12) / self.J)

    def time(self, j: int) -> float:
        return float(Fraction(self.T).limit_denominator(10**12) * j / self.J)

    def refined(self, factor: int) -> "SchemeConfig":
        return self.model_copy(update={"J": self.J * factor})


class NoiseConfig(_Strict):
    family: NoiseFamily = NoiseFamily.DEFAULT
    N: int = Field(default=16, ge=1)
    c_scale: float = Field(default=0.5, ge=0)
    s: float = Field(default=1.0)

    @field_validator("s")
    def decay_summable(cls, v):
        if v <= 0.5:
            raise ValueError("mode decay s must exceed 1/2 for summable squared sums")
        return v


class StudyConfig(_Strict):
    type: StudyType = StudyType.RUN
    initial_data: InitialData = InitialData.VORTEX
    initial_amplitude: float = Field(default=1.0, ge=0)
    time_levels: list[int] = Field(default_factory=lambda: [8, 16, 32])
    reference_factor: int = Field(default=4, ge=2)
    space_levels: int = Field(default=3, ge=3)
    reference_levels: int = Field(default=1, ge=1)
    R_h: float = Field(default=float("inf"), gt=0)
    R_h_tau: float = Field(default=float("inf"), gt=0)

    @field_validator("time_levels")
    def strictly_increasing(cls, v: list[int]):
        if len(v) < 3:
            raise ValueError("at least 3 time levels are needed for a slope fit")
        if any(a >= b for a, b in zip(v, v[1:])) or v[0] < 1:
            raise ValueError("time levels must be positive and strictly increasing")
        return v


class ExceedanceConfig(_Strict):
    alpha: float = 2.5
    beta: float = 0.5
    eps: list[float] = Field(default_factory=lambda: [0.01, 0.1, 1.0, 10.0, 100.0])
    pairs: list[tuple[int, int]] = Field(
        default_factory=lambda: [(0, 8), (1, 16)],
        description="(mesh level, J) pairs, each with tau <= h",
    )
    reference: tuple[int, int] = (2, 64)

    @field_validator("alpha")
    def alpha_range(cls, v):
        if not 2 < v < 3:
            raise ValueError("alpha must lie in (2, 3)")
        return v

    @field_validator("beta")
    def beta_range(cls, v):
        if not 0 < v < 1:
            raise ValueError("beta must lie in (0, 1)")
        return v

    @field_validator("eps")
    def eps_positive(cls, v: list[float]):
        if not v or any(e <= 0 for e in v):
            raise ValueError("eps grid must be non-empty and positive")
        return sorted(v)


class SeedRange(_Strict):
    start: int = Field(default=0, ge=0)
    stop: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def non_empty(self):
        if self.stop < self.start:
            raise ValueError("seed range is empty")
        return self

    @classmethod
    def parse(cls, text: str) -> "SeedRange":
        start, sep, stop = text.partition("..")
        if not sep:
            return cls(start=int(start), stop=int(start))
        return cls(start=int(start), stop=int(stop))

    def seeds(self) -> list[int]:
        return list(range(self.start, self.stop + 1))


class RunConfig(_Strict):
    mesh: MeshConfig = Field(default_factory=MeshConfig)
    scheme: SchemeConfig = Field(default_factory=SchemeConfig)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    study: StudyConfig = Field(default_factory=StudyConfig)
    exceedance: ExceedanceConfig = Field(default_factory=ExceedanceConfig)
    seeds: SeedRange = Field(default_factory=SeedRange)
    output_dir: str = "results"
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def temporal_reference_factor(self):
        if self.study.type == StudyType.CONVERGE_TIME and self.study.reference_factor < 4:
            raise ValueError(
                f"reference must be at least 4x finer than J={self.study.time_levels[-1]} in a temporal study"
            )
        return self

    model_config = ConfigDict(
        extra="forbid",
        frozen=True,
        json_schema_extra={
            "examples": [
                {
                    "mesh": {"domain": "polygon-disk", "n": 8, "level": 1},
                    "scheme": {"T": 1.0, "J": 64},
                    "noise": {"family": "default", "N": 16, "c_scale": 0.5},
                    "study": {"type": "converge-time", "time_levels": [64, 128, 256]},
                    "seeds": {"start": 0, "stop": 63},
                }
            ]
        },
    )


# === Reports ===


class Violation(BaseModel):
    rule: str
    detail: str
    triangles: list[int] = Field(default_factory=list)


class ValidationReport(BaseModel):
    violations: list[Violation] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def rules(self) -> set[str]:
        return {v.rule for v in self.violations}


class StepReport(BaseModel):
    iterations: int
    residuals: list[float]
    converged: bool
    divergence_norm: float
    halvings: int = 0
    solver: Literal["newton", "picard"] = "newton"

    @property
    def final_residual(self) -> float:
        return self.residuals[-1]


class CheckResult(BaseModel):
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""


class CheckReport(BaseModel):
    checks: list[CheckResult] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failing(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]


class SampleFailure(BaseModel):
    seed: int
    level: int
    error_code: str
    message: str
    metadata: dict[str, Any] = Field(default_factory=dict)
