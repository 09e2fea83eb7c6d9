import functools
import logging
import sys
import uuid
from datetime import datetime, timezone
from typing import Any, Callable, Dict, Optional, TypeVar

import click
import yaml
from pydantic import ValidationError as PydanticValidationError

F = TypeVar("F", bound=Callable[..., Any])

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_STORAGE = 4


class BaseSolverError(Exception):
    exit_code: int = EXIT_UNEXPECTED

    def __init__(
        self,
        message: str,
        detail: Optional[str] = None,
        error_code: Optional[str] = None,
        metadata: Optional[Dict[str, Any]] = None,
    ):
        self.message = message  # Short message printed to stderr
        self.detail = detail  # Internal detail (log only)
        self.error_code = error_code
        self.metadata = metadata or {}
        self.error_id = str(uuid.uuid4())
        self.timestamp = datetime.now(timezone.utc)
        super().__init__(self.message)


class ConfigurationError(BaseSolverError):
    exit_code = EXIT_CONFIG

    def __init__(self, message: str, detail: Optional[str] = None, **kwargs: Any):
        kwargs.setdefault("error_code", "CONFIG_ERROR")
        super().__init__(message, detail=detail, **kwargs)


class NumericalError(BaseSolverError):
    exit_code = EXIT_NUMERICAL


class StorageError(BaseSolverError):
    exit_code = EXIT_STORAGE


class ValidationError(ConfigurationError):
    def __init__(self, message: str, fields: Optional[Dict] = None):
        super().__init__(
            message,
            error_code="VALIDATION_ERROR",
            metadata={"fields": fields} if fields else {},
        )


class NotFoundError(ConfigurationError):
    def __init__(self, resource: str, identifier: Any):
        super().__init__(
            f"{resource} not found",
            error_code="NOT_FOUND",
            metadata={"resource": resource, "id": str(identifier)},
        )


class SolverFailure(NumericalError):
    def __init__(self, operation: str, detail: str, **metadata: Any):
        super().__init__(
            "Linear solve failed",
            detail=f"Operation '{operation}' failed: {detail}",
            error_code="SOLVER_FAILURE",
            metadata={"operation": operation, **metadata},
        )


class NewtonDivergence(NumericalError):
    def __init__(self, last_residual: float, iterations: int, **metadata: Any):
        super().__init__(
            f"Newton iteration did not converge after {iterations} iterations",
            detail=f"last residual {last_residual:.3e}",
            error_code="NEWTON_DIVERGENCE",
            metadata={
                "last_residual": last_residual,
                "iterations": iterations,
                **metadata,
            },
        )
        self.last_residual = last_residual
        self.iterations = iterations


class PreconditionViolation(NumericalError):
    def __init__(self, operation: str, detail: str):
        super().__init__(
            f"Precondition of '{operation}' violated",
            detail=detail,
            error_code="PRECONDITION",
            metadata={"operation": operation},
        )


class PointOutsideDomainError(NumericalError):
    def __init__(self, points: Any):
        super().__init__(
            "Point lies outside the meshed domain",
            error_code="POINT_OUTSIDE",
            metadata={"points": str(points)},
        )


class CheckFailed(NumericalError):
    def __init__(self, check: str, measured: Any):
        super().__init__(
            f"Check '{check}' failed",
            detail=f"measured {measured}",
            error_code="CHECK_FAILED",
            metadata={"check": check, "measured": measured},
        )


class SampleFailures(NumericalError):
    def __init__(self, study: str, n_failures: int, n_samples: int):
        super().__init__(
            f"{n_failures} of {n_samples} samples failed",
            detail=f"failed samples listed in the {study} failure table",
            error_code="SAMPLE_FAILURES",
            metadata={"study": study, "failures": n_failures},
        )


class DatabaseOperationError(StorageError):
    def __init__(self, operation: str, detail: str):
        super().__init__(
            "Trajectory store operation failed",
            detail=f"Operation '{operation}' failed: {detail}",
            error_code="DB_ERROR",
            metadata={"operation": operation},
        )


class ResultWriteError(StorageError):
    def __init__(self, path: str, detail: str):
        super().__init__(
            f"Could not write {path}",
            detail=detail,
            error_code="IO_ERROR",
            metadata={"path": path},
        )


def validation_error_from_pydantic(exc: PydanticValidationError) -> ValidationError:
    # Create readable error message
    field_errors = {}
    for err in exc.errors():
        field = ".".join(str(part) for part in err["loc"]) or "config"
        field_errors[field] = err["msg"]

    return ValidationError("Configuration validation failed", field_errors)


def with_step(exc: NumericalError, step: int) -> NumericalError:
    exc.metadata["step"] = step
    return exc


def error_boundary(func: F) -> F:
    """Map raised errors to the documented exit codes for a click command."""

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        logger = logging.getLogger(__name__)
        try:
            return func(*args, **kwargs)
        except PydanticValidationError as exc:
            error = validation_error_from_pydantic(exc)
        except yaml.YAMLError as exc:
            error = ConfigurationError("Configuration file is not valid YAML", str(exc))
        except BaseSolverError as exc:
            error = exc
        except click.exceptions.Exit:
            raise
        except Exception:
            error_id = str(uuid.uuid4())
            logger.exception(
                f"Unhandled Exception [{error_id}]", extra={"error_id": error_id}
            )
            click.echo("error[INTERNAL_ERROR] An unexpected error occurred", err=True)
            sys.exit(EXIT_UNEXPECTED)

        # Log based on error type
        if isinstance(error, ConfigurationError):
            logger.warning(
                f"Configuration Error [{error.error_id}]: {error.message}",
                extra={"error_id": error.error_id, "metadata": error.metadata},
            )
        else:
            logger.error(
                f"{type(error).__name__} [{error.error_id}]: {error.detail or error.message}",
                extra={"error_id": error.error_id, "metadata": error.metadata},
            )

        line = f"error[{error.error_code}] {error.message}"
        if error.metadata:
            line += f" {error.metadata}"
        click.echo(line, err=True)
        sys.exit(error.exit_code)

    return wrapper  # type: ignore[return-value]
