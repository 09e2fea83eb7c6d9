"""Tab-separated result tables and key-value summaries."""

import logging
import math
from pathlib import Path
from typing import Iterable, Sequence

from ..models.pydanticmodels import SampleFailure
from ..util.error import ResultWriteError
from .statistics import ErrorStats, SlopeFit
from .studies import ExceedanceResult

logger = logging.getLogger(__name__)

ERROR_TABLE_HEADER = (
    "seed",
    "level",
    "h",
    "tau",
    "error",
    "pass_reference",
    "pass_run",
    "run_max_l2",
    "reference_max_h1",
    "stop_index",
)
EXCEEDANCE_TABLE_HEADER = ("pair", "level", "h", "tau", "eps", "probability", "count", "n", "ci_low", "ci_high")
FAILURE_TABLE_HEADER = ("seed", "level", "error_code", "message")


def fmt(value) -> str:
    """Shortest text that reads back to the same binary64 for floats."""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_lines(path: Path, lines: Iterable[str]) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            for line in lines:
                fh.write(line + "\n")
    except OSError as exc:
        raise ResultWriteError(str(path), str(exc))
    logger.info(f"Wrote {path}")
    return path


def tsv_row(values: Sequence) -> str:
    return "\t".join(fmt(v) for v in values)


def write_error_table(stats: ErrorStats, path: Path) -> Path:
    def lines():
        yield "\t".join(ERROR_TABLE_HEADER)
        for lv in stats.levels:
            for i, seed in enumerate(lv.seeds):
                yield tsv_row(
                    (
                        int(seed),
                        lv.level,
                        lv.h,
                        lv.tau,
                        float(lv.errors[i]),
                        bool(lv.reference_norms[i] <= stats.R_h),
                        bool(lv.run_max_norms[i] <= stats.R_h_tau),
                        float(lv.run_max_norms[i]),
                        float(lv.reference_norms[i]),
                        int(lv.stop_indices[i]) if lv.stop_indices.size else -1,
                    )
                )

    return write_lines(path, lines())


def _fit_lines(prefix: str, fit: SlopeFit) -> list[str]:
    return [
        f"{prefix}order: {fmt(fit.order)}",
        f"{prefix}intercept: {fmt(fit.intercept)}",
        f"{prefix}fit_residual: {fmt(fit.residual)}",
    ]


def write_summary(stats: ErrorStats, path: Path) -> Path:
    filters = stats.filters()
    lines = [
        f"study: {stats.study}",
        f"step_kind: {stats.step_kind}",
        f"levels: {' '.join(str(lv.level) for lv in stats.levels)}",
        f"step_sizes: {' '.join(fmt(s) for s in stats.step_sizes())}",
        f"samples: {stats.levels[0].n_samples if stats.levels else 0}",
        f"failures: {stats.n_failures}",
        f"R_h: {fmt(stats.R_h)}",
        f"R_h_tau: {fmt(stats.R_h_tau)}",
    ]
    for lv, flt in zip(stats.levels, filters):
        q = lv.quantiles()
        lines += [
            f"level_{lv.level}_rms: {fmt(lv.rms)}",
            f"level_{lv.level}_filtered_rms: {fmt(lv.filtered_rms(flt.passes))}",
            f"level_{lv.level}_passes: {flt.n_pass}",
            f"level_{lv.level}_median: {fmt(q[0.5])}",
            f"level_{lv.level}_q90: {fmt(q[0.9])}",
        ]
    if len(stats.levels) >= 3 and stats.levels[0].n_samples:
        lines += _fit_lines("", stats.fit)
        lines += _fit_lines("filtered_", stats.filtered_fit)
    else:
        lines.append(f"order: {fmt(math.nan)}")
    return write_lines(path, lines)


def write_exceedance_table(result: ExceedanceResult, path: Path) -> Path:
    def lines():
        yield "\t".join(EXCEEDANCE_TABLE_HEADER)
        for k, (lv, curve) in enumerate(zip(result.levels, result.curves)):
            for i, eps in enumerate(curve.eps):
                yield tsv_row(
                    (
                        k,
                        lv.level,
                        curve.h,
                        curve.tau,
                        float(eps),
                        float(curve.probabilities[i]),
                        int(curve.counts[i]),
                        curve.n_samples,
                        float(curve.ci_low[i]),
                        float(curve.ci_high[i]),
                    )
                )

    return write_lines(path, lines())


def write_exceedance_summary(result: ExceedanceResult, path: Path) -> Path:
    lines = [
        "study: exceedance",
        f"pairs: {len(result.curves)}",
        f"samples: {result.curves[0].n_samples if result.curves else 0}",
        f"failures: {len(result.failures)}",
        f"consistent_with_decay: {fmt(result.consistent_with_decay)}",
    ]
    if result.curves:
        lines += [f"alpha: {fmt(result.curves[0].alpha)}", f"beta: {fmt(result.curves[0].beta)}"]
    return write_lines(path, lines)


def write_failures(failures: list[SampleFailure], path: Path) -> Path:
    def lines():
        yield "\t".join(FAILURE_TABLE_HEADER)
        for f in sorted(failures, key=lambda f: (f.seed, f.level)):
            yield tsv_row((f.seed, f.level, f.error_code, f.message.replace("\t", " ")))

    return write_lines(path, lines())


def read_table(path: Path) -> list[dict[str, str]]:
    with Path(path).open(encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        return [dict(zip(header, line.rstrip("\n").split("\t"))) for line in fh if line.strip()]


def read_summary(path: Path) -> dict[str, str]:
    out = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            key, sep, value = line.partition(": ")
            if sep:
                out[key] = value.rstrip("\n")
    return out
