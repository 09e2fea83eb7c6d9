"""Static SVG plots of study results; no display server is used."""

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..util.error import ResultWriteError  # noqa: E402
from .statistics import ErrorStats  # noqa: E402
from .studies import ExceedanceResult  # noqa: E402

logger = logging.getLogger(__name__)

# fixed element ids and no timestamp keep repeated runs byte-identical
plt.rcParams["svg.hashsalt"] = "sns-taylor-hood"
_SVG_METADATA = {"Date": None}


def _save(fig, path: Path) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata=_SVG_METADATA, bbox_inches="tight")
    except OSError as exc:
        raise ResultWriteError(str(path), str(exc))
    finally:
        plt.close(fig)
    logger.info(f"Wrote {path}")
    return path


def plot_convergence(stats: ErrorStats, path: Path) -> Path:
    steps = np.array(stats.step_sizes())
    rms = np.array([lv.rms for lv in stats.levels])
    filtered = np.array([lv.filtered_rms(f.passes) for lv, f in zip(stats.levels, stats.filters())])

    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.loglog(steps, rms, "o-", label="RMS error")
    if np.all(np.isfinite(filtered)) and not np.allclose(filtered, rms):
        ax.loglog(steps, filtered, "s--", label="filtered RMS")
    fit = stats.fit
    if fit.ok:
        ax.loglog(
            steps,
            2.0**fit.intercept * steps**fit.order,
            "k:",
            label=f"fit, order {fit.order:.2f}",
        )
    symbol = r"$\tau$" if stats.step_kind == "tau" else r"$h$"
    ax.set_xlabel(symbol)
    ax.set_ylabel(r"$(E \max_j \|\cdot\|_{L^2}^2)^{1/2}$")
    ax.set_title(f"{stats.study}: {stats.levels[0].n_samples if stats.levels else 0} samples")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_exceedance(result: ExceedanceResult, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for lv, curve in zip(result.levels, result.curves):
        label = f"level {lv.level}, h={curve.h:.3g}, tau={curve.tau:.3g}"
        ax.semilogx(curve.eps, curve.probabilities, "o-", label=label)
        ax.fill_between(curve.eps, curve.ci_low, curve.ci_high, alpha=0.2)
    ax.set_xlabel(r"$\varepsilon$")
    ax.set_ylabel(r"$P[\max_j \|e_j\|^2 / (h^\alpha + \tau^\beta) \geq \varepsilon]$")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    return _save(fig, path)
