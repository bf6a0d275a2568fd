"""Monte Carlo estimates: self-normalized weight averages with batch-means errors."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from loguru import logger

from core.config import settings


@dataclass(frozen=True)
class Estimate:
    """
    A Monte Carlo value with its batch-means standard error. ``ess`` is the
    smallest Kish effective sample size among the averaged weight sets; an
    estimate is degenerate when that falls below the configured minimum, and
    its standard errors are then nan.
    """

    value: float
    stderr: float
    n_samples: int
    ess: float
    degenerate: bool
    log_value: float
    log_stderr: float

    def to_dict(self) -> dict:
        return asdict(self)

    def z_score(self, log_predicted: float) -> float:
        """Distance between log estimate and a predicted log value in log-stderr units."""
        if self.degenerate or not self.log_stderr > 0:
            return math.nan
        return (self.log_value - log_predicted) / self.log_stderr


def effective_sample_size(log_weights: np.ndarray) -> float:
    """(sum w)^2 / sum w^2, computed stably; -inf weights count as zero."""
    log_weights = np.asarray(log_weights, dtype=float)
    finite = log_weights[np.isfinite(log_weights)]
    if finite.size == 0:
        return 0.0
    w = np.exp(finite - finite.max())
    return float(w.sum() ** 2 / np.sum(w**2))


def _batch_means(values: np.ndarray, n_batches: int) -> np.ndarray:
    return np.array([batch.mean() for batch in np.array_split(values, n_batches)])


def product_estimate(
    terms: Sequence[tuple[np.ndarray, float]],
    n_batches: int | None = None,
    min_effective: float | None = None,
) -> Estimate:
    """
    Estimate prod_i (mean_j exp(l_ij))^{e_i} from per-sample log weights
    l_ij on one shared sample set. Each term is shifted by its largest log
    weight before exponentiating. The standard error of the log estimate comes
    from the delta method on batch means, which keeps the correlation between
    terms computed on the same samples.
    """
    n_batches = n_batches or settings.PHILAB_BATCHES
    min_effective = settings.PHILAB_MIN_EFFECTIVE if min_effective is None else min_effective
    terms = [(np.asarray(lw, dtype=float).ravel(), float(e)) for lw, e in terms]
    n = terms[0][0].size
    if any(lw.size != n for lw, _ in terms):
        raise ValueError("All terms must be evaluated on the same samples")

    ess = min(effective_sample_size(lw) for lw, _ in terms)
    empty = [e for lw, e in terms if not np.isfinite(lw).any()]
    if empty:
        log_value = -math.inf if all(e > 0 for e in empty) else math.nan
        value = 0.0 if log_value == -math.inf else math.nan
        return Estimate(value, math.nan, n, ess, True, log_value, math.nan)

    log_value = 0.0
    linearized = np.zeros(min(n_batches, n))
    for lw, e in terms:
        shift = lw[np.isfinite(lw)].max()
        w = np.exp(lw - shift)
        mean = w.mean()
        log_value += e * (shift + math.log(mean))
        linearized += e * (_batch_means(w, linearized.size) / mean - 1.0)
    logger.debug(f"product_estimate: {len(terms)} terms, {n} samples, ess {ess:.1f}")

    with np.errstate(over="ignore"):
        value = float(np.exp(log_value))
    degenerate = ess < min_effective
    if degenerate or linearized.size < 2:
        return Estimate(value, math.nan, n, ess, True, log_value, math.nan)
    log_stderr = float(np.std(linearized, ddof=1) / math.sqrt(linearized.size))
    return Estimate(value, value * log_stderr, n, ess, False, log_value, log_stderr)


def ratio_estimate(
    log_num: np.ndarray,
    log_den: np.ndarray,
    n_batches: int | None = None,
    min_effective: float | None = None,
) -> Estimate:
    """sum exp(log_num) / sum exp(log_den) over a shared sample set."""
    return product_estimate([(log_num, 1.0), (log_den, -1.0)], n_batches, min_effective)


def mean_estimate(values: np.ndarray, n_batches: int | None = None) -> Estimate:
    """Plain sample mean with a batch-means standard error."""
    values = np.asarray(values, dtype=float).ravel()
    n_batches = min(n_batches or settings.PHILAB_BATCHES, values.size)
    value = float(values.mean())
    if n_batches < 2:
        return Estimate(value, math.nan, values.size, float(values.size), True, math.nan, math.nan)
    stderr = float(np.std(_batch_means(values, n_batches), ddof=1) / math.sqrt(n_batches))
    log_value = math.log(value) if value > 0 else math.nan
    log_stderr = stderr / value if value > 0 else math.nan
    return Estimate(value, stderr, values.size, float(values.size), False, log_value, log_stderr)


def summarize_estimates(estimates: Sequence[Estimate], log_predicted: Sequence[float]) -> dict:
    """Aggregate agreement between a column of estimates and their predictions."""
    usable = [(e, p) for e, p in zip(estimates, log_predicted) if not e.degenerate and math.isfinite(p)]
    deviations = [abs(e.log_value - p) for e, p in usable]
    scores = [abs(e.z_score(p)) for e, p in usable if math.isfinite(e.z_score(p))]
    summary = {
        "rows": len(estimates),
        "degenerate_rows": sum(e.degenerate for e in estimates),
        "max_log_deviation": max(deviations, default=math.nan),
        "last_log_deviation": deviations[-1] if deviations else math.nan,
        "max_abs_z": max(scores, default=math.nan),
    }
    logger.info(
        f"{summary['rows']} rows, {summary['degenerate_rows']} degenerate, "
        f"last |log deviation| {summary['last_log_deviation']:.4f}"
    )
    return summary
