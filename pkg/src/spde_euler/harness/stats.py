"""Ensemble statistics: confidence intervals, ratio tests and law distances."""

from __future__ import annotations

import dataclasses

import numpy as np
import scipy.stats

Z95 = 1.959963984540054
# two-sample KS critical value at the 5% level is about 1.36 sqrt(2/n)
KS_95 = 1.358


@dataclasses.dataclass(frozen=True)
class MeanCI:
    n: int
    mean: float
    stderr: float

    @property
    def low(self) -> float:
        return self.mean - Z95 * self.stderr

    @property
    def high(self) -> float:
        return self.mean + Z95 * self.stderr


def mean_ci(x) -> MeanCI:
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        return MeanCI(0, float("nan"), float("nan"))
    se = float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0
    return MeanCI(int(x.size), float(np.mean(x)), se)


def ratio_upper(a: MeanCI, b: MeanCI) -> tuple[float, float]:
    """``b.mean / a.mean`` and the upper end of its 95% interval (delta method,
    treating the two means as independent, which is conservative for
    positively coupled samples)."""
    if a.mean == 0:
        return (0.0, 0.0) if b.mean == 0 else (float("inf"), float("inf"))
    r = b.mean / a.mean
    rel = np.hypot(a.stderr / a.mean, b.stderr / b.mean if b.mean else 0.0)
    return float(r), float(r + Z95 * abs(r) * rel)


def law_distance(a, b) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic and empirical 1-Wasserstein distance."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    ks = float(scipy.stats.ks_2samp(a, b, method="asymp").statistic)
    w1 = float(scipy.stats.wasserstein_distance(a, b))
    return ks, w1


def ks_buffer(n_a: int, n_b: int) -> float:
    return KS_95 * float(np.sqrt((n_a + n_b) / (n_a * n_b)))
