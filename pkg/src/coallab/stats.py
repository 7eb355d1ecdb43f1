"""Statistical machinery: empirical tests, reports and their serialization.

All p-values are asymptotic (Kolmogorov distribution for KS statistics,
chi-square for goodness of fit); experiment sample sizes are large enough
for that to be accurate at the loose thresholds used by the verification
suite.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special, stats as spstats


@dataclass
class EmpiricalSample:
    """A sample of real values, optionally weighted."""

    values: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError("sample must be a nonempty 1-d array")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float)
            if self.weights.shape != self.values.shape:
                raise ValueError("weights must match values")
            if np.any(self.weights < 0) or self.weights.sum() <= 0:
                raise ValueError("weights must be nonnegative with positive sum")

    @property
    def n(self) -> int:
        return self.values.size


def _as_sample(x) -> EmpiricalSample:
    return x if isinstance(x, EmpiricalSample) else EmpiricalSample(np.asarray(x, dtype=float))


def kolmogorov_sf(x: float) -> float:
    """Survival function of the Kolmogorov distribution, 2*sum (-1)^(k-1) exp(-2 k^2 x^2)."""
    return float(special.kolmogorov(x))


def ks_one_sample(sample, cdf: Callable[[np.ndarray], np.ndarray]) -> tuple[float, float]:
    """One-sample KS statistic D = sup |ECDF - cdf| and its asymptotic p-value.

    The cdf argument is applied vectorized to the sorted sample; weights,
    when present, define a weighted ECDF.
    """
    s = _as_sample(sample)
    order = np.argsort(s.values, kind="stable")
    x = s.values[order]
    if s.weights is None:
        cum_hi = np.arange(1, x.size + 1) / x.size
        cum_lo = np.arange(0, x.size) / x.size
        n_eff = x.size
    else:
        w = s.weights[order]
        cw = np.cumsum(w) / w.sum()
        cum_hi = cw
        cum_lo = np.concatenate(([0.0], cw[:-1]))
        n_eff = w.sum() ** 2 / np.square(w).sum()
    f = np.asarray(cdf(x), dtype=float)
    d = max(np.max(cum_hi - f), np.max(f - cum_lo))
    p = kolmogorov_sf(math.sqrt(n_eff) * d)
    return float(d), p


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample KS statistic with effective size na*nb/(na+nb) in the p-value."""
    sa, sb = _as_sample(a), _as_sample(b)
    xa, xb = np.sort(sa.values), np.sort(sb.values)
    grid = np.concatenate([xa, xb])
    fa = np.searchsorted(xa, grid, side="right") / xa.size
    fb = np.searchsorted(xb, grid, side="right") / xb.size
    d = float(np.max(np.abs(fa - fb)))
    n_eff = xa.size * xb.size / (xa.size + xb.size)
    return d, kolmogorov_sf(math.sqrt(n_eff) * d)


def chi_square_gof(observed: Sequence[float], expected: Sequence[float]) -> tuple[float, int, float]:
    """Pearson chi-square statistic, degrees of freedom and p-value."""
    obs = np.asarray(observed, dtype=float)
    exp = np.asarray(expected, dtype=float)
    if obs.shape != exp.shape or obs.size < 2:
        raise ValueError("observed and expected must have equal length >= 2")
    if np.any(exp <= 0):
        raise ValueError("expected counts must be positive")
    stat = float(np.sum((obs - exp) ** 2 / exp))
    df = obs.size - 1
    return stat, df, float(spstats.chi2.sf(stat, df))


def regression_slope(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Ordinary least squares slope and its standard error."""
    xv = np.asarray(x, dtype=float)
    yv = np.asarray(y, dtype=float)
    if xv.size != yv.size or xv.size < 3:
        raise ValueError("need at least 3 paired points")
    sxx = float(np.sum((xv - xv.mean()) ** 2))
    if sxx == 0.0:
        raise ValueError("x values must not all be equal")
    slope = float(np.sum((xv - xv.mean()) * (yv - yv.mean())) / sxx)
    intercept = yv.mean() - slope * xv.mean()
    rss = float(np.sum((yv - intercept - slope * xv) ** 2))
    se = math.sqrt(max(rss, 0.0) / (xv.size - 2) / sxx)
    return slope, se


# --- reports ---------------------------------------------------------------

P_THRESHOLD = 0.001  # distributional tests pass when p exceeds this


@dataclass
class TestReport:
    """Named verdict of one statistical check."""

    name: str
    statistic: float
    p_value: float | None
    tolerance_gap: float | None
    passed: bool
    seed: int
    replicates: int
    config: dict = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        return {
            "name": self.name,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "tolerance_gap": self.tolerance_gap,
            "pass": self.passed,
            "seed": self.seed,
            "replicates": self.replicates,
            "config": self.config,
        }


def p_value_report(name: str, statistic: float, p: float, seed: int, replicates: int,
                   threshold: float = P_THRESHOLD, **config) -> TestReport:
    return TestReport(name, float(statistic), float(p), None, p > threshold,
                      seed, replicates, dict(config, threshold=threshold))


def tolerance_report(name: str, statistic: float, target: float, tolerance: float,
                     seed: int, replicates: int, **config) -> TestReport:
    gap = float(statistic - target)
    return TestReport(name, float(statistic), None, gap, abs(gap) <= tolerance,
                      seed, replicates, dict(config, target=target, tolerance=tolerance))


def reports_to_json(reports: Sequence[TestReport]) -> str:
    return json.dumps([r.to_json_obj() for r in reports], indent=2, sort_keys=True) + "\n"


CSV_COLUMNS = ["name", "statistic", "p_value", "tolerance_gap", "pass", "seed", "replicates"]


def reports_to_csv(reports: Sequence[TestReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(CSV_COLUMNS)
    for r in reports:
        writer.writerow([r.name, repr(r.statistic),
                         "" if r.p_value is None else repr(r.p_value),
                         "" if r.tolerance_gap is None else repr(r.tolerance_gap),
                         r.passed, r.seed, r.replicates])
    return buf.getvalue()
