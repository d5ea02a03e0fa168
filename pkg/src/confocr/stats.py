"""Significance and correlation statistics for experiment reports.

The two-sample Kolmogorov-Smirnov test compares F1 samples across repeated
training runs. For the small sample counts typical here (10 repeats per
arm) the p-value is computed exactly by enumerating every assignment of the
pooled values to the two samples; larger samples fall back to the asymptotic
Kolmogorov distribution with the usual effective-sample-size correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.special import betainc

# Enumerating C(n+m, n) splits is exact but exponential; this cap admits
# n = m = 10 (184756 splits) and a bit beyond.
MAX_EXACT_SPLITS = 250_000


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float
    method: str  # "exact" or "asymptotic"


@dataclass(frozen=True)
class PearsonResult:
    r: float
    p_value: float


def _ecdf_table(pooled_sorted: np.ndarray) -> np.ndarray:
    """Indices into the sorted pool where a distinct value ends (ECDF steps)."""
    n = len(pooled_sorted)
    last = np.ones(n, dtype=bool)
    last[:-1] = pooled_sorted[1:] != pooled_sorted[:-1]
    return np.flatnonzero(last)


def ks_statistic(a: Sequence[float], b: Sequence[float]) -> float:
    """sup |ECDF_a - ECDF_b|, evaluated at every distinct pooled value."""
    a_arr = np.sort(np.asarray(a, dtype=np.float64))
    b_arr = np.sort(np.asarray(b, dtype=np.float64))
    if a_arr.size == 0 or b_arr.size == 0:
        raise ValueError("KS test requires two nonempty samples")
    values = np.unique(np.concatenate([a_arr, b_arr]))
    cdf_a = np.searchsorted(a_arr, values, side="right") / a_arr.size
    cdf_b = np.searchsorted(b_arr, values, side="right") / b_arr.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def _kolmogorov_sf(lam: float) -> float:
    """Survival function of the Kolmogorov distribution, Q(lambda)."""
    if lam <= 0.0:
        return 1.0
    total = 0.0
    for r in range(1, 101):
        term = math.exp(-2.0 * (r * lam) ** 2)
        total += -term if r % 2 == 0 else term
        if term < 1e-16:
            break
    return min(1.0, max(0.0, 2.0 * total))


def _asymptotic_p(d: float, n: int, m: int) -> float:
    en = math.sqrt(n * m / (n + m))
    # Stephens' small-sample correction to the asymptotic argument.
    return _kolmogorov_sf((en + 0.12 + 0.11 / en) * d)


def _exact_p(pooled: np.ndarray, n: int, d_observed: float) -> float:
    """P(D >= observed) over all assignments of the pooled values.

    Exchangeability under the null makes every index subset of the pooled
    (sorted) multiset equally likely to be sample A; ties are handled
    naturally because the ECDF difference is only read at the last index of
    each tie group.
    """
    pooled_sorted = np.sort(pooled)
    total = len(pooled_sorted)
    m = total - n
    steps = _ecdf_table(pooled_sorted)
    combos = np.fromiter(
        (i for combo in combinations(range(total), n) for i in combo),
        dtype=np.intp,
    ).reshape(-1, n)
    membership = np.zeros((combos.shape[0], total), dtype=np.int8)
    membership[np.arange(combos.shape[0])[:, None], combos] = 1
    count_a = np.cumsum(membership, axis=1)[:, steps].astype(np.float64)
    count_all = (steps + 1).astype(np.float64)
    diffs = np.abs(count_a / n - (count_all - count_a) / m)
    d_all = diffs.max(axis=1)
    return float(np.mean(d_all >= d_observed - 1e-12))


def ks_two_sample(
    a: Sequence[float],
    b: Sequence[float],
    method: str = "auto",
    max_exact_splits: int = MAX_EXACT_SPLITS,
) -> KsResult:
    """Two-sided two-sample Kolmogorov-Smirnov test.

    method "auto" enumerates all splits exactly whenever C(n+m, n) is within
    max_exact_splits and uses the asymptotic distribution otherwise; "exact"
    and "asymptotic" force one path.
    """
    if method not in ("auto", "exact", "asymptotic"):
        raise ValueError(f"unknown method {method!r}")
    a_arr = np.asarray(a, dtype=np.float64)
    b_arr = np.asarray(b, dtype=np.float64)
    d = ks_statistic(a_arr, b_arr)
    n, m = a_arr.size, b_arr.size
    n_splits = math.comb(n + m, n)
    use_exact = method == "exact" or (method == "auto" and n_splits <= max_exact_splits)
    if method == "exact" and n_splits > max_exact_splits:
        raise ValueError(
            f"exact KS p-value would enumerate {n_splits} splits (cap {max_exact_splits})"
        )
    if use_exact:
        p = _exact_p(np.concatenate([a_arr, b_arr]), n, d)
        return KsResult(statistic=d, p_value=p, method="exact")
    return KsResult(statistic=d, p_value=_asymptotic_p(d, n, m), method="asymptotic")


def pearson(x: Sequence[float], y: Sequence[float]) -> PearsonResult:
    """Sample Pearson correlation with a two-sided t-distribution p-value."""
    x_arr = np.asarray(x, dtype=np.float64)
    y_arr = np.asarray(y, dtype=np.float64)
    if x_arr.size != y_arr.size:
        raise ValueError(f"length mismatch: {x_arr.size} vs {y_arr.size}")
    if x_arr.size < 3:
        raise ValueError("Pearson correlation requires at least 3 points")
    dx = x_arr - x_arr.mean()
    dy = y_arr - y_arr.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("Pearson correlation is undefined for a zero-variance sample")
    r = float(np.dot(dx, dy) / math.sqrt(sxx * syy))
    r = max(-1.0, min(1.0, r))
    df = x_arr.size - 2
    if abs(r) == 1.0:
        p = 0.0
    else:
        t_sq = r * r * df / (1.0 - r * r)
        p = float(betainc(df / 2.0, 0.5, df / (df + t_sq)))
    return PearsonResult(r=r, p_value=p)


@dataclass(frozen=True)
class RunComparison:
    """KS comparison of two repeated-run score samples."""

    mean_a: float
    std_a: float
    mean_b: float
    std_b: float
    ks: KsResult
    significant: bool


def aggregate_runs(
    f1_scores_a: Sequence[float],
    f1_scores_b: Sequence[float],
    alpha_sig: float = 0.05,
) -> RunComparison:
    """Compare two samples of repeat F1 scores; significant iff p < alpha_sig."""
    a_arr = np.asarray(f1_scores_a, dtype=np.float64)
    b_arr = np.asarray(f1_scores_b, dtype=np.float64)
    ks = ks_two_sample(a_arr, b_arr)
    return RunComparison(
        mean_a=float(a_arr.mean()),
        std_a=float(a_arr.std(ddof=1)) if a_arr.size > 1 else 0.0,
        mean_b=float(b_arr.mean()),
        std_b=float(b_arr.std(ddof=1)) if b_arr.size > 1 else 0.0,
        ks=ks,
        significant=bool(ks.p_value < alpha_sig),
    )
