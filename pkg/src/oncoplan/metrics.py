"""Survival evaluation: concordance, Kaplan-Meier, log-rank, recommendation F1.

The chi-square tail probability is computed from a series/continued-fraction
regularized incomplete gamma, so the log-rank p-value has no external
dependency; the test suite cross-checks it against quadrature and a
permutation oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .grammar import TherapyAction

__all__ = [
    "UndefinedMetricError",
    "KMCurve",
    "c_index",
    "km_curve",
    "log_rank",
    "chi2_sf",
    "prf1",
    "micro_prf1",
    "exact_match_rate",
    "km_export_csv",
]


class UndefinedMetricError(ValueError):
    """The metric has no defined value on these inputs."""


def _as_time_event(times, events) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(times, dtype=np.float64)
    e = np.asarray(events, dtype=np.int64)
    if t.shape != e.shape or t.ndim != 1:
        raise ValueError(f"times/events must be matching 1-D arrays, got {t.shape}/{e.shape}")
    if t.size and np.any(t <= 0):
        raise ValueError("times must be strictly positive")
    if not np.all((e == 0) | (e == 1)):
        raise ValueError("event indicators must be 0 or 1")
    return t, e


def c_index(risk, times, events) -> float:
    """Harrell's concordance over comparable pairs (T_i < T_j with event i).

    Ties in the risk score count one half; equal times are not comparable.
    """
    r = np.asarray(risk, dtype=np.float64)
    t, e = _as_time_event(times, events)
    if r.shape != t.shape:
        raise ValueError(f"risk shape {r.shape} != times {t.shape}")
    comparable = (t[:, None] < t[None, :]) & (e[:, None] == 1)
    n_pairs = int(comparable.sum())
    if n_pairs == 0:
        raise UndefinedMetricError("no comparable pairs: concordance undefined")
    higher = (r[:, None] > r[None, :]) & comparable
    tied = (r[:, None] == r[None, :]) & comparable
    return float((higher.sum() + 0.5 * tied.sum()) / n_pairs)


@dataclass(frozen=True)
class KMCurve:
    """Product-limit estimate with Greenwood 95% bands.

    The first point is (0, 1.0); subsequent points sit at distinct event
    times. ``at_risk`` counts subjects under observation just before each
    time.
    """

    times: np.ndarray
    survival: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        s = self.survival
        if np.any(s < 0) or np.any(s > 1):
            raise AssertionError("survival probabilities must lie in [0, 1]")
        if np.any(np.diff(s) > 1e-12):
            raise AssertionError("survival probabilities must be non-increasing")
        if s[0] != 1.0:
            raise AssertionError("survival curve must start at 1.0")


def km_curve(times, events) -> KMCurve:
    t, e = _as_time_event(times, events)
    if t.size == 0:
        raise UndefinedMetricError("empty input: no curve")
    order = np.argsort(t, kind="stable")
    t, e = t[order], e[order]
    event_times = np.unique(t[e == 1])
    stamps = [0.0]
    surv = [1.0]
    at_risk = [t.size]
    d_counts = [0]
    var_sum = 0.0
    lower = [1.0]
    upper = [1.0]
    s = 1.0
    for et in event_times:
        n_i = int(np.sum(t >= et))
        d_i = int(np.sum((t == et) & (e == 1)))
        s *= 1.0 - d_i / n_i
        s = max(s, 0.0)
        stamps.append(float(et))
        surv.append(s)
        at_risk.append(n_i)
        d_counts.append(d_i)
        if n_i > d_i:
            var_sum += d_i / (n_i * (n_i - d_i))
            se = s * math.sqrt(var_sum)
            lower.append(max(0.0, s - 1.96 * se))
            upper.append(min(1.0, s + 1.96 * se))
        else:
            # curve reached zero; the variance expansion is undefined here
            lower.append(0.0)
            upper.append(0.0)
    return KMCurve(
        times=np.asarray(stamps),
        survival=np.asarray(surv),
        at_risk=np.asarray(at_risk, dtype=np.int64),
        events=np.asarray(d_counts, dtype=np.int64),
        lower=np.asarray(lower),
        upper=np.asarray(upper),
    )


def _lower_gamma_series(s: float, x: float) -> float:
    ap = s
    summ = 1.0 / s
    delta = summ
    for _ in range(1000):
        ap += 1.0
        delta *= x / ap
        summ += delta
        if abs(delta) < abs(summ) * 1e-16:
            break
    return summ * math.exp(-x + s * math.log(x) - math.lgamma(s))


def _upper_gamma_cf(s: float, x: float) -> float:
    tiny = 1e-300
    b = x + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 1000):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        de = d * c
        h *= de
        if abs(de - 1.0) < 1e-16:
            break
    return math.exp(-x + s * math.log(x) - math.lgamma(s)) * h


def gammainc_upper_reg(s: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(s, x) by series/continued fraction."""
    if s <= 0 or x < 0:
        raise ValueError(f"Q(s, x) needs s > 0 and x >= 0, got s={s}, x={x}")
    if x == 0.0:
        return 1.0
    if x < s + 1.0:
        return 1.0 - _lower_gamma_series(s, x)
    return _upper_gamma_cf(s, x)


def chi2_sf(x: float, df: int) -> float:
    """Upper-tail probability of the chi-square distribution."""
    if df < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {df}")
    if x < 0:
        return 1.0
    return gammainc_upper_reg(df / 2.0, x / 2.0)


def log_rank(groups: Sequence[tuple]) -> tuple[float, float]:
    """Multi-group log-rank test.

    ``groups`` is a sequence of (times, events) pairs, one per stratum.
    Returns (chi-square statistic, p-value) with groups-1 degrees of freedom.
    """
    if len(groups) < 2:
        raise UndefinedMetricError("log-rank needs at least two groups")
    parsed = []
    for gi, (times, events) in enumerate(groups):
        t, e = _as_time_event(times, events)
        if t.size == 0:
            raise UndefinedMetricError(f"group {gi} is empty")
        parsed.append((t, e))
    g = len(parsed)
    all_times = np.concatenate([t for t, _ in parsed])
    all_events = np.concatenate([e for _, e in parsed])
    event_times = np.unique(all_times[all_events == 1])
    observed = np.zeros(g)
    expected = np.zeros(g)
    cov = np.zeros((g - 1, g - 1))
    for et in event_times:
        n_g = np.array([np.sum(t >= et) for t, _ in parsed], dtype=np.float64)
        d_g = np.array(
            [np.sum((t == et) & (e == 1)) for t, e in parsed], dtype=np.float64
        )
        n = n_g.sum()
        d = d_g.sum()
        if n <= 0:
            continue
        observed += d_g
        expected += d * n_g / n
        if n > 1:
            factor = d * (n - d) / (n - 1.0)
            for i in range(g - 1):
                for j in range(g - 1):
                    same = 1.0 if i == j else 0.0
                    cov[i, j] += factor * (same * n_g[i] / n - n_g[i] * n_g[j] / (n * n))
    diff = (observed - expected)[: g - 1]
    try:
        solved = np.linalg.solve(cov, diff)
    except np.linalg.LinAlgError:
        solved = np.linalg.pinv(cov) @ diff
    stat = float(diff @ solved)
    stat = max(stat, 0.0)
    return stat, chi2_sf(stat, g - 1)


def prf1(predicted: TherapyAction, truth: TherapyAction) -> tuple[float, float, float]:
    """Component-set precision/recall/F1 over active drug/modality identifiers."""
    p_set = set(predicted.validate().active_components())
    g_set = set(truth.validate().active_components())
    if not p_set or not g_set:
        raise UndefinedMetricError("empty component set: precision/recall undefined")
    hit = len(p_set & g_set)
    precision = hit / len(p_set)
    recall = hit / len(g_set)
    f1 = 0.0 if hit == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def micro_prf1(pairs: Iterable[tuple[TherapyAction, TherapyAction]]) -> tuple[float, float, float]:
    """Micro-averaged component P/R/F1 over (predicted, truth) action pairs."""
    hits = p_total = g_total = 0
    n = 0
    for predicted, truth in pairs:
        p_set = set(predicted.validate().active_components())
        g_set = set(truth.validate().active_components())
        hits += len(p_set & g_set)
        p_total += len(p_set)
        g_total += len(g_set)
        n += 1
    if n == 0 or p_total == 0 or g_total == 0:
        raise UndefinedMetricError("no components to aggregate")
    precision = hits / p_total
    recall = hits / g_total
    f1 = 0.0 if hits == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def exact_match_rate(pairs: Iterable[tuple[TherapyAction, TherapyAction]]) -> float:
    """Secondary aggregate: fraction of pairs whose actions match exactly."""
    pairs = list(pairs)
    if not pairs:
        raise UndefinedMetricError("no pairs")
    return sum(1 for p, g in pairs if p == g) / len(pairs)


def km_export_csv(curve: KMCurve, path: str | Path) -> None:
    """Columnar export consumable by external plotting and the UI."""
    path = Path(path)
    lines = ["time_days,survival,at_risk,events,ci_lower,ci_upper"]
    for i in range(curve.times.size):
        lines.append(
            f"{curve.times[i]:g},{curve.survival[i]:.10g},{curve.at_risk[i]},"
            f"{curve.events[i]},{curve.lower[i]:.10g},{curve.upper[i]:.10g}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
