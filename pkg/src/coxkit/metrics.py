"""Evaluation metrics for survival models: Harrell's concordance index with
bootstrap confidence intervals, Kaplan-Meier curves with Greenwood bands,
the two-group log-rank test, median survival, and centered risk MSE.

All functions are pure and operate on plain arrays.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

_CHUNK = 256  # row block size for the pairwise concordance scan


@dataclass(frozen=True)
class KaplanMeierCurve:
    """Product-limit survival estimate evaluated at the observed event times."""

    event_times: np.ndarray
    survival: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    at_risk: np.ndarray
    deaths: np.ndarray


@dataclass(frozen=True)
class LogRankResult:
    statistic: float
    p_value: float


@dataclass(frozen=True)
class BootstrapInterval:
    lower: float
    upper: float
    redraws: int = 0


def _validate_triples(times, events, risks):
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=np.int64)
    risks = np.asarray(risks, dtype=float)
    if not times.shape == events.shape == risks.shape or times.ndim != 1:
        raise ValueError("times, events, risks must be equal-length 1-d arrays")
    return times, events, risks


def concordance_index(times, events, risks) -> float:
    """Fraction of comparable patient pairs ranked correctly by risk.

    A pair is comparable when the patient with the strictly earlier time had
    an observed event, or when times tie exactly and exactly one of the two
    is an event (the event is known to precede the censoring). Concordant
    means the earlier death carries the higher predicted risk; exact risk
    ties score 0.5. Pairs of events at identical times are not comparable.
    """
    times, events, risks = _validate_triples(times, events, risks)
    n = times.shape[0]
    numerator = 0.0
    comparable = 0
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        ti = times[start:stop, None]
        ei = events[start:stop, None]
        ri = risks[start:stop, None]
        later = times[None, :] > ti
        tied_time = times[None, :] == ti
        usable = (ei == 1) & (later | (tied_time & (events[None, :] == 0)))
        if not usable.any():
            continue
        score = np.where(
            ri > risks[None, :], 1.0, np.where(ri == risks[None, :], 0.5, 0.0)
        )
        numerator += float(score[usable].sum())
        comparable += int(usable.sum())
    if comparable == 0:
        raise ValueError("no comparable pairs")
    return numerator / comparable


def bootstrap_ci(
    times,
    events,
    risks,
    n_replicates: int = 200,
    alpha: float = 0.05,
    seed: int = 0,
    max_retries: int = 100,
) -> BootstrapInterval:
    """Percentile bootstrap interval for the concordance index.

    Resamples (time, event, risk) triples jointly with replacement; a
    resample with no comparable pairs is redrawn (up to `max_retries` times
    in a row) and counted in the returned diagnostics.
    """
    times, events, risks = _validate_triples(times, events, risks)
    if n_replicates < 2:
        raise ValueError("n_replicates must be >= 2")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    n = times.shape[0]
    values = np.empty(n_replicates)
    redraws = 0
    for b in range(n_replicates):
        for attempt in range(max_retries + 1):
            idx = rng.integers(0, n, size=n)
            try:
                values[b] = concordance_index(times[idx], events[idx], risks[idx])
                break
            except ValueError:
                redraws += 1
        else:
            raise RuntimeError(
                f"persistent degenerate resamples: {max_retries} consecutive "
                "redraws without a comparable pair"
            )
    lower, upper = np.percentile(values, [100.0 * alpha / 2, 100.0 * (1 - alpha / 2)])
    return BootstrapInterval(lower=float(lower), upper=float(upper), redraws=redraws)


def kaplan_meier(
    times, events, alpha: float = 0.05, log_transform: bool = True
) -> KaplanMeierCurve:
    """Product-limit estimate with Greenwood confidence bands.

    Bands are normal intervals on log S(t) by default (`log_transform=False`
    gives plain linear bands); both are clipped to [0, 1]. Where the estimate
    hits zero the band collapses to zero.
    """
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=np.int64)
    if times.ndim != 1 or times.shape != events.shape or times.size == 0:
        raise ValueError("times and events must be equal-length non-empty arrays")

    ts = np.sort(times)
    event_times, deaths = np.unique(times[events == 1], return_counts=True)
    if event_times.size == 0:
        empty = np.array([])
        return KaplanMeierCurve(empty, empty, empty, empty, empty.astype(int), empty.astype(int))

    at_risk = ts.size - np.searchsorted(ts, event_times, side="left")
    survival = np.cumprod(1.0 - deaths / at_risk)

    with np.errstate(divide="ignore", invalid="ignore"):
        greenwood_terms = deaths / (at_risk * (at_risk - deaths))
        cum_var_log = np.cumsum(greenwood_terms)
        z = sps.norm.ppf(1.0 - alpha / 2.0)
        se_log = np.sqrt(cum_var_log)
        if log_transform:
            lower = survival * np.exp(-z * se_log)
            upper = survival * np.exp(z * se_log)
        else:
            se = survival * se_log
            lower = survival - z * se
            upper = survival + z * se
    dead_end = survival <= 0.0
    lower = np.where(dead_end, 0.0, np.clip(lower, 0.0, 1.0))
    upper = np.where(dead_end, 0.0, np.clip(upper, 0.0, 1.0))
    return KaplanMeierCurve(
        event_times=event_times,
        survival=survival,
        ci_lower=lower,
        ci_upper=upper,
        at_risk=at_risk,
        deaths=deaths,
    )


def median_survival(curve: KaplanMeierCurve) -> float | None:
    """Smallest event time where S(t) <= 0.5; None if never reached."""
    hit = np.flatnonzero(curve.survival <= 0.5)
    if hit.size == 0:
        return None
    return float(curve.event_times[hit[0]])


def log_rank(times_a, events_a, times_b, events_b) -> LogRankResult:
    """Two-group log-rank test (chi-squared statistic with 1 dof).

    At each pooled distinct event time, deaths in group A are compared with
    their hypergeometric expectation given the pooled risk set; the statistic
    is (sum of O-E)^2 over the summed hypergeometric variance.
    """
    ta = np.asarray(times_a, dtype=float)
    ea = np.asarray(events_a, dtype=np.int64)
    tb = np.asarray(times_b, dtype=float)
    eb = np.asarray(events_b, dtype=np.int64)
    if ta.size == 0 or tb.size == 0:
        raise ValueError("both groups must be non-empty")
    pooled_t = np.concatenate([ta, tb])
    pooled_e = np.concatenate([ea, eb])
    if pooled_e.sum() == 0:
        raise ValueError("log-rank needs at least one observed event")

    event_times = np.unique(pooled_t[pooled_e == 1])
    sa = np.sort(ta)
    sb = np.sort(tb)
    na = ta.size - np.searchsorted(sa, event_times, side="left")
    nb = tb.size - np.searchsorted(sb, event_times, side="left")

    def deaths_on_grid(t, e):
        uniq, counts = np.unique(t[e == 1], return_counts=True)
        out = np.zeros(event_times.size)
        out[np.searchsorted(event_times, uniq)] = counts
        return out

    da = deaths_on_grid(ta, ea)
    db = deaths_on_grid(tb, eb)
    n = (na + nb).astype(float)
    d = da + db

    expected_a = d * na / n
    with np.errstate(divide="ignore", invalid="ignore"):
        variance = d * (na / n) * (nb / n) * (n - d) / (n - 1.0)
    variance = np.where(n > 1.0, variance, 0.0)

    observed_minus_expected = float((da - expected_a).sum())
    total_variance = float(variance.sum())
    if total_variance == 0.0:
        return LogRankResult(statistic=0.0, p_value=1.0)
    statistic = observed_minus_expected**2 / total_variance
    return LogRankResult(
        statistic=statistic, p_value=float(sps.chi2.sf(statistic, df=1))
    )


def risk_mse(predicted_risks, true_risks) -> float:
    """Mean squared error between risk vectors after centering each to mean 0.

    Cox risk is identifiable only up to an additive constant, so both sides
    are centered before comparison.
    """
    predicted = np.asarray(predicted_risks, dtype=float)
    true = np.asarray(true_risks, dtype=float)
    if predicted.shape != true.shape or predicted.ndim != 1:
        raise ValueError("risk vectors must be equal-length 1-d arrays")
    predicted = predicted - predicted.mean()
    true = true - true.mean()
    return float(np.mean((predicted - true) ** 2))


def write_km_csv(curve: KaplanMeierCurve, path, comment: str | None = None) -> None:
    """Write a curve as CSV columns time, survival, ci_lower, ci_upper, at_risk, deaths."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment is not None:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["time", "survival", "ci_lower", "ci_upper", "at_risk", "deaths"])
        for i in range(curve.event_times.size):
            writer.writerow(
                [
                    repr(float(curve.event_times[i])),
                    repr(float(curve.survival[i])),
                    repr(float(curve.ci_lower[i])),
                    repr(float(curve.ci_upper[i])),
                    int(curve.at_risk[i]),
                    int(curve.deaths[i]),
                ]
            )
