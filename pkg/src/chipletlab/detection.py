"""Probing detection on differential sensor series.

The primary detector is a two-sided CUSUM over mean-removed readings: the
probing signature is a small sustained mean shift with a roughly one-second
onset ramp, which is exactly the persistent-change regime CUSUM targets.
A sliding-window mean-shift test is included as a baseline. Detector
performance across laser powers is quantified with ROC sweeps where the
per-run score is the maximum CUSUM statistic inside a fixed deadline after
the (annotated) laser-on instant; laser-off runs carry a power-0 annotation
so both classes are scored over identical windows.

Thresholds are calibrated by simulation against a target in-control average
run length, since no false-alarm budget is prescribed anywhere else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .timing import SensorSeries


class DetectionError(ValueError):
    pass


@dataclass(frozen=True)
class DetectorConfig:
    algorithm: str = "cusum"  # "cusum" | "window"
    k_ps: float = 0.2         # reference drift (allowance)
    h_ps: float = 1.0         # decision threshold
    window: int = 100         # leading reference window (baseline estimate)

    def __post_init__(self):
        if self.h_ps <= 0:
            raise DetectionError("threshold h must be > 0")
        if self.k_ps < 0:
            raise DetectionError("reference drift k must be >= 0")
        if self.window < 1:
            raise DetectionError("reference window must be >= 1 sample")
        if self.algorithm not in ("cusum", "window"):
            raise DetectionError(f"unknown algorithm {self.algorithm!r}")


@dataclass
class DetectionReport:
    alarms: list[tuple[float, float]]           # (timestamp s, statistic value)
    latencies_s: list[float]                    # per true laser-on step, alarm - on time
    missed_steps: int
    false_alarm_rate_per_hour: float
    per_power: dict[float, dict]
    statistic: np.ndarray
    config: DetectorConfig

    def summary_text(self) -> str:
        lines = [
            f"detector: {self.config.algorithm} (k={self.config.k_ps} ps, "
            f"h={self.config.h_ps} ps, window={self.config.window})",
            f"alarms: {len(self.alarms)}",
            f"true steps detected: {len(self.latencies_s)} (missed {self.missed_steps})",
            f"false alarm rate: {self.false_alarm_rate_per_hour:.3f} / hour",
        ]
        if self.latencies_s:
            lines.append(f"median latency: {float(np.median(self.latencies_s)):.2f} s")
        for power in sorted(self.per_power):
            d = self.per_power[power]
            med = "-" if d["median_latency_s"] is None else f"{d['median_latency_s']:.2f} s"
            lines.append(f"power {power:g}%: steps {d['steps']}, detected {d['detected']}, median latency {med}")
        return "\n".join(lines)


def cusum_statistic(x: np.ndarray, k: float, h: float | None = None) -> tuple[np.ndarray, list[int]]:
    """Two-sided CUSUM path over mean-removed values.

    Returns max(g+, g-) per sample and alarm indices; both statistics reset
    to zero after an alarm. With h=None the statistic never resets and the
    recursion collapses to the closed form g = S - running_min(S); the first
    crossing time is identical either way.
    """
    if h is None:
        stat = np.maximum(_cusum_no_reset(x - k), _cusum_no_reset(-x - k))
        return stat, []
    g_pos = 0.0
    g_neg = 0.0
    stat = np.empty(len(x))
    alarms: list[int] = []
    for i, v in enumerate(x):
        g_pos = max(0.0, g_pos + v - k)
        g_neg = max(0.0, g_neg - v - k)
        s = max(g_pos, g_neg)
        stat[i] = s
        if s > h:
            alarms.append(i)
            g_pos = 0.0
            g_neg = 0.0
    return stat, alarms


def _cusum_no_reset(increments: np.ndarray) -> np.ndarray:
    s = np.cumsum(increments)
    return s - np.minimum.accumulate(np.minimum(s, 0.0))


def _window_statistic(x: np.ndarray, w: int, h: float | None) -> tuple[np.ndarray, list[int]]:
    """|sliding-window mean| as the decision statistic (baseline detector)."""
    stat = np.zeros(len(x))
    csum = np.concatenate([[0.0], np.cumsum(x)])
    alarms: list[int] = []
    blank_until = -1
    for i in range(len(x)):
        lo = max(0, i - w + 1)
        stat[i] = abs((csum[i + 1] - csum[lo]) / (i + 1 - lo))
        if h is not None and stat[i] > h and i > blank_until:
            alarms.append(i)
            blank_until = i + w  # suppress re-alarms while the window drains
    return stat, alarms


def _rising_edges(series: SensorSeries) -> list[int]:
    on = series.laser_on.astype(int)
    edges = np.flatnonzero(np.diff(on) > 0) + 1
    if len(on) and on[0]:
        edges = np.concatenate([[0], edges])
    return [int(e) for e in edges]


def cusum_detect(series: SensorSeries, cfg: DetectorConfig) -> DetectionReport:
    """Run the configured detector over one differential series.

    The reference level is the mean of the leading `window` samples (assumed
    in-control); detection proper starts after that window. Latency per true
    step is measured from the laser-on timestamp, so the onset ramp counts
    against the detector.
    """
    if len(series) == 0:
        raise DetectionError("empty series")
    if len(series) <= cfg.window:
        raise DetectionError("series shorter than the reference window")

    baseline = float(series.readings[: cfg.window].mean())
    x = series.readings[cfg.window :] - baseline
    if cfg.algorithm == "cusum":
        stat_tail, alarm_idx = cusum_statistic(x, cfg.k_ps, cfg.h_ps)
    else:
        stat_tail, alarm_idx = _window_statistic(x, cfg.window, cfg.h_ps)
    statistic = np.concatenate([np.zeros(cfg.window), stat_tail])
    alarms = [(float(series.t_s[i + cfg.window]), float(stat_tail[i])) for i in alarm_idx]

    # latency per laser-on step, evaluated against the on timestamp
    alarm_times = np.array([a[0] for a in alarms])
    edges = _rising_edges(series)
    latencies: list[float] = []
    per_power: dict[float, dict] = {}
    missed = 0
    for j, e in enumerate(edges):
        t_on = float(series.t_s[e])
        t_end = float(series.t_s[edges[j + 1]]) if j + 1 < len(edges) else math.inf
        power = float(series.power_pct[e])
        hit = alarm_times[(alarm_times >= t_on) & (alarm_times < t_end)]
        entry = per_power.setdefault(power, {"steps": 0, "detected": 0, "latencies": []})
        entry["steps"] += 1
        if len(hit):
            lat = float(hit[0] - t_on)
            latencies.append(lat)
            entry["detected"] += 1
            entry["latencies"].append(lat)
        else:
            missed += 1
    for entry in per_power.values():
        lats = entry.pop("latencies")
        entry["median_latency_s"] = float(np.median(lats)) if lats else None

    off_mask = ~series.laser_on
    off_hours = off_mask.sum() / series.cadence_hz / 3600.0
    false_alarms = sum(1 for t, _ in alarms if not series.laser_on[np.searchsorted(series.t_s, t)])
    rate = false_alarms / off_hours if off_hours > 0 else 0.0

    return DetectionReport(
        alarms=alarms,
        latencies_s=latencies,
        missed_steps=missed,
        false_alarm_rate_per_hour=rate,
        per_power=per_power,
        statistic=statistic,
        config=cfg,
    )


# -- ROC ---------------------------------------------------------------------


@dataclass
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    on_scores: np.ndarray = field(repr=False, default=None)
    off_scores: np.ndarray = field(repr=False, default=None)


def _deadline_score(series: SensorSeries, cfg: DetectorConfig, deadline_s: float) -> float:
    """Maximum detector statistic within [laser-on, laser-on + deadline]."""
    edges = _rising_edges(series)
    if not edges:
        raise DetectionError("series carries no laser-on annotation to anchor the deadline")
    baseline = float(series.readings[: cfg.window].mean())
    x = series.readings[cfg.window :] - baseline
    if cfg.algorithm == "cusum":
        stat, _ = cusum_statistic(x, cfg.k_ps, h=None)
    else:
        stat, _ = _window_statistic(x, cfg.window, h=None)
    t = series.t_s[cfg.window :]
    t_on = float(series.t_s[edges[0]])
    mask = (t >= t_on) & (t <= t_on + deadline_s)
    if not mask.any():
        raise DetectionError("deadline window contains no samples")
    return float(stat[mask].max())


def roc_sweep(
    on_scenarios: list[SensorSeries],
    off_scenarios: list[SensorSeries],
    thresholds: np.ndarray,
    cfg: DetectorConfig | None = None,
    deadline_s: float = 60.0,
) -> RocCurve:
    """ROC over alarm-within-deadline decisions.

    Laser-off runs must carry a power-0 "on" annotation marking where their
    deadline window starts, so both classes are scored identically.
    """
    if not on_scenarios or not off_scenarios:
        raise DetectionError("need at least one scenario of each class")
    thresholds = np.asarray(thresholds, dtype=float)
    if len(thresholds) < 1 or np.any(np.diff(thresholds) <= 0):
        raise DetectionError("thresholds must be strictly increasing")
    cfg = cfg or DetectorConfig()

    on_scores = np.array([_deadline_score(s, cfg, deadline_s) for s in on_scenarios])
    off_scores = np.array([_deadline_score(s, cfg, deadline_s) for s in off_scenarios])

    tpr = np.array([(on_scores > h).mean() for h in thresholds])
    fpr = np.array([(off_scores > h).mean() for h in thresholds])

    # exact Mann-Whitney AUC of the score separation (threshold-grid free)
    order = np.concatenate([on_scores, off_scores])
    ranks = _midranks(order)
    r_on = ranks[: len(on_scores)].sum()
    n1, n0 = len(on_scores), len(off_scores)
    auc = (r_on - n1 * (n1 + 1) / 2) / (n1 * n0)

    return RocCurve(thresholds, fpr, tpr, float(auc), on_scores, off_scores)


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    sv = values[order]
    i = 0
    while i < len(sv):
        j = i
        while j + 1 < len(sv) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def calibrate_threshold(
    sigma_ps: float,
    k_ps: float,
    target_arl_samples: float,
    rng: np.random.Generator,
    n_runs: int = 64,
    iters: int = 12,
) -> float:
    """Threshold h giving the target in-control average run length.

    Monte Carlo bisection on log h: runs standard-normal*sigma series through
    the two-sided CUSUM and matches the mean first-crossing index.
    """
    max_len = int(6 * target_arl_samples)
    x = rng.normal(0.0, sigma_ps, (n_runs, max_len))
    # no-reset closed form per run; run length = first threshold crossing
    s_pos = np.cumsum(x - k_ps, axis=1)
    g_pos = s_pos - np.minimum.accumulate(np.minimum(s_pos, 0.0), axis=1)
    s_neg = np.cumsum(-x - k_ps, axis=1)
    g_neg = s_neg - np.minimum.accumulate(np.minimum(s_neg, 0.0), axis=1)
    stat = np.maximum(g_pos, g_neg)

    def arl(h: float) -> float:
        crossed = stat > h
        first = np.where(crossed.any(axis=1), crossed.argmax(axis=1) + 1, max_len)
        return float(first.mean())

    lo, hi = 0.1 * sigma_ps, 50.0 * sigma_ps
    for _ in range(iters):
        mid = math.sqrt(lo * hi)
        if arl(mid) < target_arl_samples:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)
