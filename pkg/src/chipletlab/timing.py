"""Wire delays and the two differential delay sensors.

A wire's effective delay is nominal + thermal + environmental drift; jitter
is applied per sampling event and never accumulates. Two sensor models share
that substrate:

* phase sweep - the receive clock phase steps across the wire delay in
  fixed increments; each offset gets M trial samplings whose success
  probability is Phi((offset - delay) / jitter). A probit fit of the
  success curve returns the 50% crossing, resolving far below the step.
* tapped delay line - the signal edge lands in a 240-tap line and the
  reading is the thermometer-code Hamming weight. A per-measurement
  Gaussian jitter draw dithers the quantizer so that averaged readings
  resolve sub-tap shifts; with zero jitter the output is stuck on integer
  taps, which is exactly why the dither parameter exists.

Readings are always taken from a probe/control wire pair; environmental
drift is a shared Ornstein-Uhlenbeck process that cancels in the
differential. Sessions draw their randomness in fixed-size tick segments so
a live streaming consumer and a batch run produce bit-identical series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import log_ndtr, ndtr

from .floorplan import FloorPlan
from .optics import THERMAL_DELTA_100_PS, THERMAL_TAU_S, LaserState, spot_radius_um
from .seeding import substream

PHASE_STEP_PS = 14.286
TAP_PITCH_PS = 1.917
VENDOR_TAP_PITCH_PS = 2.75  # conservative vendor timing estimate preset
SEGMENT_TICKS = 8


class SweepRangeError(ValueError):
    """Delay fell outside the swept window (all-success or all-failure)."""


@dataclass(frozen=True)
class WireTiming:
    """Delay state of one wire at a sampling instant."""

    nominal_delay_ps: float
    thermal_delta_ps: float = 0.0
    env_offset_ps: float = 0.0
    jitter_sigma_ps: float = 5.0

    @property
    def effective_delay_ps(self) -> float:
        return self.nominal_delay_ps + self.thermal_delta_ps + self.env_offset_ps


@dataclass(frozen=True)
class DriftProcess:
    """Shared-environment delay drift (zero-mean Ornstein-Uhlenbeck)."""

    reversion_rate_per_s: float = 1.0 / 60.0
    stationary_sigma_ps: float = 2.0

    def path(self, n: int, dt_s: float, normals: np.ndarray, x0: float | None = None) -> np.ndarray:
        """Exact-discretisation path from pre-drawn standard normals."""
        alpha = math.exp(-self.reversion_rate_per_s * dt_s)
        innov = self.stationary_sigma_ps * math.sqrt(max(0.0, 1 - alpha * alpha))
        out = np.empty(n)
        x = self.stationary_sigma_ps * normals[0] if x0 is None else x0
        for i in range(n):
            out[i] = x
            if i + 1 < n:
                x = alpha * x + innov * normals[i + 1]
        return out


@dataclass(frozen=True)
class TdcConfig:
    taps: int = 240
    tap_pitch_ps: float = TAP_PITCH_PS
    dither_sigma_ps: float = 2.0
    t_ref_ps: float | None = None  # sampling-edge reference; sessions derive it


@dataclass
class SensorSeries:
    """Timestamped sensor readings with per-sample laser annotations."""

    t_s: np.ndarray
    readings: np.ndarray
    laser_on: np.ndarray
    power_pct: np.ndarray
    kind: str
    units: str
    cadence_hz: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t_s = np.asarray(self.t_s, dtype=float)
        self.readings = np.asarray(self.readings, dtype=float)
        self.laser_on = np.asarray(self.laser_on, dtype=bool)
        self.power_pct = np.asarray(self.power_pct, dtype=float)
        n = len(self.t_s)
        if not (len(self.readings) == len(self.laser_on) == len(self.power_pct) == n):
            raise ValueError("series arrays must have equal length")
        if n > 1:
            dt = np.diff(self.t_s)
            if np.any(dt <= 0):
                raise ValueError("timestamps must be strictly increasing")
            if not np.allclose(dt, dt[0], rtol=1e-9, atol=1e-12):
                raise ValueError("cadence must be constant within a run")

    def __len__(self) -> int:
        return len(self.t_s)


def differential(probe: SensorSeries, control: SensorSeries) -> SensorSeries:
    """Pointwise probe - control; probe annotations are preserved."""
    if len(probe) != len(control):
        raise ValueError("probe and control series must have equal length")
    if abs(probe.cadence_hz - control.cadence_hz) > 1e-9:
        raise ValueError("probe and control series must share a cadence")
    return SensorSeries(
        t_s=probe.t_s,
        readings=probe.readings - control.readings,
        laser_on=probe.laser_on,
        power_pct=probe.power_pct,
        kind=probe.kind,
        units=probe.units,
        cadence_hz=probe.cadence_hz,
        meta={"differential": True, **probe.meta},
    )


def moving_average(series: SensorSeries, window_s: float = 2.0) -> np.ndarray:
    """Trailing moving average used for strip-chart views."""
    w = max(1, int(round(window_s * series.cadence_hz)))
    kernel = np.ones(w) / w
    padded = np.concatenate([np.full(w - 1, series.readings[0]), series.readings])
    return np.convolve(padded, kernel, mode="valid")


# -- phase-sweeping sensor -------------------------------------------------------


def sweep_grid(clock_period_ps: float, step_ps: float = PHASE_STEP_PS,
               offset_ps: float = 0.0) -> np.ndarray:
    """Phase-offset grid; `offset_ps` in [0, step) shifts the whole comb.

    The point count is offset-independent, so a per-measurement random
    offset (grid dithering) keeps the estimator's alignment bias constant
    in delay - it then cancels exactly in differential readings and steps.
    """
    if step_ps <= 0:
        raise ValueError("step must be positive")
    n = int(clock_period_ps / step_ps)
    return offset_ps + np.arange(n) * step_ps


def success_probabilities(grid_ps: np.ndarray, delay_ps: float, jitter_sigma_ps: float) -> np.ndarray:
    """Phi((offset - delay) / jitter); a hard step when jitter is zero."""
    if jitter_sigma_ps <= 0:
        return (grid_ps >= delay_ps).astype(float)
    return ndtr((grid_ps - delay_ps) / jitter_sigma_ps)


def probit_fit_crossing(
    grid_ps: np.ndarray,
    successes: np.ndarray,
    trials: int | float,
    jitter_sigma_ps: float,
) -> float:
    """Fitted 50% crossing of the success curve (scalar convenience form)."""
    est = _probit_fit_vec(grid_ps, np.asarray(successes, dtype=float)[None, :], trials, jitter_sigma_ps)
    return float(est[0])


def _probit_fit_vec(grid_ps, counts, trials, sigma, iters: int = 60) -> np.ndarray:
    """Vectorised maximum-likelihood 50% crossing, one estimate per counts row.

    `grid_ps` may be one shared grid (1-D) or one grid per row (2-D). The
    likelihood score is monotone in the crossing, so a fixed-iteration
    bisection is exact to bracket/2^60 and yields identical floats whether
    rows are fitted singly or in bulk.
    """
    counts = np.asarray(counts, dtype=float)
    rows, nphi = counts.shape
    grid = np.broadcast_to(np.asarray(grid_ps, dtype=float), (rows, nphi))
    total_s = counts.sum(axis=1)
    total_f = (trials - counts).sum(axis=1)
    bad = (total_s <= 0) | (total_f <= 0)
    if np.any(bad):
        raise SweepRangeError("delay outside the swept window (all success or all failure)")

    if sigma <= 0:
        # no sub-step information exists; take the first at-or-above-50% point
        rate = counts / trials
        idx = np.argmax(rate >= 0.5, axis=1)
        return grid[np.arange(rows), idx]

    def score(mu):
        z = (grid - mu[:, None]) / sigma
        logpdf = -0.5 * z * z - 0.5 * math.log(2 * math.pi)
        mills_pos = np.exp(logpdf - log_ndtr(z))      # pdf/Phi
        mills_neg = np.exp(logpdf - log_ndtr(-z))     # pdf/(1-Phi)
        return (counts * mills_pos - (trials - counts) * mills_neg).sum(axis=1)

    lo = grid[:, 0] - 8.0 * sigma
    hi = grid[:, -1] + 8.0 * sigma
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        above = score(mid) >= 0  # score increases with mu; >= 0 means past the root
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    return 0.5 * (lo + hi)


def phase_sweep_measure(
    link: WireTiming,
    clock_period_ps: float = 1000.0,
    step_ps: float = PHASE_STEP_PS,
    trials_per_step: int = 200,
    rng: np.random.Generator | None = None,
    grid_offset_ps: float = 0.0,
) -> float:
    """One phase-sweep delay measurement of `link`, in ps."""
    if trials_per_step < 1:
        raise ValueError("trials_per_step must be >= 1")
    rng = rng if rng is not None else np.random.default_rng()
    grid = sweep_grid(clock_period_ps, step_ps, grid_offset_ps)
    p = success_probabilities(grid, link.effective_delay_ps, link.jitter_sigma_ps)
    u = rng.random((len(grid), trials_per_step))
    counts = (u < p[:, None]).sum(axis=1)
    return probit_fit_crossing(grid, counts, trials_per_step, link.jitter_sigma_ps)


# -- tapped-delay-line sensor -----------------------------------------------------


@dataclass(frozen=True)
class TdcReading:
    hamming_weight: int
    saturated: bool


def tdc_measure(link: WireTiming, tdc: TdcConfig, rng: np.random.Generator | None = None) -> TdcReading:
    """One thermometer-code reading; clamped (with a flag) outside the line."""
    if tdc.t_ref_ps is None:
        raise ValueError("TdcConfig.t_ref_ps must be set (sessions derive it)")
    rng = rng if rng is not None else np.random.default_rng()
    jit = rng.normal(0.0, tdc.dither_sigma_ps) if tdc.dither_sigma_ps > 0 else 0.0
    raw = math.floor((tdc.t_ref_ps - link.effective_delay_ps - jit) / tdc.tap_pitch_ps)
    clamped = min(max(raw, 0), tdc.taps)
    return TdcReading(hamming_weight=int(clamped), saturated=raw != clamped)


def _tdc_readings_vec(delays_ps: np.ndarray, tdc: TdcConfig, jitters: np.ndarray) -> np.ndarray:
    raw = np.floor((tdc.t_ref_ps - delays_ps - jitters) / tdc.tap_pitch_ps)
    return np.clip(raw, 0, tdc.taps)


# -- sessions ----------------------------------------------------------------------


@dataclass(frozen=True)
class LaserEvent:
    """Laser schedule entry; either a position (resolved against the plan)
    or an explicit coupling target ("probe"/"control") for synthetic runs."""

    t_s: float
    on: bool
    power_pct: float = 100.0
    x_um: float | None = None
    y_um: float | None = None
    lens: str = "71x"
    target: str | None = None


@dataclass(frozen=True)
class SensorSessionConfig:
    kind: str = "phase"  # phase | tdc | ideal | gaussian
    duration_s: float = 480.0
    cadence_hz: float = 10.0
    t0_s: float = 0.0  # tick times are t0_s + n/cadence (session clock)
    probe_nominal_ps: float = 500.0
    control_nominal_ps: float = 539.090
    clock_period_ps: float = 1000.0
    step_ps: float = PHASE_STEP_PS
    trials_per_step: int = 200
    jitter_sigma_ps: float = 5.0
    tdc: TdcConfig = field(default_factory=TdcConfig)
    gaussian_sigma_ps: float = 0.5
    drift: DriftProcess = field(default_factory=DriftProcess)
    drift_enabled: bool = True
    thermal_delta_100_ps: float = THERMAL_DELTA_100_PS
    thermal_tau_s: float = THERMAL_TAU_S
    laser_events: tuple[LaserEvent, ...] = ()
    seed: int = 0
    # phase sensor time-multiplexing overhead (metadata only; no traffic model)
    measurement_duty_cycle: float = 1.0


@dataclass
class SensorSessionResult:
    probe: SensorSeries
    control: SensorSeries
    differential: SensorSeries
    truth_differential_ps: np.ndarray
    config: SensorSessionConfig


class SensorSession:
    """Tick-by-tick generator of a probe/control sensor run.

    Raw randomness is drawn in SEGMENT_TICKS-sized blocks from per-segment
    substreams and consumed per tick, so the reading at tick n depends only
    on (config, laser events up to tick n, n): a live stream fed events as
    they happen and a batch run with the full schedule agree exactly. Events
    may be appended while running as long as they lie at or after the last
    materialised tick.
    """

    def __init__(
        self,
        config: SensorSessionConfig,
        plan: FloorPlan | None = None,
        probe_node: str | None = None,
        control_node: str | None = None,
    ):
        self.config = config
        self.plan = plan
        self._probe_pos = plan.node(probe_node).position if plan and probe_node else None
        self._control_pos = plan.node(control_node).position if plan and control_node else None
        self._events: list[LaserEvent] = []
        self._covers_probe: list[bool] = []
        self._covers_control: list[bool] = []
        self._tick = 0
        self._heat_probe = 0.0
        self._heat_control = 0.0
        self._drift_x: float | None = None
        self._last_t = 0.0
        self._event_idx = 0
        self._rows: list[list] = []
        self._seg_cache: dict[int, dict] = {}
        self._tdc = config.tdc
        if config.kind == "tdc" and self._tdc.t_ref_ps is None:
            self._tdc = replace(
                config.tdc,
                t_ref_ps=config.probe_nominal_ps + config.tdc.taps / 2 * config.tdc.tap_pitch_ps,
            )
        if config.kind not in ("phase", "tdc", "gaussian", "ideal"):
            raise ValueError(f"unknown sensor kind {config.kind!r}")
        for ev in sorted(config.laser_events, key=lambda e: e.t_s):
            self.append_event(ev)

    # -- laser schedule -----------------------------------------------------

    def append_event(self, event: LaserEvent) -> None:
        """Add a schedule entry; it must not predate materialised ticks."""
        if self._events and event.t_s <= self._events[-1].t_s:
            raise ValueError("laser schedule timestamps must be strictly increasing")
        if self._tick > 0 and event.t_s < self._tick_time(self._tick - 1):
            raise ValueError("cannot insert a laser event before materialised readings")
        self._events.append(event)
        self._covers_probe.append(self._covers(event, "probe", self._probe_pos))
        self._covers_control.append(self._covers(event, "control", self._control_pos))

    def _covers(self, event: LaserEvent, which: str, wire_pos) -> bool:
        if event.target is not None:
            return event.target == which
        if event.x_um is None or wire_pos is None:
            return False
        r = spot_radius_um(event.lens)
        return math.hypot(event.x_um - wire_pos[0], event.y_um - wire_pos[1]) <= r

    def _targets_at(self, idx: int) -> tuple[float, float, bool, float]:
        """(probe heat target, control heat target, on, power) for event idx."""
        if idx < 0:
            return 0.0, 0.0, False, 0.0
        ev = self._events[idx]
        if not ev.on:
            return 0.0, 0.0, False, ev.power_pct
        frac = ev.power_pct / 100.0
        tp = frac if self._covers_probe[idx] else 0.0
        tc = frac if self._covers_control[idx] else 0.0
        return tp, tc, True, ev.power_pct

    def _advance_heat(self, t_to: float, tp: float, tc: float) -> None:
        dt = t_to - self._last_t
        if dt > 0:
            decay = math.exp(-dt / self.config.thermal_tau_s)
            self._heat_probe = tp + (self._heat_probe - tp) * decay
            self._heat_control = tc + (self._heat_control - tc) * decay
            self._last_t = t_to

    # -- randomness ---------------------------------------------------------

    def _tick_time(self, i: int) -> float:
        return self.config.t0_s + i / self.config.cadence_hz

    def _segment_draws(self, seg_index: int) -> dict:
        """Raw random block for one segment, independent of schedule state."""
        if seg_index in self._seg_cache:
            return self._seg_cache[seg_index]
        cfg = self.config
        rng = substream(cfg.seed, "sensor-session", seg_index)
        draws: dict = {}
        extra = 1 if seg_index == 0 else 0
        normals = rng.standard_normal(SEGMENT_TICKS + extra)
        draws["drift_init"] = normals[0] if extra else None
        draws["drift"] = normals[extra:]
        if cfg.kind == "phase":
            nphi = len(sweep_grid(cfg.clock_period_ps, cfg.step_ps))
            draws["offsets"] = rng.random((SEGMENT_TICKS, 2)) * cfg.step_ps
            draws["u"] = rng.random((SEGMENT_TICKS, 2, nphi, cfg.trials_per_step))
        elif cfg.kind == "tdc":
            draws["normals"] = rng.normal(0.0, self._tdc.dither_sigma_ps, (SEGMENT_TICKS, 2))
        elif cfg.kind == "gaussian":
            draws["normals"] = rng.normal(0.0, cfg.gaussian_sigma_ps / math.sqrt(2.0),
                                          (SEGMENT_TICKS, 2))
        # keep only a small working set; old segments are never revisited
        self._seg_cache = {k: v for k, v in self._seg_cache.items() if k >= seg_index - 1}
        self._seg_cache[seg_index] = draws
        return draws

    # -- main loop ----------------------------------------------------------

    @property
    def materialized_ticks(self) -> int:
        return self._tick

    def advance_to(self, n_ticks: int) -> list[list]:
        """Materialise readings up to (excluding) tick n; returns new rows
        [t, probe, control, laser_on, power, truth_differential]."""
        cfg = self.config
        dt = 1.0 / cfg.cadence_hz
        alpha = math.exp(-cfg.drift.reversion_rate_per_s * dt)
        innov = cfg.drift.stationary_sigma_ps * math.sqrt(max(0.0, 1 - alpha * alpha))

        new_rows: list[list] = []
        pending_fit: list[tuple[int, np.ndarray, np.ndarray]] = []
        while self._tick < n_ticks:
            i = self._tick
            draws = self._segment_draws(i // SEGMENT_TICKS)
            k = i % SEGMENT_TICKS
            if self._drift_x is None:
                self._drift_x = cfg.drift.stationary_sigma_ps * draws["drift_init"]
            t = self._tick_time(i)

            while self._event_idx < len(self._events) and self._events[self._event_idx].t_s <= t:
                tp, tc, _, _ = self._targets_at(self._event_idx - 1)
                self._advance_heat(self._events[self._event_idx].t_s, tp, tc)
                self._event_idx += 1
            tp, tc, on, power = self._targets_at(self._event_idx - 1)
            self._advance_heat(t, tp, tc)

            env = self._drift_x if cfg.drift_enabled else 0.0
            self._drift_x = alpha * self._drift_x + innov * draws["drift"][k]

            d_probe = cfg.probe_nominal_ps + cfg.thermal_delta_100_ps * self._heat_probe + env
            d_control = cfg.control_nominal_ps + cfg.thermal_delta_100_ps * self._heat_control + env
            truth = d_probe - d_control

            if cfg.kind == "phase":
                grids = np.stack([
                    sweep_grid(cfg.clock_period_ps, cfg.step_ps, draws["offsets"][k, 0]),
                    sweep_grid(cfg.clock_period_ps, cfg.step_ps, draws["offsets"][k, 1]),
                ])
                p = np.stack([
                    success_probabilities(grids[0], d_probe, cfg.jitter_sigma_ps),
                    success_probabilities(grids[1], d_control, cfg.jitter_sigma_ps),
                ])
                counts = (draws["u"][k] < p[:, :, None]).sum(axis=2)
                pending_fit.append((len(self._rows), grids, counts))
                rp = rc = math.nan
            elif cfg.kind == "tdc":
                rp = float(_tdc_readings_vec(np.asarray(d_probe), self._tdc, draws["normals"][k, 0]))
                rc = float(_tdc_readings_vec(np.asarray(d_control), self._tdc, draws["normals"][k, 1]))
            elif cfg.kind == "gaussian":
                rp = d_probe + draws["normals"][k, 0]
                rc = d_control + draws["normals"][k, 1]
            else:  # ideal
                rp, rc = d_probe, d_control

            row = [t, rp, rc, on, power, truth]
            self._rows.append(row)
            new_rows.append(row)
            self._tick += 1

        if pending_fit:
            grids = np.concatenate([g for _, g, _ in pending_fit])
            counts = np.concatenate([c for _, _, c in pending_fit])
            est = _probit_fit_vec(grids, counts, cfg.trials_per_step, cfg.jitter_sigma_ps)
            est = est.reshape(-1, 2)
            for row_idx, (rows_at, _, _) in enumerate(pending_fit):
                self._rows[rows_at][1] = est[row_idx, 0]
                self._rows[rows_at][2] = est[row_idx, 1]
        return new_rows

    def run(self) -> SensorSessionResult:
        n = int(round(self.config.duration_s * self.config.cadence_hz))
        self.advance_to(n)
        return self._package(self._rows)

    def _package(self, rows: list) -> SensorSessionResult:
        cfg = self.config
        arr = np.array([r[:3] for r in rows], dtype=float)
        on = np.array([r[3] for r in rows], dtype=bool)
        power = np.array([r[4] for r in rows], dtype=float)
        truth = np.array([r[5] for r in rows], dtype=float)
        units = "taps" if cfg.kind == "tdc" else "ps"
        meta = {"sensor": cfg.kind, "duty_cycle": cfg.measurement_duty_cycle}
        probe = SensorSeries(arr[:, 0], arr[:, 1], on, power, cfg.kind, units, cfg.cadence_hz, dict(meta))
        control = SensorSeries(arr[:, 0], arr[:, 2], on, power, cfg.kind, units, cfg.cadence_hz, dict(meta))
        diff = differential(probe, control)
        return SensorSessionResult(probe, control, diff, truth, cfg)


def run_sensor_session(
    config: SensorSessionConfig,
    plan: FloorPlan | None = None,
    probe_node: str | None = None,
    control_node: str | None = None,
) -> SensorSessionResult:
    """Run a full probe/control session and return all three series."""
    return SensorSession(config, plan, probe_node, control_node).run()
