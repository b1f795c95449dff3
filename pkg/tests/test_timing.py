import math

import numpy as np
import pytest
from scipy import stats

from chipletlab.timing import (
    DriftProcess,
    LaserEvent,
    SensorSession,
    SensorSessionConfig,
    SensorSeries,
    SweepRangeError,
    TdcConfig,
    WireTiming,
    differential,
    moving_average,
    phase_sweep_measure,
    probit_fit_crossing,
    run_sensor_session,
    success_probabilities,
    sweep_grid,
    tdc_measure,
)

TOGGLE_2MIN = tuple(LaserEvent(120.0 * k, k % 2 == 1, 100.0, target="probe") for k in range(4))


class TestPhaseSweep:
    def test_exact_probability_oracle_recovers_exactly(self):
        # the closed-form Phi success curve is the independent oracle: the
        # fitted crossing must return the injected delay to solver precision
        grid = sweep_grid(1000.0)
        for delay in (137.0, 500.0, 863.25):
            p = success_probabilities(grid, delay, 5.0)
            est = probit_fit_crossing(grid, p * 1000, 1000, 5.0)
            assert est == pytest.approx(delay, abs=1e-6)

    def test_monte_carlo_accuracy_at_m1000(self):
        errs = []
        for seed in range(100):
            rng = np.random.default_rng(seed)
            link = WireTiming(500.0, jitter_sigma_ps=5.0)
            errs.append(phase_sweep_measure(link, trials_per_step=1000, rng=rng) - 500.0)
        errs = np.array(errs)
        assert abs(errs.mean()) <= 0.2
        assert np.median(np.abs(errs)) <= 0.2

    def test_consistency_error_shrinks_with_m(self):
        medians = []
        for m in (100, 1000, 10_000):
            errs = []
            for seed in range(60):
                rng = np.random.default_rng(1000 + seed)
                link = WireTiming(481.5, jitter_sigma_ps=5.0)
                errs.append(abs(phase_sweep_measure(link, trials_per_step=m, rng=rng) - 481.5))
            medians.append(float(np.median(errs)))
        assert medians[0] > medians[1] > medians[2]

    def test_zero_jitter_on_grid_point(self):
        link = WireTiming(14.286 * 10, jitter_sigma_ps=0.0)
        est = phase_sweep_measure(link, rng=np.random.default_rng(0))
        assert est == pytest.approx(14.286 * 10)

    def test_delay_outside_window_is_range_error(self):
        link = WireTiming(2000.0, jitter_sigma_ps=5.0)
        with pytest.raises(SweepRangeError):
            phase_sweep_measure(link, clock_period_ps=1000.0, rng=np.random.default_rng(0))


class TestTdc:
    def test_one_pitch_is_one_tap(self):
        cfg = TdcConfig(dither_sigma_ps=0.0, t_ref_ps=500.0 + 120 * 1.917)
        r0 = tdc_measure(WireTiming(500.0, jitter_sigma_ps=0), cfg, np.random.default_rng(0))
        r1 = tdc_measure(WireTiming(500.0 + 1.917, jitter_sigma_ps=0), cfg, np.random.default_rng(0))
        assert r0.hamming_weight - r1.hamming_weight == 1
        assert not r0.saturated

    def test_saturation_flag(self):
        cfg = TdcConfig(dither_sigma_ps=0.0, t_ref_ps=500.0)
        r = tdc_measure(WireTiming(2000.0, jitter_sigma_ps=0), cfg, np.random.default_rng(0))
        assert r.saturated and r.hamming_weight == 0
        r = tdc_measure(WireTiming(0.0, jitter_sigma_ps=0), cfg, np.random.default_rng(0))
        assert r.saturated and r.hamming_weight == 240

    def test_dithered_slope(self):
        # mean reading vs injected delay: slope -1/pitch within 2%
        cfg = TdcConfig(t_ref_ps=500.0 + 120 * 1.917)
        rng = np.random.default_rng(4)
        deltas = np.linspace(0.0, 10.0, 11)
        means = []
        for d in deltas:
            vals = [tdc_measure(WireTiming(500.0 + d, jitter_sigma_ps=0), cfg, rng).hamming_weight
                    for _ in range(4000)]
            means.append(np.mean(vals))
        slope = np.polyfit(deltas, means, 1)[0]
        assert slope == pytest.approx(-1.0 / 1.917, rel=0.02)

    def test_mean_dip_resolves_sub_tap(self):
        # laser step 0.792 ps -> 0.413-tap mean dip with >= 1e4 samples
        cfg = TdcConfig(t_ref_ps=500.0 + 120 * 1.917)
        rng = np.random.default_rng(8)
        base = [tdc_measure(WireTiming(500.0), cfg, rng).hamming_weight for _ in range(30_000)]
        hot = [tdc_measure(WireTiming(500.0, thermal_delta_ps=0.792), cfg, rng).hamming_weight
               for _ in range(30_000)]
        dip = np.mean(base) - np.mean(hot)
        assert dip == pytest.approx(0.413, abs=0.02)

    def test_dithering_requirement_pair(self):
        # without dither the quantizer cannot see sub-tap steps; with dither
        # at >= pitch/2 it resolves the 0.413-tap shift
        rng = np.random.default_rng(12)
        cfg0 = TdcConfig(dither_sigma_ps=0.0, t_ref_ps=500.0 + 120 * 1.917)
        base = [tdc_measure(WireTiming(500.0), cfg0, rng).hamming_weight for _ in range(200)]
        hot = [tdc_measure(WireTiming(500.792), cfg0, rng).hamming_weight for _ in range(200)]
        dip0 = np.mean(base) - np.mean(hot)
        assert dip0 in (0.0, 1.0)

        cfg1 = TdcConfig(dither_sigma_ps=1.917 / 2, t_ref_ps=500.0 + 120 * 1.917)
        base = [tdc_measure(WireTiming(500.0), cfg1, rng).hamming_weight for _ in range(40_000)]
        hot = [tdc_measure(WireTiming(500.792), cfg1, rng).hamming_weight for _ in range(40_000)]
        dip1 = np.mean(base) - np.mean(hot)
        assert dip1 == pytest.approx(0.413, abs=0.05)

    def test_missing_reference_is_error(self):
        with pytest.raises(ValueError):
            tdc_measure(WireTiming(500.0), TdcConfig(), np.random.default_rng(0))

    def test_pitch_presets(self):
        from chipletlab.timing import TAP_PITCH_PS, VENDOR_TAP_PITCH_PS

        # calibrated default and the conservative vendor timing preset
        assert TdcConfig().tap_pitch_ps == TAP_PITCH_PS == 1.917
        assert VENDOR_TAP_PITCH_PS == 2.75
        vendor = TdcConfig(tap_pitch_ps=VENDOR_TAP_PITCH_PS, dither_sigma_ps=0.0,
                           t_ref_ps=500.0 + 120 * 2.75)
        r0 = tdc_measure(WireTiming(500.0, jitter_sigma_ps=0), vendor, np.random.default_rng(0))
        r1 = tdc_measure(WireTiming(500.0 + 2.75, jitter_sigma_ps=0), vendor, np.random.default_rng(0))
        assert r0.hamming_weight - r1.hamming_weight == 1


class TestDifferential:
    def _series(self, readings, cadence=10.0):
        n = len(readings)
        return SensorSeries(np.arange(n) / cadence, readings, np.zeros(n, bool),
                            np.zeros(n), "phase", "ps", cadence)

    def test_identical_wires_cancel(self):
        rng = np.random.default_rng(0)
        drift = DriftProcess().path(500, 0.1, rng.standard_normal(500))
        probe = self._series(500.0 + drift)
        control = self._series(500.0 + drift)
        diff = differential(probe, control)
        assert np.allclose(diff.readings, 0.0)

    def test_slower_control_gives_negative_mean(self):
        probe = self._series(np.full(100, 500.0))
        control = self._series(np.full(100, 539.090))
        diff = differential(probe, control)
        assert diff.readings.mean() == pytest.approx(-39.090)

    def test_drift_variance_cancellation(self):
        # differential variance does not grow with common-mode drift sigma
        out = {}
        for sigma in (0.0, 2.0):
            cfg = SensorSessionConfig(kind="gaussian", duration_s=1000.0, cadence_hz=10.0,
                                      drift=DriftProcess(stationary_sigma_ps=sigma),
                                      drift_enabled=sigma > 0, seed=3)
            res = run_sensor_session(cfg)
            out[sigma] = res.differential.readings.var()
        assert out[2.0] == pytest.approx(out[0.0], rel=0.05)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            differential(self._series(np.zeros(5)), self._series(np.zeros(6)))

    def test_series_validation(self):
        with pytest.raises(ValueError):
            SensorSeries(np.array([0.0, 0.0]), np.zeros(2), np.zeros(2, bool),
                         np.zeros(2), "phase", "ps", 10.0)
        with pytest.raises(ValueError):
            SensorSeries(np.array([0.0, 0.1, 0.3]), np.zeros(3), np.zeros(3, bool),
                         np.zeros(3), "phase", "ps", 10.0)


class TestSessions:
    def test_phase_session_recovers_the_jump(self):
        cfg = SensorSessionConfig(kind="phase", duration_s=480.0, cadence_hz=10.0,
                                  laser_events=TOGGLE_2MIN, seed=7)
        res = run_sensor_session(cfg)
        r, on = res.differential.readings, res.differential.laser_on
        step = r[on].mean() - r[~on].mean()
        assert step == pytest.approx(0.792, abs=0.05)
        assert r[~on].mean() == pytest.approx(-39.090, abs=0.05)

    def test_null_scenario_is_stationary(self):
        cfg = SensorSessionConfig(kind="phase", duration_s=240.0, cadence_hz=10.0, seed=5)
        res = run_sensor_session(cfg)
        r = res.differential.readings
        half = len(r) // 2
        _, p = stats.ttest_ind(r[:half], r[half:], equal_var=False)
        assert p > 0.01

    def test_power_steps_are_linear(self):
        # fitted step sizes linear in power through the origin, R^2 >= 0.99
        steps = []
        powers = (25.0, 50.0, 75.0, 100.0)
        for i, p in enumerate(powers):
            events = tuple(LaserEvent(60.0 * k, k % 2 == 1, p, target="probe") for k in range(4))
            cfg = SensorSessionConfig(kind="phase", duration_s=240.0, cadence_hz=10.0,
                                      trials_per_step=800, laser_events=events, seed=100 + i)
            res = run_sensor_session(cfg)
            r, on = res.differential.readings, res.differential.laser_on
            steps.append(r[on].mean() - r[~on].mean())
        pp = np.asarray(powers)
        ss = np.asarray(steps)
        slope = (pp * ss).sum() / (pp * pp).sum()
        r2 = 1 - ((ss - slope * pp) ** 2).sum() / ((ss - ss.mean()) ** 2).sum()
        assert r2 >= 0.99

    def test_tap_ps_calibration_closure(self):
        # (phase step in ps) / (tap dip) = 1.917 +/- 5% under the 100% scenario
        phase = run_sensor_session(SensorSessionConfig(
            kind="phase", duration_s=480.0, cadence_hz=10.0, trials_per_step=800,
            laser_events=TOGGLE_2MIN, seed=21))
        tdc = run_sensor_session(SensorSessionConfig(
            kind="tdc", duration_s=480.0, cadence_hz=100.0,
            tdc=TdcConfig(dither_sigma_ps=1.2), laser_events=TOGGLE_2MIN, seed=22))
        rp, onp = phase.differential.readings, phase.differential.laser_on
        rt, ont = tdc.differential.readings, tdc.differential.laser_on
        step = rp[onp].mean() - rp[~onp].mean()
        dip = rt[~ont].mean() - rt[ont].mean()
        assert step / dip == pytest.approx(1.917, rel=0.05)

    def test_drift_immunity_same_seed_ks(self):
        # same seed, drift on vs off: the additive-noise sensor's differential
        # is invariant sample for sample (KS = 0); the phase estimator's
        # nonlinearity leaves a small coupling residue, bounded separately
        base = dict(kind="gaussian", duration_s=1000.0, cadence_hz=10.0, seed=13)
        on = run_sensor_session(SensorSessionConfig(**base, drift_enabled=True))
        off = run_sensor_session(SensorSessionConfig(**base, drift_enabled=False))
        ks = stats.ks_2samp(on.differential.readings, off.differential.readings).statistic
        assert ks < 0.01
        assert np.allclose(on.differential.readings, off.differential.readings, atol=1e-9)

        # the phase estimator resamples part of its trial noise when the
        # crossing moves, so samples decouple; the distribution itself stays
        # indistinguishable (KS below the two-sample 5% critical value)
        phase = dict(kind="phase", duration_s=200.0, cadence_hz=10.0, seed=13)
        p_on = run_sensor_session(SensorSessionConfig(**phase, drift_enabled=True))
        p_off = run_sensor_session(SensorSessionConfig(**phase, drift_enabled=False))
        n = len(p_on.differential)
        ks_p = stats.ks_2samp(p_on.differential.readings, p_off.differential.readings).statistic
        assert ks_p < 1.36 * math.sqrt(2.0 / n)
        delta = p_on.differential.readings - p_off.differential.readings
        assert abs(delta.mean()) < 0.05

    def test_live_segments_match_batch(self):
        events = tuple(LaserEvent(6.0 * k, k % 2 == 1, 100.0, target="probe") for k in range(4))
        cfg = SensorSessionConfig(kind="tdc", duration_s=30.0, cadence_hz=25.0,
                                  laser_events=events, seed=17)
        batch = run_sensor_session(cfg)
        live = SensorSession(SensorSessionConfig(**{**cfg.__dict__, "laser_events": ()}))
        for ev in events:
            live.advance_to(int(ev.t_s * 25))
            live.append_event(ev)
        live.advance_to(750)
        live_diff = np.array([r[1] - r[2] for r in live._rows])
        assert np.array_equal(live_diff, batch.differential.readings)

    def test_thermal_ramp_settle(self):
        cfg = SensorSessionConfig(kind="ideal", duration_s=12.0, cadence_hz=100.0,
                                  drift_enabled=False, seed=1,
                                  laser_events=(LaserEvent(2.0, True, 100.0, target="probe"),))
        res = run_sensor_session(cfg)
        r, t = res.differential.readings, res.differential.t_s
        base = r[t < 2.0].mean()
        asym = r[t >= 10.0].mean() - base
        assert (r[np.abs(t - 3.0).argmin()] - base) >= 0.95 * asym
        assert (r[np.abs(t - 4.5).argmin()] - base) >= 0.999 * asym

    def test_moving_average_window(self):
        cfg = SensorSessionConfig(kind="gaussian", duration_s=30.0, cadence_hz=10.0, seed=2)
        res = run_sensor_session(cfg)
        ma = moving_average(res.differential, 2.0)
        assert len(ma) == len(res.differential)
        assert ma.std() < res.differential.readings.std()

    def test_annotations_follow_schedule(self):
        cfg = SensorSessionConfig(kind="ideal", duration_s=10.0, cadence_hz=10.0, seed=1,
                                  laser_events=(LaserEvent(5.0, True, 75.0, target="probe"),))
        res = run_sensor_session(cfg)
        d = res.differential
        assert not d.laser_on[d.t_s < 5.0].any()
        assert d.laser_on[d.t_s >= 5.0].all()
        assert set(d.power_pct[d.laser_on]) == {75.0}
