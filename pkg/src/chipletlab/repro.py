"""Pre-baked desk-scale experiment targets with pass/fail checks.

Each target is a complete scenario document plus a set of quantitative
checks against the calibration anchors: the sensing pipeline has to recover
the injected physics (thermal step 0.792 ps at 100% power, 0.413-tap dip on
a 1.917 ps/tap line, 4:1 driver visibility, sqrt(N) averaging, one-second
settle, power linearity) through its own estimators.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

import yaml

from . import artifacts
from .optics import EopTrace, THERMAL_DELTA_100_PS
from .runner import ScenarioResult, run_scenario

# check tolerances (calibration anchors)
PHASE_OFF_PS = -39.090
PHASE_ON_PS = -38.298
STEP_PS = 0.792
MEAN_TOL_PS = 0.05
TDC_DIP_TAPS = 0.413
TDC_DIP_TOL = 0.03
TAP_PITCH_PS = 1.917
TAP_PITCH_RTOL = 0.05
EOFM_RATIO = 4.0
EOFM_RATIO_TOL = 0.6
POWER_FIT_R2 = 0.99
RAMP_1S_FRACTION = 0.95
RAMP_2P5S_FRACTION = 0.999
FIG8_RUNTIME_LIMIT_S = 30.0

PROBE_NODE = "sll:0:400:0:0"
FABRIC_COL = 113  # two slice cells near the boundary column, same row as tile 400
FABRIC_ROW = 144


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def _toggle_schedule(period_s: float = 120.0, total_s: float = 480.0, power: float = 100.0,
                     node: str = PROBE_NODE) -> list[dict]:
    events = []
    k = 0
    t = 0.0
    while t < total_s:
        events.append({"t_s": t, "on": k % 2 == 1, "power_pct": power, "node": node})
        k += 1
        t += period_s
    return events


def _fabric_assignments() -> list[dict]:
    out = []
    for col in (FABRIC_COL, FABRIC_COL + 1):
        for pair in range(8):
            out.append({"node": f"ff:0:{col}:{FABRIC_ROW}:{pair}",
                        "activity": {"kind": "toggle", "frequency_hz": 100e6}})
    return out


def _tile_assignments(tile: int = 400) -> list[dict]:
    return [
        {"node": f"sll:0:{tile}:{s}:{l}", "activity": {"kind": "toggle", "frequency_hz": 100e6}}
        for s in range(4) for l in range(6)
    ]


def _fig3_doc() -> dict:
    blocks = [
        {"id": f"g{i}", "chiplet": 1, "x_um": 13000.0 + 1800.0 * (i % 3), "y_um": 6000.0 + 7000.0 * (i // 3)}
        for i in range(6)
    ]
    return {
        "name": "fig3-emission-guideposts",
        "seed": 1303,
        "floorplan": {"ro_blocks": blocks},
        "stimulus": {"block_enables": {"g0": True, "g4": True}},
        "steps": [{
            "name": "overview", "kind": "emission",
            "region_um": [11660.0, 0.0, 23320.0, 26000.0],
            "exposure_s": 10.0, "lens": "5x", "pitch_um": 20.0,
        }],
    }


def _fig5_doc() -> dict:
    return {
        "name": "fig5-eofm-drivers-vs-fabric",
        "seed": 1505,
        "stimulus": {"assignments": _tile_assignments() + _fabric_assignments()},
        "steps": [{
            "name": "scan", "kind": "eofm",
            "region_um": [11330.0, 14405.0, 11655.0, 14510.0],
            "f_target_hz": 100e6, "dwell_s": 10e-6, "pitch_um": 0.5,
            "lens": "20x", "power_pct": 100.0,
        }],
    }


def _fig7_doc() -> dict:
    steps = []
    for n in (5, 25, 100):
        steps.append({"name": f"laguna_n{n}", "kind": "eop", "node": PROBE_NODE,
                      "integrations": n, "trigger_period_s": 1e-6, "rate_hz": 1e9})
        steps.append({"name": f"fabric_n{n}", "kind": "eop",
                      "node": f"ff:0:{FABRIC_COL}:{FABRIC_ROW}:0",
                      "integrations": n, "trigger_period_s": 1e-6, "rate_hz": 1e9})
    return {
        "name": "fig7-eop-integrations",
        "seed": 1707,
        "stimulus": {"assignments": _tile_assignments() + _fabric_assignments()},
        "steps": steps,
    }


def _fig8_doc() -> dict:
    return {
        "name": "fig8-phase-sensor-jump",
        "seed": 1808,
        "steps": [{
            "name": "session", "kind": "sensor", "sensor": "phase",
            "duration_s": 480.0, "cadence_hz": 10.0,
            "probe_node": PROBE_NODE, "control_node": "sll:0:600:0:0",
            "laser_schedule": _toggle_schedule(),
        }],
    }


def _fig9_doc() -> dict:
    return {
        "name": "fig9-tdc-dip",
        "seed": 2024,
        "steps": [
            {"name": "phase", "kind": "sensor", "sensor": "phase",
             "duration_s": 480.0, "cadence_hz": 10.0, "trials_per_step": 800,
             "probe_node": PROBE_NODE, "control_node": "sll:0:600:0:0",
             "laser_schedule": _toggle_schedule()},
            {"name": "tdc", "kind": "sensor", "sensor": "tdc",
             "duration_s": 480.0, "cadence_hz": 100.0, "dither_sigma_ps": 1.2,
             "probe_node": PROBE_NODE, "control_node": "sll:0:600:0:0",
             "laser_schedule": _toggle_schedule()},
        ],
    }


def _fig10_doc() -> dict:
    schedule = [{"t_s": 2.0, "on": True, "power_pct": 100.0, "node": PROBE_NODE}]
    return {
        "name": "fig10-thermal-ramp",
        "seed": 1010,
        "steps": [
            {"name": "ramp", "kind": "sensor", "sensor": "ideal",
             "duration_s": 12.0, "cadence_hz": 100.0,
             "probe_node": PROBE_NODE, "control_node": "sll:0:600:0:0",
             "laser_schedule": schedule, "drift_sigma_ps": 0.0},
            {"name": "measured", "kind": "sensor", "sensor": "phase",
             "duration_s": 12.0, "cadence_hz": 10.0,
             "probe_node": PROBE_NODE, "control_node": "sll:0:600:0:0",
             "laser_schedule": schedule},
        ],
    }


def _fig11_doc() -> dict:
    steps = []
    for p in (25.0, 50.0, 75.0, 100.0):
        steps.append({
            "name": f"p{int(p)}", "kind": "sensor", "sensor": "phase",
            "duration_s": 240.0, "cadence_hz": 10.0, "trials_per_step": 800,
            "probe_node": PROBE_NODE, "control_node": "sll:0:600:0:0",
            "laser_schedule": _toggle_schedule(period_s=60.0, total_s=240.0, power=p),
        })
    return {"name": "fig11-power-linearity", "seed": 1111, "steps": steps}


SCENARIOS = {
    "fig3": _fig3_doc,
    "fig5": _fig5_doc,
    "fig7": _fig7_doc,
    "fig8": _fig8_doc,
    "fig9": _fig9_doc,
    "fig10": _fig10_doc,
    "fig11": _fig11_doc,
    "table-numbers": _fig9_doc,  # same runs, different reporting
}


# -- measurements -------------------------------------------------------------------


def on_off_means(series) -> tuple[float, float]:
    on = series.laser_on
    return float(series.readings[on].mean()), float(series.readings[~on].mean())


def snr_of_trace(trace: EopTrace, frequency_hz: float = 100e6) -> float:
    """Amplitude of the known square wave over residual noise."""
    t = trace.times_s
    template = (np.floor(2.0 * frequency_hz * t + 1e-9).astype(np.int64) % 2) * 2.0 - 1.0
    amp = 0.5 * (trace.samples[template > 0].mean() - trace.samples[template < 0].mean())
    resid = trace.samples - trace.samples.mean() - amp * template
    sd = float(resid.std())
    return abs(float(amp)) / sd if sd > 0 else math.inf


def eofm_blob_ratio(m, plan) -> float:
    """Driver-to-fabric per-blob integrated intensity on the fig5 scan."""
    xs, ys = m.pixel_centers()
    X, Y = np.meshgrid(xs, ys)
    drv = np.array([plan.node(f"sll:0:400:{s}:{l}").position for s in range(4) for l in range(6)])
    fab = np.array([plan.node(f"ff:0:{c}:{FABRIC_ROW}:{p}").position
                    for c in (FABRIC_COL, FABRIC_COL + 1) for p in range(8)])
    both = np.vstack([drv, fab])

    def mask_of(centers, r):
        mask = np.zeros(m.values.shape, bool)
        for cx, cy in centers:
            mask |= (X - cx) ** 2 + (Y - cy) ** 2 <= r * r
        return mask

    bg_mask = ~mask_of(both, 8.0)
    bg = float(m.values[bg_mask].mean())
    per_drv = float((m.values[mask_of(drv, 3.5)] - bg).sum()) / len(drv)
    per_fab = float((m.values[mask_of(fab, 3.5)] - bg).sum()) / len(fab)
    return per_drv / per_fab


def _linear_fit_through_origin(powers, steps) -> tuple[float, float]:
    p = np.asarray(powers)
    s = np.asarray(steps)
    slope = float((p * s).sum() / (p * p).sum())
    ss_res = float(((s - slope * p) ** 2).sum())
    ss_tot = float(((s - s.mean()) ** 2).sum())
    return slope, 1.0 - ss_res / ss_tot


# -- target execution ----------------------------------------------------------------


def run_target(target: str, outdir: str | Path, emit_plots: bool = True) -> tuple[ScenarioResult, list[CheckResult]]:
    """Run one pre-baked target and evaluate its checks."""
    if target not in SCENARIOS:
        raise KeyError(f"unknown repro target {target!r}; choose from {sorted(SCENARIOS)}")
    doc = SCENARIOS[target]()
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    t0 = time.monotonic()
    result = run_scenario(doc, outdir, emit_plots=emit_plots)
    elapsed = time.monotonic() - t0
    (outdir / "scenario.yaml").write_text(yaml.safe_dump(doc, sort_keys=False))

    checks = _CHECKERS[target](result, elapsed)
    report = "\n".join(c.line() for c in checks)
    (outdir / "checks.txt").write_text(report + "\n")
    return result, checks


def _within(value, target, tol) -> bool:
    return abs(value - target) <= tol


def _check_fig3(result: ScenarioResult, elapsed: float) -> list[CheckResult]:
    from .scenario import build_plan

    doc = _fig3_doc()
    plan = build_plan(doc)
    m = result.maps["overview"]
    xs, ys = m.pixel_centers()
    X, Y = np.meshgrid(xs, ys)
    dark = m.meta["dark_rate_cps"] * m.meta["exposure_s"]
    psf_r = 5.664  # 5x spot radius at 1.3 um
    checks = []
    for block, enabled in (("g0", True), ("g4", True), ("g1", False)):
        bx0, by0, bx1, by1 = plan.ro_block_rect(block)
        cx, cy = (bx0 + bx1) / 2, (by0 + by1) / 2
        mask = (np.abs(X - cx) < 250) & (np.abs(Y - cy) < 250)
        w = m.values[mask] - dark
        if enabled:
            gx = float((X[mask] * w).sum() / w.sum())
            gy = float((Y[mask] * w).sum() / w.sum())
            err = math.hypot(gx - cx, gy - cy)
            checks.append(CheckResult(
                f"emission blob centroid ({block})", err <= psf_r,
                f"offset {err:.2f} um <= one PSF radius {psf_r:.2f} um"))
        else:
            level = float(w.mean())
            checks.append(CheckResult(
                f"disabled block dark ({block})", abs(level) < 3.0,
                f"residual {level:.2f} counts over dark"))
    return checks


def _check_fig5(result: ScenarioResult, elapsed: float) -> list[CheckResult]:
    from .scenario import build_plan

    plan = build_plan(_fig5_doc())
    ratio = eofm_blob_ratio(result.maps["scan"], plan)
    return [CheckResult(
        "driver:fabric per-blob intensity",
        _within(ratio, EOFM_RATIO, EOFM_RATIO_TOL),
        f"ratio {ratio:.3f} within {EOFM_RATIO} +/- {EOFM_RATIO_TOL}",
    )]


def _check_fig7(result: ScenarioResult, elapsed: float) -> list[CheckResult]:
    checks = []
    for n in (5, 25, 100):
        snr_l = snr_of_trace(result.traces[f"laguna_n{n}"])
        snr_f = snr_of_trace(result.traces[f"fabric_n{n}"])
        checks.append(CheckResult(
            f"SNR ordering at N={n}", snr_l > snr_f,
            f"laguna {snr_l:.2f} > fabric {snr_f:.2f}"))
    artifacts.plot_traces(
        [(f"{kind} N={n}", result.traces[f"{kind}_n{n}"]) for n in (5, 25, 100)
         for kind in ("laguna", "fabric")],
        result.outdir / "traces_view.png", title="probe traces vs integrations")
    return checks


def _check_fig8(result: ScenarioResult, elapsed: float) -> list[CheckResult]:
    on, off = on_off_means(result.sensor_results["session"].differential)
    step = on - off
    return [
        CheckResult("laser-off differential mean", _within(off, PHASE_OFF_PS, MEAN_TOL_PS),
                    f"{off:.4f} ps within {PHASE_OFF_PS} +/- {MEAN_TOL_PS}"),
        CheckResult("laser-on differential mean", _within(on, PHASE_ON_PS, MEAN_TOL_PS),
                    f"{on:.4f} ps within {PHASE_ON_PS} +/- {MEAN_TOL_PS}"),
        CheckResult("probing step", _within(step, STEP_PS, MEAN_TOL_PS),
                    f"{step:.4f} ps within {STEP_PS} +/- {MEAN_TOL_PS}"),
        CheckResult("runtime", elapsed < FIG8_RUNTIME_LIMIT_S,
                    f"{elapsed:.1f} s < {FIG8_RUNTIME_LIMIT_S:.0f} s"),
    ]


def _fig9_numbers(result: ScenarioResult) -> dict:
    on_p, off_p = on_off_means(result.sensor_results["phase"].differential)
    on_t, off_t = on_off_means(result.sensor_results["tdc"].differential)
    step = on_p - off_p
    dip = off_t - on_t
    return {
        "phase_off_ps": off_p, "phase_on_ps": on_p, "step_ps": step,
        "dip_taps": dip, "pitch_ps_per_tap": step / dip,
        "tdc_samples": len(result.sensor_results["tdc"].differential),
    }


def _check_fig9(result: ScenarioResult, elapsed: float) -> list[CheckResult]:
    n = _fig9_numbers(result)
    return [
        CheckResult("tdc sample budget", n["tdc_samples"] >= 10_000,
                    f"{n['tdc_samples']} samples >= 10000"),
        CheckResult("tap dip", _within(n["dip_taps"], TDC_DIP_TAPS, TDC_DIP_TOL),
                    f"{n['dip_taps']:.4f} taps within {TDC_DIP_TAPS} +/- {TDC_DIP_TOL}"),
        CheckResult("derived tap pitch",
                    _within(n["pitch_ps_per_tap"], TAP_PITCH_PS, TAP_PITCH_PS * TAP_PITCH_RTOL),
                    f"{n['pitch_ps_per_tap']:.4f} ps/tap within {TAP_PITCH_PS} +/- 5%"),
    ]


def _check_fig10(result: ScenarioResult, elapsed: float) -> list[CheckResult]:
    series = result.sensor_results["ramp"].differential
    t = series.t_s
    r = series.readings
    baseline = float(r[t < 2.0].mean())
    asymptote = float(r[t >= 10.0].mean()) - baseline
    at_1s = float(r[np.argmin(np.abs(t - 3.0))]) - baseline
    at_2p5s = float(r[np.argmin(np.abs(t - 4.5))]) - baseline
    return [
        CheckResult("settle to 95% within 1 s", at_1s >= RAMP_1S_FRACTION * asymptote,
                    f"{at_1s / asymptote:.4f} of asymptote at t_on+1s"),
        CheckResult("settle to 99.9% within 2.5 s", at_2p5s >= RAMP_2P5S_FRACTION * asymptote,
                    f"{at_2p5s / asymptote:.5f} of asymptote at t_on+2.5s"),
        CheckResult("asymptote magnitude", _within(asymptote, THERMAL_DELTA_100_PS, 1e-6),
                    f"{asymptote:.6f} ps == {THERMAL_DELTA_100_PS} ps"),
    ]


def _check_fig11(result: ScenarioResult, elapsed: float) -> list[CheckResult]:
    powers = (25.0, 50.0, 75.0, 100.0)
    steps = []
    for p in powers:
        on, off = on_off_means(result.sensor_results[f"p{int(p)}"].differential)
        steps.append(on - off)
    slope, r2 = _linear_fit_through_origin(powers, steps)
    artifacts.write_rows_csv(result.outdir / "power_fit.csv",
                             ["power_pct", "step_ps"], zip(powers, steps),
                             {"slope_ps_per_pct": f"{slope:.6g}", "r2": f"{r2:.6g}"})
    result.files.append(result.outdir / "power_fit.csv")
    return [CheckResult("power linearity", r2 >= POWER_FIT_R2,
                        f"R^2 {r2:.5f} >= {POWER_FIT_R2} (slope {slope * 100:.3f} ps at 100%)")]


def _check_table(result: ScenarioResult, elapsed: float) -> list[CheckResult]:
    n = _fig9_numbers(result)
    rows = [
        ("laser-off differential (ps)", PHASE_OFF_PS, n["phase_off_ps"], MEAN_TOL_PS),
        ("laser-on differential (ps)", PHASE_ON_PS, n["phase_on_ps"], MEAN_TOL_PS),
        ("delay step (ps)", STEP_PS, n["step_ps"], MEAN_TOL_PS),
        ("tap dip (taps)", TDC_DIP_TAPS, n["dip_taps"], TDC_DIP_TOL),
        ("tap pitch (ps/tap)", TAP_PITCH_PS, n["pitch_ps_per_tap"], TAP_PITCH_PS * TAP_PITCH_RTOL),
    ]
    lines = [f"{name}: measured {value:.4f}, reference {ref}, tolerance +/-{tol:.4g}"
             for name, ref, value, tol in rows]
    (result.outdir / "table_numbers.txt").write_text("\n".join(lines) + "\n")
    result.files.append(result.outdir / "table_numbers.txt")
    return [CheckResult(name, _within(value, ref, tol), f"{value:.4f} vs {ref} +/- {tol:.4g}")
            for name, ref, value, tol in rows]


_CHECKERS = {
    "fig3": _check_fig3,
    "fig5": _check_fig5,
    "fig7": _check_fig7,
    "fig8": _check_fig8,
    "fig9": _check_fig9,
    "fig10": _check_fig10,
    "fig11": _check_fig11,
    "table-numbers": _check_table,
}
