"""Scenario execution: runs declared steps in order and emits artifacts.

Each step draws its noise from a substream keyed by the step's name, writes
its artifact files under the output directory, and the run ends with a
manifest listing every file and digest. On failure all partial outputs are
removed. Reruns with the same document and seed are byte-identical for all
CSV artifacts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import artifacts
from .detection import DetectorConfig, cusum_detect
from .masking import evaluate_masking
from .optics import LaserState, emission_capture, eofm_scan, eop_acquire
from .scenario import ScenarioError, build_plan, build_program, canonical_json, load_scenario, validate_scenario
from .seeding import derive_seed, substream
from .timing import (
    DriftProcess,
    LaserEvent,
    SensorSessionConfig,
    TdcConfig,
    run_sensor_session,
)


class RunError(RuntimeError):
    """A step failed at runtime (references, state, IO)."""


@dataclass
class ScenarioResult:
    outdir: Path
    files: list[Path] = field(default_factory=list)
    sensor_results: dict = field(default_factory=dict)
    maps: dict = field(default_factory=dict)
    traces: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)
    manifest: Path | None = None


def _laser_events(schedule, plan) -> tuple[LaserEvent, ...]:
    events = []
    for ev in schedule or []:
        x, y = ev.get("x_um"), ev.get("y_um")
        if "node" in ev:
            x, y = plan.node(ev["node"]).position
        events.append(LaserEvent(
            t_s=ev["t_s"], on=ev["on"], power_pct=ev.get("power_pct", 100.0),
            x_um=x, y_um=y, lens=ev.get("lens", "71x"), target=ev.get("target"),
        ))
    return tuple(events)


def run_scenario(doc_or_path, outdir: str | Path, emit_plots: bool = True) -> ScenarioResult:
    """Execute a scenario document; idempotent for a fixed seed."""
    if isinstance(doc_or_path, (str, Path)):
        doc = load_scenario(doc_or_path)
    else:
        validate_scenario(doc_or_path)
        doc = doc_or_path

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    result = ScenarioResult(outdir=outdir)
    seed = int(doc["seed"])

    try:
        plan = build_plan(doc)
        program = build_program(doc, plan)
        for step in doc.get("steps", []):
            _run_step(step, doc, plan, program, result, emit_plots)
    except Exception:
        for f in result.files:
            Path(f).unlink(missing_ok=True)
        raise

    result.manifest = artifacts.write_manifest(
        outdir, artifacts.digest_of_text(canonical_json(doc)), seed, result.files
    )
    return result


def _add(result: ScenarioResult, path: Path) -> Path:
    result.files.append(path)
    return path


def _run_step(step, doc, plan, program, result: ScenarioResult, emit_plots: bool) -> None:
    kind, name = step["kind"], step["name"]
    seed = int(doc["seed"])
    out = result.outdir

    if kind == "emission":
        m = emission_capture(
            plan, program, tuple(step["region_um"]), step["exposure_s"],
            lens=step.get("lens", "5x"), pitch_um=step.get("pitch_um"),
            rng=substream(seed, "optics", name),
        )
        result.maps[name] = m
        artifacts.write_map_csv(m, _add(result, out / f"{name}.csv"))
        if step.get("png", True):
            artifacts.write_map_png(m, _add(result, out / f"{name}.png"))
        if emit_plots:
            artifacts.plot_map(m, _add(result, out / f"{name}_view.png"), title=name)

    elif kind == "eofm":
        m = eofm_scan(
            plan, program, tuple(step["region_um"]), step["f_target_hz"],
            step["dwell_s"], step["pitch_um"], lens=step.get("lens", "20x"),
            power_pct=step.get("power_pct", 100.0),
            rng=substream(seed, "optics", name),
        )
        result.maps[name] = m
        artifacts.write_map_csv(m, _add(result, out / f"{name}.csv"))
        if step.get("png", True):
            artifacts.write_map_png(m, _add(result, out / f"{name}.png"))
        if emit_plots:
            artifacts.plot_map(m, _add(result, out / f"{name}_view.png"), title=name)

    elif kind == "eop":
        if "node" in step:
            x, y = plan.node(step["node"]).position
        else:
            x, y = step["x_um"], step["y_um"]
        laser = LaserState(
            x_um=x, y_um=y, power_pct=step.get("power_pct", 100.0),
            lens=step.get("lens", "71x"), on=True,
        )
        tr = eop_acquire(
            plan, program, laser, step.get("integrations", 100),
            step.get("trigger_period_s", 1e-7), step.get("rate_hz", 1e10),
            rng=substream(seed, "optics", name),
        )
        result.traces[name] = tr
        artifacts.write_trace_csv(tr, _add(result, out / f"{name}.csv"))

    elif kind == "sensor":
        tdc = TdcConfig(
            tap_pitch_ps=step.get("tap_pitch_ps", 1.917),
            dither_sigma_ps=step.get("dither_sigma_ps", 2.0),
        )
        cfg = SensorSessionConfig(
            kind=step.get("sensor", "phase"),
            duration_s=step.get("duration_s", 480.0),
            cadence_hz=step.get("cadence_hz", 10.0),
            probe_nominal_ps=step.get("probe_nominal_ps", 500.0),
            control_nominal_ps=step.get("control_nominal_ps", 539.090),
            trials_per_step=step.get("trials_per_step", 200),
            jitter_sigma_ps=step.get("jitter_sigma_ps", 5.0),
            tdc=tdc,
            gaussian_sigma_ps=step.get("gaussian_sigma_ps", 0.5),
            drift=DriftProcess(stationary_sigma_ps=step.get("drift_sigma_ps", 2.0)),
            drift_enabled=step.get("drift_sigma_ps", 2.0) > 0,
            laser_events=_laser_events(step.get("laser_schedule", doc.get("laser_schedule")), plan),
            seed=derive_seed(seed, "sensor", name),
        )
        res = run_sensor_session(cfg, plan, step.get("probe_node"), step.get("control_node"))
        result.sensor_results[name] = res
        artifacts.write_series_csv(res.differential, _add(result, out / f"{name}.csv"))
        if emit_plots:
            artifacts.plot_series(res.differential, _add(result, out / f"{name}_view.png"), title=name)

    elif kind == "detect":
        ref = step["series"]
        if ref not in result.sensor_results:
            raise RunError(f"detect step {name!r} references unknown series {ref!r}")
        series = result.sensor_results[ref].differential
        cfg = DetectorConfig(
            algorithm=step.get("algorithm", "cusum"),
            k_ps=step.get("k_ps", 0.2),
            h_ps=step.get("h_ps", 1.0),
            window=step.get("window", 100),
        )
        report = cusum_detect(series, cfg)
        result.reports[name] = report
        artifacts.write_detection_report(
            report, _add(result, out / f"{name}.csv"), _add(result, out / f"{name}.txt")
        )

    elif kind == "mask_eval":
        report = evaluate_masking(
            plan, program, step["lane"],
            repetitions=step.get("repetitions", 1000),
            n_integrations=step.get("integrations", 1),
            rng=substream(seed, "optics", name),
            periods_per_trace=step.get("periods_per_trace", 16),
        )
        result.reports[name] = report
        artifacts.write_masking_report(
            report, _add(result, out / f"{name}.csv"), _add(result, out / f"{name}.txt")
        )

    else:  # pragma: no cover - schema forbids it
        raise ScenarioError(f"unknown step kind {kind!r}")
