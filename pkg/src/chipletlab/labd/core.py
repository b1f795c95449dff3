"""Session engine behind the interactive service.

A session owns one simulated laboratory: floorplan, stimulus program, one
laser, a simulated clock, sensor streams and acquisition artifacts. Every
mutating command is applied under the session lock in receipt order and
appended to the command log with its simulated timestamp; replaying that log
on a fresh session reproduces every reading and artifact byte for byte,
which is also how checkpoint/restore works.

The clock either advances in real time (scaled by `speed`) so a human
perceives the one-second thermal ramp, or manually via the `advance`
command, which is what tests and replays use. Sensor readings materialise
lazily whenever the clock has passed their tick times; their values depend
only on tick index, configuration and the laser event history, never on
when they were materialised.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .. import artifacts
from ..detection import DetectorConfig, cusum_detect
from ..floorplan import UnknownNodeError
from ..masking import MaskedLinkConfig, install_masked_link
from ..optics import LaserState, emission_capture, eofm_scan, eop_acquire
from ..scenario import SCENARIO_SCHEMA, _STEP, build_plan, build_program, validate_scenario
from ..seeding import derive_seed, substream
from ..stimulus import Pattern
from ..timing import (
    DriftProcess,
    LaserEvent,
    SensorSession,
    SensorSessionConfig,
    SensorSeries,
    TdcConfig,
)


class CommandError(ValueError):
    """Malformed command (schema violation, with field path)."""


class NotFound(KeyError):
    pass


_ACQ_KINDS = ("emission", "eofm", "eofm_preview", "eop")

_SENSOR_SCHEMA = {
    "type": "object",
    "properties": {k: v for k, v in _STEP["properties"].items()
                   if k not in ("name", "kind", "region_um", "laser_schedule", "series")},
    "required": ["sensor"],
    "additionalProperties": False,
}

_DETECT_SCHEMA = {
    "type": "object",
    "properties": {
        "stream": {"type": "string"},
        "start": {"type": "integer", "minimum": 0},
        "end": {"type": "integer", "minimum": 1},
        "algorithm": {"enum": ["cusum", "window"]},
        "k_ps": {"type": "number", "minimum": 0},
        "h_ps": {"type": "number", "exclusiveMinimum": 0},
        "window": {"type": "integer", "minimum": 1},
    },
    "required": ["stream"],
    "additionalProperties": False,
}

_MASKING_SCHEMA = {
    "type": "object",
    "properties": {
        "enabled": {"type": "boolean"},
        "data_lanes": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "pad_lane": {"type": "string"},
        "bit_rate_hz": {"type": "number", "exclusiveMinimum": 0},
        "fresh_pad": {"type": "boolean"},
        "random_bits": {"type": "integer", "minimum": 1},
    },
    "required": ["enabled", "data_lanes", "pad_lane"],
    "additionalProperties": False,
}


def _validate(payload: dict, schema: dict) -> None:
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(payload), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        path = "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in e.absolute_path)
        raise CommandError(f"{path}: {e.message}")


@dataclass
class StreamState:
    stream_id: str
    session: SensorSession
    params: dict
    rows: list = field(default_factory=list)


@dataclass
class Job:
    job_id: str
    kind: str
    state: str = "queued"  # queued | running | done | error
    progress: float = 0.0
    artifact_id: str | None = None
    error: str | None = None


class SessionCore:
    """One simulated laboratory with a serialized command stream."""

    def __init__(self, doc: dict | None = None, clock: str = "realtime", speed: float = 1.0,
                 session_id: str | None = None, executor: ThreadPoolExecutor | None = None):
        doc = doc if doc is not None else {"name": "interactive", "seed": 0}
        validate_scenario(doc)
        if doc.get("steps"):
            raise CommandError("session scenarios carry state only; declare steps via commands")
        if clock not in ("realtime", "manual"):
            raise CommandError(f"unknown clock mode {clock!r}")
        self.doc = doc
        self.session_id = session_id or uuid.uuid4().hex[:12]
        self.seed = int(doc["seed"])
        self.clock_mode = clock
        self.speed = float(speed)
        self.plan = build_plan(doc)
        self.program = build_program(doc, self.plan)
        self.laser = LaserState(on=False)
        self.lock = threading.RLock()
        self.log: list[dict] = []
        self.streams: dict[str, StreamState] = {}
        self.jobs: dict[str, Job] = {}
        self.artifacts: dict[str, dict] = {}
        self._counter = 0
        self._manual_t = 0.0
        self._last_laser_t = -1.0
        self._wall0 = time.monotonic()
        self._executor = executor or ThreadPoolExecutor(max_workers=2)

    # -- clock ----------------------------------------------------------------

    def now(self) -> float:
        if self.clock_mode == "manual":
            return self._manual_t
        return (time.monotonic() - self._wall0) * self.speed

    def _materialize(self, t: float) -> None:
        for stream in self.streams.values():
            cfg = stream.session.config
            n = int(np.floor((t - cfg.t0_s) * cfg.cadence_hz + 1e-9)) + 1
            if n > stream.session.materialized_ticks:
                stream.rows.extend(stream.session.advance_to(n))

    def _begin(self, cmd: str, params: dict) -> float:
        """Advance streams to the command instant and log the command."""
        t = self.now()
        self._materialize(t)
        self.log.append({"t": t, "cmd": cmd, "params": params})
        return t

    def _logged(self, cmd: str, params: dict, body):
        """Run a command body; a failed command leaves no trace in the log."""
        t = self._begin(cmd, params)
        try:
            return body(t)
        except Exception:
            self.log.pop()
            raise

    def _next_id(self, prefix: str) -> str:
        self._counter += 1
        return f"{prefix}{self._counter}"

    # -- commands ---------------------------------------------------------------

    def advance(self, dt_s: float) -> float:
        with self.lock:
            if self.clock_mode != "manual":
                raise CommandError("advance is only valid with the manual clock")
            if dt_s < 0:
                raise CommandError("cannot advance the clock backwards")
            self._begin("advance", {"dt_s": dt_s})
            self._manual_t += dt_s
            self._materialize(self._manual_t)
            return self._manual_t

    def set_block(self, block_id: str, enabled: bool) -> None:
        with self.lock:
            if block_id not in self.program.block_enables:
                raise UnknownNodeError(block_id)
            self._begin("set_block", {"block_id": block_id, "enabled": bool(enabled)})
            self.program.set_ro_block(block_id, enabled)

    def set_laser(self, on: bool, power_pct: float = 100.0, lens: str = "71x",
                  x_um: float | None = None, y_um: float | None = None,
                  node: str | None = None) -> dict:
        with self.lock:
            if node is not None:
                x_um, y_um = self.plan.node(node).position
            if x_um is None or y_um is None:
                x_um, y_um = self.laser.x_um, self.laser.y_um
            probe = LaserState(x_um=x_um, y_um=y_um, power_pct=power_pct, lens=lens, on=on)
            params = {"on": bool(on), "power_pct": power_pct, "lens": lens,
                      "x_um": x_um, "y_um": y_um, "node": node}
            t = self._begin("set_laser", params)
            was_on = self.laser.on
            self.laser = replace(probe, on_since_s=t if (on and not was_on) else self.laser.on_since_s)
            # event times must strictly increase per stream; back-to-back
            # commands at one manual instant get a deterministic nudge
            t_event = max(t, self._last_laser_t + 1e-9)
            self._last_laser_t = t_event
            event = LaserEvent(t_s=t_event, on=on, power_pct=power_pct, x_um=x_um, y_um=y_um, lens=lens)
            for stream in self.streams.values():
                stream.session.append_event(event)
            return self.laser_state()

    def laser_state(self) -> dict:
        return {
            "x_um": self.laser.x_um, "y_um": self.laser.y_um,
            "power_pct": self.laser.power_pct, "lens": self.laser.lens,
            "on": self.laser.on, "spot_radius_um": self.laser.spot_radius_um,
            "t": self.now(),
        }

    def start_sensor(self, params: dict) -> str:
        with self.lock:
            _validate(params, _SENSOR_SCHEMA)
            t = self._begin("start_sensor", params)
            stream_id = self._next_id("s")
            cadence = params.get("cadence_hz", 10.0)
            cfg = SensorSessionConfig(
                kind=params["sensor"],
                duration_s=float("inf"),
                cadence_hz=cadence,
                t0_s=t,
                probe_nominal_ps=params.get("probe_nominal_ps", 500.0),
                control_nominal_ps=params.get("control_nominal_ps", 539.090),
                trials_per_step=params.get("trials_per_step", 200),
                jitter_sigma_ps=params.get("jitter_sigma_ps", 5.0),
                tdc=TdcConfig(
                    tap_pitch_ps=params.get("tap_pitch_ps", 1.917),
                    dither_sigma_ps=params.get("dither_sigma_ps", 2.0),
                ),
                gaussian_sigma_ps=params.get("gaussian_sigma_ps", 0.5),
                drift=DriftProcess(stationary_sigma_ps=params.get("drift_sigma_ps", 2.0)),
                drift_enabled=params.get("drift_sigma_ps", 2.0) > 0,
                seed=derive_seed(self.seed, "stream", stream_id),
            )
            session = SensorSession(cfg, self.plan,
                                    params.get("probe_node"), params.get("control_node"))
            # replay the laser history (with the same deterministic nudges) so
            # the heat state is correct from the session epoch
            last = -1.0
            for entry in self.log:
                if entry["cmd"] == "set_laser":
                    p = entry["params"]
                    x, y = p.get("x_um"), p.get("y_um")
                    if p.get("node"):
                        x, y = self.plan.node(p["node"]).position
                    t_event = max(entry["t"], last + 1e-9)
                    last = t_event
                    if x is not None:
                        session.append_event(LaserEvent(
                            t_s=t_event, on=p["on"], power_pct=p["power_pct"],
                            x_um=x, y_um=y, lens=p["lens"]))
            self.streams[stream_id] = StreamState(stream_id, session, params)
            return stream_id

    def stream_rows(self, stream_id: str, start: int = 0) -> list[list]:
        with self.lock:
            if stream_id not in self.streams:
                raise NotFound(stream_id)
            self._materialize(self.now())
            return [
                [r[0], r[1] - r[2], bool(r[3]), r[4]]
                for r in self.streams[stream_id].rows[start:]
            ]

    def stream_series(self, stream_id: str, start: int = 0, end: int | None = None) -> SensorSeries:
        with self.lock:
            if stream_id not in self.streams:
                raise NotFound(stream_id)
            self._materialize(self.now())
            stream = self.streams[stream_id]
            rows = stream.rows[start:end]
            if not rows:
                raise CommandError("requested stream window is empty")
            arr = np.array([r[:3] for r in rows], dtype=float)
            cfg = stream.session.config
            return SensorSeries(
                t_s=arr[:, 0], readings=arr[:, 1] - arr[:, 2],
                laser_on=np.array([r[3] for r in rows], dtype=bool),
                power_pct=np.array([r[4] for r in rows], dtype=float),
                kind=cfg.kind, units="taps" if cfg.kind == "tdc" else "ps",
                cadence_hz=cfg.cadence_hz,
            )

    def acquire(self, params: dict, synchronous: bool = False) -> Job:
        with self.lock:
            kind = params.get("kind")
            if kind not in _ACQ_KINDS:
                raise CommandError(f"$.kind: {kind!r} is not one of {_ACQ_KINDS}")
            step_kind = "eofm" if kind == "eofm_preview" else kind
            _validate({**params, "kind": step_kind, "name": "acq"}, _STEP)
            self._begin("acquire", params)
            job = Job(self._next_id("j"), kind)
            self.jobs[job.job_id] = job
            seed = derive_seed(self.seed, "acq", job.job_id)

            if kind == "eop":
                # trace probing consumes pad bits: runs inline, in command order
                job.state = "running"
                try:
                    self._run_eop(job, params, seed)
                except Exception as e:
                    job.state = "error"
                    job.error = str(e)
                    self.log.pop()  # a failed probe mutates nothing; keep the log replayable
                    raise
                return job

            snapshot = self.program.snapshot()
            if synchronous:
                job.state = "running"
                self._run_capture(job, params, seed, snapshot)
            else:
                self._executor.submit(self._run_capture, job, params, seed, snapshot)
            return job

    def _run_eop(self, job: Job, params: dict, seed: int) -> None:
        if "node" in params:
            x, y = self.plan.node(params["node"]).position
        else:
            x, y = params["x_um"], params["y_um"]
        laser = LaserState(x_um=x, y_um=y, power_pct=params.get("power_pct", self.laser.power_pct),
                           lens=params.get("lens", self.laser.lens), on=self.laser.on)
        trace = eop_acquire(
            self.plan, self.program, laser,
            params.get("integrations", 100),
            params.get("trigger_period_s", 1e-6),
            params.get("rate_hz", 1e9),
            rng=substream(seed, "eop"),
        )
        artifact_id = f"a-{job.job_id}"
        self.artifacts[artifact_id] = {"kind": "trace", "trace": trace, "params": params}
        job.artifact_id = artifact_id
        job.progress = 1.0
        job.state = "done"

    def _run_capture(self, job: Job, params: dict, seed: int, program) -> None:
        job.state = "running"
        try:
            region = tuple(params["region_um"])
            if params["kind"] == "emission":
                m = emission_capture(
                    self.plan, program, region, params.get("exposure_s", 10.0),
                    lens=params.get("lens", "5x"), pitch_um=params.get("pitch_um"),
                    rng=substream(seed, "emission"),
                )
                job.progress = 1.0
            else:
                pitch = params.get("pitch_um", 1.0)
                if params["kind"] == "eofm_preview":
                    pitch = max(pitch, 4.0)  # coarse quick-look pass

                def _progress(frac: float) -> None:
                    job.progress = frac

                m = eofm_scan(
                    self.plan, program, region, params["f_target_hz"],
                    params.get("dwell_s", 10e-6), pitch,
                    lens=params.get("lens", "20x"),
                    power_pct=params.get("power_pct", 100.0),
                    rng=substream(seed, "eofm"),
                    progress=_progress,
                )
            artifact_id = f"a-{job.job_id}"
            with self.lock:
                self.artifacts[artifact_id] = {"kind": "map", "map": m, "params": params}
                job.artifact_id = artifact_id
                job.state = "done"
        except Exception as e:  # noqa: BLE001 - job boundary
            job.state = "error"
            job.error = str(e)

    def detect(self, params: dict) -> dict:
        with self.lock:
            _validate(params, _DETECT_SCHEMA)
            series = self.stream_series(params["stream"], params.get("start", 0), params.get("end"))
            self._begin("detect", params)
            cfg = DetectorConfig(
                algorithm=params.get("algorithm", "cusum"),
                k_ps=params.get("k_ps", 0.2),
                h_ps=params.get("h_ps", 1.0),
                window=params.get("window", 100),
            )
            report = cusum_detect(series, cfg)
            return {
                "alarms": [{"t_s": t, "statistic": s} for t, s in report.alarms],
                "latencies_s": report.latencies_s,
                "missed_steps": report.missed_steps,
                "false_alarm_rate_per_hour": report.false_alarm_rate_per_hour,
                "summary": report.summary_text(),
            }

    def set_masking(self, params: dict) -> None:
        """Masking demo toggle: wire (or unwire) a masked link on given lanes."""
        with self.lock:
            _validate(params, _MASKING_SCHEMA)
            self._begin("set_masking", params)
            cfg = MaskedLinkConfig(
                data_lanes=tuple(params["data_lanes"]),
                pad_lane=params["pad_lane"],
                bit_rate_hz=params.get("bit_rate_hz", 100e6),
                fresh_pad=params.get("fresh_pad", True),
            )
            n_bits = params.get("random_bits", 64)
            data = {
                lane: tuple(int(b) for b in substream(self.seed, "link-data", lane).integers(0, 2, n_bits))
                for lane in cfg.data_lanes
            }
            if params["enabled"]:
                install_masked_link(self.program, cfg, data)
            else:
                for lane in cfg.data_lanes:
                    self.program.assign(lane, Pattern(data[lane], bit_rate_hz=cfg.bit_rate_hz))
                self.program.assignments.pop(cfg.pad_lane, None)

    # -- introspection -------------------------------------------------------------

    def floorplan_geometry(self) -> dict:
        return self.plan.geometry_summary()

    def artifact_meta(self, artifact_id: str) -> dict:
        art = self.artifacts.get(artifact_id)
        if art is None:
            raise NotFound(artifact_id)
        if art["kind"] == "map":
            m = art["map"]
            return {"kind": m.kind, "region_um": list(m.region_um), "pitch_um": m.pitch_um,
                    "nx": m.nx, "ny": m.ny, "meta": _json_safe(m.meta)}
        trace = art["trace"]
        return {"kind": "trace", "integrations": trace.integrations, "rate_hz": trace.rate_hz,
                "trigger_period_s": trace.trigger_period_s,
                "position_um": list(trace.position_um), "meta": _json_safe(trace.meta)}

    def artifact_csv(self, artifact_id: str) -> str:
        art = self.artifacts.get(artifact_id)
        if art is None:
            raise NotFound(artifact_id)
        if art["kind"] == "map":
            return artifacts.map_csv_text(art["map"])
        return artifacts.trace_csv_text(art["trace"])

    def artifact_grid(self, artifact_id: str) -> bytes:
        """Binary little-endian float32 grid payload for map artifacts."""
        art = self.artifacts.get(artifact_id)
        if art is None or art["kind"] != "map":
            raise NotFound(artifact_id)
        return art["map"].values.astype("<f4").tobytes()

    # -- log / checkpoint / replay ----------------------------------------------------

    def command_log(self) -> list[dict]:
        with self.lock:
            return [dict(e) for e in self.log]

    def checkpoint(self) -> dict:
        with self.lock:
            return {
                "doc": self.doc,
                "log": self.command_log(),
                "t": self.now(),
                "session_id": self.session_id,
            }

    @classmethod
    def restore(cls, checkpoint: dict, executor: ThreadPoolExecutor | None = None) -> "SessionCore":
        core = cls(checkpoint["doc"], clock="manual", session_id=checkpoint.get("session_id"),
                   executor=executor)
        core.apply_log(checkpoint["log"])
        core._manual_t = max(core._manual_t, checkpoint.get("t", core._manual_t))
        core._materialize(core._manual_t)
        return core

    def apply_log(self, log: list[dict]) -> None:
        """Re-execute a recorded command log (manual clock only)."""
        if self.clock_mode != "manual":
            raise CommandError("logs replay on a manual-clock session")
        for entry in log:
            t, cmd, params = entry["t"], entry["cmd"], dict(entry["params"])
            if t < self._manual_t:
                raise CommandError("log timestamps must be non-decreasing")
            self._materialize(t)
            self._manual_t = t
            if cmd == "advance":
                self._begin("advance", params)
                self._manual_t = t + params["dt_s"]
                self._materialize(self._manual_t)
            elif cmd == "set_block":
                self.set_block(params["block_id"], params["enabled"])
            elif cmd == "set_laser":
                self.set_laser(on=params["on"], power_pct=params["power_pct"],
                               lens=params["lens"], x_um=params.get("x_um"),
                               y_um=params.get("y_um"), node=params.get("node"))
            elif cmd == "start_sensor":
                self.start_sensor(params)
            elif cmd == "acquire":
                self.acquire(params, synchronous=True)
            elif cmd == "detect":
                self.detect(params)
            elif cmd == "set_masking":
                self.set_masking(params)
            else:
                raise CommandError(f"unknown command {cmd!r} in log")


def _json_safe(obj: Any):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def replay_log_file(log_path: str | Path, outdir: str | Path) -> list[Path]:
    """Headless replay of an exported session: writes every artifact and
    stream series as CSV, byte-identical to the live session's exports."""
    payload = json.loads(Path(log_path).read_text())
    doc = payload.get("doc", {"name": "replay", "seed": payload.get("seed", 0)})
    core = SessionCore(doc, clock="manual")
    core.apply_log(payload["log"])
    if "t" in payload:
        core._manual_t = max(core._manual_t, payload["t"])
        core._materialize(core._manual_t)

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for artifact_id in sorted(core.artifacts):
        path = outdir / f"{artifact_id}.csv"
        path.write_text(core.artifact_csv(artifact_id))
        written.append(path)
    for stream_id in sorted(core.streams):
        if core.streams[stream_id].rows:
            path = outdir / f"stream-{stream_id}.csv"
            path.write_text(artifacts.series_csv_text(core.stream_series(stream_id)))
            written.append(path)
    artifacts.write_manifest(outdir, artifacts.digest_of_json(payload), int(doc["seed"]), written)
    return written
