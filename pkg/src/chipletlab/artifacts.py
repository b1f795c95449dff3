"""Artifact serialization: CSV, 16-bit PNG, figures, and run manifests.

Numeric CSV output uses a fixed %.9g format so a rerun with the same seed
produces byte-identical files; manifests list every emitted file with its
SHA-256 digest and carry no wall-clock state.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .detection import DetectionReport, RocCurve
from .masking import MaskingReport
from .optics import EopTrace, OpticalMap
from .timing import SensorSeries, moving_average

FLOAT_FMT = "%.9g"


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return FLOAT_FMT % float(v)


def rows_csv_text(header: list[str], rows, meta: dict | None = None) -> str:
    lines = []
    for key, value in (meta or {}).items():
        lines.append(f"# {key}={value}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def write_rows_csv(path: Path, header: list[str], rows, meta: dict | None = None) -> None:
    Path(path).write_text(rows_csv_text(header, rows, meta))


def map_csv_text(m: OpticalMap) -> str:
    """Row-major grid dump; row 0 is the bottom of the region."""
    x0, y0, x1, y1 = m.region_um
    meta = {
        "kind": m.kind,
        "region_um": f"{_fmt(x0)};{_fmt(y0)};{_fmt(x1)};{_fmt(y1)}",
        "pitch_um": _fmt(m.pitch_um),
        "nx": m.nx,
        "ny": m.ny,
        **{k: v for k, v in m.meta.items() if isinstance(v, (int, float, str, bool))},
    }
    lines = [f"# {k}={v}" for k, v in meta.items()]
    for row in m.values:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def write_map_csv(m: OpticalMap, path: Path) -> None:
    Path(path).write_text(map_csv_text(m))


def write_map_png(m: OpticalMap, path: Path) -> None:
    """16-bit grayscale render, top row = highest y (image convention)."""
    from PIL import Image

    vmax = float(m.values.max())
    scaled = (m.values / vmax * 65535.0) if vmax > 0 else np.zeros_like(m.values)
    img = np.flipud(scaled).astype(np.uint16)
    Image.fromarray(img).save(str(path))


def trace_csv_text(trace: EopTrace) -> str:
    meta = {
        "integrations": trace.integrations,
        "rate_hz": _fmt(trace.rate_hz),
        "trigger_period_s": _fmt(trace.trigger_period_s),
        "position_um": f"{_fmt(trace.position_um[0])};{_fmt(trace.position_um[1])}",
    }
    return rows_csv_text(["time_s", "value"], zip(trace.times_s, trace.samples), meta)


def write_trace_csv(trace: EopTrace, path: Path) -> None:
    Path(path).write_text(trace_csv_text(trace))


def series_csv_text(series: SensorSeries) -> str:
    return rows_csv_text(
        ["t_s", "reading", "laser_on", "power_pct"],
        zip(series.t_s, series.readings, series.laser_on, series.power_pct),
        {"kind": series.kind, "units": series.units, "cadence_hz": _fmt(series.cadence_hz)},
    )


def write_series_csv(series: SensorSeries, path: Path) -> None:
    Path(path).write_text(series_csv_text(series))


def read_series_csv(path: Path) -> SensorSeries:
    """Inverse of write_series_csv."""
    meta: dict = {}
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
        elif line and not line.startswith("t_s"):
            rows.append(line.split(","))
    data = np.array(rows, dtype=float)
    return SensorSeries(
        t_s=data[:, 0],
        readings=data[:, 1],
        laser_on=data[:, 2] > 0.5,
        power_pct=data[:, 3],
        kind=meta.get("kind", "unknown"),
        units=meta.get("units", "ps"),
        cadence_hz=float(meta.get("cadence_hz", 0) or (1.0 / (data[1, 0] - data[0, 0]))),
    )


def write_roc_csv(roc: RocCurve, path: Path) -> None:
    write_rows_csv(path, ["threshold", "fpr", "tpr"],
                   zip(roc.thresholds, roc.fpr, roc.tpr), {"auc": _fmt(roc.auc)})


def write_detection_report(report: DetectionReport, csv_path: Path, text_path: Path) -> None:
    write_rows_csv(csv_path, ["t_s", "statistic"], report.alarms,
                   {"false_alarm_rate_per_hour": _fmt(report.false_alarm_rate_per_hour)})
    Path(text_path).write_text(report.summary_text() + "\n")


def write_masking_report(report: MaskingReport, csv_path: Path, text_path: Path) -> None:
    write_rows_csv(
        csv_path,
        ["lane", "masked", "repetitions", "integrations", "corr_data", "corr_first_shot", "max_abs_deviation"],
        [[report.lane, int(report.masked), report.repetitions, report.integrations,
          report.corr_data, report.corr_first_shot, report.max_abs_deviation]],
    )
    Path(text_path).write_text(report.summary_text() + "\n")


# -- figures -------------------------------------------------------------------


def plot_series(series: SensorSeries, path: Path, title: str = "", window_s: float = 2.0) -> None:
    """Raw readings plus the moving-average strip-chart view."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(9, 4))
    ax.plot(series.t_s, series.readings, ".", ms=2, alpha=0.35, label="readings")
    ax.plot(series.t_s, moving_average(series, window_s), "-", lw=1.5,
            label=f"{window_s:g}s moving average")
    on = series.laser_on
    if on.any():
        ax.fill_between(series.t_s, *ax.get_ylim(), where=on, alpha=0.12,
                        color="red", label="laser on")
    ax.set_xlabel("time (s)")
    ax.set_ylabel(f"differential ({series.units})")
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(str(path), dpi=120)
    plt.close(fig)


def plot_map(m: OpticalMap, path: Path, title: str = "") -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    x0, y0, x1, y1 = m.region_um
    fig, ax = plt.subplots(figsize=(7, 6))
    im = ax.imshow(m.values, origin="lower", extent=(x0, x1, y0, y1),
                   cmap="inferno", aspect="equal")
    fig.colorbar(im, ax=ax, label=f"{m.kind} intensity (a.u.)")
    ax.set_xlabel("x (um)")
    ax.set_ylabel("y (um)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(str(path), dpi=120)
    plt.close(fig)


def plot_traces(traces: list[tuple[str, EopTrace]], path: Path, title: str = "") -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(len(traces), 1, figsize=(9, 1.8 * len(traces)), sharex=True)
    if len(traces) == 1:
        axes = [axes]
    for ax, (label, tr) in zip(axes, traces):
        ax.plot(tr.times_s * 1e9, tr.samples, lw=0.8)
        ax.set_ylabel(label, fontsize=8)
    axes[-1].set_xlabel("time (ns)")
    if title:
        axes[0].set_title(title)
    fig.tight_layout()
    fig.savefig(str(path), dpi=120)
    plt.close(fig)


# -- manifest --------------------------------------------------------------------


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(outdir: Path, inputs_digest: str, seed: int, files: list[Path]) -> Path:
    """List every artifact with its digest; deterministic for a fixed run."""
    outdir = Path(outdir)
    lines = [
        f"version={__version__}",
        f"inputs_sha256={inputs_digest}",
        f"seed={seed}",
        "",
    ]
    for f in sorted(files, key=lambda p: str(p)):
        rel = Path(f).relative_to(outdir)
        lines.append(f"{sha256_file(f)}  {rel}")
    path = outdir / "manifest.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


def digest_of_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def digest_of_json(obj) -> str:
    return digest_of_text(json.dumps(obj, sort_keys=True, separators=(",", ":")))
