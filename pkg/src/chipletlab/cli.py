"""Command-line interface.

Exit codes: 0 success, 2 configuration/schema error, 3 runtime error,
4 acceptance-check failure (repro targets whose checks do not pass).
"""

from __future__ import annotations

import os
import sys
from pathlib import Path

import click

from .floorplan import FloorplanConfigError, UnknownNodeError
from .optics import OpticsError
from .scenario import ScenarioError

EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_CHECKS = 4

_CONFIG_ERRORS = (ScenarioError, FloorplanConfigError, UnknownNodeError, OpticsError, ValueError)


@click.group()
def cli() -> None:
    """Virtual laser-probing laboratory for chiplet packages."""


def main() -> None:
    try:
        cli(standalone_mode=False)
    except click.exceptions.Exit as e:
        sys.exit(e.exit_code)
    except click.UsageError as e:
        e.show()
        sys.exit(EXIT_CONFIG)
    except click.Abort:
        sys.exit(EXIT_RUNTIME)
    except _CONFIG_ERRORS as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(EXIT_CONFIG)
    except Exception as e:  # noqa: BLE001 - CLI boundary
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_RUNTIME)


@cli.command()
@click.argument("scenario", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--outdir", required=True, type=click.Path(file_okay=False))
@click.option("--no-plots", is_flag=True, help="skip matplotlib figure emission")
def run(scenario: str, outdir: str, no_plots: bool) -> None:
    """Run a scenario document and write its artifacts."""
    from .runner import run_scenario

    result = run_scenario(scenario, outdir, emit_plots=not no_plots)
    click.echo(f"wrote {len(result.files)} artifacts to {outdir}")
    click.echo(f"manifest: {result.manifest}")


@cli.command()
@click.argument("target")
@click.option("-o", "--outdir", required=True, type=click.Path(file_okay=False))
@click.option("--no-plots", is_flag=True)
def repro(target: str, outdir: str, no_plots: bool) -> None:
    """Regenerate a pre-baked experiment (fig3 fig5 fig7 fig8 fig9 fig10 fig11
    table-numbers) and check it against the calibration anchors."""
    from .repro import run_target

    try:
        _, checks = run_target(target, outdir, emit_plots=not no_plots)
    except KeyError as e:
        raise ScenarioError(str(e)) from e
    for c in checks:
        click.echo(c.line())
    if not all(c.passed for c in checks):
        sys.exit(EXIT_CHECKS)


@cli.command()
@click.argument("command_log", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--outdir", required=True, type=click.Path(file_okay=False))
def replay(command_log: str, outdir: str) -> None:
    """Replay a recorded session command log headlessly; artifacts are
    byte-identical to the ones the live session produced."""
    from .labd.core import replay_log_file

    files = replay_log_file(command_log, outdir)
    click.echo(f"replayed {len(files)} artifacts to {outdir}")


def _adhoc_doc(seed, ro_block, enable, toggle):
    blocks = []
    for spec in ro_block:
        bid, chiplet, x, y = spec.split(":")
        blocks.append({"id": bid, "chiplet": int(chiplet), "x_um": float(x), "y_um": float(y)})
    assignments = []
    for spec in toggle:
        node, _, freq = spec.rpartition("=")
        assignments.append({"node": node, "activity": {"kind": "toggle", "frequency_hz": float(freq)}})
    doc = {"name": "adhoc", "seed": seed, "steps": []}
    if blocks:
        doc["floorplan"] = {"ro_blocks": blocks}
    stim = {}
    if assignments:
        stim["assignments"] = assignments
    if enable:
        stim["block_enables"] = {b: True for b in enable}
    if stim:
        doc["stimulus"] = stim
    return doc


_common = [
    click.option("--seed", default=0, show_default=True),
    click.option("--ro-block", multiple=True, metavar="ID:CHIPLET:X:Y",
                 help="place a 256-oscillator block (repeatable)"),
    click.option("--enable", multiple=True, metavar="BLOCK", help="enable an RO block"),
    click.option("--toggle", multiple=True, metavar="NODE=HZ", help="toggle a node (repeatable)"),
    click.option("-o", "--outdir", required=True, type=click.Path(file_okay=False)),
]


def _with_common(f):
    for opt in reversed(_common):
        f = opt(f)
    return f


@cli.command()
@click.option("--region", nargs=4, type=float, required=True, metavar="X0 Y0 X1 Y1")
@click.option("--exposure", default=10.0, show_default=True)
@click.option("--lens", default="5x", show_default=True)
@click.option("--pitch", default=20.0, show_default=True)
@_with_common
def emission(region, exposure, lens, pitch, seed, ro_block, enable, toggle, outdir):
    """Single photon-emission capture."""
    from .runner import run_scenario

    doc = _adhoc_doc(seed, ro_block, enable, toggle)
    doc["steps"] = [{"name": "emission", "kind": "emission", "region_um": list(region),
                     "exposure_s": exposure, "lens": lens, "pitch_um": pitch}]
    run_scenario(doc, outdir)
    click.echo(f"emission map written to {outdir}")


@cli.command()
@click.option("--region", nargs=4, type=float, required=True, metavar="X0 Y0 X1 Y1")
@click.option("--f-target", required=True, type=float, help="target frequency (Hz)")
@click.option("--dwell", default=10e-6, show_default=True)
@click.option("--pitch", default=1.0, show_default=True)
@click.option("--lens", default="20x", show_default=True)
@click.option("--power", default=100.0, show_default=True)
@_with_common
def eofm(region, f_target, dwell, pitch, lens, power, seed, ro_block, enable, toggle, outdir):
    """Single frequency-mapping scan."""
    from .runner import run_scenario

    doc = _adhoc_doc(seed, ro_block, enable, toggle)
    doc["steps"] = [{"name": "eofm", "kind": "eofm", "region_um": list(region),
                     "f_target_hz": f_target, "dwell_s": dwell, "pitch_um": pitch,
                     "lens": lens, "power_pct": power}]
    run_scenario(doc, outdir)
    click.echo(f"frequency map written to {outdir}")


@cli.command()
@click.option("--node", required=True, help="node id to park the probe on")
@click.option("--integrations", "-n", default=100, show_default=True)
@click.option("--trigger-period", default=1e-6, show_default=True)
@click.option("--rate", default=1e9, show_default=True)
@click.option("--lens", default="71x", show_default=True)
@click.option("--power", default=100.0, show_default=True)
@_with_common
def eop(node, integrations, trigger_period, rate, lens, power, seed, ro_block, enable, toggle, outdir):
    """Single averaged trace acquisition at a node."""
    from .runner import run_scenario

    doc = _adhoc_doc(seed, ro_block, enable, toggle)
    doc["steps"] = [{"name": "trace", "kind": "eop", "node": node,
                     "integrations": integrations, "trigger_period_s": trigger_period,
                     "rate_hz": rate, "lens": lens, "power_pct": power}]
    run_scenario(doc, outdir)
    click.echo(f"trace written to {outdir}")


@cli.command()
@click.option("--sensor", type=click.Choice(["phase", "tdc", "ideal", "gaussian"]), default="phase", show_default=True)
@click.option("--duration", default=480.0, show_default=True)
@click.option("--cadence", default=10.0, show_default=True)
@click.option("--probe-node", default="sll:0:400:0:0", show_default=True)
@click.option("--control-node", default="sll:0:600:0:0", show_default=True)
@click.option("--laser", multiple=True, metavar="T:ON:POWER",
              help="laser schedule entry at the probe node (repeatable)")
@click.option("--trials", default=200, show_default=True, help="phase-sweep trials per step")
@click.option("--seed", default=0, show_default=True)
@click.option("-o", "--outdir", required=True, type=click.Path(file_okay=False))
def sensor(sensor, duration, cadence, probe_node, control_node, laser, trials, seed, outdir):
    """Differential sensor run under a laser toggle schedule."""
    from .runner import run_scenario

    schedule = []
    for spec in laser:
        t, on, power = spec.split(":")
        schedule.append({"t_s": float(t), "on": on.lower() in ("1", "on", "true"),
                         "power_pct": float(power), "node": probe_node})
    doc = {"name": "adhoc-sensor", "seed": seed, "steps": [{
        "name": "session", "kind": "sensor", "sensor": sensor,
        "duration_s": duration, "cadence_hz": cadence,
        "probe_node": probe_node, "control_node": control_node,
        "trials_per_step": trials, "laser_schedule": schedule,
    }]}
    run_scenario(doc, outdir)
    click.echo(f"sensor series written to {outdir}")


@cli.command()
@click.argument("series_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--k", default=0.2, show_default=True, help="reference drift (ps)")
@click.option("--h", default=1.0, show_default=True, help="alarm threshold (ps)")
@click.option("--window", default=100, show_default=True)
@click.option("--algorithm", type=click.Choice(["cusum", "window"]), default="cusum", show_default=True)
@click.option("-o", "--outdir", required=True, type=click.Path(file_okay=False))
def detect(series_csv, k, h, window, algorithm, outdir):
    """Run the probing detector over an exported sensor series."""
    from . import artifacts
    from .detection import DetectorConfig, cusum_detect

    series = artifacts.read_series_csv(series_csv)
    report = cusum_detect(series, DetectorConfig(algorithm=algorithm, k_ps=k, h_ps=h, window=window))
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts.write_detection_report(report, out / "detection.csv", out / "detection.txt")
    click.echo(report.summary_text())


@cli.command("mask-demo")
@click.option("--repetitions", "-r", default=1000, show_default=True)
@click.option("--bits", default=64, show_default=True, help="data bits per lane")
@click.option("--fixed-pad", is_flag=True, help="debug-fixed pad (defeats the masking)")
@click.option("--seed", default=0, show_default=True)
@click.option("-o", "--outdir", required=True, type=click.Path(file_okay=False))
def mask_demo(repetitions, bits, fixed_pad, seed, outdir):
    """Masked vs plain lane under replay-averaged probing."""
    from .runner import run_scenario

    doc = {
        "name": "mask-demo", "seed": seed,
        "masked_links": [{
            "data_lanes": ["sll:0:400:0:0"], "pad_lane": "sll:0:400:3:5",
            "fresh_pad": not fixed_pad,
            "data": {"sll:0:400:0:0": {"random_bits": bits}},
        }],
        "stimulus": {"assignments": [
            {"node": "sll:0:401:0:0",
             "activity": {"kind": "pattern", "bits": {"random_bits": bits}}},
        ]},
        "steps": [
            {"name": "masked", "kind": "mask_eval", "lane": "sll:0:400:0:0",
             "repetitions": repetitions},
        ],
    }
    result = run_scenario(doc, outdir)
    click.echo(result.reports["masked"].summary_text())


@cli.command()
@click.option("--host", default=None, help="bind address (default from CHIPLETLAB_ADDR or 127.0.0.1)")
@click.option("--port", default=None, type=int, help="port (default from CHIPLETLAB_ADDR or 8787)")
def serve(host, port):
    """Start the interactive session service."""
    import uvicorn

    from .labd.app import create_app

    addr = os.environ.get("CHIPLETLAB_ADDR", "127.0.0.1:8787")
    default_host, _, default_port = addr.partition(":")
    uvicorn.run(create_app(), host=host or default_host, port=port or int(default_port or 8787))


if __name__ == "__main__":
    main()
