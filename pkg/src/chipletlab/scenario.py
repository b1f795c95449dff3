"""Scenario documents: schema, validation and model construction.

A scenario is one YAML (or JSON) document that fully determines a batch
run: floorplan, stimulus, masked links, and an ordered list of steps
(acquisitions, sensor sessions, detections, masking evaluations). Unknown
keys are rejected outright so archived scenarios stay stable, and every
stochastic draw descends from the single master seed, keyed by step name,
so adding one step never perturbs another's noise.
"""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema
import yaml

from .floorplan import FloorPlan, FloorPlanConfig, RoBlockPlacement, build_floorplan
from .masking import MaskedLinkConfig, install_masked_link
from .seeding import derive_seed, substream
from .stimulus import MaskedStream, Pattern, StimulusProgram, Toggle


class ScenarioError(ValueError):
    """Schema violation or unresolved reference in a scenario document."""


_BITS = {
    "oneOf": [
        {"type": "string", "pattern": "^[01]+$"},
        {"type": "array", "items": {"enum": [0, 1]}, "minItems": 1},
        {"type": "object", "properties": {"random_bits": {"type": "integer", "minimum": 1}},
         "required": ["random_bits"], "additionalProperties": False},
    ]
}

_REGION = {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4}

_LENS = {"enum": ["5x", "20x", "50x", "71x"]}

_ACTIVITY = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["off", "toggle", "pattern", "masked_stream"]},
        "frequency_hz": {"type": "number", "exclusiveMinimum": 0},
        "bits": _BITS,
        "data_bits": _BITS,
        "bit_rate_hz": {"type": "number", "exclusiveMinimum": 0},
        "fixed_replay": {"type": "boolean"},
        "pad_channel": {"type": "string"},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_LASER_EVENT = {
    "type": "object",
    "properties": {
        "t_s": {"type": "number", "minimum": 0},
        "on": {"type": "boolean"},
        "power_pct": {"type": "number", "minimum": 0, "maximum": 100},
        "node": {"type": "string"},
        "x_um": {"type": "number"},
        "y_um": {"type": "number"},
        "lens": _LENS,
        "target": {"enum": ["probe", "control"]},
    },
    "required": ["t_s", "on"],
    "additionalProperties": False,
}

_STEP_COMMON = {
    "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
    "kind": {"enum": ["emission", "eofm", "eop", "sensor", "detect", "mask_eval"]},
}

_STEP = {
    "type": "object",
    "properties": {
        **_STEP_COMMON,
        # emission / eofm
        "region_um": _REGION,
        "exposure_s": {"type": "number", "exclusiveMinimum": 0},
        "f_target_hz": {"type": "number", "exclusiveMinimum": 0},
        "dwell_s": {"type": "number", "exclusiveMinimum": 0},
        "pitch_um": {"type": "number", "exclusiveMinimum": 0},
        "lens": _LENS,
        "power_pct": {"type": "number", "minimum": 0, "maximum": 100},
        "png": {"type": "boolean"},
        # eop
        "node": {"type": "string"},
        "x_um": {"type": "number"},
        "y_um": {"type": "number"},
        "integrations": {"type": "integer", "minimum": 1},
        "trigger_period_s": {"type": "number", "exclusiveMinimum": 0},
        "rate_hz": {"type": "number", "exclusiveMinimum": 0},
        # sensor
        "sensor": {"enum": ["phase", "tdc", "ideal", "gaussian"]},
        "duration_s": {"type": "number", "exclusiveMinimum": 0},
        "cadence_hz": {"type": "number", "exclusiveMinimum": 0},
        "probe_node": {"type": "string"},
        "control_node": {"type": "string"},
        "probe_nominal_ps": {"type": "number"},
        "control_nominal_ps": {"type": "number"},
        "trials_per_step": {"type": "integer", "minimum": 1},
        "jitter_sigma_ps": {"type": "number", "minimum": 0},
        "gaussian_sigma_ps": {"type": "number", "minimum": 0},
        "dither_sigma_ps": {"type": "number", "minimum": 0},
        "tap_pitch_ps": {"type": "number", "exclusiveMinimum": 0},
        "drift_sigma_ps": {"type": "number", "minimum": 0},
        "laser_schedule": {"type": "array", "items": _LASER_EVENT},
        # detect
        "series": {"type": "string"},
        "algorithm": {"enum": ["cusum", "window"]},
        "k_ps": {"type": "number", "minimum": 0},
        "h_ps": {"type": "number", "exclusiveMinimum": 0},
        "window": {"type": "integer", "minimum": 1},
        # mask_eval
        "lane": {"type": "string"},
        "repetitions": {"type": "integer", "minimum": 1},
        "periods_per_trace": {"type": "integer", "minimum": 1},
    },
    "required": ["name", "kind"],
    "additionalProperties": False,
}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "floorplan": {
            "type": "object",
            "properties": {
                "chiplet_count": {"type": "integer", "minimum": 1},
                "chiplet_width_um": {"type": "number", "exclusiveMinimum": 0},
                "chiplet_height_um": {"type": "number", "exclusiveMinimum": 0},
                "tiles_per_boundary": {"type": "integer", "minimum": 0},
                "sites_per_tile": {"type": "integer", "minimum": 1},
                "drivers_per_tile": {"type": "integer", "minimum": 1},
                "fabric_register_radius_um": {"type": "number", "exclusiveMinimum": 0},
                "driver_fabric_footprint_ratio": {"type": "number", "exclusiveMinimum": 1},
                "slice_pitch_um": {"type": "number", "exclusiveMinimum": 0},
                "ro_blocks": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "properties": {
                            "id": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
                            "chiplet": {"type": "integer", "minimum": 0},
                            "x_um": {"type": "number"},
                            "y_um": {"type": "number"},
                        },
                        "required": ["id", "chiplet", "x_um", "y_um"],
                        "additionalProperties": False,
                    },
                },
            },
            "additionalProperties": False,
        },
        "stimulus": {
            "type": "object",
            "properties": {
                "ro_frequency_hz": {"type": "number", "exclusiveMinimum": 0},
                "assignments": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "properties": {"node": {"type": "string"}, "activity": _ACTIVITY},
                        "required": ["node", "activity"],
                        "additionalProperties": False,
                    },
                },
                "block_enables": {"type": "object", "additionalProperties": {"type": "boolean"}},
            },
            "additionalProperties": False,
        },
        "laser_schedule": {"type": "array", "items": _LASER_EVENT},
        "masked_links": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "data_lanes": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                    "pad_lane": {"type": "string"},
                    "bit_rate_hz": {"type": "number", "exclusiveMinimum": 0},
                    "fresh_pad": {"type": "boolean"},
                    "data": {"type": "object", "additionalProperties": _BITS},
                },
                "required": ["data_lanes", "pad_lane", "data"],
                "additionalProperties": False,
            },
        },
        "steps": {"type": "array", "items": _STEP},
    },
    "required": ["name", "seed"],
    "additionalProperties": False,
}


def load_scenario(path: str | Path) -> dict:
    """Parse and validate a scenario document."""
    text = Path(path).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ScenarioError(f"unparseable scenario document: {e}") from e
    validate_scenario(doc)
    return doc


def validate_scenario(doc) -> None:
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        path = "$" + "".join(
            f"[{p}]" if isinstance(p, int) else f".{p}" for p in e.absolute_path
        )
        raise ScenarioError(f"{path}: {e.message}")
    names = [s["name"] for s in doc.get("steps", [])]
    if len(names) != len(set(names)):
        raise ScenarioError("step names must be unique (they key the noise substreams)")


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


# -- construction -----------------------------------------------------------------


def _resolve_bits(spec, master_seed: int, context: str) -> tuple[int, ...]:
    if isinstance(spec, str):
        return tuple(int(c) for c in spec)
    if isinstance(spec, list):
        return tuple(int(b) for b in spec)
    n = int(spec["random_bits"])
    rng = substream(master_seed, "scenario-bits", context)
    return tuple(int(b) for b in rng.integers(0, 2, n))


def build_plan(doc: dict) -> FloorPlan:
    fp = dict(doc.get("floorplan", {}))
    blocks = tuple(
        RoBlockPlacement(b["id"], b["chiplet"], b["x_um"], b["y_um"])
        for b in fp.pop("ro_blocks", [])
    )
    return build_floorplan(FloorPlanConfig(**fp, ro_blocks=blocks))


def build_program(doc: dict, plan: FloorPlan) -> StimulusProgram:
    seed = int(doc["seed"])
    stim = doc.get("stimulus", {})
    program = StimulusProgram(
        plan,
        ro_frequency_hz=stim.get("ro_frequency_hz", 500e6),
        pad_root_seed=derive_seed(seed, "pads"),
    )
    for entry in stim.get("assignments", []):
        node, act = entry["node"], entry["activity"]
        kind = act["kind"]
        if kind == "off":
            continue
        if kind == "toggle":
            program.assign(node, Toggle(act["frequency_hz"]))
        elif kind == "pattern":
            program.assign(node, Pattern(
                _resolve_bits(act["bits"], seed, node),
                bit_rate_hz=act.get("bit_rate_hz", 100e6),
            ))
        else:
            program.assign(node, MaskedStream(
                _resolve_bits(act["data_bits"], seed, node),
                bit_rate_hz=act.get("bit_rate_hz", 100e6),
                fixed_replay=act.get("fixed_replay", False),
                pad_channel=act.get("pad_channel"),
            ))
    for block, enabled in stim.get("block_enables", {}).items():
        program.set_ro_block(block, enabled)
    for link in doc.get("masked_links", []):
        cfg = MaskedLinkConfig(
            data_lanes=tuple(link["data_lanes"]),
            pad_lane=link["pad_lane"],
            bit_rate_hz=link.get("bit_rate_hz", 100e6),
            fresh_pad=link.get("fresh_pad", True),
        )
        data = {lane: _resolve_bits(bits, seed, lane) for lane, bits in link["data"].items()}
        install_masked_link(program, cfg, data)
    return program
