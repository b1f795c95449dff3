import hashlib
from pathlib import Path

import pytest
import yaml

from chipletlab.runner import RunError, run_scenario
from chipletlab.scenario import ScenarioError, load_scenario, validate_scenario

COMPOSITE = {
    "name": "composite-demo",
    "seed": 424242,
    "floorplan": {"ro_blocks": [{"id": "g0", "chiplet": 0, "x_um": 2000.0, "y_um": 3000.0}]},
    "stimulus": {
        "assignments": [
            {"node": "sll:0:400:0:0", "activity": {"kind": "toggle", "frequency_hz": 100e6}},
            {"node": "ff:0:113:144:0", "activity": {"kind": "toggle", "frequency_hz": 100e6}},
        ],
        "block_enables": {"g0": True},
    },
    "masked_links": [{
        "data_lanes": ["sll:0:10:0:0"],
        "pad_lane": "sll:0:10:3:5",
        "data": {"sll:0:10:0:0": {"random_bits": 64}},
    }],
    "steps": [
        {"name": "glow", "kind": "emission", "region_um": [1500, 2500, 2500, 3500],
         "exposure_s": 2.0, "lens": "5x", "pitch_um": 20.0, "png": True},
        {"name": "scan", "kind": "eofm", "region_um": [11595, 14430, 11650, 14485],
         "f_target_hz": 100e6, "dwell_s": 1e-5, "pitch_um": 1.0},
        {"name": "trace", "kind": "eop", "node": "sll:0:400:0:0",
         "integrations": 25, "trigger_period_s": 1e-6, "rate_hz": 1e9},
        {"name": "watch", "kind": "sensor", "sensor": "gaussian", "duration_s": 60.0,
         "cadence_hz": 10.0, "laser_schedule": [
             {"t_s": 20.0, "on": True, "power_pct": 100.0, "target": "probe"}]},
        {"name": "alarm", "kind": "detect", "series": "watch", "k_ps": 0.2,
         "h_ps": 2.0, "window": 100},
        {"name": "shield", "kind": "mask_eval", "lane": "sll:0:10:0:0",
         "repetitions": 200},
    ],
}


def digests(outdir: Path) -> dict:
    return {
        p.name: hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(outdir.glob("*.csv"))
    }


class TestSchema:
    def test_valid_document_loads(self, tmp_path):
        path = tmp_path / "s.yaml"
        path.write_text(yaml.safe_dump(COMPOSITE))
        doc = load_scenario(path)
        assert doc["name"] == "composite-demo"

    def test_unknown_key_fails_closed(self):
        doc = {**COMPOSITE, "surprise": 1}
        with pytest.raises(ScenarioError, match="surprise"):
            validate_scenario(doc)

    def test_error_carries_field_path(self):
        doc = yaml.safe_load(yaml.safe_dump(COMPOSITE))
        doc["steps"][1]["dwell_s"] = -1.0
        with pytest.raises(ScenarioError, match=r"\$\.steps\[1\]\.dwell_s"):
            validate_scenario(doc)

    def test_duplicate_step_names_rejected(self):
        doc = yaml.safe_load(yaml.safe_dump(COMPOSITE))
        doc["steps"][1]["name"] = doc["steps"][0]["name"]
        with pytest.raises(ScenarioError, match="unique"):
            validate_scenario(doc)

    def test_missing_seed_rejected(self):
        with pytest.raises(ScenarioError):
            validate_scenario({"name": "x"})

    def test_unparseable_yaml(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("steps: [unterminated")
        with pytest.raises(ScenarioError):
            load_scenario(path)


class TestExecution:
    def test_minimal_scenario_emits_manifest_only(self, tmp_path):
        result = run_scenario({"name": "empty", "seed": 1}, tmp_path / "o")
        assert result.files == []
        assert result.manifest is not None and result.manifest.exists()

    def test_composite_round(self, tmp_path):
        result = run_scenario(COMPOSITE, tmp_path / "o", emit_plots=False)
        names = {p.name for p in result.files}
        assert {"glow.csv", "glow.png", "scan.csv", "trace.csv",
                "watch.csv", "alarm.csv", "alarm.txt", "shield.csv"} <= names
        assert "watch" in result.sensor_results
        assert result.reports["shield"].masked

    def test_rerun_is_byte_identical(self, tmp_path):
        r1 = run_scenario(COMPOSITE, tmp_path / "a", emit_plots=False)
        r2 = run_scenario(COMPOSITE, tmp_path / "b", emit_plots=False)
        d1, d2 = digests(tmp_path / "a"), digests(tmp_path / "b")
        assert d1 and d1 == d2

    def test_adding_a_step_does_not_perturb_others(self, tmp_path):
        doc2 = yaml.safe_load(yaml.safe_dump(COMPOSITE))
        # the extra node sits far from every declared capture region, so only
        # the substream keying is exercised, not the shared physics
        doc2["steps"].insert(0, {
            "name": "extra", "kind": "eop", "node": "sll:0:600:0:1",
            "integrations": 5, "trigger_period_s": 1e-6, "rate_hz": 1e9,
        })
        doc2["stimulus"]["assignments"].append(
            {"node": "sll:0:600:0:1", "activity": {"kind": "toggle", "frequency_hz": 100e6}})
        r1 = run_scenario(COMPOSITE, tmp_path / "a", emit_plots=False)
        r2 = run_scenario(doc2, tmp_path / "b", emit_plots=False)
        d1, d2 = digests(tmp_path / "a"), digests(tmp_path / "b")
        # noise substreams key off step names: existing artifacts unchanged
        # (the masked-link evaluation consumes the shared pad stream and is
        # insulated here because the new acquisition touches another link)
        for name, digest in d1.items():
            assert d2[name] == digest, name

    def test_manifest_lists_every_file_with_digest(self, tmp_path):
        result = run_scenario(COMPOSITE, tmp_path / "o", emit_plots=False)
        lines = result.manifest.read_text().splitlines()
        listed = {line.split("  ", 1)[1]: line.split("  ", 1)[0]
                  for line in lines if "  " in line}
        for f in result.files:
            digest = hashlib.sha256(f.read_bytes()).hexdigest()
            assert listed[f.name] == digest

    def test_failure_removes_partial_outputs(self, tmp_path):
        doc = yaml.safe_load(yaml.safe_dump(COMPOSITE))
        doc["steps"] = [
            doc["steps"][0],
            {"name": "boom", "kind": "detect", "series": "missing"},
        ]
        out = tmp_path / "o"
        with pytest.raises(RunError):
            run_scenario(doc, out, emit_plots=False)
        assert list(out.glob("*.csv")) == []
        assert not (out / "manifest.txt").exists()

    def test_bad_node_reference(self, tmp_path):
        doc = {"name": "x", "seed": 1, "stimulus": {"assignments": [
            {"node": "sll:0:99999:0:0", "activity": {"kind": "toggle", "frequency_hz": 1e8}}]}}
        with pytest.raises(KeyError):
            run_scenario(doc, tmp_path / "o")
