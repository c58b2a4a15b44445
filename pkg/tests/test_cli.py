"""Command-line interface tests: exit codes, outputs, determinism."""

import json
from pathlib import Path

import numpy as np
import pytest

from rflabel.cli import EXIT_INPUT, EXIT_OK, EXIT_PIPELINE, main
from rflabel.seqio import write_pgm

SIM_DOC = {
    "scene": {"arrangement": "free", "n_objects": 2, "seed": 0},
    "trajectory": {"duration": 2.0, "rate": 15.0,
                   "azimuth_start_deg": -8.0, "azimuth_end_deg": 8.0,
                   "height_amplitude": 0.02, "radial_amplitude": 0.02},
    "noise": {"seed": 0},
    "capture": {"width": 64, "height": 48, "fx": 60.0, "fy": 60.0},
}


@pytest.fixture
def sim_config(tmp_path):
    p = tmp_path / "sim.json"
    p.write_text(json.dumps(SIM_DOC))
    return p


def simulate_to(tmp_path, sim_config, name="seq"):
    out = tmp_path / name
    assert main(["simulate", "--config", str(sim_config), "--out", str(out)]) == EXIT_OK
    return out


class TestSimulate:
    def test_writes_sequence(self, tmp_path, sim_config):
        out = simulate_to(tmp_path, sim_config)
        assert (out / "meta.json").exists()
        assert (out / "frames" / "000000.depth.pgm").exists()
        assert (out / "gt" / "instance_to_epc.json").exists()

    def test_deterministic_bytes(self, tmp_path, sim_config):
        a = simulate_to(tmp_path, sim_config, "a")
        b = simulate_to(tmp_path, sim_config, "b")
        assert (a / "tags.jsonl").read_bytes() == (b / "tags.jsonl").read_bytes()
        assert (a / "frames" / "000005.depth.pgm").read_bytes() == \
            (b / "frames" / "000005.depth.pgm").read_bytes()

    def test_seed_override_changes_output(self, tmp_path, sim_config):
        a = simulate_to(tmp_path, sim_config, "a")
        out = tmp_path / "c"
        assert main(["simulate", "--config", str(sim_config), "--out", str(out),
                     "--seed", "7"]) == EXIT_OK
        assert (a / "tags.jsonl").read_bytes() != (out / "tags.jsonl").read_bytes()

    def test_missing_config_is_input_error(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "o")]) == EXIT_INPUT

    def test_invalid_config_key_is_input_error(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"scene": {"arrangment": "free"}}))
        assert main(["simulate", "--config", str(p),
                     "--out", str(tmp_path / "o")]) == EXIT_INPUT


class TestAnnotate:
    def test_happy_path(self, tmp_path, sim_config):
        seq = simulate_to(tmp_path, sim_config)
        out = tmp_path / "pred"
        assert main(["annotate", "--seq", str(seq), "--out", str(out)]) == EXIT_OK
        assert (out / "labels.json").exists()
        assert (out / "assignment.json").exists()
        assert (out / "instances.json").exists()
        n = len(list((out / "labels").glob("*.pgm")))
        assert n == 30

    def test_no_weighting_flag(self, tmp_path, sim_config):
        seq = simulate_to(tmp_path, sim_config)
        out = tmp_path / "pred"
        assert main(["annotate", "--seq", str(seq), "--out", str(out),
                     "--no-weighting"]) == EXIT_OK

    def test_dump_profiles_csv(self, tmp_path, sim_config):
        seq = simulate_to(tmp_path, sim_config)
        out = tmp_path / "pred"
        csv = tmp_path / "profiles.csv"
        assert main(["annotate", "--seq", str(seq), "--out", str(out),
                     "--dump-profiles", str(csv)]) == EXIT_OK
        lines = csv.read_text().splitlines()
        header = lines[0].split(",")
        assert header[0] == "t"
        assert header[-1] == "w"
        assert any(c.startswith("dSx_") for c in header)
        assert any(c.startswith("dSy_") for c in header)
        assert len(lines) == 30  # header + 29 delta slots

    def test_corrupt_sequence_is_input_error(self, tmp_path, sim_config):
        seq = simulate_to(tmp_path, sim_config)
        (seq / "meta.json").write_text("{broken")
        assert main(["annotate", "--seq", str(seq),
                     "--out", str(tmp_path / "pred")]) == EXIT_INPUT

    def test_empty_masks_is_pipeline_failure(self, tmp_path, sim_config):
        seq = simulate_to(tmp_path, sim_config)
        zeros = np.zeros((48, 64), dtype=np.uint8)
        for p in (seq / "frames").glob("*.mask.pgm"):
            write_pgm(p, zeros, 255)
        assert main(["annotate", "--seq", str(seq),
                     "--out", str(tmp_path / "pred")]) == EXIT_PIPELINE

    def test_bad_pipeline_config_is_input_error(self, tmp_path, sim_config):
        seq = simulate_to(tmp_path, sim_config)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"not_a_knob": 1}))
        assert main(["annotate", "--seq", str(seq), "--out", str(tmp_path / "pred"),
                     "--config", str(cfg)]) == EXIT_INPUT


class TestEvaluate:
    def test_report(self, tmp_path, sim_config):
        seq = simulate_to(tmp_path, sim_config)
        pred = tmp_path / "pred"
        assert main(["annotate", "--seq", str(seq), "--out", str(pred)]) == EXIT_OK
        report = tmp_path / "report.json"
        assert main(["evaluate", "--pred", str(pred), "--gt", str(seq),
                     "--report", str(report)]) == EXIT_OK
        doc = json.loads(report.read_text())
        assert set(doc) == {"scene", "frame"}
        assert 0.0 <= doc["scene"]["matching_precision"] <= 1.0
        assert 0.0 <= doc["frame"]["mask"]["f"] <= 1.0

    def test_gt_required(self, tmp_path, sim_config):
        seq = simulate_to(tmp_path, sim_config)
        pred = tmp_path / "pred"
        assert main(["annotate", "--seq", str(seq), "--out", str(pred)]) == EXIT_OK
        import shutil
        shutil.rmtree(seq / "gt")
        assert main(["evaluate", "--pred", str(pred), "--gt", str(seq)]) == EXIT_INPUT


class TestAblate:
    def test_tiny_suite(self, tmp_path):
        suite = {
            "seeds": {"count": 2},
            "conditions": [{"name": "tiny", **SIM_DOC}],
            "config": {},
        }
        p = tmp_path / "suite.json"
        p.write_text(json.dumps(suite))
        out = tmp_path / "table.json"
        assert main(["ablate", "--suite", str(p), "--out", str(out)]) == EXIT_OK
        doc = json.loads(out.read_text())
        assert doc["seeds"] == [0, 1]
        cond = doc["conditions"]["tiny"]
        assert set(cond["means"]) == {"with", "without"}
        assert "mask_f" in cond["paired_difference"]

    def test_single_seed_rejected(self, tmp_path):
        p = tmp_path / "suite.json"
        p.write_text(json.dumps({"seeds": [0], "conditions": [{"name": "x"}]}))
        assert main(["ablate", "--suite", str(p),
                     "--out", str(tmp_path / "o.json")]) == EXIT_INPUT
