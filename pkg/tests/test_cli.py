"""CLI tests: subcommands, report schemas, determinism, fault injection."""

import json

import jsonschema
import numpy as np
import pytest

from switchdnn.cli import RunConfig, main
from switchdnn.model import canonical_model, serialize_model
from switchdnn.runner import build_fabric, compare_run, random_input, run_inference
from switchdnn.schemas import (
    PLAN_DOC_SCHEMA,
    RUN_REPORT_SCHEMA,
    VERIFY_REPORT_SCHEMA,
)

from conftest import make_random_model, separability_model, synthetic_trace_lines


@pytest.fixture
def canonical_path(tmp_path):
    p = tmp_path / "canonical.json"
    p.write_text(serialize_model(canonical_model()))
    return str(p)


@pytest.fixture
def bitmodel_path(tmp_path):
    p = tmp_path / "bitmodel.json"
    p.write_text(serialize_model(separability_model()))
    return str(p)


@pytest.fixture
def trace_path(tmp_path):
    p = tmp_path / "trace.txt"
    p.write_text("\n".join(synthetic_trace_lines(6, 4)) + "\n")
    return str(p)


class TestPlan:
    def test_canonical_five_rows(self, canonical_path, tmp_path, capsys):
        out = tmp_path / "plan.json"
        rc = main(["plan", "--model", canonical_path, "--output", str(out)])
        assert rc == 0
        doc = json.loads(out.read_text())
        jsonschema.validate(doc, PLAN_DOC_SCHEMA)
        rows = [r["layer"] for r in doc["resources"]["rows"]]
        assert rows == ["Conv1", "Conv2", "Dense1", "Dense2", "Dense3"]
        assert doc["resources"]["reference_comparison"] is not None
        printed = capsys.readouterr().out
        assert "Conv1" in printed and "reference" in printed

    def test_missing_model_file(self, tmp_path):
        rc = main(["plan", "--model", str(tmp_path / "nope.json"),
                   "--output", str(tmp_path / "p.json")])
        assert rc == 1

    def test_insufficient_switches(self, canonical_path, tmp_path):
        rc = main(["plan", "--model", canonical_path,
                   "--output", str(tmp_path / "p.json"),
                   "--switches-per-tier", "4"])  # 5 layers need 5 switches
        assert rc == 1

    def test_env_override_for_model_path(self, canonical_path, tmp_path,
                                         monkeypatch):
        monkeypatch.setenv("SWITCHDNN_MODEL_PATH", canonical_path)
        rc = main(["plan", "--output", str(tmp_path / "p.json")])
        assert rc == 0


class TestRun:
    def test_labeled_trace_reports_accuracy(self, bitmodel_path, trace_path,
                                            tmp_path):
        out = tmp_path / "report.json"
        rc = main(["run", "--model", bitmodel_path, "--trace", trace_path,
                   "--output", str(out)])
        assert rc == 0
        doc = json.loads(out.read_text())
        jsonschema.validate(doc, RUN_REPORT_SCHEMA)
        assert doc["flow_count"] == 6
        assert doc["accuracy"] == 1.0
        assert doc["inferences"] == 6 * 3  # points 1, 2, 4 per 4-packet flow
        for flow in doc["flows"]:
            assert flow["verdict"] == flow["label"]

    def test_empty_trace_zero_flows(self, bitmodel_path, tmp_path):
        trace = tmp_path / "empty.txt"
        trace.write_text("")
        out = tmp_path / "report.json"
        rc = main(["run", "--model", bitmodel_path, "--trace", str(trace),
                   "--output", str(out)])
        assert rc == 0
        doc = json.loads(out.read_text())
        jsonschema.validate(doc, RUN_REPORT_SCHEMA)
        assert doc["flow_count"] == 0 and doc["inferences"] == 0
        assert doc["accuracy"] is None

    def test_byte_identical_reports_and_traces(self, bitmodel_path, trace_path,
                                               tmp_path):
        blobs = []
        for tag in ("a", "b"):
            out = tmp_path / f"report-{tag}.json"
            tr = tmp_path / f"trace-{tag}.jsonl"
            rc = main(["run", "--model", bitmodel_path, "--trace", trace_path,
                       "--output", str(out), "--trace-out", str(tr)])
            assert rc == 0
            blobs.append((out.read_bytes(), tr.read_bytes()))
        assert blobs[0][0] == blobs[1][0]
        assert blobs[0][1] == blobs[1][1]

    def test_missing_trace(self, bitmodel_path, tmp_path):
        rc = main(["run", "--model", bitmodel_path,
                   "--output", str(tmp_path / "r.json")])
        assert rc == 1


class TestVerify:
    def test_small_model_passes(self, tmp_path):
        model = make_random_model(3)
        p = tmp_path / "m.json"
        p.write_text(serialize_model(model))
        out = tmp_path / "verify.json"
        rc = main(["verify", "--model", str(p), "--inputs", "5",
                   "--output", str(out)])
        assert rc == 0
        doc = json.loads(out.read_text())
        jsonschema.validate(doc, VERIFY_REPORT_SCHEMA)
        assert doc["status"] == "pass"

    def test_zero_inputs_trivial_pass_with_warning(self, tmp_path, capsys):
        model = make_random_model(3)
        p = tmp_path / "m.json"
        p.write_text(serialize_model(model))
        rc = main(["verify", "--model", str(p), "--inputs", "0"])
        assert rc == 0
        assert "warning" in capsys.readouterr().out

    def test_corrupted_weight_table_localized_divergence(self):
        model = make_random_model(3)
        fabric, plan = build_fabric(model)
        target = plan.layers[0]  # corrupt the first layer's pipe-0 table
        table = fabric.switches[target.switch]._tables[0]
        for key in table:
            table[key] = ((table[key] + 1 + 128) % 256) - 128
        rng = np.random.default_rng(0)
        found = []
        for i in range(5):
            values = random_input(rng, model.input_width)
            trace = run_inference(fabric, values, flow_id=i)
            found.extend(compare_run(model, trace, values, i))
        assert found, "corruption must surface as a divergence"
        # the earliest divergence pinpoints the corrupted layer
        assert min(d["layer"] for d in found) == target.ordinal

    def test_cmd_verify_flags_divergence_exit_code(self, tmp_path, monkeypatch):
        # corrupt by patching the differential to inject a fake divergence;
        # the CLI must exit nonzero and point at the first offender
        import switchdnn.cli as cli
        model = make_random_model(3)
        p = tmp_path / "m.json"
        p.write_text(serialize_model(model))
        monkeypatch.setattr(
            cli, "differential_check",
            lambda *a, **k: [{"input_index": 2, "backend": "tcam",
                              "layer": 1, "position": 4,
                              "kind": "activation mismatch"}])
        rc = main(["verify", "--model", str(p), "--inputs", "3"])
        assert rc == 2


class TestReport:
    def test_report_summarizes_saved_trace(self, bitmodel_path, trace_path,
                                           tmp_path, capsys):
        tr = tmp_path / "trace.jsonl"
        rc = main(["run", "--model", bitmodel_path, "--trace", trace_path,
                   "--output", str(tmp_path / "r.json"),
                   "--trace-out", str(tr)])
        assert rc == 0
        capsys.readouterr()
        rc = main(["report", "--trace", str(tr)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "steps:" in out and "verdicts: 18" in out


class TestConfigPlumbing:
    def test_flags_mirror_runconfig(self):
        parser_cfg = RunConfig()
        args = ["plan", "--model", "m", "--output", "o", "--tiers", "3",
                "--switches-per-tier", "6", "--pipelines-per-switch", "2",
                "--multiply-backend", "shift-add", "--routing-mode", "3-tier",
                "--max-inference-point", "64", "--seed", "9",
                "--lenient-timestamps", "--stage-budget", "20"]
        from switchdnn.cli import build_parser, config_from_args
        cfg = config_from_args(build_parser().parse_args(args))
        assert cfg.model_path == "m" and cfg.output_path == "o"
        assert cfg.tiers == 3 and cfg.switches_per_tier == 6
        assert cfg.pipelines_per_switch == 2
        assert cfg.multiply_backend == "shift-add"
        assert cfg.routing_mode == "3-tier"
        assert cfg.max_inference_point == 64
        assert cfg.seed == 9
        assert cfg.strict_timestamps is False
        assert cfg.stage_budget == 20
        assert parser_cfg.strict_timestamps is True
