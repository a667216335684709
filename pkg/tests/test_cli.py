import json
from pathlib import Path

import numpy as np
import pytest

from owenexplain.cli import main
from owenexplain.tensorio import read_tensor, write_tensor


def run(*argv) -> int:
    return main(list(argv))


class TestTensorIO:
    def test_binary_roundtrip(self, tmp_path):
        path = tmp_path / "t.tnsr"
        data = np.linspace(-1, 1, 12)
        write_tensor(path, data, (3, 4))
        back, shape = read_tensor(path)
        assert shape == (3, 4)
        assert np.array_equal(back, data)

    def test_json_roundtrip(self, tmp_path):
        path = tmp_path / "t.json"
        write_tensor(path, [1.0, 2.5, -3.0], (3,))
        back, shape = read_tensor(path)
        assert shape == (3,)
        assert np.array_equal(back, [1.0, 2.5, -3.0])

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.tnsr"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ValueError):
            read_tensor(path)


class TestExplainCommand:
    def test_root_only_uniform_values(self, tmp_path):
        out = tmp_path / "a.json"
        assert run("explain", "--victim", "linear_softmax", "--seed", "7",
                   "--random", "--max-evals", "2", "--classes", "0",
                   "--out", str(out)) == 0
        payload = json.loads(out.read_text())
        values = payload["values"]
        assert len(set(values)) == 1
        assert payload["evals_used"] == 2

    def test_unlimited_block1_matches_oracle(self, tmp_path):
        # exactness limit holds for additive games: group_symmetric with
        # singleton groups has affine outputs, so the masked game is additive
        a, b = tmp_path / "explain.json", tmp_path / "oracle.json"
        common = ["--victim", "group_symmetric", "--seed", "3", "--num-classes", "3",
                  "--input-shape", "8", "--random", "--block", "1", "--fill", "mean"]
        assert run("explain", *common, "--max-evals", "100000", "--classes", "1",
                   "--out", str(a)) == 0
        assert run("oracle", "shapley", *common, "--classes", "1", "--out", str(b)) == 0
        pa, pb = json.loads(a.read_text()), json.loads(b.read_text())
        assert np.allclose(pa["values"], pb["values"], atol=1e-9)
        assert abs(pa["base_value"] - pb["base_value"]) <= 1e-12

    def test_missing_out_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run("explain", "--victim", "linear_softmax", "--random")
        assert exc.value.code == 2

    def test_budget_below_two_exit_three(self, tmp_path):
        assert run("explain", "--victim", "linear_softmax", "--random",
                   "--max-evals", "1", "--out", str(tmp_path / "x.json")) == 3

    def test_input_file_flow(self, tmp_path):
        tensor = tmp_path / "x.tnsr"
        write_tensor(tensor, np.linspace(0, 1, 36), (6, 6))
        out = tmp_path / "attr.json"
        assert run("explain", "--victim", "linear_softmax", "--input", str(tensor),
                   "--max-evals", "16", "--classes", "0", "--out", str(out)) == 0
        assert json.loads(out.read_text())["shape"] == [6, 6]

    def test_normalize_flag_scales_into_unit_range(self, tmp_path):
        raw, norm = tmp_path / "raw.json", tmp_path / "norm.json"
        common = ["explain", "--victim", "linear_softmax", "--seed", "6", "--random",
                  "--max-evals", "20", "--classes", "1"]
        assert run(*common, "--out", str(raw)) == 0
        assert run(*common, "--normalize", "--out", str(norm)) == 0
        pr, pn = json.loads(raw.read_text()), json.loads(norm.read_text())
        peak = max(abs(v) for v in pr["values"])
        assert np.allclose(pn["values"], np.asarray(pr["values"]) / peak, atol=1e-12)
        assert max(abs(v) for v in pn["values"]) <= 1.0
        assert pn["method"] == "partition+normalized"
        assert pn["base_value"] == pr["base_value"]

    def test_shape_mismatch_exit_two(self, tmp_path):
        tensor = tmp_path / "x.tnsr"
        write_tensor(tensor, np.zeros(4), (2, 2))
        assert run("explain", "--victim", "linear_softmax", "--input", str(tensor),
                   "--out", str(tmp_path / "y.json")) == 2


class TestOracleCommand:
    def test_singleton_groups_reproduce_shapley(self, tmp_path):
        a, b = tmp_path / "s.json", tmp_path / "o.json"
        common = ["--victim", "linear_softmax", "--seed", "5", "--input-shape", "6",
                  "--random", "--block", "1", "--fill", "mean", "--classes", "0"]
        assert run("oracle", "shapley", *common, "--out", str(a)) == 0
        assert run("oracle", "owen", *common, "--groups", "0|1|2|3|4|5",
                   "--out", str(b)) == 0
        pa, pb = json.loads(a.read_text()), json.loads(b.read_text())
        assert np.allclose(pa["values"], pb["values"], atol=1e-9)

    def test_malformed_groups_exit_two(self, tmp_path):
        assert run("oracle", "owen", "--victim", "linear_softmax", "--random",
                   "--block", "1", "--groups", "0,1|x",
                   "--out", str(tmp_path / "o.json")) == 2

    def test_owen_differs_from_shapley_on_interacting_game(self, tmp_path):
        a, b = tmp_path / "s.json", tmp_path / "o.json"
        common = ["--victim", "quadrant_bright", "--num-classes", "4", "--seed", "5",
                  "--input-shape", "6,6", "--temperature", "0.2", "--random",
                  "--block", "3,3", "--fill", "mean", "--classes", "0"]
        assert run("oracle", "shapley", *common, "--out", str(a)) == 0
        assert run("oracle", "owen", *common, "--groups", "0,1|2,3", "--out", str(b)) == 0
        pa, pb = json.loads(a.read_text()), json.loads(b.read_text())
        assert not np.allclose(pa["values"], pb["values"], atol=1e-12)


class TestSynthCommand:
    def test_default_schedule_matches_reference_staging(self, tmp_path):
        from owenexplain.config import DEFAULTS
        assert DEFAULTS["synthesis"]["schedule"] == "0:500:128,500:1000:64,1000:1500:32"

    def test_single_step_determinism(self, tmp_path):
        args = ["synth", "--victim", "quadrant_bright", "--num-classes", "4",
                "--input-shape", "6,6", "--seed", "3", "--target-class", "1",
                "--steps", "1", "--population", "1"]
        a, b = tmp_path / "a.tnsr", tmp_path / "b.tnsr"
        assert run(*args, "--out", str(a)) == 0
        assert run(*args, "--out", str(b)) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_trace_best_column_monotone(self, tmp_path):
        out, trace = tmp_path / "s.tnsr", tmp_path / "t.csv"
        assert run("synth", "--victim", "quadrant_bright", "--num-classes", "4",
                   "--input-shape", "6,6", "--seed", "4", "--target-class", "0",
                   "--steps", "25", "--out", str(out), "--trace", str(trace)) == 0
        lines = trace.read_text().strip().splitlines()
        assert lines[0] == "step,objective,class_obj_term,disagreement_term,evals_used_cum"
        objectives = [float(line.split(",")[1]) for line in lines[1:]]
        assert all(objectives[i] <= objectives[i + 1] + 1e-15 for i in range(len(objectives) - 1))


class TestExtractCommand:
    def test_arms_emit_identical_queries_cum(self, tmp_path):
        outs = {}
        for mode in ("guided", "random"):
            out = tmp_path / f"{mode}.csv"
            assert run("extract", "--victim", "linear_softmax", "--num-classes", "4",
                       "--input-shape", "4,4", "--block", "1,1", "--fill", "mean",
                       "--seed", "2", "--mode", mode, "--budget", "600", "--rounds", "2",
                       "--labels", "soft", "--topk", "1",
                       "--out", str(out), "--summary", str(tmp_path / f"{mode}.json")) == 0
            rows = [line.split(",") for line in out.read_text().strip().splitlines()[1:]]
            outs[mode] = [row[1] for row in rows]
        assert outs["guided"] == outs["random"]

    def test_summary_contents(self, tmp_path):
        out, summary = tmp_path / "r.csv", tmp_path / "r.json"
        assert run("extract", "--victim", "linear_softmax", "--input-shape", "4,4",
                   "--block", "1,1", "--fill", "mean", "--seed", "1", "--mode", "random",
                   "--budget", "300", "--rounds", "2", "--labels", "soft", "--topk", "all",
                   "--out", str(out), "--summary", str(summary)) == 0
        payload = json.loads(summary.read_text())
        assert payload["queries_total"] == 300
        assert payload["probe_charged"] is False
        assert len(payload["class_histogram"]) == 4


class TestConfigHandling:
    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"victim": {"kind": "linear_softmax", "bogus": 1}}))
        assert run("explain", "--config", str(cfg), "--random",
                   "--out", str(tmp_path / "o.json")) == 2

    def test_emit_config_roundtrip(self, tmp_path):
        emitted = tmp_path / "resolved.json"
        out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
        assert run("explain", "--victim", "quadrant_bright", "--num-classes", "4",
                   "--input-shape", "6,6", "--seed", "9", "--random", "--max-evals", "12",
                   "--classes", "0", "--emit-config", str(emitted), "--out", str(out1)) == 0
        # feeding the resolved config back reproduces the run byte for byte
        assert run("explain", "--config", str(emitted), "--random", "--classes", "0",
                   "--max-evals", "12", "--out", str(out2)) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_bad_schema_version(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"schema_version": "99"}))
        assert run("explain", "--config", str(cfg), "--random",
                   "--out", str(tmp_path / "o.json")) == 2

    def test_unwritable_out_is_io_error(self, tmp_path):
        assert run("explain", "--victim", "linear_softmax", "--random",
                   "--max-evals", "4",
                   "--out", str(tmp_path / "missing-dir" / "o.json")) == 4

    def test_workers_env_fallback(self, tmp_path, monkeypatch):
        monkeypatch.setenv("OWEN_EXPLAIN_WORKERS", "4")
        out_env = tmp_path / "env.tnsr"
        out_flag = tmp_path / "flag.tnsr"
        args = ["synth", "--victim", "quadrant_bright", "--num-classes", "4",
                "--input-shape", "6,6", "--seed", "3", "--target-class", "1",
                "--steps", "8"]
        assert run(*args, "--out", str(out_env)) == 0
        monkeypatch.delenv("OWEN_EXPLAIN_WORKERS")
        assert run(*args, "--workers", "1", "--out", str(out_flag)) == 0
        assert out_env.read_bytes() == out_flag.read_bytes()


class TestDeterminism:
    def test_rerun_byte_identical_across_worker_counts(self, tmp_path):
        files = {}
        for workers in ("1", "4"):
            out = tmp_path / f"s{workers}.tnsr"
            trace = tmp_path / f"t{workers}.csv"
            assert run("synth", "--victim", "quadrant_bright", "--num-classes", "4",
                       "--input-shape", "6,6", "--seed", "13", "--target-class", "2",
                       "--steps", "12", "--workers", workers,
                       "--out", str(out), "--trace", str(trace)) == 0
            files[workers] = (out.read_bytes(), trace.read_bytes())
        assert files["1"] == files["4"]

    def test_explain_rerun_identical(self, tmp_path):
        args = ["explain", "--victim", "linear_softmax", "--seed", "21", "--random",
                "--max-evals", "30", "--classes", "all"]
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert run(*args, "--out", str(a)) == 0
        assert run(*args, "--out", str(b)) == 0
        assert a.read_bytes() == b.read_bytes()
