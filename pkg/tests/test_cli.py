"""Command-line workflows: flag/config resolution, artifacts, manifests,
exit codes, and manifest-replay determinism."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from flowlab.cli import entrypoint
from flowlab.core import read_flo
from flowlab.datagen import GenConfig
from flowlab.manifest import (
    build_config,
    config_snapshot,
    dataset_content_hash,
    load_manifest,
    parse_config_file,
    render_value,
)
from flowlab.prior import BottleneckSearchConfig


def run_cli(*argv):
    return entrypoint([str(a) for a in argv])


def manifest_of(out_dir):
    with open(os.path.join(out_dir, "run_manifest.json")) as fh:
        return json.load(fh)


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def data_dir(work):
    d = work / "data"
    code = run_cli("gen", "--out", d, "--n", 6, "--seed", 3, "--h", 32, "--w", 32)
    assert code == 0
    return str(d)


def quick_train(**over):
    base = {
        "alpha": 0.0, "max_steps": 6, "batch_size": 2, "log_every": 2,
        "eval_every": 0, "seed": 1, "levels": 3, "base_width": 4,
    }
    base.update(over)
    flags = []
    for k, v in base.items():
        flags += [f"--{k.replace('_', '-')}", v]
    return flags


class TestGen:
    def test_writes_dataset_and_manifest(self, data_dir):
        names = os.listdir(data_dir)
        assert "run_manifest.json" in names
        assert "000000_img1.png" in names and "000005_flow.flo" in names
        m = manifest_of(data_dir)
        assert m["command"] == "gen"
        assert m["config"]["n"] == "6" and m["config"]["seed"] == "3"
        assert len(m["dataset_hash"]) == 64
        assert m["metrics"]["mean_photo_err"] < 0.02

    def test_same_seed_same_hash(self, work, data_dir):
        d2 = work / "data_again"
        assert run_cli("gen", "--out", d2, "--n", 6, "--seed", 3, "--h", 32, "--w", 32) == 0
        assert manifest_of(str(d2))["dataset_hash"] == manifest_of(data_dir)["dataset_hash"]

    def test_different_seed_different_hash(self, work, data_dir):
        d3 = work / "data_seed4"
        assert run_cli("gen", "--out", d3, "--n", 6, "--seed", 4, "--h", 32, "--w", 32) == 0
        assert manifest_of(str(d3))["dataset_hash"] != manifest_of(data_dir)["dataset_hash"]

    def test_missing_required_flag_exits_3(self, work):
        assert run_cli("gen", "--out", work / "nope") == 3

    def test_unknown_flag_exits_2(self, work):
        assert run_cli("gen", "--out", work / "x", "--n", 2, "--frobnicate", 1) == 2

    def test_no_subcommand_exits_2(self):
        assert run_cli() == 2

    def test_invalid_config_value_exits_3(self, work):
        assert run_cli("gen", "--out", work / "bad", "--n", 2, "--h", 4) == 3


class TestConfigResolution:
    def test_file_values_with_flag_override(self, work):
        cfg = work / "gen.cfg"
        cfg.write_text("# comment\nn = 4\nseed = 9\nh = 32\nw = 32\n\n")
        out = work / "from_file"
        assert run_cli("gen", "--config", cfg, "--out", out, "--n", 3) == 0
        m = manifest_of(str(out))
        assert m["config"]["n"] == "3"  # flag beats file
        assert m["config"]["seed"] == "9"  # file beats default
        assert m["metrics"]["n"] == 3

    def test_unknown_config_key_exits_3(self, work):
        cfg = work / "bad.cfg"
        cfg.write_text("does_not_exist = 5\n")
        assert run_cli("gen", "--config", cfg, "--out", work / "y", "--n", 2) == 3

    def test_malformed_config_line_exits_3(self, work):
        cfg = work / "mal.cfg"
        cfg.write_text("just words\n")
        assert run_cli("gen", "--config", cfg, "--out", work / "z", "--n", 2) == 3


@pytest.fixture(scope="module")
def solved(work, data_dir):
    out = work / "var"
    code = run_cli(
        "solve-var", "--data", data_dir, "--out", out, "--n", 2,
        "--pyramid-levels", 2, "--steps-per-level", 8,
    )
    assert code == 0
    return str(out)


class TestSolveVar:
    def test_artifacts(self, solved):
        assert os.path.exists(os.path.join(solved, "000000_flow.flo"))
        assert os.path.exists(os.path.join(solved, "000001_trace.txt"))
        flow = read_flo(os.path.join(solved, "000000_flow.flo"))
        assert flow.shape == (32, 32, 2)
        with open(os.path.join(solved, "solve_log.jsonl")) as fh:
            rows = [json.loads(l) for l in fh]
        assert [r["index"] for r in rows] == [0, 1]
        assert all("epe" in r for r in rows)

    def test_trace_file_levels_non_increasing(self, solved):
        with open(os.path.join(solved, "000000_trace.txt")) as fh:
            by_level = {}
            for line in fh:
                lev, val = line.split()
                by_level.setdefault(int(lev), []).append(float(val))
        assert sorted(by_level) == [0, 1]
        for vals in by_level.values():
            assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))

    def test_manifest_metrics(self, solved):
        m = manifest_of(solved)
        assert m["metrics"]["n"] == 2
        assert m["metrics"]["mean_epe"] > 0

    def test_missing_dataset_exits_3(self, work):
        assert run_cli("solve-var", "--data", work / "ghost", "--out", work / "vv") == 3


@pytest.fixture(scope="module")
def trained(work, data_dir):
    out = work / "flow_run"
    code = run_cli("train-flow", "--data", data_dir, "--out", out,
                   "--eval-data", data_dir, *quick_train(eval_every=6))
    assert code == 0
    return str(out)


class TestTrainFlow:
    def test_artifacts_and_manifest(self, trained):
        assert os.path.exists(os.path.join(trained, "predictor.pt"))
        with open(os.path.join(trained, "train_log.jsonl")) as fh:
            rows = [json.loads(l) for l in fh]
        assert rows and rows[0]["step"] == 2
        m = manifest_of(trained)
        assert m["metrics"]["steps"] == 6
        assert "final_eval_epe" in m["metrics"]
        assert m["config"]["alpha"] == "0.0"

    def test_resume_continues(self, work, data_dir, trained):
        out2 = work / "flow_resumed"
        code = run_cli(
            "train-flow", "--data", data_dir, "--out", out2,
            "--resume", os.path.join(trained, "predictor.pt"),
            *quick_train(max_steps=10),
        )
        assert code == 0
        assert manifest_of(str(out2))["metrics"]["steps"] == 10
        with open(os.path.join(str(out2), "train_log.jsonl")) as fh:
            steps = [json.loads(l)["step"] for l in fh]
        assert steps == [8, 10]

    def test_resume_with_changed_trajectory_exits_3(self, work, data_dir, trained):
        code = run_cli(
            "train-flow", "--data", data_dir, "--out", work / "flow_bad_resume",
            "--resume", os.path.join(trained, "predictor.pt"),
            *quick_train(max_steps=10, lr=3e-3),
        )
        assert code == 3

    def test_alpha_without_prior_exits_3(self, work, data_dir):
        code = run_cli("train-flow", "--data", data_dir, "--out", work / "flow_np",
                       "--alpha", 0.2, "--max-steps", 2, "--levels", 3)
        assert code == 3

    def test_divergence_exits_4(self, work, data_dir):
        code = run_cli("train-flow", "--data", data_dir, "--out", work / "flow_div",
                       "--alpha", 0.0, "--lr", 1e8, "--max-steps", 200,
                       "--batch-size", 2, "--levels", 3, "--base-width", 4,
                       "--occlusion-mode", "none", "--seed", 0)
        assert code == 4


class TestTrainCpn:
    def test_exhausted_search_logs_all_trials(self, work, data_dir):
        out = work / "cpn_run"
        code = run_cli(
            "train-cpn", "--data", data_dir, "--out", out,
            "--lam", 1e9, "--initial-k", 1, "--levels", 3, "--base-width", 4,
            "--max-steps", 30, "--convergence-window", 10, "--log-every", 10,
        )
        assert code == 0
        with open(os.path.join(str(out), "search_log.jsonl")) as fh:
            rows = [json.loads(l) for l in fh]
        assert [r["code_channels"] for r in rows] == [2, 1]
        assert all(r["e_star"] > 0 for r in rows)
        m = manifest_of(str(out))
        assert m["metrics"]["exhausted"] is True
        assert m["metrics"]["trials"] == 2
        assert os.path.exists(os.path.join(str(out), "prior.pt"))

    def test_immediate_stop_keeps_first_trial(self, work, data_dir):
        out = work / "cpn_stop"
        code = run_cli(
            "train-cpn", "--data", data_dir, "--out", out,
            "--lam", 1e-9, "--initial-k", 2, "--levels", 3, "--base-width", 4,
            "--max-steps", 20, "--convergence-window", 10,
        )
        assert code == 0
        m = manifest_of(str(out))
        assert m["metrics"]["trials"] == 1
        assert m["metrics"]["code_channels"] == 4
        assert m["metrics"]["exhausted"] is False


class TestEval:
    def test_eval_flows_dir(self, work, data_dir):
        var = work / "var_eval"
        assert run_cli("solve-var", "--data", data_dir, "--out", var, "--n", 2,
                       "--pyramid-levels", 2, "--steps-per-level", 5) == 0
        # restrict the dataset to the two solved samples
        small = work / "data2"
        assert run_cli("gen", "--out", small, "--n", 2, "--seed", 3, "--h", 32, "--w", 32) == 0
        out = work / "eval_out"
        assert run_cli("eval", "--data", small, "--out", out, "--flows", var) == 0
        m = manifest_of(str(out))
        assert m["metrics"]["n"] == 2
        text = open(os.path.join(str(out), "eval.txt")).read()
        assert "mean" in text and "epe" in text
        with open(os.path.join(str(out), "eval_rows.jsonl")) as fh:
            rows = [json.loads(l) for l in fh]
        assert m["metrics"]["mean_epe"] == pytest.approx(np.mean([r["epe"] for r in rows]))

    def test_eval_checkpoint(self, work, data_dir):
        run_dir = work / "flow_for_eval"
        assert run_cli("train-flow", "--data", data_dir, "--out", run_dir, *quick_train()) == 0
        out = work / "eval_ckpt"
        assert run_cli("eval", "--data", data_dir, "--out", out,
                       "--checkpoint", os.path.join(str(run_dir), "predictor.pt")) == 0
        assert manifest_of(str(out))["metrics"]["n"] == 6

    def test_eval_without_source_exits_3(self, work, data_dir):
        assert run_cli("eval", "--data", data_dir, "--out", work / "ev") == 3


class TestViz:
    def test_panel_with_ground_truth_only(self, work, data_dir):
        out = work / "panel.png"
        assert run_cli("viz", "--data", data_dir, "--index", 1, "--out", out) == 0
        from flowlab.core import load_png

        img = load_png(str(out))
        assert img.shape[0] == 32
        assert img.shape[1] == 3 * 32 + 2 * 4  # img1, img2, gt flow + gaps
        assert os.path.exists(str(out) + ".manifest.json")

    def test_panel_with_estimate(self, work, data_dir):
        var = work / "var_viz"
        assert run_cli("solve-var", "--data", data_dir, "--out", var, "--n", 1,
                       "--pyramid-levels", 2, "--steps-per-level", 5) == 0
        out = work / "panel5.png"
        assert run_cli("viz", "--data", data_dir, "--index", 0, "--out", out,
                       "--flows", var) == 0
        from flowlab.core import load_png

        assert load_png(str(out)).shape[1] == 5 * 32 + 4 * 4

    def test_index_out_of_range_exits_3(self, work, data_dir):
        assert run_cli("viz", "--data", data_dir, "--index", 99, "--out", work / "p.png") == 3


class TestManifestReplay:
    def replay(self, out_dir, work, name, command, **overrides):
        m = manifest_of(out_dir)
        cfg = work / f"{name}.cfg"
        lines = [f"{k}={v}" for k, v in m["config"].items() if k != "out"]
        cfg.write_text("\n".join(lines) + "\n")
        out2 = work / name
        argv = [command, "--config", str(cfg), "--out", str(out2)]
        for k, v in overrides.items():
            argv += [f"--{k.replace('_', '-')}", str(v)]
        assert entrypoint(argv) == 0
        return manifest_of(str(out2))

    def test_gen_replay_reproduces_metrics(self, work, data_dir):
        m1 = manifest_of(data_dir)
        m2 = self.replay(data_dir, work, "gen_replay", "gen")
        assert m2["metrics"] == m1["metrics"]
        assert m2["dataset_hash"] == m1["dataset_hash"]

    def test_solve_var_replay_reproduces_metrics(self, work, data_dir):
        var = work / "var_replay_src"
        assert run_cli("solve-var", "--data", data_dir, "--out", var, "--n", 2,
                       "--pyramid-levels", 2, "--steps-per-level", 6) == 0
        m1 = manifest_of(str(var))
        m2 = self.replay(str(var), work, "var_replay", "solve-var")
        assert m2["metrics"] == m1["metrics"]

    def test_train_flow_replay_reproduces_metrics(self, work, data_dir):
        src = work / "flow_replay_src"
        assert run_cli("train-flow", "--data", data_dir, "--out", src,
                       "--eval-data", data_dir, "--eval-every", 4,
                       "--max-steps", 4, "--alpha", 0.0, "--batch-size", 2,
                       "--log-every", 2, "--seed", 5, "--levels", 3, "--base-width", 4) == 0
        m1 = manifest_of(str(src))
        m2 = self.replay(str(src), work, "flow_replay", "train-flow")
        assert m2["metrics"] == m1["metrics"]


class TestManifestPlumbing:
    def test_parse_config_file(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("# header\na = 1\n\nb=two words \n")
        assert parse_config_file(str(p)) == {"a": "1", "b": "two words"}

    def test_parse_rejects_bare_line(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("nonsense\n")
        with pytest.raises(ValueError):
            parse_config_file(str(p))

    def test_build_config_coerces_types(self):
        cfg = build_config(
            GenConfig,
            {"h": "32", "w": "32", "scale_range": "0.8,1.2", "flat_shape_prob": "0.5"},
        )
        assert cfg.h == 32 and cfg.scale_range == (0.8, 1.2)
        assert cfg.flat_shape_prob == 0.5

    def test_build_config_nested(self):
        cfg = build_config(
            BottleneckSearchConfig,
            {"lam": "0.7", "initial_k": "3", "lr": "0.002", "max_steps": "11"},
        )
        assert cfg.lam == 0.7 and cfg.initial_k == 3
        assert cfg.train.lr == 0.002 and cfg.train.max_steps == 11

    def test_config_snapshot_round_trips(self):
        cfg = GenConfig(h=32, w=32, scale_range=(0.8, 1.25))
        snap = config_snapshot(cfg)
        assert snap["scale_range"] == "0.8,1.25"
        again = build_config(GenConfig, snap)
        assert again == cfg

    def test_render_value_forms(self):
        assert render_value(True) == "true"
        assert render_value((1, 2.5)) == "1,2.5"
        assert render_value(None) == "none"

    def test_dataset_hash_ignores_manifest(self, data_dir, work):
        h1 = dataset_content_hash(data_dir)
        m = load_manifest(data_dir)
        assert m.dataset_hash == h1  # manifest file itself is excluded
        probe = os.path.join(data_dir, "extra.bin")
        with open(probe, "wb") as fh:
            fh.write(b"x")
        try:
            assert dataset_content_hash(data_dir) != h1
        finally:
            os.remove(probe)
        assert dataset_content_hash(data_dir) == h1


def test_module_invocation_help():
    proc = subprocess.run(
        [sys.executable, "-m", "flowlab", "--help"],
        capture_output=True, text=True, timeout=120,
    )
    assert proc.returncode == 0
    assert "train-cpn" in proc.stdout and "solve-var" in proc.stdout
