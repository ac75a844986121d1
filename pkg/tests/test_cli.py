import json

import numpy as np
import pytest
from click.testing import CliRunner
from PIL import Image

from explainbench.service.cli import entrypoint, main


@pytest.fixture
def runner():
    return CliRunner()


def write_left_image(path):
    arr = np.zeros((8, 8, 3), dtype=np.uint8)
    arr[:, :4, :] = 200
    Image.fromarray(arr).save(path, format="PNG")


class TestExplainCommand:
    def test_explain_prints_record_and_text(self, runner, tmp_path):
        img = tmp_path / "img.png"
        write_left_image(img)
        result = runner.invoke(main, [
            "explain", "--image", str(img), "--task", "classification",
            "--model", "toy_region_scorer", "--method", "rise",
            "--target", "left", "--ground-truth", "left", "--lvm", "mock",
            "--store", str(tmp_path / "runs"), "--mask-count", "16"])
        assert result.exit_code == 0, result.output
        assert "record 1" in result.output
        assert "Model predicted left" in result.output
        assert "verdict match" in result.output

    def test_self_ground_truth_default(self, runner, tmp_path):
        img = tmp_path / "img.png"
        write_left_image(img)
        result = runner.invoke(main, [
            "explain", "--image", str(img), "--task", "classification",
            "--model", "toy_region_scorer", "--method", "rise",
            "--store", str(tmp_path / "runs"), "--mask-count", "16"])
        assert result.exit_code == 0, result.output
        assert "verdict match" in result.output


class TestEvalCommand:
    def test_metrics_match_hand_values(self, runner, tmp_path):
        pairs = tmp_path / "pairs.jsonl"
        pairs.write_text(json.dumps({
            "sample_id": "s1", "task": "classification",
            "hypothesis": "the cat sat on the mat",
            "reference": "the cat is on the mat"}) + "\n")
        csv_out = tmp_path / "report.csv"
        result = runner.invoke(main, [
            "eval", "--pairs", str(pairs), "--task", "classification",
            "--csv", str(csv_out)])
        assert result.exit_code == 0, result.output
        # ROUGE-L precision 5/6
        assert "0.8333" in result.output
        assert csv_out.exists()
        assert "rouge_l_precision" in csv_out.read_text()


class TestBenchCommand:
    def test_bench_deterministic(self, runner, tmp_path):
        store = str(tmp_path / "runs")
        fx = runner.invoke(main, ["fixtures", "--out",
                                  str(tmp_path / "fx"), "--store", store])
        assert fx.exit_code == 0, fx.output
        outputs = []
        for i in range(2):
            out_csv = tmp_path / f"report{i}.csv"
            result = runner.invoke(main, [
                "bench", "--dataset", "fixture-classification",
                "--model", "toy_region_scorer", "--method", "rise",
                "--lvm", "mock", "--store", store,
                "--out", str(out_csv), "--mask-count", "64", "--seed", "0"])
            assert result.exit_code == 0, result.output
            outputs.append(out_csv.read_bytes())
        assert outputs[0] == outputs[1]
        assert b"mean," in outputs[0]


class TestMasksCommand:
    def test_masks_written_with_sidecar(self, runner, tmp_path):
        out = tmp_path / "masks"
        result = runner.invoke(main, [
            "masks", "--grid", "4x4", "--n", "10", "--seed", "7",
            "--size", "16x16", "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "masks.npz").exists()
        sidecar = json.loads((tmp_path / "masks.json").read_text())
        assert sidecar["count"] == 10
        assert sidecar["seed"] == 7


class TestServeGuards:
    def test_port_in_use_is_domain_error(self, tmp_path):
        import socket
        probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
        try:
            code = entrypoint(["serve", "--port", str(port),
                               "--store", str(tmp_path / "runs")])
            assert code == 1
        finally:
            probe.close()


class TestConfigLoading:
    def test_toml_plus_env_override(self, tmp_path, monkeypatch):
        from explainbench.service.config import load_config
        cfg_file = tmp_path / "config.toml"
        cfg_file.write_text('port = 9999\nlvm_provider = "openai_vision"\n')
        monkeypatch.setenv("EXPLAINBENCH_PORT", "7777")
        cfg = load_config(str(cfg_file))
        assert cfg.port == 7777          # env wins over file
        assert cfg.lvm_provider == "openai_vision"
        assert cfg.host == "127.0.0.1"   # default untouched


class TestExitCodes:
    def test_unknown_flag_exits_2(self):
        assert entrypoint(["explain", "--bogus"]) == 2

    def test_unknown_subcommand_exits_2(self):
        assert entrypoint(["frobnicate"]) == 2

    def test_domain_error_exits_1(self, tmp_path):
        img = tmp_path / "img.png"
        write_left_image(img)
        code = entrypoint([
            "explain", "--image", str(img), "--task", "classification",
            "--model", "no_such_model", "--method", "rise",
            "--store", str(tmp_path / "runs")])
        assert code == 1

    def test_success_exits_0(self, tmp_path):
        code = entrypoint(["fixtures", "--out", str(tmp_path / "fx")])
        assert code == 0
