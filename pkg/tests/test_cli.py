"""
命令行测试（click CliRunner）
"""

import json

import pytest
from click.testing import CliRunner

from src import __version__
from src.cli.main import cli
from src.data.dataset_io import MANIFEST_NAME, read_dataset
from src.utils.log_manager import log_manager


@pytest.fixture
def runner():
    yield CliRunner()
    # CliRunner 替换的 stderr 在调用结束后关闭，恢复日志输出流
    log_manager.configure()


def invoke(runner, *args):
    return runner.invoke(cli, ["--workers", "1", *[str(a) for a in args]])


def write_report(path, nrmse):
    report = {
        "phantom": {"fingerprint": "0123456789abcdef", "mask_fingerprint": "fedcba9876543210"},
        "recon": {m: {"nrmse": v} for m, v in nrmse.items()},
        "metrics": {"npr": {"stm": {"1": 0.2}}},
        "timings": {"recon": 1.0},
    }
    path.write_text(json.dumps(report), encoding="utf-8")
    return path


# ==================== 通用 ====================

def test_version(runner):
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.output


def test_configs_lists_bundled(runner):
    result = invoke(runner, "configs")
    assert result.exit_code == 0
    assert "phantom2d-smoke" in result.output
    assert "phantom3d-B-like" in result.output


def test_run_smoke_config(runner, tmp_path):
    result = invoke(runner, "run", "--config", "phantom2d-smoke", "--output", tmp_path / "out")
    assert result.exit_code == 0, result.output
    assert "NRMSE" in result.output
    assert (tmp_path / "out" / "report.json").is_file()
    assert (tmp_path / "out" / "eigvals" / MANIFEST_NAME).is_file()


def test_run_unknown_config_exits_with_validation_code(runner):
    result = invoke(runner, "run", "--config", "no-such-config")
    assert result.exit_code == 2


# ==================== compare ====================

def test_compare_exit_codes(runner, tmp_path):
    good = write_report(tmp_path / "good.json", {"zerofill": 0.5, "datashare": 0.3, "stm-tikhonov": 0.1})
    bad = write_report(tmp_path / "bad.json", {"zerofill": 0.5, "datashare": 0.3, "stm-tikhonov": 0.4})

    same = invoke(runner, "compare", good, good)
    assert same.exit_code == 0
    assert "ordering holds" in same.output

    violated = invoke(runner, "compare", good, bad, "--export", tmp_path / "diff.csv")
    assert violated.exit_code == 1
    assert "ordering violated" in violated.output
    assert (tmp_path / "diff.csv").is_file()


def test_compare_different_phantoms(runner, tmp_path):
    a = write_report(tmp_path / "a.json", {"zerofill": 0.5})
    other = json.loads(a.read_text(encoding="utf-8"))
    other["phantom"]["fingerprint"] = "ffffffffffffffff"
    b = tmp_path / "b.json"
    b.write_text(json.dumps(other), encoding="utf-8")
    assert invoke(runner, "compare", a, b).exit_code == 2


def test_compare_accepts_output_directories(runner, tmp_path):
    for name in ("a", "b"):
        (tmp_path / name).mkdir()
        write_report(tmp_path / name / "report.json", {"zerofill": 0.5, "stm-tikhonov": 0.1})
    result = invoke(runner, "compare", tmp_path / "a", tmp_path / "b")
    assert result.exit_code == 0


# ==================== 分步流程 ====================

@pytest.fixture
def phantom_dir(runner, tmp_path):
    spec = {
        "phantom": {"dims": [16, 12], "frames": 8, "j_max": 2, "smoothness": 3.0},
        "mask": {"acs": [6], "extra_lines": [2]},
        "coils": 2,
    }
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec), encoding="utf-8")
    out = tmp_path / "phantom"
    result = invoke(runner, "phantom", "gen", "--spec", spec_path, "--seed", 4, "--out", out)
    assert result.exit_code == 0, result.output
    return out


def test_phantom_gen_writes_datasets(phantom_dir):
    for name in ("image", "roi", "mask", "maps", "kt"):
        assert (phantom_dir / name / MANIFEST_NAME).is_file()
    data = read_dataset(phantom_dir / "kt", "kt")
    assert data.coils == 2
    assert data.frames == 8


def test_step_by_step_pipeline(runner, tmp_path, phantom_dir):
    kt, maps, image = phantom_dir / "kt", phantom_dir / "maps", phantom_dir / "image"

    result = invoke(runner, "nullspace", "--data", kt, "--maps", maps, "--method", "exact",
                    "--radius", 1, "--out", tmp_path / "W")
    assert result.exit_code == 0, result.output
    assert read_dataset(tmp_path / "W", "projector").method == "exact"

    result = invoke(runner, "maps", "--data", kt, "--projector", tmp_path / "W", "--radius", 1,
                    "--L", 2, "--coarse", 1, "--out", tmp_path / "stm")
    assert result.exit_code == 0, result.output
    assert read_dataset(tmp_path / "stm", "stm").components == 2

    result = invoke(runner, "recon", "stm-tikhonov", "--data", kt, "--maps", maps, "--stm", tmp_path / "stm",
                    "--reference", image, "--out", tmp_path / "rec")
    assert result.exit_code == 0, result.output
    assert "NRMSE" in result.output

    result = invoke(runner, "metrics", "nrmse", "--image", tmp_path / "rec", "--reference", image, "--per-frame")
    assert result.exit_code == 0, result.output
    assert '"nrmse"' in result.output
    assert '"nrmse_per_frame"' in result.output

    result = invoke(runner, "metrics", "npr", "--reference", image, "--stm", tmp_path / "stm", "--max-L", 2)
    assert result.exit_code == 0, result.output
    assert '"stm"' in result.output

    result = invoke(runner, "metrics", "eig", "--data", kt, "--projector", tmp_path / "W", "--radius", 1,
                    "--k", 4, "--out", tmp_path / "eig")
    assert result.exit_code == 0, result.output
    assert read_dataset(tmp_path / "eig", "image_stack").labels[-1] == "lambda_8"


def test_baseline_recon_and_sensitivity(runner, tmp_path, phantom_dir):
    kt, maps = phantom_dir / "kt", phantom_dir / "maps"

    result = invoke(runner, "recon", "zerofill", "--data", kt, "--out", tmp_path / "zf")
    assert result.exit_code == 2

    result = invoke(runner, "recon", "psf", "--data", kt, "--maps", maps, "--L", 2, "--out", tmp_path / "psf")
    assert result.exit_code == 0, result.output

    result = invoke(runner, "sensitivity", "--data", kt, "--radius", 1, "--out", tmp_path / "sens")
    assert result.exit_code == 0, result.output
    assert read_dataset(tmp_path / "sens", "maps").coils == 2


def test_tscore_command(runner, tmp_path, phantom_dir):
    result = invoke(runner, "metrics", "tscore", "--image", phantom_dir / "image", "--block", 2,
                    "--transition", 0, "--out", tmp_path / "t")
    assert result.exit_code == 0, result.output
    assert read_dataset(tmp_path / "t", "image_stack").labels == ("tscore",)

    result = invoke(runner, "metrics", "tscore", "--image", phantom_dir / "image", "--block", 2,
                    "--out", tmp_path / "t2")
    assert result.exit_code == 2
