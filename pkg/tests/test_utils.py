"""
工具模块测试：居中 FFT、配置读取、并行切块、错误码
"""

import numpy as np
import pytest

from conftest import random_complex
from src.phantom.sampling import MaskSpec
from src.utils.config_loader import load_model, read_json
from src.utils.errors import ConfigurationError, DatasetFormatError, NumericalError, StageError, ValidationError
from src.utils.fft import center_slices, centered_coordinates, fftc, ifftc
from src.utils.parallel import ENV_WORKERS, chunk_ranges, map_chunks, resolve_workers


def test_centered_fft_is_unitary(rng):
    x = random_complex(rng, (6, 5, 3, 2))
    k = fftc(x)
    assert np.linalg.norm(k) == pytest.approx(np.linalg.norm(x))
    np.testing.assert_allclose(ifftc(k), x, atol=1e-12)


def test_centered_fft_puts_dc_at_center():
    x = np.ones((6, 5, 1))
    k = fftc(x)
    assert abs(k[3, 2, 0]) == pytest.approx(np.sqrt(30))
    k[3, 2, 0] = 0
    np.testing.assert_allclose(k, 0, atol=1e-12)


def test_centered_coordinates_and_slices():
    np.testing.assert_array_equal(centered_coordinates(5), [-2, -1, 0, 1, 2])
    np.testing.assert_array_equal(centered_coordinates(4), [-2, -1, 0, 1])
    assert center_slices((8, 7), (4, 3)) == (slice(2, 6), slice(2, 5))


def test_load_model_converts_errors():
    assert load_model(MaskSpec, {"acs": [4], "extra_lines": [1]}).acs == [4]
    with pytest.raises(ValidationError, match="MaskSpec"):
        load_model(MaskSpec, {"acs": "many"})


def test_read_json_errors(tmp_path):
    with pytest.raises(ValidationError):
        read_json(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(ValidationError):
        read_json(broken)


def test_resolve_workers(monkeypatch):
    assert resolve_workers(3) == 3
    assert resolve_workers(0) == 1
    monkeypatch.setenv(ENV_WORKERS, "2")
    assert resolve_workers() == 2
    monkeypatch.delenv(ENV_WORKERS)
    assert resolve_workers() >= 1


def test_non_integer_worker_env_is_rejected(monkeypatch):
    monkeypatch.setenv(ENV_WORKERS, "many")
    with pytest.raises(ValidationError) as info:
        resolve_workers()
    assert info.value.exit_code == 2
    assert resolve_workers(2) == 2


def test_chunks_cover_range_and_run_in_parallel():
    chunks = chunk_ranges(10, 4)
    assert chunks == [slice(0, 4), slice(4, 8), slice(8, 10)]
    out = np.zeros(10)

    def fill(part):
        out[part] = np.arange(10)[part] * 2

    map_chunks(fill, chunks, workers=3)
    np.testing.assert_array_equal(out, np.arange(10) * 2)


def test_exit_codes():
    assert ValidationError.exit_code == 2
    assert DatasetFormatError.exit_code == 2
    assert ConfigurationError.exit_code == 2
    assert NumericalError.exit_code == 3
    error = StageError("recon", NumericalError("curvature"))
    assert error.stage == "recon"
    assert error.exit_code == 3
    assert "[recon]" in str(error)
    assert StageError("maps", RuntimeError("boom")).exit_code == 3
