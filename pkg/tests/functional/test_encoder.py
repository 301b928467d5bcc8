"""
Encoder & Checkpoint Tests
==========================

Usage:
------
    pytest tests/functional/test_encoder.py -v --alluredir=allure-results
    pytest -m encoder -v
"""

import struct

import allure
import numpy as np
import pytest

from config.logger_config import get_run_logger
from constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from contrastnet.encoder import (
    EncoderParams,
    GradBuffer,
    encode,
    encode_backward,
    encode_many,
    init_params,
    load_checkpoint,
    save_checkpoint,
)

logger = get_run_logger()


@allure.feature("Encoder")
@allure.story("Initialization")
@pytest.mark.encoder
class TestInitParams:

    def test_zero_scale(self, rng):
        assert not np.any(init_params(8, 4, 0.0, rng).table)

    def test_shape_and_range(self, rng):
        params = init_params(8, 4, 0.3, rng)
        assert params.table.shape == (8, 4)
        assert params.bucket_count == 8 and params.dim == 4
        assert np.all(np.abs(params.table) <= 0.3)

    def test_same_seed_same_table(self):
        a = init_params(16, 4, 1.0, np.random.default_rng(5))
        b = init_params(16, 4, 1.0, np.random.default_rng(5))
        np.testing.assert_array_equal(a.table, b.table)


@allure.feature("Encoder")
@allure.story("Forward")
@pytest.mark.encoder
class TestEncode:

    def test_single_token_is_row(self, small_params):
        np.testing.assert_array_equal(encode(small_params, [17]), small_params.table[17])

    def test_repeated_token_is_row(self, small_params):
        np.testing.assert_array_equal(encode(small_params, [17, 17]), small_params.table[17])

    def test_two_point_mean(self):
        params = EncoderParams(np.array([[1.0, 0.0], [0.0, 1.0], [3.0, 3.0]]))
        np.testing.assert_array_equal(encode(params, [0, 1]), [0.5, 0.5])

    def test_normalized_output_has_unit_norm(self, small_params):
        z = encode(small_params, [1, 2, 3], normalize=True)
        assert np.linalg.norm(z) == pytest.approx(1.0, abs=1e-12)

    def test_encode_many_stacks(self, small_params):
        reps = encode_many(small_params, [[1], [2, 3]])
        assert reps.shape == (2, small_params.dim)
        np.testing.assert_array_equal(reps[0], small_params.table[1])
        assert encode_many(small_params, []).shape == (0, small_params.dim)


@allure.feature("Encoder")
@allure.story("Backward")
@pytest.mark.encoder
class TestEncodeBackward:

    def test_single_token_adds_upstream(self, small_params):
        buffer = GradBuffer(small_params.dim)
        g = np.arange(small_params.dim, dtype=float)
        encode_backward(small_params, [4], g, buffer)
        assert list(buffer.rows) == [4]
        np.testing.assert_array_equal(buffer.rows[4], g)
        assert buffer.count == 1

    def test_repeated_token_adds_full_upstream(self, small_params):
        buffer = GradBuffer(small_params.dim)
        g = np.ones(small_params.dim)
        encode_backward(small_params, [4, 4], g, buffer)
        np.testing.assert_allclose(buffer.rows[4], g)

    def test_zero_upstream_is_noop(self, small_params):
        buffer = GradBuffer(small_params.dim)
        encode_backward(small_params, [1, 2], np.zeros(small_params.dim), buffer)
        assert buffer.rows == {} and buffer.count == 0

    def test_accumulates_across_calls(self, small_params):
        buffer = GradBuffer(small_params.dim)
        g = np.ones(small_params.dim)
        encode_backward(small_params, [1, 2], g, buffer)
        encode_backward(small_params, [2], g, buffer)
        np.testing.assert_allclose(buffer.rows[1], 0.5 * g)
        np.testing.assert_allclose(buffer.rows[2], 1.5 * g)
        assert buffer.count == 2

    def test_to_dense(self, small_params):
        buffer = GradBuffer(small_params.dim)
        encode_backward(small_params, [3], np.ones(small_params.dim), buffer)
        dense = buffer.to_dense(small_params.bucket_count)
        assert dense.shape == small_params.table.shape
        assert dense.sum() == pytest.approx(small_params.dim)

    def test_normalized_backward_orthogonal_to_output(self, small_params):
        tokens = [5]
        y = encode(small_params, tokens, normalize=True)
        buffer = GradBuffer(small_params.dim)
        encode_backward(small_params, tokens, y, buffer, normalize=True)
        assert not buffer.rows or np.allclose(buffer.rows[5], 0.0, atol=1e-12)


@allure.feature("Encoder")
@allure.story("Checkpoint")
@pytest.mark.encoder
class TestCheckpoint:

    @allure.title("Checkpoint preserves table and optimizer state bit for bit")
    @allure.severity(allure.severity_level.CRITICAL)
    def test_round_trip_with_state(self, tmp_path, small_params, rng):
        m = rng.normal(size=small_params.table.shape)
        v = rng.random(size=small_params.table.shape)
        path = save_checkpoint(tmp_path / "model.bin", small_params, (m, v, 42))

        params, state = load_checkpoint(path)
        np.testing.assert_array_equal(params.table, small_params.table)
        np.testing.assert_array_equal(state[0], m)
        np.testing.assert_array_equal(state[1], v)
        assert state[2] == 42

    def test_without_state(self, tmp_path, small_params):
        path = save_checkpoint(tmp_path / "model.bin", small_params)
        params, state = load_checkpoint(path)
        assert state is None
        np.testing.assert_array_equal(params.table, small_params.table)

    def test_byte_layout(self, tmp_path):
        params = EncoderParams(np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]))
        path = save_checkpoint(tmp_path / "model.bin", params)
        raw = path.read_bytes()

        header = struct.pack("<4sIQQ", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, 3, 2)
        assert raw[:len(header)] == header
        body = np.frombuffer(raw[len(header):len(header) + 48], dtype="<f8")
        assert body.tolist() == [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
        assert raw[len(header) + 48:] == b"\x00"

    def test_no_temp_files_left(self, tmp_path, small_params):
        save_checkpoint(tmp_path / "model.bin", small_params)
        save_checkpoint(tmp_path / "model.bin", small_params)
        assert [p.name for p in tmp_path.iterdir()] == ["model.bin"]

    def test_rewrite_is_byte_identical(self, tmp_path, small_params):
        a = save_checkpoint(tmp_path / "a.bin", small_params).read_bytes()
        b = save_checkpoint(tmp_path / "b.bin", small_params).read_bytes()
        assert a == b
