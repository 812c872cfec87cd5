#!/usr/bin/env python3
# -*- coding: utf-8 -*-
import os

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from src.core.constants import TEN_DTYPE_F32, CHECKPOINT_MANIFEST
from src.core.exceptions import ShapeError
from src.core.tensor_io import encode_tensor, decode_tensor, write_tensor, read_tensor, write_checkpoint, read_checkpoint


class TestTenFormat:

    def test_header_layout(self):
        buf = encode_tensor(np.zeros((1, 2, 3, 4)))
        assert buf[:4] == b"TEN1"
        assert buf[4] == 0x02 and buf[5] == 4
        assert np.frombuffer(buf, dtype='<u4', count=4, offset=6).tolist() == [1, 2, 3, 4]
        assert len(buf) == 22 + 24 * 8

    def test_decode_restores_values(self, rng):
        x = rng.standard_normal((2, 3, 4, 5))
        assert_array_equal(decode_tensor(encode_tensor(x)), x)

    def test_f32_payload(self, rng):
        x = rng.standard_normal((1, 1, 2, 2))
        out = decode_tensor(encode_tensor(x, TEN_DTYPE_F32))
        assert out.dtype == np.float64
        assert_array_equal(out, x.astype(np.float32))

    def test_bad_magic(self):
        buf = bytearray(encode_tensor(np.zeros((1, 1, 1, 1))))
        buf[:4] = b"NOPE"
        with pytest.raises(ValueError, match="魔数"):
            decode_tensor(bytes(buf))

    def test_truncated_payload(self):
        with pytest.raises(ValueError):
            decode_tensor(encode_tensor(np.zeros((1, 1, 2, 2)))[:-3])

    def test_rank_must_be_four(self):
        with pytest.raises(ShapeError):
            encode_tensor(np.zeros((3, 3)))

    def test_file_round_trip(self, tmp_path, rng):
        x = rng.standard_normal((1, 2, 3, 3))
        path = str(tmp_path / "x.ten")
        write_tensor(path, x)
        assert not os.path.exists(path + ".tmp")
        assert_array_equal(read_tensor(path), x)


class TestCheckpointFiles:

    def test_groups_keep_their_shapes(self, tmp_path, rng):
        groups = {"head.kernel": rng.standard_normal((4, 5, 3, 3)), "head.bias": rng.standard_normal(4),
                  "gate.w1": rng.standard_normal((9, 5))}
        directory = str(tmp_path / "ckpt")
        write_checkpoint(directory, groups, {"head.kernel": 0, "head.bias": 0, "gate.w1": 0}, {"blocks": "2"})
        loaded, config, entries = read_checkpoint(directory)
        assert config == {"blocks": "2"}
        assert list(loaded) == list(groups)
        for name, value in groups.items():
            assert_array_equal(loaded[name], value)
            assert entries[name]["layer"] == "0"

    def test_overwrite_replaces_directory(self, tmp_path):
        directory = str(tmp_path / "ckpt")
        write_checkpoint(directory, {"a": np.ones(2)}, {}, {})
        write_checkpoint(directory, {"b": np.zeros(3)}, {}, {})
        loaded, _, _ = read_checkpoint(directory)
        assert list(loaded) == ["b"]
        assert not os.path.exists(directory + ".old")
        assert not os.path.exists(os.path.join(directory, "a.ten"))

    def test_unknown_manifest_rejected(self, tmp_path):
        directory = tmp_path / "ckpt"
        directory.mkdir()
        (directory / CHECKPOINT_MANIFEST).write_text("format=other\n", encoding="utf-8")
        with pytest.raises(ValueError):
            read_checkpoint(str(directory))

    def test_missing_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_checkpoint(str(tmp_path / "absent"))
