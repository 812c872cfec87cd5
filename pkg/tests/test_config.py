#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
配置解析、分层合并、预设与跨字段校验。
"""
import json

import pytest

from src.core.constants import TaskPreset, PadMode
from src.core.exceptions import ConfigError
from src.core.optim import lr_at
from src.handlers.config_handler import ConfigHandler, RunConfig, SECTION_KEYS, KEY_SECTIONS


@pytest.fixture
def handler():
    return ConfigHandler()


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestParsing:

    def test_key_value_text(self, handler):
        sections = handler.parse_key_value_text(
            "# 注释\n\nmodel.blocks = 3   # 行尾注释\nchannels=16\n  seed = 7\n")
        assert sections == {"model": {"blocks": "3", "channels": "16"}, "train": {"seed": "7"}}

    def test_unknown_key_reports_line(self, handler):
        with pytest.raises(ConfigError, match=":2:"):
            handler.parse_key_value_text("blocks = 2\nlayers = 4\n")

    def test_unknown_section(self, handler):
        with pytest.raises(ConfigError):
            handler.parse_key_value_text("optimizer.lr = 1\n")

    def test_key_in_wrong_section(self, handler):
        with pytest.raises(ConfigError):
            handler.parse_key_value_text("train.blocks = 2\n")

    def test_missing_equals(self, handler):
        with pytest.raises(ConfigError):
            handler.parse_key_value_text("blocks 2\n")

    def test_json_flat_and_sectioned(self, handler):
        flat = handler.parse_json({"blocks": 2, "epochs": 10})
        nested = handler.parse_json({"version": "1.0.0", "model": {"blocks": 2}, "train": {"epochs": 10}})
        assert flat == nested == {"model": {"blocks": 2}, "train": {"epochs": 10}}

    def test_json_file(self, handler, tmp_path):
        path = write(tmp_path, "run.json", json.dumps({"model": {"pad_mode": "circular"}}))
        assert handler.load(path).model.pad_mode == PadMode.CIRCULAR

    def test_broken_json(self, handler, tmp_path):
        with pytest.raises(ConfigError):
            handler.load(write(tmp_path, "run.json", "{blocks: 2"))

    def test_bare_keys_are_unique(self):
        assert len(KEY_SECTIONS) == sum(len(keys) for keys in SECTION_KEYS.values())


class TestLayering:

    def test_defaults(self, handler):
        run = handler.load()
        assert run == RunConfig()

    def test_file_overrides_defaults(self, handler, tmp_path):
        run = handler.load(write(tmp_path, "run.cfg", "blocks = 2\nmode = SC+CB\n"))
        assert run.model.blocks == 2 and run.model.mode.label == "SC+CB"
        assert run.model.channels == 32

    def test_command_line_overrides_file(self, handler, tmp_path):
        path = write(tmp_path, "run.cfg", "seed = 1\ndata_dir = a\n")
        run = handler.load(path, {"seed": 9, "data_dir": None, "out_dir": "elsewhere"})
        assert run.train.seed == 9
        assert run.paths.data_dir == "a"
        assert run.paths.out_dir == "elsewhere"

    def test_missing_file(self, handler, tmp_path):
        with pytest.raises(FileNotFoundError):
            handler.load(str(tmp_path / "absent.cfg"))

    def test_saved_config_loads_back(self, handler, tmp_path):
        run = handler.load("toy")
        path = str(tmp_path / "saved.cfg")
        handler.save(run, path)
        assert handler.load(path) == run


class TestPresets:

    @pytest.mark.parametrize("name", ["toy", "wv3", "qb", "gf2", "cave"])
    def test_presets_validate(self, handler, name):
        handler.load(name)

    def test_toy_keeps_constant_rate(self, handler):
        run = handler.load("toy")
        assert run.model.blocks == 2 and run.model.channels == 8
        assert run.train.preset == TaskPreset.TOY
        assert {lr_at(e, run.train) for e in range(0, run.train.epochs, 100)} == {1e-3}

    def test_toy_scene_spec_carries_spectral_coherence(self, handler):
        spec = handler.load("toy").scene_spec()
        assert (spec.bands, spec.size, spec.n_shapes) == (4, 16, 2)
        assert (spec.smoothness, spec.shape_contrast, spec.spectral_jitter) == (8.0, 0.1, 0.01)

    def test_four_band_presets(self, handler):
        assert handler.load("qb").model.c_lr == 4
        assert handler.load("gf2").model.c_lr == 4

    def test_hyperspectral_preset(self, handler):
        run = handler.load("cave")
        assert (run.model.c_lr, run.model.c_hr) == (31, 3)
        assert run.train.preset == TaskPreset.HISR
        assert run.degrade_spec().srf_for(31).shape == (3, 31)


class TestCrossFieldChecks:

    @pytest.mark.parametrize("text", [
        "metric.ratio = 2",
        "scene_size = 30",
        "split_train = 0.5",
        "blur_size = 4",
        "smoothness = 0",
        "shape_contrast = -0.2",
        "spectral_jitter = -0.01",
        "kernel_size = 2",
        "phase_split = 2000",
        "mode = LAC+XB",
        "blocks = many",
    ])
    def test_invalid_combinations(self, handler, tmp_path, text):
        with pytest.raises(ConfigError):
            handler.load(write(tmp_path, "bad.cfg", text + "\n"))

    def test_srf_shape_checked(self, handler, tmp_path):
        srf = write(tmp_path, "srf.txt", "0.5 0.5\n")
        with pytest.raises(ConfigError):
            handler.load(write(tmp_path, "bad.cfg", f"srf_file = {srf}\n"))

    def test_srf_file_accepted(self, handler, tmp_path):
        srf = write(tmp_path, "srf.txt", " ".join(["0.125"] * 8) + "\n")
        run = handler.load(write(tmp_path, "ok.cfg", f"srf_file = {srf}\n"))
        assert run.degrade_spec().srf.shape == (1, 8)
