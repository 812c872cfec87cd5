#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
测试共享夹具：带种子的随机数生成器、玩具模型配置与临时数据集。
"""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.core.constants import PadMode
from src.core.data_sim import SceneSpec, DegradeSpec, make_dataset
from src.core.laconv import LAConvMode
from src.core.laresnet import ModelConfig
from src.core.optim import TrainConfig
from src.core.constants import TaskPreset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_config():
    return ModelConfig(blocks=2, channels=8, kernel_size=3, c_lr=4, c_hr=1,
                       mode=LAConvMode.from_str("LAC+DYB"), upsample_factor=4)


@pytest.fixture
def circular_toy_config(toy_config):
    return ModelConfig.from_mapping({**toy_config.to_mapping(), "pad_mode": PadMode.CIRCULAR.value})


@pytest.fixture
def short_train_config():
    return TrainConfig(epochs=3, batch_size=2, lr_phase1=1e-3, lr_phase2=1e-4, phase_split=2,
                       seed=0, preset=TaskPreset.TOY)


@pytest.fixture
def toy_dataset(tmp_path):
    """8 个训练 + 2 个测试样本，4 波段 + PAN，16×16。"""
    out_dir = str(tmp_path / "toy_data")
    make_dataset(SceneSpec(seed=7, bands=4, size=16, n_shapes=3, smoothness=2.0),
                 DegradeSpec(ratio=4, hr_bands=1), count=10, fractions=(0.8, 0.0, 0.2),
                 out_dir=out_dir, max_workers=2)
    return out_dir

