#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
计算处理器：数据集生成、训练、梯度审计与参数统计。
"""
import os
import logging
from typing import List, Optional, Tuple

import pandas as pd

from src.core.data_manager import DatasetManager
from src.core.data_sim import make_dataset
from src.core.laconv import LAConvMode
from src.core.laresnet import ModelConfig, count_params
from src.core.trainer import TrainResult, GradcheckReport, train, gradcheck
from src.handlers.config_handler import ConfigHandler, RunConfig

logger = logging.getLogger(__name__)

RUN_CONFIG_NAME = "run_config.cfg"


class ComputeHandler:
    """处理与生成数据、训练模型、检查梯度相关的逻辑。"""

    def __init__(self, run_config: RunConfig, config_handler: Optional[ConfigHandler] = None,
                 max_workers: Optional[int] = None):
        self.run_config = run_config
        self.config_handler = config_handler or ConfigHandler()
        self.max_workers = max_workers

    def generate_dataset(self, out_dir: Optional[str] = None) -> str:
        cfg = self.run_config
        out_dir = out_dir or cfg.paths.data_dir
        logger.info(f"开始生成数据集: {cfg.data.n_samples} 个样本, {cfg.model.c_lr}+{cfg.model.c_hr} 波段, "
                    f"{cfg.data.scene_size}×{cfg.data.scene_size}, 种子 {cfg.data.data_seed}")
        return make_dataset(cfg.scene_spec(), cfg.degrade_spec(), cfg.data.n_samples,
                            cfg.data.fractions, out_dir, max_workers=self.max_workers)

    def train(self, data_dir: Optional[str] = None, out_dir: Optional[str] = None,
              model_config: Optional[ModelConfig] = None) -> TrainResult:
        cfg = self.run_config
        out_dir = out_dir or cfg.paths.out_dir
        dataset = DatasetManager().setup_dataset_directory(data_dir or cfg.paths.data_dir)
        os.makedirs(out_dir, exist_ok=True)
        self.config_handler.save(cfg, os.path.join(out_dir, RUN_CONFIG_NAME))
        return train(model_config or cfg.model, cfg.train, dataset, out_dir, cfg.metric)

    def gradcheck(self, h: float = 1e-5, tol: float = 1e-4, n_coords: int = 16) -> GradcheckReport:
        cfg = self.run_config
        logger.info(f"梯度检查: 模式 {cfg.model.mode.label}, h={h:g}, tol={tol:g}, 每组 {n_coords} 个坐标")
        return gradcheck(cfg.model, cfg.train.seed, h=h, tol=tol, n_coords=n_coords)

    def parameter_table(self) -> Tuple[int, pd.DataFrame]:
        return count_params(self.run_config.model)

    def mode_table(self, modes: Optional[List[LAConvMode]] = None) -> pd.DataFrame:
        """不同卷积/偏置组合下的参数总量，其余结构参数不变。"""
        rows = []
        for mode in modes or LAConvMode.ablation_grid():
            total, _ = count_params(ModelConfig.from_mapping({**self.run_config.model.to_mapping(), "mode": mode.label}))
            rows.append({"mode": mode.label, "params": total})
        return pd.DataFrame(rows, columns=["mode", "params"])
