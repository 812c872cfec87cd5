#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
评估与消融处理器
"""
import os
import logging
from enum import Enum
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from src.core.constants import DatasetSplit
from src.core.data_manager import DatasetManager
from src.core.exceptions import ConfigError
from src.core.laconv import LAConvMode
from src.core.laresnet import ModelConfig, LAResNetParams, FusionSample, count_params, forward, load_checkpoint
from src.core.metrics import MetricConfig, reduced_resolution_suite, qnr_suite
from src.core.statistics_calculator import MetricReport
from src.core.workers import ordered_map
from src.handlers.compute_handler import ComputeHandler

logger = logging.getLogger(__name__)

EVAL_METRICS_NAME = "eval_metrics.csv"
ABLATION_NAME = "ablation.csv"
ABLATION_METRICS = ["SAM", "ERGAS", "SCC", "Q2n"]


class Prediction(Enum):
    """评估对象：模型输出、上采样 LR 基线，或 GT 本身 (恒等校验)"""
    MODEL = "model"
    UPSAMPLED = "upsampled"
    GT = "gt"

    @classmethod
    def from_str(cls, s: str):
        for item in cls:
            if item.value == str(s).strip().lower():
                return item
        raise ValueError(f"未知的评估对象: '{s}' (可选: model, upsampled, gt)")


def mode_dirname(mode: LAConvMode) -> str:
    return mode.label.replace("+", "_")


class StatsHandler:
    """处理评估指标计算、逐样本结果聚合与消融对比表。"""

    def __init__(self, metric_config: MetricConfig = MetricConfig(), max_workers: Optional[int] = None):
        self.metric_config = metric_config
        self.max_workers = max_workers

    def _sample_metrics(self, prediction: np.ndarray, sample: FusionSample, dataset: DatasetManager) -> Dict[str, float]:
        metrics = reduced_resolution_suite(prediction, sample.gt, self.metric_config)
        if sample.hr.shape[1] == 1:
            result = qnr_suite(prediction, dataset.load_lr(sample.sample_id), sample.hr, self.metric_config)
            metrics.update({"QNR": result.qnr, "D_lambda": result.d_lambda, "D_s": result.d_s})
        return metrics

    def evaluate(self, dataset: DatasetManager, predict: Prediction = Prediction.MODEL,
                 params: Optional[LAResNetParams] = None, config: Optional[ModelConfig] = None,
                 split: DatasetSplit = DatasetSplit.TEST, out_dir: Optional[str] = None) -> MetricReport:
        """
        对 split 中每个样本计算指标 (线程池扇出，按清单顺序收集)，
        out_dir 给出时写出 eval_metrics.csv。
        """
        ids = dataset.get_split_ids(split)
        if not ids:
            raise ValueError(f"数据集 {dataset.dataset_directory} 的 {split.value} 划分为空")
        if predict == Prediction.MODEL:
            if params is None or config is None:
                raise ConfigError("使用模型输出评估时需要检查点")
            dataset.check_model_compatibility(config.c_lr, config.c_hr)
            if config.upsample_factor != self.metric_config.ratio:
                raise ConfigError(f"检查点的 upsample_factor ({config.upsample_factor}) "
                                  f"与 metric.ratio ({self.metric_config.ratio}) 不一致")

        def evaluate_one(sample_id: str) -> Dict[str, float]:
            sample = dataset.load_sample(sample_id)
            if predict == Prediction.MODEL:
                prediction = forward(params, sample, config)
            elif predict == Prediction.UPSAMPLED:
                prediction = sample.lr_up
            else:
                prediction = sample.gt
            return self._sample_metrics(prediction, sample, dataset)

        results = ordered_map(evaluate_one, ids, max_workers=self.max_workers, label="样本评估")
        report = MetricReport()
        for sample_id, metrics in zip(ids, results):
            report.add(sample_id, metrics)
        logger.info(f"评估完成 ({predict.value}, {split.value}, {len(ids)} 个样本):\n{report.format_table()}")
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
            report.to_csv(os.path.join(out_dir, EVAL_METRICS_NAME))
        return report

    def ablate(self, compute: ComputeHandler, data_dir: str, out_dir: str,
               modes: Optional[List[LAConvMode]] = None) -> pd.DataFrame:
        """
        依次训练每种模式 (其余配置与种子相同)，在测试集上评估并写出对比表。
        单个模式失败时记录错误并继续其余模式。
        """
        modes = modes or LAConvMode.ablation_grid()
        dataset = DatasetManager().setup_dataset_directory(data_dir)
        base = compute.run_config.model.to_mapping()
        rows = []
        for i, mode in enumerate(modes, start=1):
            config = ModelConfig.from_mapping({**base, "mode": mode.label})
            row = {"mode": mode.label, "params": count_params(config)[0]}
            logger.info(f"消融 {i}/{len(modes)}: {mode.label} ({row['params']} 个参数)")
            try:
                result = compute.train(data_dir, os.path.join(out_dir, mode_dirname(mode)), config)
                report = self.evaluate(dataset, Prediction.MODEL, result.params, config)
                row.update({name: report.mean(name) for name in ABLATION_METRICS})
                row["status"] = "ok"
            except (ValueError, RuntimeError, OSError) as e:
                logger.error(f"模式 {mode.label} 失败: {e}", exc_info=True)
                row.update({name: np.nan for name in ABLATION_METRICS})
                row["status"] = f"failed: {e}"
            rows.append(row)

        table = pd.DataFrame(rows, columns=["mode", "params"] + ABLATION_METRICS + ["status"])
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, ABLATION_NAME)
        table.to_csv(path, index=False, float_format='%.17g')
        failed = int((table["status"] != "ok").sum())
        logger.info(f"消融结果已写入: {path} ({len(table)} 个模式, {failed} 个失败)")
        return table


def load_model(checkpoint: str):
    """返回 (参数, 模型配置)；检查点不存在时抛出 FileNotFoundError。"""
    if not os.path.isdir(checkpoint):
        raise FileNotFoundError(f"检查点目录不存在: {checkpoint}")
    params, config, _ = load_checkpoint(checkpoint)
    return params, config
