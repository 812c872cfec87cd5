# src/handlers/export_handler.py

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
导出功能处理器：局部自适应权重图 (avg / std) 的 PGM 图像、统计 CSV 与总览 PNG。
"""
import os
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import imageio.v3 as iio

from src.core.exceptions import ConfigError, ShapeError
from src.core.laresnet import FusionSample, LAResNetParams, ModelConfig, forward_with_cache
from src.visualization.headless_renderer import HeadlessPlotter

logger = logging.getLogger(__name__)

WEIGHT_STATS_NAME = "weight_stats.csv"
OVERVIEW_NAME = "weight_overview.png"
FLAT_RELATIVE_RANGE = 1e-12
STATS_COLUMNS = ["layer", "avg_min", "avg_max", "avg_mean", "std_min", "std_max", "std_mean"]


def weight_map_stats(local_weights: np.ndarray, index: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """局部权重 (n, k², h, w) 在 k² 轴上的逐像素均值与标准差，取第 index 个样本。"""
    if local_weights.ndim != 4:
        raise ShapeError(f"局部权重应为 (n, k², h, w)，实际: {local_weights.shape}")
    w = local_weights[index]
    return w.mean(axis=0), w.std(axis=0)


def normalize_to_uint8(image: np.ndarray) -> np.ndarray:
    """逐图 min-max 归一化到 0..255；空间范围低于相对阈值的图视为平坦，输出全零。"""
    image = np.asarray(image, dtype=np.float64)
    lo, hi = float(image.min()), float(image.max())
    scale = max(abs(lo), abs(hi), 1.0)
    if hi - lo <= FLAT_RELATIVE_RANGE * scale:
        return np.zeros(image.shape, dtype=np.uint8)
    return np.round((image - lo) / (hi - lo) * 255.0).astype(np.uint8)


def write_pgm(path: str, image: np.ndarray) -> str:
    """8 位灰度二进制 PGM (P5)，由 imageio 的 Pillow 插件写出。"""
    if image.dtype != np.uint8 or image.ndim != 2:
        raise ShapeError(f"PGM 需要二维 uint8 图像，实际: {image.dtype} {image.shape}")
    iio.imwrite(path, image, plugin="pillow", extension=".pgm")
    return path


def constant_sample(config: ModelConfig, size: int, value: float = 0.5) -> FusionSample:
    """空间常数输入；配合循环填充时每层局部权重在空间上恒定。"""
    return FusionSample(
        lr_up=np.full((1, config.c_lr, size, size), value),
        hr=np.full((1, config.c_hr, size, size), value),
        sample_id=f"const:{value:g}",
    )


class ExportHandler:
    """处理权重图的导出：前向传播、逐层统计、写出图像与表格。"""

    def __init__(self, plotter: Optional[HeadlessPlotter] = None):
        self.plotter = plotter or HeadlessPlotter()

    def inspect_weight_maps(self, params: LAResNetParams, config: ModelConfig, sample: FusionSample,
                            out_dir: str, overview: bool = True) -> pd.DataFrame:
        """每个 LAConv 层写出 {layer}_avg.pgm 与 {layer}_std.pgm，并写出原始统计 CSV。"""
        if not config.mode.local_adaptive:
            raise ConfigError(f"模式 {config.mode.label} 使用标准卷积，没有局部自适应权重可导出")
        os.makedirs(out_dir, exist_ok=True)
        _, state = forward_with_cache(params, sample, config)
        names = [name for name, _, _ in config.layer_specs()]

        rows: List[Dict[str, object]] = []
        avg_maps, std_maps = [], []
        for name, weights in zip(names, state.local_weights()):
            avg, std = weight_map_stats(weights)
            avg_maps.append(avg); std_maps.append(std)
            write_pgm(os.path.join(out_dir, f"{name}_avg.pgm"), normalize_to_uint8(avg))
            write_pgm(os.path.join(out_dir, f"{name}_std.pgm"), normalize_to_uint8(std))
            rows.append({"layer": name,
                         "avg_min": avg.min(), "avg_max": avg.max(), "avg_mean": avg.mean(),
                         "std_min": std.min(), "std_max": std.max(), "std_mean": std.mean()})
            logger.debug(f"{name}: avg ∈ [{avg.min():.4g}, {avg.max():.4g}], std ∈ [{std.min():.4g}, {std.max():.4g}]")

        table = pd.DataFrame(rows, columns=STATS_COLUMNS)
        table.to_csv(os.path.join(out_dir, WEIGHT_STATS_NAME), index=False, float_format='%.17g')
        if overview:
            self.plotter.save_weight_overview(os.path.join(out_dir, OVERVIEW_NAME), names, avg_maps, std_maps)
        logger.info(f"已导出 {len(rows)} 对权重图到: {out_dir} (样本 {sample.sample_id})")
        return table

