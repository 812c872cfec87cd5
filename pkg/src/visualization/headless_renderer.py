#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
无头渲染器，使用 Matplotlib 的 Agg 后端生成权重图总览，不依赖任何 GUI。
"""
import logging
from typing import List

import numpy as np
import imageio.v3 as iio
from matplotlib.figure import Figure
from matplotlib.backends.backend_agg import FigureCanvasAgg

logger = logging.getLogger(__name__)


class HeadlessPlotter:
    """
    一个纯粹的、非GUI的绘图类。
    总览图第一行为各层的 avg 图，第二行为 std 图；每幅图单独归一化，不绘制色标。
    """

    def __init__(self, dpi: int = 150, cmap: str = "gray", panel_size: float = 1.6):
        self.dpi = dpi
        self.cmap = cmap
        self.panel_size = panel_size

    def render_weight_overview(self, layer_names: List[str], avg_maps: List[np.ndarray],
                               std_maps: List[np.ndarray]) -> np.ndarray:
        """返回渲染结果的 RGBA 数组 (h, w, 4)。"""
        if not (len(layer_names) == len(avg_maps) == len(std_maps)) or not layer_names:
            raise ValueError(f"层名与权重图数量不一致: {len(layer_names)}, {len(avg_maps)}, {len(std_maps)}")
        cols = len(layer_names)
        fig = Figure(figsize=(self.panel_size * cols, self.panel_size * 2 + 0.4), dpi=self.dpi, tight_layout=True)
        axes = fig.subplots(2, cols, squeeze=False)

        for col, name in enumerate(layer_names):
            for row, (label, image) in enumerate((("avg", avg_maps[col]), ("std", std_maps[col]))):
                ax = axes[row][col]
                lo, hi = float(np.min(image)), float(np.max(image))
                ax.imshow(image, cmap=self.cmap, vmin=lo, vmax=hi if hi > lo else lo + 1.0, interpolation="nearest")
                ax.set_xticks([]); ax.set_yticks([])
                ax.set_title(f"{name}\n{label}", fontsize=7)

        canvas = FigureCanvasAgg(fig)
        canvas.draw()
        image_array = np.asarray(canvas.buffer_rgba()).copy()
        fig.clear()
        return image_array

    def save_weight_overview(self, path: str, layer_names: List[str], avg_maps: List[np.ndarray],
                             std_maps: List[np.ndarray]) -> str:
        iio.imwrite(path, self.render_weight_overview(layer_names, avg_maps, std_maps))
        logger.info(f"权重图总览已保存: {path}")
        return path
