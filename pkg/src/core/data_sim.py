#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
合成融合数据集：随机场景、Wald 协议降质 (高斯模糊 + 抽取) 与光谱响应投影。

每个样本生成四个张量：
    gt     (1, c_lr, s, s)       合成的真值场景
    lr     (1, c_lr, s/r, s/r)   wald_degrade(gt)
    lr_up  (1, c_lr, s, s)       lr 的双三次上采样
    hr     (1, c_hr, s, s)       srf_project(gt)
"""
import os
import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import ndimage

from src.core.constants import DatasetSplit, UpsampleMethod
from src.core.exceptions import ConfigError, ShapeError
from src.core.tensor_ops import check_tensor4, check_odd_size, upsample
from src.core.tensor_io import write_tensor
from src.core.data_manager import write_manifest
from src.core.workers import ordered_map

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    bands: int = 8
    size: int = 64
    n_shapes: int = 8
    smoothness: float = 4.0
    shape_contrast: float = 0.3
    spectral_jitter: float = 0.1

    def validate(self, ratio: int = 1):
        if self.bands < 1 or self.size < 1 or self.n_shapes < 0:
            raise ConfigError(f"场景参数无效: {self}")
        if self.smoothness <= 0:
            raise ConfigError(f"smoothness 必须为正数，实际: {self.smoothness}")
        if self.shape_contrast < 0 or self.spectral_jitter < 0:
            raise ConfigError(f"shape_contrast 与 spectral_jitter 必须非负: {self.shape_contrast}, {self.spectral_jitter}")
        if self.size % ratio != 0:
            raise ConfigError(f"场景尺寸 {self.size} 不能被分辨率比 {ratio} 整除")
        return self


@dataclass(frozen=True)
class DegradeSpec:
    ratio: int = 4
    blur_size: int = 3
    blur_sigma: float = 0.5
    hr_bands: int = 1
    srf: Optional[np.ndarray] = None

    def validate(self):
        if self.ratio < 2:
            raise ConfigError(f"降质分辨率比必须 ≥ 2，实际: {self.ratio}")
        check_odd_size(self.blur_size, "blur_size")
        if self.blur_sigma <= 0:
            raise ConfigError(f"blur_sigma 必须为正数，实际: {self.blur_sigma}")
        if self.srf is not None:
            check_srf(self.srf)
        return self

    def srf_for(self, bands: int) -> np.ndarray:
        if self.srf is None:
            return default_srf(self.hr_bands, bands)
        if self.srf.shape != (self.hr_bands, bands):
            raise ConfigError(f"SRF 形状应为 ({self.hr_bands}, {bands})，实际: {self.srf.shape}")
        return self.srf


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """归一化的二维高斯核 (和为 1)。"""
    check_odd_size(size, "blur_size")
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


# ----------------------------------------------------------------------------
# 场景
# ----------------------------------------------------------------------------

def _smooth_spectrum(rng: np.random.Generator, bands: int, low: float, high: float) -> np.ndarray:
    anchors = rng.uniform(low, high, size=4)
    return np.interp(np.linspace(0.0, 3.0, bands), np.arange(4.0), anchors)


def _lowpass_field(rng: np.random.Generator, size: int, smoothness: float) -> np.ndarray:
    noise = rng.standard_normal((size, size))
    noise -= noise.mean()
    field = np.real(np.fft.ifft2(ndimage.fourier_gaussian(np.fft.fft2(noise), sigma=smoothness)))
    # 白噪声经 σ 的高斯平滑后标准差约缩小 2σ√π 倍
    return field * (2.0 * np.sqrt(np.pi) * smoothness)


def gen_scene(spec: SceneSpec) -> np.ndarray:
    """
    低频背景 (若干平滑随机场按平滑光谱混合) 叠加硬边缘的矩形与圆盘。
    形状光谱 = 背景基准光谱 + 全波段共同的亮度偏移 U(-shape_contrast, shape_contrast)
    + spectral_jitter 幅度的平滑光谱扰动，因此形状边缘在各波段间相关，可由全色波段推断。
    结果截断到 [0, 1]，形状 (1, bands, size, size)。
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    bands, size = spec.bands, spec.size

    base = _smooth_spectrum(rng, bands, 0.3, 0.7)
    scene = np.broadcast_to(base[:, None, None], (bands, size, size)).copy()
    for _ in range(3):
        weights = _smooth_spectrum(rng, bands, -1.0, 1.0)
        scene += 0.15 * weights[:, None, None] * _lowpass_field(rng, size, spec.smoothness)[None]

    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(spec.n_shapes):
        offset = rng.uniform(-spec.shape_contrast, spec.shape_contrast)
        spectrum = base + offset + spec.spectral_jitter * _smooth_spectrum(rng, bands, -1.0, 1.0)
        if rng.random() < 0.5:
            hh, ww = rng.integers(max(1, size // 8), max(2, size // 3) + 1, size=2)
            top, left = rng.integers(0, size - hh + 1), rng.integers(0, size - ww + 1)
            mask = (yy >= top) & (yy < top + hh) & (xx >= left) & (xx < left + ww)
        else:
            radius = rng.uniform(max(1.0, size / 16), max(1.5, size / 5))
            cy, cx = rng.uniform(0, size, size=2)
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2
        scene[:, mask] = spectrum[:, None]

    return np.clip(scene, 0.0, 1.0)[None]


# ----------------------------------------------------------------------------
# 降质
# ----------------------------------------------------------------------------

def wald_degrade(gt: np.ndarray, spec: DegradeSpec = DegradeSpec()) -> np.ndarray:
    """逐波段高斯模糊 (边缘复制)，再从偏移 0 开始每 r 个像素取一个。"""
    gt = check_tensor4(gt, "gt")
    r = int(spec.ratio)
    if r < 1:
        raise ConfigError(f"分辨率比必须 ≥ 1，实际: {r}")
    h, w = gt.shape[2:]
    if h % r or w % r:
        raise ShapeError(f"空间尺寸 {(h, w)} 不能被分辨率比 {r} 整除")
    kernel = gaussian_kernel(spec.blur_size, spec.blur_sigma)
    blurred = ndimage.correlate(gt.astype(np.float64), kernel[None, None], mode='nearest')
    return blurred[:, :, ::r, ::r].copy()


def check_srf(srf: np.ndarray) -> np.ndarray:
    srf = np.asarray(srf, dtype=np.float64)
    if srf.ndim != 2:
        raise ConfigError(f"SRF 必须是二维矩阵 (c_hr × c_lr)，实际形状: {srf.shape}")
    if np.any(srf < 0):
        raise ConfigError("SRF 的元素必须非负")
    if not np.allclose(srf.sum(axis=1), 1.0, atol=1e-9):
        raise ConfigError(f"SRF 每行之和必须为 1，实际: {srf.sum(axis=1)}")
    return srf


def default_srf(hr_bands: int, bands: int) -> np.ndarray:
    """单行时为波段均值；多行时为沿波段轴均匀分布的高斯形响应，逐行归一化。"""
    if hr_bands == 1:
        return np.full((1, bands), 1.0 / bands)
    centers = np.linspace(0.0, bands - 1.0, hr_bands)
    width = max(bands / (2.0 * hr_bands), 0.5)
    axis = np.arange(bands, dtype=np.float64)
    rows = np.exp(-((axis[None, :] - centers[:, None]) ** 2) / (2.0 * width ** 2))
    return rows / rows.sum(axis=1, keepdims=True)


def load_srf(path: str) -> np.ndarray:
    """读取空白分隔的文本矩阵，每行一个 HR 波段。"""
    srf = np.loadtxt(path, dtype=np.float64, ndmin=2)
    logger.info(f"已读取光谱响应函数: {path} (形状 {srf.shape})")
    return check_srf(srf)


def srf_project(gt: np.ndarray, srf: np.ndarray) -> np.ndarray:
    gt = check_tensor4(gt, "gt")
    srf = np.asarray(srf, dtype=np.float64)
    if srf.ndim != 2 or srf.shape[1] != gt.shape[1]:
        raise ShapeError(f"SRF 形状 {srf.shape} 与 gt 波段数 {gt.shape[1]} 不一致")
    return np.einsum('jb,nbhw->njhw', srf, gt)


# ----------------------------------------------------------------------------
# 数据集
# ----------------------------------------------------------------------------

def split_counts(count: int, fractions: Tuple[float, float, float]) -> Dict[DatasetSplit, int]:
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"数据划分比例必须为三个非负数且和为 1，实际: {fractions}")
    n_train = int(round(fractions[0] * count))
    n_val = min(int(round(fractions[1] * count)), count - n_train)
    return {DatasetSplit.TRAIN: n_train, DatasetSplit.VAL: n_val,
            DatasetSplit.TEST: count - n_train - n_val}


def _sample_seeds(master_seed: int, count: int) -> List[int]:
    children = np.random.SeedSequence(master_seed).spawn(count)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]


def make_sample(scene: SceneSpec, degrade: DegradeSpec) -> Dict[str, np.ndarray]:
    gt = gen_scene(scene)
    lr = wald_degrade(gt, degrade)
    return {
        "gt": gt,
        "lr": lr,
        "lrup": upsample(lr, degrade.ratio, UpsampleMethod.BICUBIC),
        "hr": srf_project(gt, degrade.srf_for(scene.bands)),
    }


def make_dataset(scene: SceneSpec, degrade: DegradeSpec, count: int,
                 fractions: Tuple[float, float, float], out_dir: str,
                 max_workers: Optional[int] = None) -> str:
    """
    生成 count 个样本并写出 .ten 文件与清单。每个样本的种子由主种子经 SeedSequence 派生，
    前 round(f_train·count) 个为训练集，接着是验证集，其余为测试集。返回清单路径。
    """
    degrade.validate()
    scene.validate(degrade.ratio)
    if count < 1:
        raise ConfigError(f"样本数必须 ≥ 1，实际: {count}")
    counts = split_counts(count, fractions)
    splits = ([DatasetSplit.TRAIN] * counts[DatasetSplit.TRAIN] + [DatasetSplit.VAL] * counts[DatasetSplit.VAL]
              + [DatasetSplit.TEST] * counts[DatasetSplit.TEST])
    sample_dir = os.path.join(out_dir, "samples")
    os.makedirs(sample_dir, exist_ok=True)
    seeds = _sample_seeds(scene.seed, count)

    def build(index: int) -> Dict[str, str]:
        sample_id = f"s{index:05d}"
        tensors = make_sample(replace(scene, seed=seeds[index]), degrade)
        row = {"id": sample_id, "split": splits[index].value}
        for key, tensor in tensors.items():
            relative = os.path.join("samples", f"{sample_id}_{key}.ten")
            write_tensor(os.path.join(out_dir, relative), tensor)
            row[f"{key}_path"] = relative
        return row

    rows = ordered_map(build, range(count), max_workers=max_workers, label="样本生成")
    path = write_manifest(out_dir, rows)
    logger.info(f"数据集已生成: {out_dir} (train={counts[DatasetSplit.TRAIN]}, "
                f"val={counts[DatasetSplit.VAL]}, test={counts[DatasetSplit.TEST]})")
    return path
