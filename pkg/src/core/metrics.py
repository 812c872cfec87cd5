#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
融合质量指标：降分辨率评估 (SAM, ERGAS, SCC, Q2n, PSNR, SSIM)
与全分辨率无参考评估 (QNR, Dλ, Ds)。
所有指标作用于 (n, c, h, w) 张量，先逐样本计算，再对样本取平均。
"""
import logging
from dataclasses import dataclass, fields
from itertools import combinations
from typing import Dict, NamedTuple

import numpy as np
from scipy import ndimage

from src.core.exceptions import ConfigError, ShapeError
from src.core.tensor_ops import check_tensor4
from src.core.q2n import q2n_index, uiqi_band, effective_block
from src.core.data_sim import DegradeSpec, wald_degrade, gaussian_kernel

logger = logging.getLogger(__name__)

LAPLACIAN = np.array([[0.0, -1.0, 0.0], [-1.0, 4.0, -1.0], [0.0, -1.0, 0.0]])


@dataclass(frozen=True)
class MetricConfig:
    ratio: int = 4
    q2n_block: int = 32
    qnr_alpha: float = 1.0
    qnr_beta: float = 1.0
    ssim_window: int = 11
    ssim_sigma: float = 1.5
    ssim_k1: float = 0.01
    ssim_k2: float = 0.03
    psnr_peak: float = 1.0
    psnr_cap: float = 100.0

    def validate(self):
        if self.ratio < 1:
            raise ConfigError(f"metric.ratio 必须 ≥ 1，实际: {self.ratio}")
        if self.q2n_block < 2:
            raise ConfigError(f"metric.q2n_block 必须 ≥ 2，实际: {self.q2n_block}")
        if self.ssim_window < 1 or self.ssim_window % 2 == 0:
            raise ConfigError(f"metric.ssim_window 必须为正奇数，实际: {self.ssim_window}")
        if self.ssim_sigma <= 0 or self.psnr_peak <= 0:
            raise ConfigError("metric.ssim_sigma 与 metric.psnr_peak 必须为正数")
        return self

    @classmethod
    def from_mapping(cls, mapping: Dict[str, object]) -> "MetricConfig":
        types = {f.name: f.type for f in fields(cls)}
        unknown = set(mapping) - set(types)
        if unknown:
            raise ConfigError(f"未知的指标配置键: {', '.join(sorted(unknown))}")
        kwargs = {}
        for key, value in mapping.items():
            try:
                kwargs[key] = int(value) if types[key] in (int, "int") else float(value)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"指标配置键 {key} 的值无效: '{value}' ({e})")
        return cls(**kwargs).validate()


def _pair(x: np.ndarray, ref: np.ndarray):
    x, ref = check_tensor4(x, "x").astype(np.float64), check_tensor4(ref, "ref").astype(np.float64)
    if x.shape != ref.shape:
        raise ShapeError(f"指标输入形状不一致: {x.shape} vs {ref.shape}")
    return x, ref


def sam(x: np.ndarray, ref: np.ndarray) -> float:
    """光谱角 (度)，对所有像素取平均；任一向量为零的像素记为 0。"""
    x, ref = _pair(x, ref)
    dot = np.sum(x * ref, axis=1)
    norms = np.linalg.norm(x, axis=1) * np.linalg.norm(ref, axis=1)
    valid = norms > 0
    cos = np.ones_like(dot)
    cos[valid] = np.clip(dot[valid] / norms[valid], -1.0, 1.0)
    angles = np.degrees(np.arccos(cos))
    angles[~valid] = 0.0
    return float(angles.mean())


def ergas(x: np.ndarray, ref: np.ndarray, ratio: int = 4) -> float:
    """(100/r)·sqrt(mean_c (RMSE_c / μ_c)²)；参考均值为零的波段被剔除。"""
    x, ref = _pair(x, ref)
    if ratio < 1:
        raise ConfigError(f"ERGAS 的分辨率比必须 ≥ 1，实际: {ratio}")
    values = []
    for xi, ri in zip(x, ref):
        rmse = np.sqrt(np.mean((xi - ri) ** 2, axis=(1, 2)))
        mu = ri.mean(axis=(1, 2))
        keep = mu != 0
        if not np.all(keep):
            logger.warning(f"ERGAS: {int(np.count_nonzero(~keep))} 个波段的参考均值为零，已剔除")
        if not np.any(keep):
            values.append(np.nan)
            continue
        values.append(100.0 / ratio * np.sqrt(np.mean((rmse[keep] / mu[keep]) ** 2)))
    return float(np.mean(values))


def high_pass(band: np.ndarray) -> np.ndarray:
    return ndimage.correlate(band, LAPLACIAN, mode='constant', cval=0.0)


def scc(x: np.ndarray, ref: np.ndarray) -> float:
    """拉普拉斯高通后的逐波段 Pearson 相关系数，对波段与样本取平均。"""
    x, ref = _pair(x, ref)
    values = []
    for xi, ri in zip(x, ref):
        for c, (xb, rb) in enumerate(zip(xi, ri)):
            hx, hr = high_pass(xb).ravel(), high_pass(rb).ravel()
            hx, hr = hx - hx.mean(), hr - hr.mean()
            denom = np.sqrt(np.sum(hx * hx) * np.sum(hr * hr))
            if denom == 0:
                logger.warning(f"SCC: 第 {c} 个波段高通后方差为零，记为 0")
                values.append(0.0)
            else:
                values.append(float(np.clip(np.sum(hx * hr) / denom, -1.0, 1.0)))
    return float(np.mean(values))


def q2n(x: np.ndarray, ref: np.ndarray, cfg: MetricConfig = MetricConfig()) -> float:
    return q2n_index(x, ref, cfg.q2n_block)


def psnr(x: np.ndarray, ref: np.ndarray, peak: float = 1.0, cap: float = 100.0) -> float:
    """逐波段 PSNR 后取平均；MSE 为零的波段取上限 cap。"""
    x, ref = _pair(x, ref)
    mse = np.mean((x - ref) ** 2, axis=(2, 3))
    with np.errstate(divide='ignore'):
        values = np.where(mse > 0, 10.0 * np.log10(peak ** 2 / np.where(mse > 0, mse, 1.0)), cap)
    return float(np.mean(np.minimum(values, cap)))


def ssim(x: np.ndarray, ref: np.ndarray, cfg: MetricConfig = MetricConfig()) -> float:
    """
    高斯窗 SSIM：局部统计由 scipy.ndimage.correlate (reflect 边界) 计算，
    去掉半窗宽的边框后对 SSIM 图取平均；图像小于窗口时不裁剪。
    """
    x, ref = _pair(x, ref)
    window = gaussian_kernel(cfg.ssim_window, cfg.ssim_sigma)
    c1 = (cfg.ssim_k1 * cfg.psnr_peak) ** 2
    c2 = (cfg.ssim_k2 * cfg.psnr_peak) ** 2
    r = (cfg.ssim_window - 1) // 2

    def local_mean(img):
        return ndimage.correlate(img, window, mode='reflect')

    values = []
    for xi, ri in zip(x, ref):
        for xb, rb in zip(xi, ri):
            mu_x, mu_y = local_mean(xb), local_mean(rb)
            var_x = local_mean(xb * xb) - mu_x * mu_x
            var_y = local_mean(rb * rb) - mu_y * mu_y
            cov = local_mean(xb * rb) - mu_x * mu_y
            smap = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / ((mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2))
            if min(smap.shape) > 2 * r:
                smap = smap[r:smap.shape[0] - r, r:smap.shape[1] - r]
            values.append(float(smap.mean()))
    return float(np.mean(values))


class QNRResult(NamedTuple):
    qnr: float
    d_lambda: float
    d_s: float


def qnr_suite(fused: np.ndarray, ms_lowres: np.ndarray, pan: np.ndarray,
              cfg: MetricConfig = MetricConfig()) -> QNRResult:
    """
    Dλ: 融合图像波段间 UIQI 与低分辨率 MS 波段间 UIQI 之差的平均；
    Ds: 各波段与 PAN 的 UIQI 在两个分辨率上之差的平均。
    低分辨率一侧使用 q2n_block // ratio 的块，使两侧块覆盖相同地面范围。
    """
    fused = check_tensor4(fused, "fused").astype(np.float64)
    ms_lowres = check_tensor4(ms_lowres, "ms_lowres").astype(np.float64)
    pan = check_tensor4(pan, "pan").astype(np.float64)
    r = cfg.ratio
    if pan.shape[1] != 1:
        raise ShapeError(f"QNR 需要单波段 PAN，实际波段数: {pan.shape[1]}")
    if fused.shape[1] != ms_lowres.shape[1] or fused.shape[2:] != pan.shape[2:]:
        raise ShapeError(f"QNR 输入不一致: fused {fused.shape}, ms {ms_lowres.shape}, pan {pan.shape}")
    if (ms_lowres.shape[2] * r, ms_lowres.shape[3] * r) != fused.shape[2:]:
        raise ShapeError(f"低分辨率 MS {ms_lowres.shape[2:]} 与融合图像 {fused.shape[2:]} 的比例不是 {r}")

    pan_low = wald_degrade(pan, DegradeSpec(ratio=r))
    block_full = effective_block(cfg.q2n_block, *fused.shape[2:])
    block_low = max(2, effective_block(cfg.q2n_block // r, *ms_lowres.shape[2:]))
    bands = fused.shape[1]

    d_lambdas, d_ss = [], []
    for f, m, p, pl in zip(fused, ms_lowres, pan, pan_low):
        if bands < 2:
            logger.warning("Dλ: 波段数少于 2，记为 0")
            d_lambdas.append(0.0)
        else:
            diffs = [abs(uiqi_band(f[b], f[c], block_full) - uiqi_band(m[b], m[c], block_low))
                     for b, c in combinations(range(bands), 2)]
            d_lambdas.append(float(np.mean(diffs)))
        diffs = [abs(uiqi_band(f[b], p[0], block_full) - uiqi_band(m[b], pl[0], block_low))
                 for b in range(bands)]
        d_ss.append(float(np.mean(diffs)))

    d_lambda, d_s = float(np.mean(d_lambdas)), float(np.mean(d_ss))
    qnr = (1.0 - d_lambda) ** cfg.qnr_alpha * (1.0 - d_s) ** cfg.qnr_beta
    return QNRResult(float(qnr), d_lambda, d_s)


def reduced_resolution_suite(x: np.ndarray, ref: np.ndarray, cfg: MetricConfig = MetricConfig()) -> Dict[str, float]:
    """评估与消融共用的降分辨率指标集合。"""
    return {
        "SAM": sam(x, ref),
        "ERGAS": ergas(x, ref, cfg.ratio),
        "SCC": scc(x, ref),
        "Q2n": q2n(x, ref, cfg),
        "PSNR": psnr(x, ref, cfg.psnr_peak, cfg.psnr_cap),
        "SSIM": ssim(x, ref, cfg),
    }
