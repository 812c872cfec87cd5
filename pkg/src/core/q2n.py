#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
分块质量指数：超复数 Q2n (Q4/Q8 的推广) 与单波段 UIQI。

每个像素的 C 个波段补零到 2^m 维，视为 Cayley-Dickson 构造的超复数。
在不重叠的块上计算
    Q = 4·|σ_zz'|·|z̄|·|z̄'| / ((σ_z² + σ_z'²)·(|z̄|² + |z̄'|²))
其中 σ_zz' = E[z·conj(z')] - z̄·conj(z̄')。末尾不完整的块被丢弃。
"""
import logging
from typing import Tuple

import numpy as np

from src.core.exceptions import ShapeError
from src.core.tensor_ops import check_tensor4

logger = logging.getLogger(__name__)


def hc_conj(z: np.ndarray) -> np.ndarray:
    out = z.copy()
    out[..., 1:] *= -1.0
    return out


def hc_mult(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Cayley-Dickson 乘法，最后一维为 2^m 个分量：(a,b)(c,d) = (ac - d*b, da + bc*)。"""
    n = x.shape[-1]
    if n == 1:
        return x * y
    half = n // 2
    a, b = x[..., :half], x[..., half:]
    c, d = y[..., :half], y[..., half:]
    return np.concatenate([hc_mult(a, c) - hc_mult(hc_conj(d), b),
                           hc_mult(d, a) + hc_mult(b, hc_conj(c))], axis=-1)


def hc_modulus(z: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(z * z, axis=-1))


def _embed(x: np.ndarray) -> np.ndarray:
    """(c, h, w) -> (h, w, 2^m)，多出的分量补零。"""
    c = x.shape[0]
    dim = 1 << int(np.ceil(np.log2(c))) if c > 1 else 1
    z = np.zeros(x.shape[1:] + (dim,), dtype=np.float64)
    z[..., :c] = np.moveaxis(x, 0, -1)
    return z


def effective_block(block: int, h: int, w: int) -> int:
    """块大小不超过图像尺寸。"""
    return max(1, min(int(block), h, w))


def _blocks(z: np.ndarray, block: int) -> np.ndarray:
    """(h, w, d) -> (nb, block·block, d)，丢弃末尾不完整的块。"""
    h, w, d = z.shape
    hb, wb = h // block, w // block
    z = z[:hb * block, :wb * block]
    z = z.reshape(hb, block, wb, block, d).transpose(0, 2, 1, 3, 4)
    return z.reshape(hb * wb, block * block, d)


def _block_factors(zx: np.ndarray, zy: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    对每块返回 (相关项, 均值项, 可用掩码)。相关项 = 2|σ_zz'|/(σ_z²+σ_z'²)，
    均值项 = 2|z̄||z̄'|/(|z̄|²+|z̄'|²)。0/0 的项记为 1；两项都退化的块不可用。
    相关项在单波段时保留符号。
    """
    mx, my = zx.mean(axis=1), zy.mean(axis=1)
    var_x = np.mean(np.sum(zx * zx, axis=-1), axis=1) - np.sum(mx * mx, axis=-1)
    var_y = np.mean(np.sum(zy * zy, axis=-1), axis=1) - np.sum(my * my, axis=-1)
    var_x, var_y = np.maximum(var_x, 0.0), np.maximum(var_y, 0.0)
    cov = hc_mult(zx, hc_conj(zy)).mean(axis=1) - hc_mult(mx, hc_conj(my))

    if zx.shape[-1] == 1:
        cov_term = 2.0 * cov[..., 0]
        mean_term = 2.0 * mx[..., 0] * my[..., 0]
    else:
        cov_term = 2.0 * hc_modulus(cov)
        mean_term = 2.0 * hc_modulus(mx) * hc_modulus(my)
    var_sum = var_x + var_y
    mean_sq = np.sum(mx * mx, axis=-1) + np.sum(my * my, axis=-1)

    var_degenerate = var_sum <= 0.0
    mean_degenerate = mean_sq <= 0.0
    with np.errstate(divide='ignore', invalid='ignore'):
        corr = np.where(var_degenerate, 1.0, cov_term / np.where(var_degenerate, 1.0, var_sum))
        lum = np.where(mean_degenerate, 1.0, mean_term / np.where(mean_degenerate, 1.0, mean_sq))
    return corr, lum, ~(var_degenerate & mean_degenerate)


def _block_quality(x: np.ndarray, ref: np.ndarray, block: int, signed: bool) -> np.ndarray:
    """单个样本 (c, h, w) 的逐块质量值 (已剔除退化块)。"""
    block = effective_block(block, x.shape[1], x.shape[2])
    zx, zy = _blocks(_embed(ref), block), _blocks(_embed(x), block)
    corr, lum, usable = _block_factors(zx, zy)
    q = corr * lum
    if not signed:
        q = np.abs(q)
    skipped = int(np.count_nonzero(~usable))
    if skipped:
        logger.warning(f"{skipped}/{usable.size} 个块方差与均值均为零，已跳过")
    return q[usable]


def _check_pair(x: np.ndarray, ref: np.ndarray):
    x, ref = check_tensor4(x, "x"), check_tensor4(ref, "ref")
    if x.shape != ref.shape:
        raise ShapeError(f"质量指数要求形状一致: {x.shape} vs {ref.shape}")
    return x, ref


def q2n_index(x: np.ndarray, ref: np.ndarray, block: int = 32) -> float:
    """各样本的块平均 Q2n 再对样本取平均；全部块退化时该样本记为 1。"""
    x, ref = _check_pair(x, ref)
    values = []
    for xi, ri in zip(x, ref):
        q = _block_quality(xi, ri, block, signed=False)
        values.append(float(q.mean()) if q.size else 1.0)
    return float(np.mean(values))


def q2n_map(x: np.ndarray, ref: np.ndarray, block: int = 32) -> np.ndarray:
    """单个样本的块质量图 (hb, wb)，退化块为 NaN。"""
    x, ref = _check_pair(x, ref)
    block = effective_block(block, x.shape[2], x.shape[3])
    zx, zy = _blocks(_embed(ref[0]), block), _blocks(_embed(x[0]), block)
    corr, lum, usable = _block_factors(zx, zy)
    q = np.where(usable, np.abs(corr * lum), np.nan)
    return q.reshape(x.shape[2] // block, x.shape[3] // block)


def uiqi_band(x: np.ndarray, ref: np.ndarray, block: int = 32) -> float:
    """两幅单波段图像 (h, w) 的带符号 UIQI，按块平均。"""
    x, ref = np.asarray(x, dtype=np.float64), np.asarray(ref, dtype=np.float64)
    if x.ndim != 2 or x.shape != ref.shape:
        raise ShapeError(f"UIQI 需要两幅同尺寸的二维图像: {x.shape} vs {ref.shape}")
    q = _block_quality(x[None], ref[None], block, signed=True)
    return float(q.mean()) if q.size else 1.0
