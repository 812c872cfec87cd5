#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
张量核心模块：四维张量 (n, c, h, w) 上的可微基本算子。

每个算子提供前向映射 `*_forward`（返回输出与前向缓存）以及对应的
向量-雅可比积 `*_vjp`。缓存一经创建即不可变，前向与反向均为纯函数。
步长固定为 1，填充宽度固定为 (k-1)/2，空间尺寸保持不变。
"""
import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from src.core.constants import PadMode, ActivationKind, UpsampleMethod, CombineOp
from src.core.exceptions import ShapeError, ConfigError

logger = logging.getLogger(__name__)

DTYPE = np.float64


@dataclass
class DenseLayer:
    """全连接层参数：weight 形状 (out, in)，bias 形状 (out,)"""
    weight: np.ndarray
    bias: np.ndarray

    @property
    def in_features(self) -> int:
        return self.weight.shape[1]

    @property
    def out_features(self) -> int:
        return self.weight.shape[0]


def check_tensor4(x: np.ndarray, name: str = "input") -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 4:
        raise ShapeError(f"{name} 必须是四维张量 (n, c, h, w)，实际维度: {x.shape}")
    return x


def check_kernel(kernel: np.ndarray, name: str = "kernel") -> int:
    """校验卷积核形状 (c_out, c_in, k, k)，返回 k。"""
    kernel = np.asarray(kernel)
    if kernel.ndim != 4 or kernel.shape[2] != kernel.shape[3]:
        raise ShapeError(f"{name} 形状必须为 (c_out, c_in, k, k)，实际: {kernel.shape}")
    return check_odd_size(kernel.shape[2], name)


def check_odd_size(k: int, name: str = "k") -> int:
    if k < 1 or k % 2 == 0:
        raise ConfigError(f"{name} 的尺寸必须为正奇数，实际: {k}")
    return int(k)


# ----------------------------------------------------------------------------
# 填充及其伴随
# ----------------------------------------------------------------------------

def pad(x: np.ndarray, p: int, pad_mode: PadMode) -> np.ndarray:
    if p == 0:
        return x
    width = ((0, 0), (0, 0), (p, p), (p, p))
    if pad_mode == PadMode.CIRCULAR:
        if p > x.shape[2] or p > x.shape[3]:
            raise ShapeError(f"循环填充宽度 {p} 超过空间尺寸 {x.shape[2:]}")
        return np.pad(x, width, mode='wrap')
    return np.pad(x, width, mode='constant')


def unpad_adjoint(gp: np.ndarray, p: int, pad_mode: PadMode) -> np.ndarray:
    """pad 的伴随算子：零填充为裁剪，循环填充需把边带累加回对侧。"""
    if p == 0:
        return gp
    h, w = gp.shape[2] - 2 * p, gp.shape[3] - 2 * p
    if pad_mode != PadMode.CIRCULAR:
        return gp[:, :, p:p + h, p:p + w].copy()

    rows = gp[:, :, p:p + h, :].copy()
    rows[:, :, h - p:, :] += gp[:, :, :p, :]
    rows[:, :, :p, :] += gp[:, :, p + h:, :]

    out = rows[:, :, :, p:p + w].copy()
    out[:, :, :, w - p:] += rows[:, :, :, :p]
    out[:, :, :, :p] += rows[:, :, :, p + w:]
    return out


# ----------------------------------------------------------------------------
# unfold / fold
# ----------------------------------------------------------------------------

def unfold(x: np.ndarray, k: int, pad_mode: PadMode = PadMode.ZERO) -> np.ndarray:
    """
    把每个像素的 k×k 邻域展开为一列，输出形状 (n, c·k², h·w)。
    行序为通道优先，再按 (u, v) 行优先，即 q = u·k + v。
    """
    x = check_tensor4(x)
    check_odd_size(k)
    n, c, h, w = x.shape
    xp = pad(x, (k - 1) // 2, pad_mode)
    # (n, c, h, w, k, k) -> (n, c, k, k, h, w)
    windows = sliding_window_view(xp, (k, k), axis=(2, 3))
    return windows.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * k * k, h * w)


def fold(cols: np.ndarray, channels: int, h: int, w: int, k: int,
         pad_mode: PadMode = PadMode.ZERO) -> np.ndarray:
    """unfold 的精确伴随：把各列按邻域位置累加回 (n, c, h, w)。"""
    check_odd_size(k)
    n = cols.shape[0]
    if cols.shape[1:] != (channels * k * k, h * w):
        raise ShapeError(f"fold 输入形状 {cols.shape} 与 (c={channels}, k={k}, h={h}, w={w}) 不一致")
    p = (k - 1) // 2
    g = cols.reshape(n, channels, k, k, h, w)
    gp = np.zeros((n, channels, h + 2 * p, w + 2 * p), dtype=cols.dtype)
    for u in range(k):
        for v in range(k):
            gp[:, :, u:u + h, v:v + w] += g[:, :, u, v]
    return unpad_adjoint(gp, p, pad_mode)


# ----------------------------------------------------------------------------
# 卷积
# ----------------------------------------------------------------------------

class ConvCache(NamedTuple):
    cols: np.ndarray
    kernel: np.ndarray
    input_shape: Tuple[int, int, int, int]
    pad_mode: PadMode
    has_bias: bool


def conv2d_forward(x: np.ndarray, kernel: np.ndarray, bias: Optional[np.ndarray] = None,
                   pad_mode: PadMode = PadMode.ZERO) -> Tuple[np.ndarray, ConvCache]:
    x = check_tensor4(x)
    k = check_kernel(kernel)
    n, c, h, w = x.shape
    c_out, c_in = kernel.shape[:2]
    if c != c_in:
        raise ShapeError(f"卷积输入通道 {c} 与卷积核输入通道 {c_in} 不一致")
    if bias is not None and np.shape(bias) != (c_out,):
        raise ShapeError(f"偏置形状应为 ({c_out},)，实际: {np.shape(bias)}")

    cols = unfold(x, k, pad_mode)
    out = np.matmul(kernel.reshape(c_out, -1), cols)
    if bias is not None:
        out += bias[None, :, None]
    cache = ConvCache(cols, kernel, x.shape, pad_mode, bias is not None)
    return out.reshape(n, c_out, h, w), cache


def conv2d(x: np.ndarray, kernel: np.ndarray, bias: Optional[np.ndarray] = None,
           pad_mode: PadMode = PadMode.ZERO) -> np.ndarray:
    return conv2d_forward(x, kernel, bias, pad_mode)[0]


def conv2d_vjp(grad_out: np.ndarray, cache: ConvCache):
    """返回 (d_input, d_kernel, d_bias)；无偏置时 d_bias 为 None。"""
    n, c, h, w = cache.input_shape
    c_out = cache.kernel.shape[0]
    k = cache.kernel.shape[2]
    g = grad_out.reshape(n, c_out, h * w)
    w_mat = cache.kernel.reshape(c_out, -1)

    d_kernel = np.einsum('nop,nkp->ok', g, cache.cols).reshape(cache.kernel.shape)
    d_cols = np.matmul(w_mat.T, g)
    d_input = fold(d_cols, c, h, w, k, cache.pad_mode)
    d_bias = g.sum(axis=(0, 2)) if cache.has_bias else None
    return d_input, d_kernel, d_bias


class ModulatedConvCache(NamedTuple):
    cols: np.ndarray      # (n, c_in, k², h·w)
    scaled: np.ndarray    # (n, c_in·k², h·w)
    weights: np.ndarray   # (n, 1, k², h·w)
    kernel: np.ndarray
    input_shape: Tuple[int, int, int, int]
    pad_mode: PadMode


def modulated_conv_forward(x: np.ndarray, weights: np.ndarray, kernel: np.ndarray,
                           pad_mode: PadMode = PadMode.ZERO) -> Tuple[np.ndarray, ModulatedConvCache]:
    """
    逐像素调制卷积：位置 (i, j) 处的 k×k 权重逐元素缩放共享卷积核，
    同一权重图在输入通道上复制、被所有输出卷积核共享。
    实现为 unfold → 逐列缩放 → 与展平卷积核做矩阵乘。
    """
    x = check_tensor4(x)
    k = check_kernel(kernel)
    n, c, h, w = x.shape
    c_out, c_in = kernel.shape[:2]
    if c != c_in:
        raise ShapeError(f"调制卷积输入通道 {c} 与卷积核输入通道 {c_in} 不一致")
    if np.shape(weights) != (n, k * k, h, w):
        raise ShapeError(f"局部权重形状应为 {(n, k * k, h, w)}，实际: {np.shape(weights)}")

    cols = unfold(x, k, pad_mode).reshape(n, c, k * k, h * w)
    wv = weights.reshape(n, 1, k * k, h * w)
    scaled = (cols * wv).reshape(n, c * k * k, h * w)
    out = np.matmul(kernel.reshape(c_out, -1), scaled)
    cache = ModulatedConvCache(cols, scaled, wv, kernel, x.shape, pad_mode)
    return out.reshape(n, c_out, h, w), cache


def modulated_conv(x, weights, kernel, pad_mode: PadMode = PadMode.ZERO) -> np.ndarray:
    return modulated_conv_forward(x, weights, kernel, pad_mode)[0]


def modulated_conv_vjp(grad_out: np.ndarray, cache: ModulatedConvCache):
    """返回 (d_input, d_weights, d_kernel)。"""
    n, c, h, w = cache.input_shape
    c_out, _, k, _ = cache.kernel.shape
    g = grad_out.reshape(n, c_out, h * w)
    w_mat = cache.kernel.reshape(c_out, -1)

    d_kernel = np.einsum('nop,nkp->ok', g, cache.scaled).reshape(cache.kernel.shape)
    d_scaled = np.matmul(w_mat.T, g).reshape(n, c, k * k, h * w)
    d_weights = (d_scaled * cache.cols).sum(axis=1).reshape(n, k * k, h, w)
    d_cols = (d_scaled * cache.weights).reshape(n, c * k * k, h * w)
    d_input = fold(d_cols, c, h, w, k, cache.pad_mode)
    return d_input, d_weights, d_kernel


# ----------------------------------------------------------------------------
# 全连接、激活、池化
# ----------------------------------------------------------------------------

class DenseCache(NamedTuple):
    x: np.ndarray
    layer: DenseLayer


def dense_forward(x: np.ndarray, layer: DenseLayer) -> Tuple[np.ndarray, DenseCache]:
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != layer.in_features:
        raise ShapeError(f"全连接输入形状 {x.shape} 与层输入维度 {layer.in_features} 不一致")
    return x @ layer.weight.T + layer.bias, DenseCache(x, layer)


def dense(x: np.ndarray, layer: DenseLayer) -> np.ndarray:
    return dense_forward(x, layer)[0]


def dense_vjp(grad_out: np.ndarray, cache: DenseCache):
    """返回 (d_input, d_weight, d_bias)。"""
    return grad_out @ cache.layer.weight, grad_out.T @ cache.x, grad_out.sum(axis=0)


class ActivationCache(NamedTuple):
    y: np.ndarray
    kind: ActivationKind


def activation_forward(x: np.ndarray, kind: ActivationKind) -> Tuple[np.ndarray, ActivationCache]:
    if kind == ActivationKind.RELU:
        y = np.maximum(x, 0.0)
    elif kind == ActivationKind.SIGMOID:
        y = expit(x)
    else:
        raise ConfigError(f"未知的激活函数: {kind}")
    return y, ActivationCache(y, kind)


def activation(x: np.ndarray, kind: ActivationKind) -> np.ndarray:
    return activation_forward(x, kind)[0]


def activation_vjp(grad_out: np.ndarray, cache: ActivationCache) -> np.ndarray:
    # 只依赖前向输出；relu 在 0 处取次梯度 0
    if cache.kind == ActivationKind.RELU:
        return grad_out * (cache.y > 0)
    return grad_out * cache.y * (1.0 - cache.y)


def global_avg_pool_forward(x: np.ndarray) -> Tuple[np.ndarray, Tuple[int, int, int, int]]:
    x = check_tensor4(x)
    if x.shape[2] * x.shape[3] < 1:
        raise ShapeError(f"全局平均池化要求空间尺寸非空，实际: {x.shape}")
    return x.mean(axis=(2, 3)), x.shape


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    return global_avg_pool_forward(x)[0]


def global_avg_pool_vjp(grad_out: np.ndarray, input_shape) -> np.ndarray:
    n, c, h, w = input_shape
    return np.broadcast_to(grad_out[:, :, None, None] / (h * w), input_shape).copy()


# ----------------------------------------------------------------------------
# 组合
# ----------------------------------------------------------------------------

class CombineCache(NamedTuple):
    op: CombineOp
    split: int


def combine_forward(a: np.ndarray, b: np.ndarray, op: CombineOp) -> Tuple[np.ndarray, CombineCache]:
    a, b = check_tensor4(a, "a"), check_tensor4(b, "b")
    if (a.shape[0], a.shape[2], a.shape[3]) != (b.shape[0], b.shape[2], b.shape[3]):
        raise ShapeError(f"组合要求 n, h, w 一致: {a.shape} vs {b.shape}")
    if op == CombineOp.CONCAT_CHANNELS:
        return np.concatenate([a, b], axis=1), CombineCache(op, a.shape[1])
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"逐元素相加要求通道数一致: {a.shape[1]} vs {b.shape[1]}")
    return a + b, CombineCache(op, a.shape[1])


def combine(a: np.ndarray, b: np.ndarray, op: CombineOp) -> np.ndarray:
    return combine_forward(a, b, op)[0]


def combine_vjp(grad_out: np.ndarray, cache: CombineCache):
    if cache.op == CombineOp.CONCAT_CHANNELS:
        return grad_out[:, :cache.split], grad_out[:, cache.split:]
    return grad_out, grad_out


# ----------------------------------------------------------------------------
# 上采样 (仅用于数据准备，无 VJP)
# ----------------------------------------------------------------------------

def _cubic(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    t = np.abs(t)
    near = (a + 2) * t ** 3 - (a + 3) * t ** 2 + 1
    far = a * t ** 3 - 5 * a * t ** 2 + 8 * a * t - 4 * a
    return np.where(t <= 1, near, np.where(t < 2, far, 0.0))


def _bicubic_matrix(size: int, factor: int) -> np.ndarray:
    """一维 Catmull-Rom 插值矩阵 (size·factor, size)，采用半像素中心与边缘复制。"""
    out_pos = np.arange(size * factor)
    src = (out_pos + 0.5) / factor - 0.5
    base = np.floor(src).astype(int)
    frac = src - base
    mat = np.zeros((size * factor, size), dtype=DTYPE)
    for m in range(-1, 3):
        idx = np.clip(base + m, 0, size - 1)
        np.add.at(mat, (out_pos, idx), _cubic(m - frac))
    return mat


def upsample(x: np.ndarray, factor: int, method: UpsampleMethod = UpsampleMethod.BICUBIC) -> np.ndarray:
    x = check_tensor4(x)
    if int(factor) != factor or factor < 1:
        raise ConfigError(f"上采样倍数必须为 ≥1 的整数，实际: {factor}")
    factor = int(factor)
    if factor == 1:
        return x.copy()
    if method == UpsampleMethod.NEAREST:
        return x.repeat(factor, axis=2).repeat(factor, axis=3)
    mh = _bicubic_matrix(x.shape[2], factor)
    mw = _bicubic_matrix(x.shape[3], factor)
    return np.matmul(np.matmul(mh, x), mw.T)
