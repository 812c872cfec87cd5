#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
局部自适应卷积 (LAConv) 与动态偏置 (DYB)。

LAConv 对每个像素由其局部邻域生成 k² 个 (0,1) 内的缩放权重，逐元素缩放共享卷积核；
DYB 由全局平均池化后的输入特征经两层全连接生成每个样本的输出通道偏置。
卷积部分与偏置部分可独立切换，构成六种消融模式。
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from src.core.constants import ConvKind, BiasKind, PadMode, ActivationKind
from src.core.exceptions import ConfigError, ShapeError, UsageError
from src.core.tensor_ops import (
    DenseLayer, check_tensor4, check_odd_size,
    conv2d_forward, conv2d_vjp, modulated_conv_forward, modulated_conv_vjp,
    dense_forward, dense_vjp, activation_forward, activation_vjp,
    global_avg_pool_forward, global_avg_pool_vjp,
    ConvCache, ModulatedConvCache, DenseCache, ActivationCache,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LAConvMode:
    conv: ConvKind
    bias: BiasKind

    @property
    def label(self) -> str:
        return f"{self.conv.value}+{self.bias.value}"

    @property
    def local_adaptive(self) -> bool:
        return self.conv == ConvKind.LOCAL_ADAPTIVE

    @classmethod
    def from_str(cls, s: str) -> "LAConvMode":
        try:
            conv_str, bias_str = [part.strip().upper() for part in str(s).split('+')]
            return cls(ConvKind(conv_str), BiasKind(bias_str))
        except ValueError:
            raise ConfigError(f"无效的 LAConv 模式: '{s}' (示例: SC+NB, LAC+DYB)")

    @classmethod
    def ablation_grid(cls) -> List["LAConvMode"]:
        """消融实验的六种模式，按参数量递增排列。"""
        return [cls(ConvKind.STANDARD, BiasKind.NONE), cls(ConvKind.STANDARD, BiasKind.STATIC),
                cls(ConvKind.STANDARD, BiasKind.DYNAMIC), cls(ConvKind.LOCAL_ADAPTIVE, BiasKind.NONE),
                cls(ConvKind.LOCAL_ADAPTIVE, BiasKind.STATIC), cls(ConvKind.LOCAL_ADAPTIVE, BiasKind.DYNAMIC)]


# 参数组名 -> (字段, 子属性)
_GROUP_LAYOUT = [
    ("main_kernel", "main_kernel", None),
    ("wg_conv.weight", "wg_conv_kernel", None),
    ("wg_conv.bias", "wg_conv_bias", None),
    ("wg_fc1.weight", "wg_fc1", "weight"),
    ("wg_fc1.bias", "wg_fc1", "bias"),
    ("wg_fc2.weight", "wg_fc2", "weight"),
    ("wg_fc2.bias", "wg_fc2", "bias"),
    ("dyb_fc1.weight", "dyb_fc1", "weight"),
    ("dyb_fc1.bias", "dyb_fc1", "bias"),
    ("dyb_fc2.weight", "dyb_fc2", "weight"),
    ("dyb_fc2.bias", "dyb_fc2", "bias"),
    ("static_bias", "static_bias", None),
]


@dataclass
class LAConvParams:
    """
    单个 LAConv 层的全部可学习参数。
    权重生成器：k² 通道的浅层卷积 + 两个 k²→k² 全连接层；
    DYB 生成器：c_in→c_out 与 c_out→c_out 两个全连接层。
    梯度也用同一结构返回。
    """
    main_kernel: np.ndarray
    wg_conv_kernel: Optional[np.ndarray] = None
    wg_conv_bias: Optional[np.ndarray] = None
    wg_fc1: Optional[DenseLayer] = None
    wg_fc2: Optional[DenseLayer] = None
    dyb_fc1: Optional[DenseLayer] = None
    dyb_fc2: Optional[DenseLayer] = None
    static_bias: Optional[np.ndarray] = None

    @property
    def c_out(self) -> int:
        return self.main_kernel.shape[0]

    @property
    def c_in(self) -> int:
        return self.main_kernel.shape[1]

    @property
    def k(self) -> int:
        return self.main_kernel.shape[2]

    def groups(self) -> Dict[str, np.ndarray]:
        """按固定顺序展平为 {参数组名: 数组}，缺省的组被跳过。"""
        out: Dict[str, np.ndarray] = {}
        for name, field, attr in _GROUP_LAYOUT:
            value = getattr(self, field)
            if value is None:
                continue
            out[name] = getattr(value, attr) if attr else value
        return out

    @classmethod
    def from_groups(cls, groups: Dict[str, np.ndarray]) -> "LAConvParams":
        def layer(prefix):
            if f"{prefix}.weight" not in groups:
                return None
            return DenseLayer(groups[f"{prefix}.weight"], groups[f"{prefix}.bias"])

        return cls(
            main_kernel=groups["main_kernel"],
            wg_conv_kernel=groups.get("wg_conv.weight"),
            wg_conv_bias=groups.get("wg_conv.bias"),
            wg_fc1=layer("wg_fc1"), wg_fc2=layer("wg_fc2"),
            dyb_fc1=layer("dyb_fc1"), dyb_fc2=layer("dyb_fc2"),
            static_bias=groups.get("static_bias"),
        )

    def validate(self, mode: LAConvMode):
        """检查当前模式所需参数齐全且形状彼此一致。"""
        k = check_odd_size(self.k, "main_kernel")
        kk, c_in, c_out = k * k, self.c_in, self.c_out
        if mode.local_adaptive:
            if any(v is None for v in (self.wg_conv_kernel, self.wg_conv_bias, self.wg_fc1, self.wg_fc2)):
                raise ConfigError(f"模式 {mode.label} 缺少权重生成器参数")
            expected = {
                "wg_conv.weight": (kk, c_in, k, k), "wg_conv.bias": (kk,),
                "wg_fc1.weight": (kk, kk), "wg_fc1.bias": (kk,),
                "wg_fc2.weight": (kk, kk), "wg_fc2.bias": (kk,),
            }
            self._check_shapes(expected)
        if mode.bias == BiasKind.STATIC:
            if self.static_bias is None:
                raise ConfigError(f"模式 {mode.label} 缺少静态偏置")
            self._check_shapes({"static_bias": (c_out,)})
        if mode.bias == BiasKind.DYNAMIC:
            if self.dyb_fc1 is None or self.dyb_fc2 is None:
                raise ConfigError(f"模式 {mode.label} 缺少动态偏置生成器参数")
            self._check_shapes({
                "dyb_fc1.weight": (c_out, c_in), "dyb_fc1.bias": (c_out,),
                "dyb_fc2.weight": (c_out, c_out), "dyb_fc2.bias": (c_out,),
            })

    def _check_shapes(self, expected: Dict[str, Tuple[int, ...]]):
        groups = self.groups()
        for name, shape in expected.items():
            if np.shape(groups[name]) != shape:
                raise ShapeError(f"参数组 {name} 形状应为 {shape}，实际: {np.shape(groups[name])}")


def _he_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def _he_dense(rng: np.random.Generator, n_in: int, n_out: int) -> DenseLayer:
    return DenseLayer(_he_normal(rng, (n_out, n_in), n_in), np.zeros(n_out))


def init_laconv_params(c_in: int, c_out: int, k: int, mode: LAConvMode,
                       rng: np.random.Generator) -> LAConvParams:
    """He 正态初始化 (std = sqrt(2/fan_in))，所有偏置置零。只生成当前模式用到的组。"""
    check_odd_size(k)
    kk = k * k
    params = LAConvParams(main_kernel=_he_normal(rng, (c_out, c_in, k, k), c_in * kk))
    if mode.local_adaptive:
        params.wg_conv_kernel = _he_normal(rng, (kk, c_in, k, k), c_in * kk)
        params.wg_conv_bias = np.zeros(kk)
        params.wg_fc1 = _he_dense(rng, kk, kk)
        params.wg_fc2 = _he_dense(rng, kk, kk)
    if mode.bias == BiasKind.STATIC:
        params.static_bias = np.zeros(c_out)
    elif mode.bias == BiasKind.DYNAMIC:
        params.dyb_fc1 = _he_dense(rng, c_in, c_out)
        params.dyb_fc2 = _he_dense(rng, c_out, c_out)
    return params


def count_laconv_params(c_in: int, c_out: int, k: int, mode: LAConvMode) -> Dict[str, int]:
    """单层各部分参数量的闭式计数。"""
    kk = k * k
    counts = {"main": c_out * c_in * kk, "weight_gen": 0, "bias": 0}
    if mode.local_adaptive:
        counts["weight_gen"] = (kk * c_in * kk + kk) + 2 * (kk * kk + kk)
    if mode.bias == BiasKind.STATIC:
        counts["bias"] = c_out
    elif mode.bias == BiasKind.DYNAMIC:
        counts["bias"] = (c_out * c_in + c_out) + (c_out * c_out + c_out)
    return counts


# ----------------------------------------------------------------------------
# 局部权重生成
# ----------------------------------------------------------------------------

class WeightGenCache(NamedTuple):
    conv: ConvCache
    relu0: ActivationCache
    fc1: DenseCache
    relu1: ActivationCache
    fc2: DenseCache
    sigmoid: ActivationCache
    spatial: Tuple[int, int, int]


def gen_local_weights_forward(x: np.ndarray, params: LAConvParams,
                              pad_mode: PadMode = PadMode.ZERO) -> Tuple[np.ndarray, WeightGenCache]:
    """
    S = relu(conv(x))，再逐像素经过 relu(FC1)、sigmoid(FC2)，得到 (n, k², h, w) 的局部权重。
    """
    x = check_tensor4(x)
    if params.wg_conv_kernel is None:
        raise ConfigError("标准卷积模式没有权重生成器参数")
    if x.shape[1] != params.wg_conv_kernel.shape[1]:
        raise ShapeError(f"权重生成器输入通道 {params.wg_conv_kernel.shape[1]} 与输入 {x.shape[1]} 不一致")
    n, _, h, w = x.shape
    kk = params.wg_conv_kernel.shape[0]

    s_pre, conv_cache = conv2d_forward(x, params.wg_conv_kernel, params.wg_conv_bias, pad_mode)
    s, relu0 = activation_forward(s_pre, ActivationKind.RELU)
    rows = s.transpose(0, 2, 3, 1).reshape(-1, kk)
    t_pre, fc1 = dense_forward(rows, params.wg_fc1)
    t, relu1 = activation_forward(t_pre, ActivationKind.RELU)
    z, fc2 = dense_forward(t, params.wg_fc2)
    wr, sig = activation_forward(z, ActivationKind.SIGMOID)
    weights = wr.reshape(n, h, w, kk).transpose(0, 3, 1, 2)
    return weights, WeightGenCache(conv_cache, relu0, fc1, relu1, fc2, sig, (n, h, w))


def gen_local_weights(x: np.ndarray, params: LAConvParams, pad_mode: PadMode = PadMode.ZERO) -> np.ndarray:
    return gen_local_weights_forward(x, params, pad_mode)[0]


def gen_local_weights_vjp(grad_weights: np.ndarray, cache: WeightGenCache):
    """返回 (d_input, 梯度字典)。"""
    n, h, w = cache.spatial
    kk = grad_weights.shape[1]
    g = grad_weights.transpose(0, 2, 3, 1).reshape(-1, kk)
    g = activation_vjp(g, cache.sigmoid)
    g, d_fc2_w, d_fc2_b = dense_vjp(g, cache.fc2)
    g = activation_vjp(g, cache.relu1)
    g, d_fc1_w, d_fc1_b = dense_vjp(g, cache.fc1)
    g = g.reshape(n, h, w, kk).transpose(0, 3, 1, 2)
    g = activation_vjp(g, cache.relu0)
    d_x, d_conv_w, d_conv_b = conv2d_vjp(g, cache.conv)
    grads = {
        "wg_conv.weight": d_conv_w, "wg_conv.bias": d_conv_b,
        "wg_fc1.weight": d_fc1_w, "wg_fc1.bias": d_fc1_b,
        "wg_fc2.weight": d_fc2_w, "wg_fc2.bias": d_fc2_b,
    }
    return d_x, grads


# ----------------------------------------------------------------------------
# 动态偏置
# ----------------------------------------------------------------------------

class DynamicBiasCache(NamedTuple):
    gap_shape: Tuple[int, int, int, int]
    fc1: DenseCache
    relu1: ActivationCache
    fc2: DenseCache
    relu2: Optional[ActivationCache]


def dynamic_bias_forward(x: np.ndarray, params: LAConvParams,
                         final_relu: bool = False) -> Tuple[np.ndarray, DynamicBiasCache]:
    """D = FC2(relu(FC1(GAP(x))))，每个样本一个长度为 c_out 的偏置向量。末层默认线性。"""
    x = check_tensor4(x)
    if params.dyb_fc1 is None:
        raise ConfigError("当前参数没有动态偏置生成器")
    if x.shape[1] != params.dyb_fc1.in_features:
        raise ShapeError(f"动态偏置输入通道 {params.dyb_fc1.in_features} 与输入 {x.shape[1]} 不一致")
    pooled, gap_shape = global_avg_pool_forward(x)
    a, fc1 = dense_forward(pooled, params.dyb_fc1)
    a, relu1 = activation_forward(a, ActivationKind.RELU)
    d, fc2 = dense_forward(a, params.dyb_fc2)
    relu2 = None
    if final_relu:
        d, relu2 = activation_forward(d, ActivationKind.RELU)
    return d, DynamicBiasCache(gap_shape, fc1, relu1, fc2, relu2)


def dynamic_bias(x: np.ndarray, params: LAConvParams, final_relu: bool = False) -> np.ndarray:
    return dynamic_bias_forward(x, params, final_relu)[0]


def dynamic_bias_vjp(grad_bias: np.ndarray, cache: DynamicBiasCache):
    g = grad_bias
    if cache.relu2 is not None:
        g = activation_vjp(g, cache.relu2)
    g, d_fc2_w, d_fc2_b = dense_vjp(g, cache.fc2)
    g = activation_vjp(g, cache.relu1)
    g, d_fc1_w, d_fc1_b = dense_vjp(g, cache.fc1)
    d_x = global_avg_pool_vjp(g, cache.gap_shape)
    grads = {
        "dyb_fc1.weight": d_fc1_w, "dyb_fc1.bias": d_fc1_b,
        "dyb_fc2.weight": d_fc2_w, "dyb_fc2.bias": d_fc2_b,
    }
    return d_x, grads


# ----------------------------------------------------------------------------
# 完整 LAConv 层
# ----------------------------------------------------------------------------

class LAConvState(NamedTuple):
    """前向保存的状态，仅供同一次调用的 VJP 使用"""
    mode: LAConvMode
    conv: object
    weight_gen: Optional[WeightGenCache]
    local_weights: Optional[np.ndarray]
    bias: Optional[DynamicBiasCache]

    def relu_patterns(self) -> List[np.ndarray]:
        patterns = []
        if self.weight_gen is not None:
            patterns += [self.weight_gen.relu0.y > 0, self.weight_gen.relu1.y > 0]
        if self.bias is not None:
            patterns.append(self.bias.relu1.y > 0)
            if self.bias.relu2 is not None:
                patterns.append(self.bias.relu2.y > 0)
        return patterns


def laconv_forward(x: np.ndarray, params: LAConvParams, mode: LAConvMode,
                   pad_mode: PadMode = PadMode.ZERO, dyb_final_relu: bool = False) -> Tuple[np.ndarray, LAConvState]:
    params.validate(mode)
    x = check_tensor4(x)

    weight_gen, local_weights = None, None
    if mode.local_adaptive:
        local_weights, weight_gen = gen_local_weights_forward(x, params, pad_mode)
        out, conv_cache = modulated_conv_forward(x, local_weights, params.main_kernel, pad_mode)
    else:
        out, conv_cache = conv2d_forward(x, params.main_kernel, None, pad_mode)

    bias_cache = None
    if mode.bias == BiasKind.STATIC:
        out = out + params.static_bias[None, :, None, None]
    elif mode.bias == BiasKind.DYNAMIC:
        d, bias_cache = dynamic_bias_forward(x, params, dyb_final_relu)
        out = out + d[:, :, None, None]
    return out, LAConvState(mode, conv_cache, weight_gen, local_weights, bias_cache)


def laconv(x, params: LAConvParams, mode: LAConvMode, pad_mode: PadMode = PadMode.ZERO,
           dyb_final_relu: bool = False) -> np.ndarray:
    return laconv_forward(x, params, mode, pad_mode, dyb_final_relu)[0]


def laconv_vjp(grad_out: np.ndarray, state: Optional[LAConvState]) -> Tuple[np.ndarray, LAConvParams]:
    """由链式法则组合各子算子的 VJP，返回 (d_input, 与参数同结构的梯度)。"""
    if state is None:
        raise UsageError("laconv_vjp 需要前向保存的状态，请先调用 laconv_forward")
    mode = state.mode
    grads: Dict[str, np.ndarray] = {}

    if mode.local_adaptive:
        d_x, d_weights, d_kernel = modulated_conv_vjp(grad_out, state.conv)
        d_x_wg, wg_grads = gen_local_weights_vjp(d_weights, state.weight_gen)
        d_x = d_x + d_x_wg
        grads.update(wg_grads)
    else:
        d_x, d_kernel, _ = conv2d_vjp(grad_out, state.conv)
    grads["main_kernel"] = d_kernel

    if mode.bias == BiasKind.STATIC:
        grads["static_bias"] = grad_out.sum(axis=(0, 2, 3))
    elif mode.bias == BiasKind.DYNAMIC:
        d_x_dyb, dyb_grads = dynamic_bias_vjp(grad_out.sum(axis=(2, 3)), state.bias)
        d_x = d_x + d_x_dyb
        grads.update(dyb_grads)
    return d_x, LAConvParams.from_groups(grads)
