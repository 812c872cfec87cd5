#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
LAResNet：头部 LAConv+ReLU，B 个 LAResBlock (conv-ReLU-conv 后与输入相加)，
尾部 LAConv，最后与上采样的 LR 做全局残差相加。
输入为 HR 与上采样 LR 在通道维上的拼接 (HR 在前)。
"""
import logging
from dataclasses import dataclass, field, fields
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd

from src.core.constants import PadMode, CombineOp, ActivationKind, ConvKind, BiasKind
from src.core.exceptions import ConfigError, ShapeError, UsageError
from src.core.laconv import (
    LAConvMode, LAConvParams, LAConvState, init_laconv_params, count_laconv_params,
    laconv_forward, laconv_vjp,
)
from src.core.tensor_ops import (
    check_tensor4, check_odd_size, combine_forward, combine_vjp,
    activation_forward, activation_vjp, ActivationCache, CombineCache,
)
from src.core.tensor_io import write_checkpoint, read_checkpoint

logger = logging.getLogger(__name__)


def _parse_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"无法解析为布尔值: '{value}'")


@dataclass(frozen=True)
class ModelConfig:
    """网络结构超参数。默认值对应 8 波段 + PAN 的全色锐化设置。"""
    blocks: int = 5
    channels: int = 32
    kernel_size: int = 3
    c_lr: int = 8
    c_hr: int = 1
    mode: LAConvMode = LAConvMode(ConvKind.LOCAL_ADAPTIVE, BiasKind.DYNAMIC)
    upsample_factor: int = 4
    pad_mode: PadMode = PadMode.ZERO
    dyb_final_relu: bool = False

    def validate(self):
        check_odd_size(self.kernel_size, "kernel_size")
        for name in ("blocks", "channels", "c_lr", "c_hr", "upsample_factor"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name} 必须 ≥ 1，实际: {getattr(self, name)}")
        return self

    @property
    def in_channels(self) -> int:
        return self.c_lr + self.c_hr

    def layer_specs(self) -> List[Tuple[str, int, int]]:
        """按前向顺序返回 (层名, c_in, c_out)，共 2B+2 层。"""
        specs = [("head", self.in_channels, self.channels)]
        for b in range(self.blocks):
            specs.append((f"block{b}.conv1", self.channels, self.channels))
            specs.append((f"block{b}.conv2", self.channels, self.channels))
        specs.append(("tail", self.channels, self.c_lr))
        return specs

    def to_mapping(self) -> Dict[str, str]:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, LAConvMode):
                value = value.label
            elif isinstance(value, PadMode):
                value = value.value
            elif isinstance(value, bool):
                value = str(value).lower()
            out[f.name] = str(value)
        return out

    @classmethod
    def from_mapping(cls, mapping: Dict[str, object]) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ConfigError(f"未知的模型配置键: {', '.join(sorted(unknown))}")
        kwargs = {}
        for key, value in mapping.items():
            try:
                if key == "mode":
                    kwargs[key] = value if isinstance(value, LAConvMode) else LAConvMode.from_str(value)
                elif key == "pad_mode":
                    kwargs[key] = value if isinstance(value, PadMode) else PadMode.from_str(value)
                elif key == "dyb_final_relu":
                    kwargs[key] = _parse_bool(value)
                else:
                    kwargs[key] = int(value)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"模型配置键 {key} 的值无效: '{value}' ({e})")
        return cls(**kwargs).validate()


@dataclass
class FusionSample:
    """一个 (或一批) 融合样本：上采样 LR、HR 与可选的 GT，空间尺寸一致。"""
    lr_up: np.ndarray
    hr: np.ndarray
    gt: Optional[np.ndarray] = None
    sample_id: str = ""

    def __post_init__(self):
        check_tensor4(self.lr_up, "lr_up")
        check_tensor4(self.hr, "hr")
        tensors = [self.lr_up, self.hr] + ([check_tensor4(self.gt, "gt")] if self.gt is not None else [])
        ref = (self.lr_up.shape[0],) + self.lr_up.shape[2:]
        for t in tensors:
            if (t.shape[0],) + t.shape[2:] != ref:
                raise ShapeError(f"样本各张量的 n, h, w 必须一致: {[x.shape for x in tensors]}")
        if self.gt is not None and self.gt.shape[1] != self.lr_up.shape[1]:
            raise ShapeError(f"gt 波段数 {self.gt.shape[1]} 与 lr_up {self.lr_up.shape[1]} 不一致")

    @property
    def size(self) -> int:
        return self.lr_up.shape[0]

    def check_against(self, config: ModelConfig):
        if self.lr_up.shape[1] != config.c_lr or self.hr.shape[1] != config.c_hr:
            raise ShapeError(
                f"样本波段 (lr={self.lr_up.shape[1]}, hr={self.hr.shape[1]}) "
                f"与模型配置 (c_lr={config.c_lr}, c_hr={config.c_hr}) 不一致")


def stack_samples(samples: List[FusionSample]) -> FusionSample:
    if not samples:
        raise ShapeError("无法拼接空的样本列表")
    gt = None
    if all(s.gt is not None for s in samples):
        gt = np.concatenate([s.gt for s in samples], axis=0)
    return FusionSample(
        lr_up=np.concatenate([s.lr_up for s in samples], axis=0),
        hr=np.concatenate([s.hr for s in samples], axis=0),
        gt=gt,
        sample_id=",".join(s.sample_id for s in samples),
    )


@dataclass
class LAResNetParams:
    head: LAConvParams
    blocks: List[Tuple[LAConvParams, LAConvParams]] = field(default_factory=list)
    tail: Optional[LAConvParams] = None

    def layers(self) -> List[Tuple[str, LAConvParams]]:
        out = [("head", self.head)]
        for b, (p1, p2) in enumerate(self.blocks):
            out += [(f"block{b}.conv1", p1), (f"block{b}.conv2", p2)]
        out.append(("tail", self.tail))
        return out

    def groups(self) -> Dict[str, np.ndarray]:
        """展平为 {"层名.参数组": 数组}，顺序固定。"""
        return {f"{name}.{group}": value
                for name, layer in self.layers() for group, value in layer.groups().items()}

    def layer_index(self) -> Dict[str, int]:
        return {f"{name}.{group}": i
                for i, (name, layer) in enumerate(self.layers()) for group in layer.groups()}

    @classmethod
    def from_groups(cls, groups: Dict[str, np.ndarray], config: ModelConfig) -> "LAResNetParams":
        def layer(name):
            prefix = f"{name}."
            sub = {k[len(prefix):]: v for k, v in groups.items() if k.startswith(prefix)}
            if "main_kernel" not in sub:
                raise ConfigError(f"参数中缺少层 {name}")
            return LAConvParams.from_groups(sub)

        blocks = [(layer(f"block{b}.conv1"), layer(f"block{b}.conv2")) for b in range(config.blocks)]
        return cls(head=layer("head"), blocks=blocks, tail=layer("tail"))

    def copy(self) -> "LAResNetParams":
        def clone(p: LAConvParams) -> LAConvParams:
            return LAConvParams.from_groups({k: v.copy() for k, v in p.groups().items()})
        return LAResNetParams(head=clone(self.head), blocks=[(clone(a), clone(b)) for a, b in self.blocks],
                              tail=clone(self.tail))


def init_params(config: ModelConfig, seed: int) -> LAResNetParams:
    """按层顺序从同一个 PCG64 生成器 (np.random.default_rng) 抽取 He 正态初始化。"""
    config.validate()
    rng = np.random.default_rng(seed)
    layers = [init_laconv_params(c_in, c_out, config.kernel_size, config.mode, rng)
              for _, c_in, c_out in config.layer_specs()]
    blocks = [(layers[1 + 2 * b], layers[2 + 2 * b]) for b in range(config.blocks)]
    logger.debug(f"初始化参数: seed={seed}, 模式={config.mode.label}, 层数={len(layers)}")
    return LAResNetParams(head=layers[0], blocks=blocks, tail=layers[-1])


def count_params(config: ModelConfig) -> Tuple[int, pd.DataFrame]:
    """闭式参数计数，返回 (总数, 每层明细表)。"""
    rows = []
    for name, c_in, c_out in config.layer_specs():
        counts = count_laconv_params(c_in, c_out, config.kernel_size, config.mode)
        rows.append({"layer": name, "c_in": c_in, "c_out": c_out, **counts,
                     "total": sum(counts.values())})
    table = pd.DataFrame(rows, columns=["layer", "c_in", "c_out", "main", "weight_gen", "bias", "total"])
    return int(table["total"].sum()), table


# ----------------------------------------------------------------------------
# 前向与反向
# ----------------------------------------------------------------------------

class BlockState(NamedTuple):
    conv1: LAConvState
    relu: ActivationCache
    conv2: LAConvState


class ForwardState(NamedTuple):
    concat: CombineCache
    head: LAConvState
    head_relu: ActivationCache
    blocks: List[BlockState]
    tail: LAConvState

    def layer_states(self) -> List[LAConvState]:
        states = [self.head]
        for block in self.blocks:
            states += [block.conv1, block.conv2]
        return states + [self.tail]

    def local_weights(self) -> List[Optional[np.ndarray]]:
        """每个 LAConv 层的局部权重 (n, k², h, w)；标准卷积层为 None。"""
        return [s.local_weights for s in self.layer_states()]

    def relu_patterns(self) -> List[np.ndarray]:
        patterns = [self.head_relu.y > 0] + [b.relu.y > 0 for b in self.blocks]
        for s in self.layer_states():
            patterns += s.relu_patterns()
        return patterns


def forward_with_cache(params: LAResNetParams, sample: FusionSample,
                       config: ModelConfig) -> Tuple[np.ndarray, ForwardState]:
    sample.check_against(config)
    mode, pad_mode, final_relu = config.mode, config.pad_mode, config.dyb_final_relu

    m, concat = combine_forward(sample.hr, sample.lr_up, CombineOp.CONCAT_CHANNELS)
    x, head = laconv_forward(m, params.head, mode, pad_mode, final_relu)
    x, head_relu = activation_forward(x, ActivationKind.RELU)

    block_states = []
    for p1, p2 in params.blocks:
        y, s1 = laconv_forward(x, p1, mode, pad_mode, final_relu)
        y, relu = activation_forward(y, ActivationKind.RELU)
        y, s2 = laconv_forward(y, p2, mode, pad_mode, final_relu)
        x = x + y
        block_states.append(BlockState(s1, relu, s2))

    t, tail = laconv_forward(x, params.tail, mode, pad_mode, final_relu)
    sr = sample.lr_up + t
    return sr, ForwardState(concat, head, head_relu, block_states, tail)


def forward(params: LAResNetParams, sample: FusionSample, config: ModelConfig) -> np.ndarray:
    return forward_with_cache(params, sample, config)[0]


def laresnet_vjp(grad_sr: np.ndarray, state: Optional[ForwardState]):
    """返回 (参数梯度 LAResNetParams, d_lr_up, d_hr)。"""
    if state is None:
        raise UsageError("laresnet_vjp 需要 forward_with_cache 保存的状态")
    g, tail_grads = laconv_vjp(grad_sr, state.tail)

    block_grads = []
    for block in reversed(state.blocks):
        gy, g2 = laconv_vjp(g, block.conv2)
        gy = activation_vjp(gy, block.relu)
        gy, g1 = laconv_vjp(gy, block.conv1)
        g = g + gy
        block_grads.append((g1, g2))
    block_grads.reverse()

    g = activation_vjp(g, state.head_relu)
    g, head_grads = laconv_vjp(g, state.head)
    d_hr, d_lr_up = combine_vjp(g, state.concat)
    grads = LAResNetParams(head=head_grads, blocks=block_grads, tail=tail_grads)
    return grads, d_lr_up + grad_sr, d_hr


class LossResult(NamedTuple):
    loss: float
    cotangent: np.ndarray
    mse: float


def loss_mse(sr: np.ndarray, gt: np.ndarray) -> LossResult:
    """L = (1/N)·Σ‖sr − gt‖²_F，N 为批大小；mse 为逐元素均方误差，仅用于日志。"""
    sr, gt = check_tensor4(sr, "sr"), check_tensor4(gt, "gt")
    if sr.shape != gt.shape:
        raise ShapeError(f"sr 与 gt 形状不一致: {sr.shape} vs {gt.shape}")
    diff = sr - gt
    n = sr.shape[0]
    loss = float(np.sum(diff * diff) / n)
    return LossResult(loss, (2.0 / n) * diff, loss / float(np.prod(sr.shape[1:])))


def loss_and_grad(params: LAResNetParams, sample: FusionSample, config: ModelConfig):
    """返回 (LossResult, 参数梯度, d_lr_up, d_hr)。"""
    if sample.gt is None:
        raise ShapeError(f"样本 {sample.sample_id} 缺少 gt，无法计算损失")
    sr, state = forward_with_cache(params, sample, config)
    result = loss_mse(sr, sample.gt)
    grads, d_lr_up, d_hr = laresnet_vjp(result.cotangent, state)
    return result, grads, d_lr_up, d_hr


# ----------------------------------------------------------------------------
# 检查点
# ----------------------------------------------------------------------------

def save_checkpoint(directory: str, params: LAResNetParams, config: ModelConfig,
                    extra: Optional[Dict[str, str]] = None):
    block = config.to_mapping()
    block.update({f"meta.{k}": str(v) for k, v in (extra or {}).items()})
    flags = {"conv": config.mode.conv.value, "bias": config.mode.bias.value}
    write_checkpoint(directory, params.groups(), params.layer_index(), block, flags)
    logger.info(f"检查点已保存: {directory}")


def load_checkpoint(directory: str) -> Tuple[LAResNetParams, ModelConfig, Dict[str, str]]:
    """返回 (参数, 模型配置, 附加元数据)。"""
    groups, block, _ = read_checkpoint(directory)
    meta = {k[len("meta."):]: v for k, v in block.items() if k.startswith("meta.")}
    config = ModelConfig.from_mapping({k: v for k, v in block.items() if not k.startswith("meta.")})
    params = LAResNetParams.from_groups(groups, config)
    for name, layer in params.layers():
        layer.validate(config.mode)
    logger.info(f"已加载检查点: {directory} (模式 {config.mode.label}, {len(groups)} 个参数组)")
    return params, config, meta
