#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Adam 优化器与两阶段学习率调度。
"""
import logging
from dataclasses import dataclass, field, fields
from typing import Dict, Tuple

import numpy as np

from src.core.constants import TaskPreset
from src.core.exceptions import ConfigError, ShapeError, NonFiniteGradientError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 32
    lr_phase1: float = 1e-3
    lr_phase2: float = 1e-4
    phase_split: int = 500
    seed: int = 0
    preset: TaskPreset = TaskPreset.PANSHARPENING

    def validate(self):
        if self.epochs < 1:
            raise ConfigError(f"train.epochs 必须 ≥ 1，实际: {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"train.batch_size 必须 ≥ 1，实际: {self.batch_size}")
        if not 0 <= self.phase_split <= self.epochs:
            raise ConfigError(f"train.phase_split ({self.phase_split}) 必须位于 [0, epochs={self.epochs}]")
        if self.lr_phase1 <= 0 or self.lr_phase2 <= 0:
            raise ConfigError("学习率必须为正数")
        return self

    @classmethod
    def from_mapping(cls, mapping: Dict[str, object]) -> "TrainConfig":
        types = {f.name: f.type for f in fields(cls)}
        unknown = set(mapping) - set(types)
        if unknown:
            raise ConfigError(f"未知的训练配置键: {', '.join(sorted(unknown))}")
        kwargs = {}
        for key, value in mapping.items():
            try:
                if key == "preset":
                    kwargs[key] = value if isinstance(value, TaskPreset) else TaskPreset.from_str(value)
                elif key.startswith("lr_"):
                    kwargs[key] = float(value)
                else:
                    kwargs[key] = int(value)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"训练配置键 {key} 的值无效: '{value}' ({e})")
        return cls(**kwargs).validate()


def lr_at(epoch: int, config: TrainConfig) -> float:
    """HISR 预设使用固定学习率；其余预设在 phase_split 处从 lr_phase1 切换到 lr_phase2。"""
    if config.preset == TaskPreset.HISR:
        return config.lr_phase1
    return config.lr_phase1 if epoch < config.phase_split else config.lr_phase2


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Dict[str, np.ndarray], **kwargs) -> "AdamState":
        return cls(m={k: np.zeros_like(v) for k, v in params.items()},
                   v={k: np.zeros_like(v) for k, v in params.items()}, **kwargs)


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: AdamState,
              lr: float) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """
    带偏差校正的 Adam 单步更新。返回新的参数字典与新状态，不修改输入。

    Raises:
        NonFiniteGradientError: 任一梯度组含 NaN/Inf 时整步放弃
        ShapeError: 参数、梯度、状态的键或形状不一致
    """
    if set(params) != set(grads) or set(params) != set(state.m):
        raise ShapeError("参数、梯度与优化器状态的参数组不一致")
    bad = [name for name, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        raise NonFiniteGradientError(bad)

    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    new_params, new_m, new_v = {}, {}, {}
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ShapeError(f"参数组 {name} 的梯度形状 {g.shape} 与参数形状 {theta.shape} 不一致")
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_params[name] = theta - lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name], new_v[name] = m, v
    return new_params, AdamState(new_m, new_v, t, b1, b2, state.eps)
