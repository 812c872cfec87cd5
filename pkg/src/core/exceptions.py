#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
项目异常类型。命令行入口根据类型映射退出码。
"""

class ShapeError(ValueError):
    """张量维度或形状不匹配"""

class ConfigError(ValueError):
    """配置无效：偶数卷积核、未知配置键、跨字段约束不满足等"""

class UsageError(RuntimeError):
    """接口使用方式错误，例如在没有前向缓存的情况下调用 VJP"""

class NonFiniteGradientError(ValueError):
    """梯度中出现 NaN/Inf，优化器拒绝执行本步"""

    def __init__(self, groups):
        self.groups = list(groups)
        super().__init__(f"梯度包含非有限值，参数组: {', '.join(self.groups)}")

class DivergenceError(RuntimeError):
    """训练损失发散 (NaN/Inf)，附带最后一个有效检查点的路径"""

    def __init__(self, message: str, checkpoint_path: str):
        self.checkpoint_path = checkpoint_path
        super().__init__(f"{message} (最后有效检查点: {checkpoint_path})")
