#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
项目共享常量与枚举
"""
from enum import Enum

class PadMode(Enum):
    """空间填充方式：零填充为默认，循环填充用于平移等变性检验"""
    ZERO = "zero"
    CIRCULAR = "circular"

    @classmethod
    def from_str(cls, s: str):
        for item in cls:
            if item.value == str(s).strip().lower():
                return item
        raise ValueError(f"未知的填充方式: '{s}' (可选: zero, circular)")

class ConvKind(Enum):
    """卷积部分：标准卷积 (SC) 或局部自适应卷积 (LAC)"""
    STANDARD = "SC"
    LOCAL_ADAPTIVE = "LAC"

class BiasKind(Enum):
    """偏置部分：无偏置 (NB)、常规静态偏置 (CB)、动态偏置 (DYB)"""
    NONE = "NB"
    STATIC = "CB"
    DYNAMIC = "DYB"

class UpsampleMethod(Enum):
    NEAREST = "nearest"
    BICUBIC = "bicubic"

    @classmethod
    def from_str(cls, s: str):
        for item in cls:
            if item.value == str(s).strip().lower():
                return item
        raise ValueError(f"未知的上采样方法: '{s}'")

class ActivationKind(Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"

class CombineOp(Enum):
    CONCAT_CHANNELS = "concat_channels"
    ADD = "add"

class TaskPreset(Enum):
    """训练任务预设，决定学习率调度方式"""
    PANSHARPENING = "pansharpening"
    HISR = "hisr"
    TOY = "toy"

    @classmethod
    def from_str(cls, s: str):
        for item in cls:
            if item.value == str(s).strip().lower():
                return item
        raise ValueError(f"未知的任务预设: '{s}' (可选: pansharpening, hisr, toy)")

class DatasetSplit(Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"

# 命令行退出码
EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2

# .ten 张量文件格式
TEN_MAGIC = b"TEN1"
TEN_DTYPE_F32 = 0x01
TEN_DTYPE_F64 = 0x02

# 数据集清单列顺序 (每行一个样本)
MANIFEST_FILENAME = "manifest.tsv"
MANIFEST_COLUMNS = ["id", "split", "gt_path", "lr_path", "lrup_path", "hr_path"]

# 检查点
CHECKPOINT_MANIFEST = "checkpoint.txt"
CHECKPOINT_FORMAT = "laconv-checkpoint-1"

# PSNR 在完全相同时的上限 (dB)
PSNR_CAP_DB = 100.0
