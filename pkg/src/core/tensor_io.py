#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
张量文件 (.ten) 编解码与检查点清单读写。

.ten 布局：
    0-3   魔数 "TEN1"
    4     数据类型标记 (0x01 = f32, 0x02 = f64)
    5     维数 (必须为 4)
    6-    4 个小端 u32 维度，随后是小端行优先数据
"""
import os
import shutil
import logging
import tempfile
from typing import Dict, Tuple, Optional, List

import numpy as np

from src.core.constants import (
    TEN_MAGIC, TEN_DTYPE_F32, TEN_DTYPE_F64, CHECKPOINT_MANIFEST, CHECKPOINT_FORMAT
)
from src.core.exceptions import ShapeError

logger = logging.getLogger(__name__)

_DTYPES = {TEN_DTYPE_F32: np.dtype('<f4'), TEN_DTYPE_F64: np.dtype('<f8')}
_HEADER_LEN = 6 + 4 * 4


def encode_tensor(x: np.ndarray, dtype_tag: int = TEN_DTYPE_F64) -> bytes:
    x = np.asarray(x)
    if x.ndim != 4:
        raise ShapeError(f".ten 只支持四维张量，实际形状: {x.shape}")
    if dtype_tag not in _DTYPES:
        raise ValueError(f"未知的数据类型标记: {dtype_tag:#04x}")
    header = TEN_MAGIC + np.array([dtype_tag, 4], dtype=np.uint8).tobytes()
    dims = np.asarray(x.shape, dtype='<u4').tobytes()
    return header + dims + np.ascontiguousarray(x, dtype=_DTYPES[dtype_tag]).tobytes()


def decode_tensor(buf: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(buf) < 6 or buf[:4] != TEN_MAGIC:
        raise ValueError(f"{source}: 魔数错误，不是 .ten 文件")
    dtype_tag, ndim = buf[4], buf[5]
    if dtype_tag not in _DTYPES:
        raise ValueError(f"{source}: 不支持的数据类型标记 {dtype_tag:#04x}")
    if ndim != 4:
        raise ShapeError(f"{source}: 维数必须为 4，实际 {ndim}")
    if len(buf) < _HEADER_LEN:
        raise ValueError(f"{source}: 文件头不完整")
    dims = tuple(int(d) for d in np.frombuffer(buf, dtype='<u4', count=4, offset=6))
    dtype = _DTYPES[dtype_tag]
    count = int(np.prod(dims))
    if len(buf) != _HEADER_LEN + count * dtype.itemsize:
        raise ValueError(f"{source}: 数据长度与维度 {dims} 不一致")
    data = np.frombuffer(buf, dtype=dtype, count=count, offset=_HEADER_LEN)
    return data.reshape(dims).astype(np.float64)


def write_tensor(path: str, x: np.ndarray, dtype_tag: int = TEN_DTYPE_F64):
    payload = encode_tensor(x, dtype_tag)
    tmp_path = f"{path}.tmp"
    with open(tmp_path, 'wb') as f:
        f.write(payload)
    os.replace(tmp_path, path)


def read_tensor(path: str) -> np.ndarray:
    with open(path, 'rb') as f:
        return decode_tensor(f.read(), source=path)


# ----------------------------------------------------------------------------
# 检查点：清单 (key=value 文本) + 每个参数组一个 .ten 文件
# ----------------------------------------------------------------------------

def _as_tensor4(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    return x.reshape((1,) * (4 - x.ndim) + x.shape) if x.ndim < 4 else x


def _format_dims(shape) -> str:
    return "x".join(str(d) for d in shape) if len(shape) else "scalar"


def _parse_dims(text: str) -> Tuple[int, ...]:
    return () if text == "scalar" else tuple(int(d) for d in text.split("x"))


def write_checkpoint(directory: str, groups: Dict[str, np.ndarray], layers: Dict[str, int],
                     config: Dict[str, str], flags: Optional[Dict[str, str]] = None):
    """
    原子地写入检查点目录：先写入同级临时目录，再整体替换目标目录。
    groups 的键为参数组名，layers 给出每组所属的 LAConv 层序号。
    """
    directory = os.path.abspath(directory)
    parent = os.path.dirname(directory)
    os.makedirs(parent, exist_ok=True)
    tmp_dir = tempfile.mkdtemp(prefix=".ckpt_", dir=parent)
    flags = flags or {}
    try:
        lines: List[str] = [f"format={CHECKPOINT_FORMAT}", "[config]"]
        lines += [f"{key}={value}" for key, value in config.items()]
        lines.append("[params]")
        for name, value in groups.items():
            filename = f"{name}.ten"
            write_tensor(os.path.join(tmp_dir, filename), _as_tensor4(value))
            tokens = [f"layer={layers.get(name, -1)}", f"group={name}",
                      f"dims={_format_dims(np.shape(value))}", f"file={filename}"]
            tokens += [f"{k}={v}" for k, v in flags.items()]
            lines.append(" ".join(tokens))
        with open(os.path.join(tmp_dir, CHECKPOINT_MANIFEST), 'w', encoding='utf-8') as f:
            f.write("\n".join(lines) + "\n")

        stale = None
        if os.path.exists(directory):
            stale = f"{directory}.old"
            if os.path.exists(stale):
                shutil.rmtree(stale)
            os.rename(directory, stale)
        os.rename(tmp_dir, directory)
        if stale:
            shutil.rmtree(stale, ignore_errors=True)
    except Exception:
        shutil.rmtree(tmp_dir, ignore_errors=True)
        raise
    logger.debug(f"检查点已写入: {directory} ({len(groups)} 个参数组)")


def read_checkpoint(directory: str) -> Tuple[Dict[str, np.ndarray], Dict[str, str], Dict[str, Dict[str, str]]]:
    """返回 (参数组, 配置块, 每组的清单条目)。"""
    manifest_path = os.path.join(directory, CHECKPOINT_MANIFEST)
    with open(manifest_path, 'r', encoding='utf-8') as f:
        raw_lines = [line.strip() for line in f if line.strip() and not line.strip().startswith('#')]
    if not raw_lines or raw_lines[0] != f"format={CHECKPOINT_FORMAT}":
        raise ValueError(f"{manifest_path}: 不是可识别的检查点清单")

    section = None
    config: Dict[str, str] = {}
    entries: Dict[str, Dict[str, str]] = {}
    groups: Dict[str, np.ndarray] = {}
    for line in raw_lines[1:]:
        if line.startswith('[') and line.endswith(']'):
            section = line[1:-1]
            continue
        if section == "config":
            key, value = line.split('=', 1)
            config[key.strip()] = value.strip()
        elif section == "params":
            entry = dict(token.split('=', 1) for token in line.split())
            dims = _parse_dims(entry['dims'])
            tensor = read_tensor(os.path.join(directory, entry['file']))
            if tensor.size != int(np.prod(dims)):
                raise ShapeError(f"{entry['file']}: 元素个数与清单维度 {dims} 不一致")
            groups[entry['group']] = tensor.reshape(dims)
            entries[entry['group']] = entry
        else:
            raise ValueError(f"{manifest_path}: 清单行不属于任何小节: '{line}'")
    return groups, config, entries
