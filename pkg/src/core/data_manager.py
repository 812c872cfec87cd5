# src/core/data_manager.py

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
import os
import logging
import threading
from collections import OrderedDict
from typing import Optional, List, Dict, Any, Tuple

import numpy as np
import pandas as pd

from src.core.constants import MANIFEST_FILENAME, MANIFEST_COLUMNS, DatasetSplit
from src.core.exceptions import ShapeError
from src.core.laresnet import FusionSample
from src.core.tensor_io import read_tensor

logger = logging.getLogger(__name__)


def write_manifest(directory: str, rows: List[Dict[str, str]]) -> str:
    """一次性写出清单 (制表符分隔，无表头，列顺序固定)。"""
    path = os.path.join(directory, MANIFEST_FILENAME)
    frame = pd.DataFrame(rows, columns=MANIFEST_COLUMNS)
    tmp_path = f"{path}.tmp"
    frame.to_csv(tmp_path, sep='\t', header=False, index=False)
    os.replace(tmp_path, path)
    logger.info(f"清单已写入: {path} ({len(frame)} 个样本)")
    return path


class DatasetManager:
    """
    负责数据集目录与清单的读取，并按需加载样本张量 (带 LRU 缓存)。
    """

    def __init__(self, cache_size: int = 64):
        self.dataset_directory: Optional[str] = None
        self.manifest: Optional[pd.DataFrame] = None
        self._cache: "OrderedDict[str, np.ndarray]" = OrderedDict()
        self._cache_size = cache_size
        self._cache_lock = threading.Lock()

    def setup_dataset_directory(self, directory: str) -> "DatasetManager":
        manifest_path = os.path.join(directory, MANIFEST_FILENAME)
        if not os.path.isdir(directory):
            raise FileNotFoundError(f"数据集目录不存在: {directory}")
        if not os.path.isfile(manifest_path):
            raise FileNotFoundError(f"数据集清单不存在: {manifest_path}")

        self.clear_all()
        self.dataset_directory = directory
        self.manifest = pd.read_csv(manifest_path, sep='\t', header=None, names=MANIFEST_COLUMNS,
                                    dtype=str, keep_default_na=False)
        bad = set(self.manifest["split"]) - {s.value for s in DatasetSplit}
        if bad:
            raise ValueError(f"{manifest_path}: 未知的数据划分 {sorted(bad)}")
        logger.info(f"数据集目录已设置为: {directory} ({len(self.manifest)} 个样本)")
        return self

    def _require_manifest(self) -> pd.DataFrame:
        if self.manifest is None:
            raise RuntimeError("尚未设置数据集目录")
        return self.manifest

    def get_split_ids(self, split: DatasetSplit) -> List[str]:
        manifest = self._require_manifest()
        return manifest.loc[manifest["split"] == split.value, "id"].tolist()

    def has_split(self, split: DatasetSplit) -> bool:
        return len(self.get_split_ids(split)) > 0

    def get_sample_count(self) -> int:
        return 0 if self.manifest is None else len(self.manifest)

    def _row(self, sample_id: str) -> pd.Series:
        manifest = self._require_manifest()
        matches = manifest[manifest["id"] == sample_id]
        if matches.empty:
            raise KeyError(f"清单中不存在样本: '{sample_id}'")
        return matches.iloc[0]

    def _load(self, relative_path: str) -> np.ndarray:
        path = os.path.join(self.dataset_directory, relative_path)
        # 评估时多个线程共享同一缓存
        with self._cache_lock:
            if path in self._cache:
                self._cache.move_to_end(path)
                return self._cache[path]
        tensor = read_tensor(path)
        with self._cache_lock:
            self._cache[path] = tensor
            self._enforce_cache_limit()
        return tensor

    def _enforce_cache_limit(self):
        while len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)

    def load_sample(self, sample_id: str) -> FusionSample:
        row = self._row(sample_id)
        return FusionSample(lr_up=self._load(row["lrup_path"]), hr=self._load(row["hr_path"]),
                            gt=self._load(row["gt_path"]), sample_id=sample_id)

    def load_lr(self, sample_id: str) -> np.ndarray:
        return self._load(self._row(sample_id)["lr_path"])

    def load_split(self, split: DatasetSplit) -> List[FusionSample]:
        return [self.load_sample(sample_id) for sample_id in self.get_split_ids(split)]

    def get_dataset_info(self) -> Dict[str, Any]:
        """第一个样本的波段数与空间尺寸，以及各划分的样本数。"""
        manifest = self._require_manifest()
        if manifest.empty:
            raise ShapeError(f"数据集为空: {self.dataset_directory}")
        first = self.load_sample(manifest.iloc[0]["id"])
        lr = self.load_lr(first.sample_id)
        return {
            "path": self.dataset_directory,
            "c_lr": first.lr_up.shape[1], "c_hr": first.hr.shape[1],
            "size": first.lr_up.shape[2:], "lr_size": lr.shape[2:],
            "splits": {s.value: len(self.get_split_ids(s)) for s in DatasetSplit},
        }

    def check_model_compatibility(self, c_lr: int, c_hr: int) -> Tuple[int, int]:
        info = self.get_dataset_info()
        if (info["c_lr"], info["c_hr"]) != (c_lr, c_hr):
            raise ShapeError(f"数据集波段 (c_lr={info['c_lr']}, c_hr={info['c_hr']}) "
                             f"与模型配置 (c_lr={c_lr}, c_hr={c_hr}) 不一致")
        return info["size"]

    def clear_all(self):
        self.dataset_directory = None
        self.manifest = None
        self._cache.clear()
        logger.debug("DatasetManager 状态已清除。")
