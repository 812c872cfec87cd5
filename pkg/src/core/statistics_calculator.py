#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
评估结果统计模块
"""
import logging
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

SUMMARY_IDS = ("mean", "std")


def mean_and_std(values) -> Dict[str, float]:
    """均值与总体标准差 (ddof=0)，忽略 NaN；没有有效值时两者均为 NaN。"""
    values = np.asarray(list(values), dtype=np.float64)
    values = values[~np.isnan(values)]
    if values.size == 0:
        return {"mean": np.nan, "std": np.nan}
    return {"mean": float(values.mean()), "std": float(values.std())}


class MetricReport:
    """
    按样本记录指标，聚合为 mean ± std。
    CSV 为长表 (sample_id, metric, value)，末尾附加 sample_id 为 mean / std 的汇总行；
    汇总总是由逐样本的值重新计算。
    """

    def __init__(self, metric_order: Optional[List[str]] = None):
        self._rows: List[Dict[str, object]] = []
        self._order: List[str] = list(metric_order or [])

    def add(self, sample_id: str, metrics: Dict[str, float]):
        for name, value in metrics.items():
            if name not in self._order:
                self._order.append(name)
            self._rows.append({"sample_id": sample_id, "metric": name, "value": float(value)})

    @property
    def metrics(self) -> List[str]:
        return list(self._order)

    def per_sample(self) -> pd.DataFrame:
        return pd.DataFrame(self._rows, columns=["sample_id", "metric", "value"])

    def summary(self) -> pd.DataFrame:
        """每个指标一行，列为 mean、std (总体标准差) 与样本数。"""
        frame = self.per_sample()
        rows = {}
        for metric, values in frame.groupby("metric", sort=False)["value"]:
            rows[metric] = {**mean_and_std(values), "count": int(values.notna().sum())}
        summary = pd.DataFrame.from_dict(rows, orient="index", columns=["mean", "std", "count"])
        return summary.reindex([m for m in self._order if m in summary.index])

    def mean(self, metric: str) -> float:
        return float(self.summary().loc[metric, "mean"])

    def to_csv(self, path: str):
        frame = self.per_sample()
        summary = self.summary()
        extra = [{"sample_id": stat, "metric": metric, "value": summary.loc[metric, stat]}
                 for stat in SUMMARY_IDS for metric in summary.index]
        out = pd.concat([frame, pd.DataFrame(extra, columns=frame.columns)], ignore_index=True)
        out.to_csv(path, index=False, float_format='%.17g')
        logger.info(f"指标报告已写入: {path} ({len(frame)} 行逐样本结果)")

    @classmethod
    def from_csv(cls, path: str) -> "MetricReport":
        frame = pd.read_csv(path, dtype={"sample_id": str})
        report = cls()
        for row in frame[~frame["sample_id"].isin(SUMMARY_IDS)].itertuples(index=False):
            report.add(row.sample_id, {row.metric: row.value})
        return report

    def format_table(self) -> str:
        """类似论文表格的 "mean ± std" 文本表。"""
        summary = self.summary()
        lines = [f"{'metric':<10}{'mean ± std':>30}"]
        for metric, row in summary.iterrows():
            lines.append(f"{metric:<10}{row['mean']:>16.6f} ± {row['std']:<11.6f}")
        return "\n".join(lines)
