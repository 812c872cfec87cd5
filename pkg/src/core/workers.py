# src/core/workers.py

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
并行工作池：按样本扇出的任务 (数据集生成、逐样本评估) 在线程池中执行，
结果按输入顺序收集，保证输出与串行执行一致。
"""
import os
import logging
from typing import Callable, Iterable, List, Optional, TypeVar
from concurrent.futures import ThreadPoolExecutor, as_completed

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

ProgressCallback = Callable[[int, int, str], None]


def default_workers() -> int:
    return max(1, (os.cpu_count() or 1) // 2)


def ordered_map(func: Callable[[T], R], items: Iterable[T], max_workers: Optional[int] = None,
                label: str = "任务", progress: Optional[ProgressCallback] = None) -> List[R]:
    """
    在线程池中对每个元素执行 func，按输入顺序返回结果。
    任一任务失败时取消其余未开始的任务并重新抛出第一个异常。
    """
    items = list(items)
    total = len(items)
    if total == 0:
        return []
    workers = max_workers or default_workers()
    if workers <= 1 or total == 1:
        results = []
        for i, item in enumerate(items):
            results.append(func(item))
            if progress: progress(i + 1, total, f"{label} {i + 1}/{total}")
        return results

    results: List[Optional[R]] = [None] * total
    with ThreadPoolExecutor(max_workers=min(workers, total)) as executor:
        futures = {executor.submit(func, item): i for i, item in enumerate(items)}
        processed_count = 0
        try:
            for future in as_completed(futures):
                idx = futures[future]
                results[idx] = future.result()
                processed_count += 1
                if progress: progress(processed_count, total, f"已完成{label} {processed_count}/{total}")
        except Exception:
            executor.shutdown(wait=False, cancel_futures=True)
            logger.error(f"{label}执行失败，已取消剩余任务", exc_info=True)
            raise
    logger.debug(f"{label}: {total} 项已完成 (线程数 {min(workers, total)})")
    return results
