#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
训练循环与有限差分梯度审计。
"""
import os
import time
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.core.constants import DatasetSplit
from src.core.exceptions import DivergenceError, NonFiniteGradientError
from src.core.data_manager import DatasetManager
from src.core.laresnet import (
    ModelConfig, LAResNetParams, FusionSample, init_params, forward, forward_with_cache,
    loss_mse, loss_and_grad, stack_samples, save_checkpoint,
)
from src.core.metrics import MetricConfig, sam, ergas, psnr
from src.core.optim import TrainConfig, AdamState, adam_step, lr_at

logger = logging.getLogger(__name__)

TRAIN_LOG_NAME = "train_log.tsv"
VAL_METRICS_NAME = "val_metrics.csv"


@dataclass
class TrainResult:
    params: LAResNetParams
    final_checkpoint: str
    best_checkpoint: str
    log_path: str
    final_loss: float
    final_mse: float
    best_epoch: int
    best_score: float


def evaluate_loss(params: LAResNetParams, samples: List[FusionSample], config: ModelConfig,
                  batch_size: int = 32) -> Tuple[float, float]:
    """在样本集上计算 (损失, 逐元素 MSE)，损失按样本数加权合并各批次。"""
    if not samples:
        raise ValueError("评估样本集为空")
    sse, elements, count = 0.0, 0, 0
    for start in range(0, len(samples), batch_size):
        batch = stack_samples(samples[start:start + batch_size])
        result = loss_mse(forward(params, batch, config), batch.gt)
        sse += result.loss * batch.size
        elements += batch.gt.size
        count += batch.size
    return sse / count, sse / elements


def _validation_row(epoch: int, params: LAResNetParams, samples: List[FusionSample],
                    config: ModelConfig, metric_config: MetricConfig, batch_size: int) -> Dict[str, float]:
    loss, mse = evaluate_loss(params, samples, config, batch_size)
    sams, ergases, psnrs = [], [], []
    for sample in samples:
        sr = forward(params, sample, config)
        sams.append(sam(sr, sample.gt))
        ergases.append(ergas(sr, sample.gt, metric_config.ratio))
        psnrs.append(psnr(sr, sample.gt, metric_config.psnr_peak, metric_config.psnr_cap))
    return {"epoch": epoch, "loss": loss, "mse": mse, "SAM": float(np.mean(sams)),
            "ERGAS": float(np.mean(ergases)), "PSNR": float(np.mean(psnrs))}


def _format_log_line(epoch: int, lr: float, loss: float, wall: float) -> str:
    return f"{epoch}\t{lr:.17g}\t{loss:.17g}\t{wall:.3f}\n"


def train(model_config: ModelConfig, train_config: TrainConfig, dataset: DatasetManager, out_dir: str,
          metric_config: Optional[MetricConfig] = None,
          progress: Optional[Callable[[int, int, str], None]] = None) -> TrainResult:
    """
    按 epoch × batch 执行 forward / VJP / Adam。每个 epoch 用种子生成器重新打乱训练集，
    最后一个不完整的批次保留。日志每行: epoch, lr, loss, wall_seconds。
    best 检查点按每个 epoch 结束后的参数评分：存在验证集时用验证损失，否则用训练集上重新计算的损失。
    损失出现非有限值时，last_good 保存最后一次成功更新之前的参数 (即最后一个给出有限损失的参数)。
    """
    model_config.validate()
    train_config.validate()
    metric_config = metric_config or MetricConfig()
    dataset.check_model_compatibility(model_config.c_lr, model_config.c_hr)
    train_samples = dataset.load_split(DatasetSplit.TRAIN)
    if not train_samples:
        raise ValueError(f"数据集 {dataset.dataset_directory} 没有训练样本")
    val_samples = dataset.load_split(DatasetSplit.VAL)

    os.makedirs(out_dir, exist_ok=True)
    log_path = os.path.join(out_dir, TRAIN_LOG_NAME)
    final_dir = os.path.join(out_dir, "final")
    best_dir = os.path.join(out_dir, "best")
    meta = {"seed": train_config.seed, "preset": train_config.preset.value}

    params = init_params(model_config, train_config.seed)
    state = AdamState.zeros_like(params.groups())
    rng = np.random.default_rng(train_config.seed)
    n = len(train_samples)
    bs = train_config.batch_size
    previous = params
    best_params, best_score, best_epoch = params, np.inf, -1
    val_rows: List[Dict[str, float]] = []
    loss, mse = np.nan, np.nan

    logger.info(f"开始训练: 模式 {model_config.mode.label}, {n} 个训练样本, {len(val_samples)} 个验证样本, "
                f"{train_config.epochs} 个 epoch, batch {bs}")
    t0 = time.perf_counter()
    with open(log_path, 'w', encoding='utf-8') as log_file:
        for epoch in range(train_config.epochs):
            lr = lr_at(epoch, train_config)
            order = rng.permutation(n)
            sse, elements = 0.0, 0
            for start in range(0, n, bs):
                batch = stack_samples([train_samples[i] for i in order[start:start + bs]])
                result, grads, _, _ = loss_and_grad(params, batch, model_config)
                try:
                    if not np.isfinite(result.loss):
                        raise NonFiniteGradientError(["loss"])
                    new_groups, state = adam_step(params.groups(), grads.groups(), state, lr)
                except NonFiniteGradientError as e:
                    last_good = os.path.join(out_dir, "last_good")
                    save_checkpoint(last_good, previous, model_config, {**meta, "epoch": epoch})
                    logger.error(f"第 {epoch} 个 epoch 训练发散: {e}")
                    raise DivergenceError(f"训练在第 {epoch} 个 epoch 发散", last_good) from e
                previous = params
                params = LAResNetParams.from_groups(new_groups, model_config)
                sse += result.loss * batch.size
                elements += batch.gt.size

            loss, mse = sse / n, sse / elements
            log_file.write(_format_log_line(epoch, lr, loss, time.perf_counter() - t0))
            log_file.flush()

            if val_samples:
                row = _validation_row(epoch, params, val_samples, model_config, metric_config, bs)
                val_rows.append(row)
                score = row["loss"]
            else:
                score = evaluate_loss(params, train_samples, model_config, bs)[0]
            if score < best_score:
                best_params, best_score, best_epoch = params, score, epoch

            logger.info(f"epoch {epoch + 1}/{train_config.epochs}: lr={lr:.2e}, loss={loss:.6e}, mse={mse:.6e}"
                        + f", {'val_loss' if val_samples else 'train_eval'}={score:.6e}")
            if progress: progress(epoch + 1, train_config.epochs, f"epoch {epoch + 1}")

    if val_rows:
        pd.DataFrame(val_rows).to_csv(os.path.join(out_dir, VAL_METRICS_NAME), index=False, float_format='%.17g')
    save_checkpoint(final_dir, params, model_config, {**meta, "epoch": train_config.epochs - 1})
    save_checkpoint(best_dir, best_params, model_config, {**meta, "epoch": best_epoch})
    logger.info(f"训练完成: 最终 loss={loss:.6e}, mse={mse:.6e}, best epoch={best_epoch}")
    return TrainResult(params, final_dir, best_dir, log_path, float(loss), float(mse), best_epoch, float(best_score))


# ----------------------------------------------------------------------------
# 梯度审计
# ----------------------------------------------------------------------------

def numerical_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5,
                       indices=None) -> np.ndarray:
    """
    中心差分 (f(x+h) - f(x-h)) / 2h。x 被原地扰动并在每个坐标后恢复；
    未给出 indices 时计算全部坐标，其余位置返回 0。
    """
    grad = np.zeros_like(x, dtype=np.float64)
    for idx in (range(x.size) if indices is None else indices):
        old = x.flat[idx]
        x.flat[idx] = old + h
        f_plus = f(x)
        x.flat[idx] = old - h
        f_minus = f(x)
        x.flat[idx] = old
        grad.flat[idx] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_error(analytic: float, numeric: float, tol: float) -> float:
    """分母带绝对下限 1e-7/tol，使 rel ≤ tol 等价于 |a-n| ≤ max(tol·max(|a|,|n|), 1e-7)。"""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-7 / tol)


def toy_batch(config: ModelConfig, seed: int, n: int = 2, size: int = 16) -> FusionSample:
    rng = np.random.default_rng(seed)
    return FusionSample(
        lr_up=rng.uniform(0.0, 1.0, size=(n, config.c_lr, size, size)),
        hr=rng.uniform(0.0, 1.0, size=(n, config.c_hr, size, size)),
        gt=rng.uniform(0.0, 1.0, size=(n, config.c_lr, size, size)),
        sample_id="gradcheck",
    )


@dataclass
class GradcheckReport:
    table: pd.DataFrame
    tol: float
    h: float

    @property
    def passed(self) -> bool:
        return bool(self.table["passed"].all())

    def to_text(self) -> str:
        return self.table.to_string(index=False, float_format=lambda v: f"{v:.3e}")


LossAndGrad = Callable[[LAResNetParams, FusionSample, ModelConfig], tuple]


def gradcheck(config: ModelConfig, seed: int, h: float = 1e-5, tol: float = 1e-4, n_coords: int = 16,
              sample: Optional[FusionSample] = None,
              loss_and_grad_fn: LossAndGrad = loss_and_grad) -> GradcheckReport:
    """
    对每个参数组与输入 (lr_up 与 hr 合并为一行) 随机抽取 n_coords 个坐标，
    比较解析梯度与中心差分。扰动使 ReLU 激活模式发生变化的坐标视为跨越折点，跳过并另行抽样。
    """
    config.validate()
    params = init_params(config, seed)
    sample = sample if sample is not None else toy_batch(config, seed)
    rng = np.random.default_rng(seed + 1)

    _, grads, d_lr_up, d_hr = loss_and_grad_fn(params, sample, config)
    _, base_state = forward_with_cache(params, sample, config)
    base_pattern = base_state.relu_patterns()

    def evaluate(p: LAResNetParams, s: FusionSample) -> Tuple[float, bool]:
        sr, st = forward_with_cache(p, s, config)
        same = all(np.array_equal(a, b) for a, b in zip(st.relu_patterns(), base_pattern))
        return loss_mse(sr, s.gt).loss, same

    groups = params.groups()
    grad_groups = grads.groups()
    targets: List[Tuple[str, np.ndarray, np.ndarray, Callable[[np.ndarray], Tuple[float, bool]]]] = []
    for name, value in groups.items():
        def probe(arr, name=name):
            return evaluate(LAResNetParams.from_groups({**groups, name: arr}, config), sample)
        targets.append((name, value, grad_groups[name], probe))

    stacked = np.concatenate([sample.lr_up.ravel(), sample.hr.ravel()])
    split = sample.lr_up.size

    def probe_input(arr):
        return evaluate(params, FusionSample(arr[:split].reshape(sample.lr_up.shape),
                                             arr[split:].reshape(sample.hr.shape), sample.gt))
    targets.append(("input", stacked, np.concatenate([d_lr_up.ravel(), d_hr.ravel()]), probe_input))

    rows = []
    for name, value, analytic, probe in targets:
        candidates = rng.permutation(value.size)
        checked, skipped, max_rel, max_abs = 0, 0, 0.0, 0.0
        crossed: List[bool] = []

        def f(arr, probe=probe):
            loss, same = probe(arr)
            if not same:
                crossed.append(True)
            return loss

        work = value.astype(np.float64, copy=True)
        for idx in candidates:
            if checked >= n_coords:
                break
            crossed.clear()
            numeric = float(numerical_gradient(f, work, h, [idx]).flat[idx])
            if crossed:
                skipped += 1
                continue
            a = float(analytic.flat[idx])
            max_rel = max(max_rel, relative_error(a, numeric, tol))
            max_abs = max(max_abs, abs(a - numeric))
            checked += 1
        if checked < min(n_coords, value.size):
            logger.warning(f"参数组 {name}: 仅检查了 {checked} 个坐标 ({skipped} 个跨越 ReLU 折点)")
        rows.append({"group": name, "checked": checked, "skipped": skipped,
                     "max_rel_error": max_rel, "max_abs_error": max_abs,
                     "passed": checked > 0 and max_rel <= tol})
        logger.debug(f"gradcheck {name}: 最大相对误差 {max_rel:.3e} (检查 {checked}, 跳过 {skipped})")

    report = GradcheckReport(pd.DataFrame(rows), tol, h)
    failed = report.table.loc[~report.table["passed"], "group"].tolist()
    if failed:
        logger.warning(f"梯度检查未通过的参数组: {', '.join(failed)}")
    else:
        logger.info(f"梯度检查通过: {len(rows)} 行, tol={tol:g}, h={h:g}")
    return report
