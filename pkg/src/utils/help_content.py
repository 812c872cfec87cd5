# src/utils/help_content.py

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
帮助文档内容模块

`--help` 输出的完整参考：子命令、命令行参数、配置键与退出码。
配置键列表由配置数据类动态生成，保证与实际接受的键集合一致。
"""
from typing import Dict

from src.handlers.config_handler import SECTION_KEYS

# ----------------------------------------------------------------------------
# 子命令与参数
# ----------------------------------------------------------------------------

SUBCOMMANDS: Dict[str, str] = {
    "gen-data": "按 Wald 协议生成仿真数据集 (GT → 模糊+抽取得到 LR，SRF 投影得到 HR)",
    "train": "在训练集上训练 LAResNet，写出 train_log.tsv 与 final / best 检查点",
    "eval": "在测试集上计算 SAM, ERGAS, SCC, Q2n, PSNR, SSIM (单波段 HR 时另算 QNR, Dλ, Ds)",
    "gradcheck": "用中心差分核对每个参数组与输入的解析梯度",
    "ablate": "以相同配置与种子训练 {SC,LAC}×{NB,CB,DYB} 六种模式并输出对比表",
    "params": "打印参数总量与逐层明细 (--modes 时另列各模式的总量)",
    "inspect": "导出每个 LAConv 层局部权重的 avg / std 图 (PGM) 与统计 CSV",
}


def get_cli_help_text() -> str:
    return f"""
子命令:
{_format_pairs(SUBCOMMANDS)}

通用参数:
  --config PATH      配置文件 (key=value 文本或 JSON)，也可为 settings/presets 下的预设名: toy, wv3, qb, gf2, cave
  --data DIR         数据集目录 (覆盖 paths.data_dir)
  --out DIR          输出目录 (覆盖 paths.out_dir)
  --seed N           训练与初始化种子 (覆盖 train.seed)
  --checkpoint PATH  检查点目录 (覆盖 paths.checkpoint)
  --verbose          控制台输出 DEBUG 日志
  --log-dir DIR      日志文件目录 (默认 logs)
  --workers N        逐样本任务的线程数 (默认 CPU 数的一半)

子命令参数:
  gradcheck  --h STEP (默认 1e-5)   --tol TOL (默认 1e-4)   --coords N (每组坐标数，默认 16)
  params     --modes LIST   逗号分隔的模式，如 SC+NB,LAC+DYB；'all' 表示全部六种
  ablate     --modes LIST   只训练列出的模式 (默认全部六种)
  eval       --predict {{model,upsampled,gt}}   --split {{train,val,test}} (默认 test)
  inspect    --sample ID    数据集中的样本 id，或 const[:值] 表示空间常数输入 (默认第一个测试样本)

退出码:
  0  成功
  1  校验错误 (配置、形状、用法、梯度检查未通过、训练发散)
  2  I/O 错误 (文件或目录不存在、无法写入)

{get_config_keys_help_text()}
"""


def get_config_keys_help_text() -> str:
    lines = ["配置键 (键可写作 'section.key' 或唯一的裸键名；未知键会被拒绝):"]
    for section, keys in SECTION_KEYS.items():
        lines.append(f"  [{section}] {', '.join(keys)}")
    lines.append("  文件格式: 每行 key = value，'#' 之后为注释；JSON 可为扁平对象或按节分组。")
    return "\n".join(lines)


def _format_pairs(pairs: Dict[str, str], width: int = 12) -> str:
    return "\n".join(f"  {name:<{width}} {text}" for name, text in pairs.items())
