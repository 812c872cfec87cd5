#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
命令行入口：gen-data | train | eval | gradcheck | ablate | params | inspect
"""
import sys
import logging
import argparse
from typing import Callable, Dict, List, Optional

from src.core.constants import DatasetSplit, EXIT_OK, EXIT_VALIDATION, EXIT_IO
from src.core.data_manager import DatasetManager
from src.core.exceptions import ConfigError, UsageError
from src.core.laconv import LAConvMode
from src.handlers.compute_handler import ComputeHandler
from src.handlers.config_handler import ConfigHandler, RunConfig
from src.handlers.export_handler import ExportHandler, constant_sample
from src.handlers.stats_handler import StatsHandler, Prediction, load_model
from src.utils.help_content import SUBCOMMANDS, get_cli_help_text
from src.utils.logger import setup_logger

logger = logging.getLogger(__name__)


class CliParser(argparse.ArgumentParser):
    """解析失败时抛出 UsageError，由 run() 统一映射为退出码。"""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> CliParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="配置文件路径或预设名")
    common.add_argument("--data", help="数据集目录")
    common.add_argument("--out", help="输出目录")
    common.add_argument("--seed", type=int, help="训练与初始化种子")
    common.add_argument("--checkpoint", help="检查点目录")
    common.add_argument("--workers", type=int, help="逐样本任务的线程数")
    common.add_argument("--verbose", action="store_true", help="控制台输出 DEBUG 日志")
    common.add_argument("--log-dir", default="logs", help="日志文件目录")

    parser = CliParser(prog="lafusion", description="LAConv / LAResNet 图像融合实验工具",
                       epilog=get_cli_help_text(), formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}", parser_class=CliParser)
    sub.required = True
    parsers = {name: sub.add_parser(name, parents=[common], help=text, description=text,
                                    epilog=get_cli_help_text(), formatter_class=argparse.RawDescriptionHelpFormatter)
               for name, text in SUBCOMMANDS.items()}

    parsers["gradcheck"].add_argument("--h", type=float, default=1e-5, help="中心差分步长")
    parsers["gradcheck"].add_argument("--tol", type=float, default=1e-4, help="最大相对误差")
    parsers["gradcheck"].add_argument("--coords", type=int, default=16, help="每个参数组检查的坐标数")
    parsers["params"].add_argument("--modes", help="逗号分隔的模式列表，或 all")
    parsers["ablate"].add_argument("--modes", help="逗号分隔的模式列表 (默认全部六种)")
    parsers["eval"].add_argument("--predict", default="model", choices=[p.value for p in Prediction])
    parsers["eval"].add_argument("--split", default="test", choices=[s.value for s in DatasetSplit])
    parsers["inspect"].add_argument("--sample", help="样本 id，或 const[:值]")
    parsers["inspect"].add_argument("--no-overview", action="store_true", help="不渲染总览 PNG")
    return parser


def parse_modes(text: Optional[str]) -> Optional[List[LAConvMode]]:
    if not text:
        return None
    if text.strip().lower() == "all":
        return LAConvMode.ablation_grid()
    return [LAConvMode.from_str(part.strip()) for part in text.split(",") if part.strip()]


def _require_checkpoint(run_config: RunConfig) -> str:
    if not run_config.paths.checkpoint:
        raise ConfigError("需要检查点: 请通过 --checkpoint 或 paths.checkpoint 指定")
    return run_config.paths.checkpoint


# ----------------------------------------------------------------------------
# 子命令
# ----------------------------------------------------------------------------

def cmd_gen_data(args, run_config: RunConfig, config_handler: ConfigHandler) -> int:
    out_dir = args.out or run_config.paths.data_dir
    path = ComputeHandler(run_config, config_handler, args.workers).generate_dataset(out_dir)
    print(path)
    return EXIT_OK


def cmd_train(args, run_config: RunConfig, config_handler: ConfigHandler) -> int:
    result = ComputeHandler(run_config, config_handler, args.workers).train()
    print(f"final_loss\t{result.final_loss:.17g}")
    print(f"final_mse\t{result.final_mse:.17g}")
    print(f"final\t{result.final_checkpoint}")
    print(f"best\t{result.best_checkpoint}\tepoch {result.best_epoch}")
    return EXIT_OK


def cmd_eval(args, run_config: RunConfig, config_handler: ConfigHandler) -> int:
    predict = Prediction.from_str(args.predict)
    params, model_config = None, None
    if predict == Prediction.MODEL:
        params, model_config = load_model(_require_checkpoint(run_config))
    dataset = DatasetManager().setup_dataset_directory(run_config.paths.data_dir)
    report = StatsHandler(run_config.metric, args.workers).evaluate(
        dataset, predict, params, model_config, DatasetSplit(args.split), run_config.paths.out_dir)
    print(report.format_table())
    return EXIT_OK


def cmd_gradcheck(args, run_config: RunConfig, config_handler: ConfigHandler) -> int:
    report = ComputeHandler(run_config, config_handler).gradcheck(args.h, args.tol, args.coords)
    print(report.to_text())
    print("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_VALIDATION


def cmd_ablate(args, run_config: RunConfig, config_handler: ConfigHandler) -> int:
    compute = ComputeHandler(run_config, config_handler, args.workers)
    table = StatsHandler(run_config.metric, args.workers).ablate(
        compute, run_config.paths.data_dir, run_config.paths.out_dir, parse_modes(args.modes))
    print(table.to_string(index=False))
    return EXIT_OK


def cmd_params(args, run_config: RunConfig, config_handler: ConfigHandler) -> int:
    compute = ComputeHandler(run_config, config_handler)
    total, table = compute.parameter_table()
    print(total)
    print(table.to_string(index=False))
    modes = parse_modes(args.modes)
    if modes:
        print()
        print(compute.mode_table(modes).to_string(index=False))
    return EXIT_OK


def cmd_inspect(args, run_config: RunConfig, config_handler: ConfigHandler) -> int:
    params, model_config = load_model(_require_checkpoint(run_config))
    choice = args.sample or ""
    if choice.startswith("const"):
        value = float(choice.split(":", 1)[1]) if ":" in choice else 0.5
        sample = constant_sample(model_config, run_config.data.scene_size, value)
    else:
        dataset = DatasetManager().setup_dataset_directory(run_config.paths.data_dir)
        if not choice:
            ids = dataset.get_split_ids(DatasetSplit.TEST) or dataset.get_split_ids(DatasetSplit.TRAIN)
            if not ids:
                raise ValueError(f"数据集 {run_config.paths.data_dir} 中没有可用样本")
            choice = ids[0]
        sample = dataset.load_sample(choice)
    table = ExportHandler().inspect_weight_maps(params, model_config, sample, run_config.paths.out_dir,
                                                overview=not args.no_overview)
    print(table.to_string(index=False))
    return EXIT_OK


COMMANDS: Dict[str, Callable[..., int]] = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "ablate": cmd_ablate,
    "params": cmd_params,
    "inspect": cmd_inspect,
}


def run(argv: List[str]) -> int:
    """解析参数并分派子命令；返回退出码 0 (成功) / 1 (校验错误) / 2 (I/O 错误)。"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(parser.format_usage(), file=sys.stderr, end="")
        print(str(e), file=sys.stderr)
        return EXIT_VALIDATION
    except SystemExit as e:
        return EXIT_OK if e.code in (None, 0) else EXIT_VALIDATION

    setup_logger(logging.DEBUG if args.verbose else logging.INFO, args.log_dir)
    try:
        config_handler = ConfigHandler()
        overrides = {"seed": args.seed, "data_dir": args.data, "out_dir": args.out, "checkpoint": args.checkpoint}
        run_config = config_handler.load(args.config, overrides)
        return COMMANDS[args.command](args, run_config, config_handler)
    except OSError as e:
        logger.error(f"{args.command} 失败 (I/O): {e}", exc_info=True)
        print(f"I/O 错误: {e}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, RuntimeError, KeyError) as e:
        logger.error(f"{args.command} 失败: {e}", exc_info=True)
        print(f"错误: {e}", file=sys.stderr)
        return EXIT_VALIDATION
