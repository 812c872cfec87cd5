#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
配置管理处理器
"""
import os
import json
import logging
from dataclasses import dataclass, field, fields
from typing import Dict, Any, Optional, Tuple

from src.core.exceptions import ConfigError
from src.core.laresnet import ModelConfig
from src.core.optim import TrainConfig
from src.core.metrics import MetricConfig
from src.core.data_sim import SceneSpec, DegradeSpec, load_srf

logger = logging.getLogger(__name__)

SETTINGS_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))), "settings")
PRESETS_DIR = os.path.join(SETTINGS_DIR, "presets")


@dataclass(frozen=True)
class DataConfig:
    scene_size: int = 64
    n_samples: int = 20
    n_shapes: int = 8
    smoothness: float = 4.0
    shape_contrast: float = 0.3
    spectral_jitter: float = 0.1
    blur_size: int = 3
    blur_sigma: float = 0.5
    srf_file: str = ""
    split_train: float = 0.7
    split_val: float = 0.2
    split_test: float = 0.1
    data_seed: int = 0

    @property
    def fractions(self) -> Tuple[float, float, float]:
        return (self.split_train, self.split_val, self.split_test)


@dataclass(frozen=True)
class PathsConfig:
    data_dir: str = "data"
    out_dir: str = "runs"
    checkpoint: str = ""


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    metric: MetricConfig = field(default_factory=MetricConfig)
    data: DataConfig = field(default_factory=DataConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def scene_spec(self) -> SceneSpec:
        return SceneSpec(seed=self.data.data_seed, bands=self.model.c_lr, size=self.data.scene_size,
                         n_shapes=self.data.n_shapes, smoothness=self.data.smoothness,
                         shape_contrast=self.data.shape_contrast, spectral_jitter=self.data.spectral_jitter)

    def degrade_spec(self) -> DegradeSpec:
        srf = load_srf(self.data.srf_file) if self.data.srf_file else None
        return DegradeSpec(ratio=self.model.upsample_factor, blur_size=self.data.blur_size,
                           blur_sigma=self.data.blur_sigma, hr_bands=self.model.c_hr, srf=srf)

    def to_sections(self) -> Dict[str, Dict[str, str]]:
        return {
            "model": self.model.to_mapping(),
            "train": {f.name: _as_text(getattr(self.train, f.name)) for f in fields(self.train)},
            "metric": {f.name: _as_text(getattr(self.metric, f.name)) for f in fields(self.metric)},
            "data": {f.name: _as_text(getattr(self.data, f.name)) for f in fields(self.data)},
            "paths": {f.name: _as_text(getattr(self.paths, f.name)) for f in fields(self.paths)},
        }


def _as_text(value) -> str:
    return value.value if hasattr(value, "value") else str(value)


SECTION_KEYS: Dict[str, Tuple[str, ...]] = {
    "model": tuple(f.name for f in fields(ModelConfig)),
    "train": tuple(f.name for f in fields(TrainConfig)),
    "metric": tuple(f.name for f in fields(MetricConfig)),
    "data": tuple(f.name for f in fields(DataConfig)),
    "paths": tuple(f.name for f in fields(PathsConfig)),
}
KEY_SECTIONS: Dict[str, str] = {key: section for section, keys in SECTION_KEYS.items() for key in keys}


class ConfigHandler:
    """处理配置文件的读取、合并、类型转换与跨字段校验。"""

    def __init__(self, settings_dir: str = SETTINGS_DIR):
        self.settings_dir = settings_dir
        self.presets_dir = os.path.join(settings_dir, "presets")
        self.current_config_file: Optional[str] = None

    # ------------------------------------------------------------------
    # 读取
    # ------------------------------------------------------------------

    def resolve_config_path(self, name: str) -> str:
        """既接受文件路径，也接受 settings/presets 下的预设名 (如 toy, wv3)。"""
        if os.path.isfile(name):
            return name
        for candidate in (os.path.join(self.presets_dir, f"{name}.cfg"), os.path.join(self.presets_dir, name)):
            if os.path.isfile(candidate):
                return candidate
        raise FileNotFoundError(f"配置文件不存在: {name}")

    @staticmethod
    def _qualify(key: str, source: str) -> Tuple[str, str]:
        if '.' in key:
            section, name = key.split('.', 1)
            if name not in SECTION_KEYS.get(section, ()):
                raise ConfigError(f"{source}: 未知的配置键 '{key}'")
            return section, name
        if key not in KEY_SECTIONS:
            raise ConfigError(f"{source}: 未知的配置键 '{key}'")
        return KEY_SECTIONS[key], key

    def parse_key_value_text(self, text: str, source: str = "<text>") -> Dict[str, Dict[str, str]]:
        """逐行解析 key = value，'#' 之后为注释，空行忽略。键可带 'section.' 前缀。"""
        sections: Dict[str, Dict[str, str]] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            if '=' not in line:
                raise ConfigError(f"{source}:{lineno}: 行格式无效 (缺少 '='): {raw.strip()}")
            key, value = (part.strip() for part in line.split('=', 1))
            section, name = self._qualify(key, f"{source}:{lineno}")
            sections.setdefault(section, {})[name] = value
        return sections

    def parse_json(self, data: Dict[str, Any], source: str = "<json>") -> Dict[str, Dict[str, str]]:
        """JSON 既可为扁平对象，也可按 model/train/metric/data/paths 分节。"""
        if not isinstance(data, dict):
            raise ConfigError(f"{source}: JSON 配置必须是对象")
        sections: Dict[str, Dict[str, str]] = {}
        for key, value in data.items():
            if key == "version":
                continue
            if key in SECTION_KEYS and isinstance(value, dict):
                for sub_key, sub_value in value.items():
                    section, name = self._qualify(f"{key}.{sub_key}", source)
                    sections.setdefault(section, {})[name] = sub_value
            else:
                section, name = self._qualify(key, source)
                sections.setdefault(section, {})[name] = value
        return sections

    def read_file(self, path: str) -> Dict[str, Dict[str, str]]:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
        if path.endswith('.json'):
            try:
                data = json.loads(text)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}: JSON 解析失败: {e}")
            return self.parse_json(data, path)
        return self.parse_key_value_text(text, path)

    @staticmethod
    def merge(*layers: Dict[str, Dict[str, str]]) -> Dict[str, Dict[str, str]]:
        merged: Dict[str, Dict[str, str]] = {}
        for layer in layers:
            for section, values in layer.items():
                merged.setdefault(section, {}).update(values)
        return merged

    def load(self, config: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        """默认设置 (settings/default.json) ← 配置文件 ← 命令行覆盖，然后构建并校验。"""
        layers = []
        default_path = os.path.join(self.settings_dir, "default.json")
        if os.path.isfile(default_path):
            layers.append(self.read_file(default_path))
        if config:
            path = self.resolve_config_path(config)
            layers.append(self.read_file(path))
            self.current_config_file = path
            logger.info(f"已加载配置: {path}")
        if overrides:
            layers.append(self.parse_json({k: v for k, v in overrides.items() if v is not None}, "<命令行>"))
        return self.build(self.merge(*layers))

    # ------------------------------------------------------------------
    # 构建与校验
    # ------------------------------------------------------------------

    @staticmethod
    def _typed(cls, values: Dict[str, Any], section: str):
        kwargs = {}
        for f in fields(cls):
            if f.name not in values:
                continue
            value = values[f.name]
            try:
                if f.type in (int, "int"):
                    kwargs[f.name] = int(value)
                elif f.type in (float, "float"):
                    kwargs[f.name] = float(value)
                else:
                    kwargs[f.name] = str(value)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"{section}.{f.name} 的值无效: '{value}' ({e})")
        return cls(**kwargs)

    def build(self, sections: Dict[str, Dict[str, Any]]) -> RunConfig:
        run = RunConfig(
            model=ModelConfig.from_mapping(sections.get("model", {})),
            train=TrainConfig.from_mapping(sections.get("train", {})),
            metric=MetricConfig.from_mapping(sections.get("metric", {})),
            data=self._typed(DataConfig, sections.get("data", {}), "data"),
            paths=self._typed(PathsConfig, sections.get("paths", {}), "paths"),
        )
        self.validate(run)
        return run

    def validate(self, run: RunConfig) -> RunConfig:
        """所有跨字段约束，在任何计算开始之前检查。"""
        run.model.validate()
        run.train.validate()
        run.metric.validate()
        data = run.data
        r = run.model.upsample_factor
        if run.metric.ratio != r:
            raise ConfigError(f"metric.ratio ({run.metric.ratio}) 必须等于 model.upsample_factor ({r})")
        if data.scene_size < 1 or data.scene_size % r:
            raise ConfigError(f"data.scene_size ({data.scene_size}) 必须为正且能被 upsample_factor ({r}) 整除")
        if data.n_samples < 1 or data.n_shapes < 0:
            raise ConfigError("data.n_samples 必须 ≥ 1，data.n_shapes 必须 ≥ 0")
        if any(f < 0 for f in data.fractions) or abs(sum(data.fractions) - 1.0) > 1e-9:
            raise ConfigError(f"数据划分比例必须非负且和为 1，实际: {data.fractions}")
        if data.blur_size < 1 or data.blur_size % 2 == 0 or data.blur_sigma <= 0:
            raise ConfigError(f"模糊核参数无效: blur_size={data.blur_size}, blur_sigma={data.blur_sigma}")
        if data.smoothness <= 0:
            raise ConfigError(f"data.smoothness 必须为正数，实际: {data.smoothness}")
        if data.shape_contrast < 0 or data.spectral_jitter < 0:
            raise ConfigError(f"data.shape_contrast 与 data.spectral_jitter 必须非负，"
                              f"实际: {data.shape_contrast}, {data.spectral_jitter}")
        if data.srf_file:
            srf = load_srf(data.srf_file)
            if srf.shape != (run.model.c_hr, run.model.c_lr):
                raise ConfigError(f"SRF 形状应为 (c_hr={run.model.c_hr}, c_lr={run.model.c_lr})，实际: {srf.shape}")
        logger.debug(f"配置校验通过: 模式 {run.model.mode.label}, 预设 {run.train.preset.value}")
        return run

    def save(self, run: RunConfig, path: str):
        """以 key=value 文本写出完整配置，可直接作为 --config 使用。"""
        lines = []
        for section, values in run.to_sections().items():
            lines.append(f"# {section}")
            lines += [f"{section}.{key} = {value}" for key, value in values.items()]
        with open(path, 'w', encoding='utf-8') as f:
            f.write("\n".join(lines) + "\n")
        logger.debug(f"配置已保存到: {path}")
