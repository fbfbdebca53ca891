import copy
import json
import logging
import math

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .exceptions import ConfigError, ScenarioError
from .operators import SystemParams
from .trajectory_engine import BEAT_RESOLUTION, MAX_FILTER_STEP, Schedule, UnravelingConfig

logger = logging.getLogger("jc_blockade")

SCHEMA_PATH = Path(__file__).parent / "_conf_schema.json"
PRESETS_PATH = Path(__file__).parent / "presets.json"
# 自动步长的上限 κdt
MAX_AUTO_DT = 1e-3


@dataclass
class Scenario:
    """完全解析后的场景：section -> key -> value，所有默认值均已填入。"""

    settings: dict[str, dict[str, Any]]

    def section(self, name: str) -> dict[str, Any]:
        return dict(self.settings.get(name, {}))

    def get(self, dotted: str) -> Any:
        section, _, key = dotted.partition(".")
        return self.settings[section][key]

    @property
    def task(self) -> str:
        return self.get("scenario.task")

    @property
    def seed(self) -> int:
        return int(self.get("scenario.seed"))

    @property
    def out(self) -> str:
        return self.get("scenario.out")

    @property
    def format(self) -> str:
        return self.get("scenario.format")

    def echo(self) -> dict[str, dict[str, Any]]:
        """可直接作为 --config 重新运行的回显（JSON 结构与 TOML 段一致）。"""
        return {section: dict(sorted(values.items())) for section, values in sorted(self.settings.items())}


def _flatten(data: dict, violations: list[str]) -> dict[str, Any]:
    flat = {}
    for section, values in data.items():
        if not isinstance(values, dict):
            violations.append(f"{section}: 顶层只能是 [section] 段, 实际为 {type(values).__name__}")
            continue
        for key, value in values.items():
            flat[f"{section}.{key}"] = value
    return flat


def _unflatten(flat: dict[str, Any]) -> dict[str, dict[str, Any]]:
    nested: dict[str, dict[str, Any]] = {}
    for dotted, value in flat.items():
        section, _, key = dotted.partition(".")
        nested.setdefault(section, {})[key] = value
    return nested


class ConfigService:
    """场景配置服务，负责加载默认值、合并预设/场景文件/命令行覆盖并校验。

    合并优先级（从低到高）：
    1. _conf_schema.json 中的默认值
    2. 命名预设（presets.json）
    3. 场景文件（TOML 或上次运行回显的 JSON）
    4. 命令行覆盖
    """

    def __init__(self, schema_path: Path = SCHEMA_PATH, presets_path: Path = PRESETS_PATH):
        self.schema_path = Path(schema_path)
        self.presets_path = Path(presets_path)
        self.schema = self._load_json(self.schema_path)
        self._defaults = self._load_defaults()
        self.presets = self._load_json(self.presets_path)

    @staticmethod
    def _load_json(path: Path) -> dict:
        try:
            with open(path, encoding="utf-8") as f:
                return json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"加载 {path} 失败: {e}", exc_info=True)
            raise

    def _load_defaults(self) -> dict[str, Any]:
        """从 _conf_schema.json 加载默认值，跳过分隔符（invisible 字段）。"""
        defaults = {}
        for key, props in self.schema.items():
            if not isinstance(props, dict) or props.get("invisible"):
                continue
            if "default" in props:
                defaults[key] = copy.deepcopy(props["default"])
        return defaults

    @property
    def fields(self) -> dict[str, dict]:
        return {k: v for k, v in self.schema.items() if isinstance(v, dict) and not v.get("invisible")}

    def describe_presets(self) -> list[tuple[str, str]]:
        return [(name, entry.get("description", "")) for name, entry in sorted(self.presets.items())]

    def parse_text(self, text: str) -> dict[str, Any]:
        """解析场景文本：以 { 开头按 JSON 回显处理，否则按 TOML 处理。"""
        try:
            if text.lstrip().startswith("{"):
                return json.loads(text)
            return tomllib.loads(text)
        except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
            raise ScenarioError([f"无法解析场景文本: {e}"]) from e

    def load_file(self, path: str | Path) -> dict[str, Any]:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ScenarioError([f"无法读取场景文件 {path}: {e}"]) from e
        return self.parse_text(text)

    def resolve(self, user: dict | None = None, overrides: dict[str, Any] | None = None) -> Scenario:
        """合并并校验，返回 Scenario。

        Args:
            user: 场景文件解析结果（section -> key -> value）
            overrides: 命令行覆盖，键为 "section.key"

        Raises:
            ScenarioError: 携带全部违规项
        """
        violations: list[str] = []
        overrides = dict(overrides or {})
        user_flat = _flatten(user or {}, violations)
        merged = copy.deepcopy(self._defaults)

        preset = overrides.get("scenario.preset") or user_flat.get("scenario.preset") or ""
        if preset:
            if preset not in self.presets:
                violations.append(f"scenario.preset={preset!r} 不存在，可选 {sorted(self.presets)}")
            else:
                preset_flat = _flatten(self.presets[preset].get("settings", {}), violations)
                merged.update(copy.deepcopy(preset_flat))
                logger.info(f"应用预设 {preset}")

        strict = bool(overrides.get("scenario.strict", user_flat.get("scenario.strict", False)))
        for key in sorted(set(user_flat) | set(overrides)):
            if key not in self.fields:
                if strict:
                    violations.append(f"未知配置项 {key}")
                else:
                    logger.warning(f"忽略未知配置项 {key}")
        merged.update({k: v for k, v in user_flat.items() if k in self.fields})
        if "params.detuning_over_g" in user_flat and "params.detuning_rule" not in user_flat:
            merged["params.detuning_rule"] = "explicit"
        merged.update({k: v for k, v in overrides.items() if k in self.fields})

        violations += self._check_fields(merged)
        scenario = Scenario(_unflatten(merged))
        if not violations:
            violations += self._check_cross(scenario)
        if violations:
            for item in violations:
                logger.debug(f"场景违规: {item}")
            raise ScenarioError(violations)
        logger.info(f"场景解析完成: task={scenario.task} seed={scenario.seed}")
        return scenario

    def _check_fields(self, merged: dict[str, Any]) -> list[str]:
        problems = []
        for key in sorted(merged):
            props = self.fields[key]
            value = merged[key]
            kind = props.get("type")
            if kind == "float" and isinstance(value, int) and not isinstance(value, bool):
                value = merged[key] = float(value)
            expected = {"int": int, "float": float, "bool": bool, "string": str, "list": list}[kind]
            if not isinstance(value, expected) or (kind == "int" and isinstance(value, bool)):
                problems.append(f"{key}: 期望 {kind}, 实际为 {value!r}")
                continue
            if kind == "float" and not math.isfinite(value):
                problems.append(f"{key}={value} 不是有限值")
                continue
            if "choices" in props and value not in props["choices"]:
                problems.append(f"{key}={value!r} 不在可选值 {props['choices']} 中")
            low, high = props.get("min"), props.get("max")
            if kind in ("int", "float"):
                if low is not None and high is not None and not low <= value <= high:
                    problems.append(f"{key}={value} 超出范围 [{low}, {high}]")
                elif low is not None and value < low:
                    problems.append(f"{key}={value} 小于下限 {low}")
                elif high is not None and value > high:
                    problems.append(f"{key}={value} 大于上限 {high}")
        return problems

    def _check_cross(self, scenario: Scenario) -> list[str]:
        """字段之间的约束，以及由字段构造出的物理参数与轨迹配置的约束。"""
        problems = []
        for key in ("correlate.tau_span", "trajectory.duration", "fourlevel.tau_span", "wigner.extent"):
            if scenario.get(key) <= 0.0:
                problems.append(f"{key}={scenario.get(key)} 必须为正")
        if scenario.get("scan.detuning_from") >= scenario.get("scan.detuning_to"):
            problems.append("scan.detuning_from 必须小于 scan.detuning_to")
        try:
            params = self.to_system_params(scenario)
        except ConfigError as e:
            return problems + [f"params: {e}"]
        if scenario.task in ("trajectory", "ensemble"):
            try:
                cfg = self.unraveling_config(scenario, params)
                problems += [f"trajectory: {item}" for item in cfg.violations(params)]
            except ConfigError as e:
                problems.append(f"trajectory: {e}")
        return problems

    def to_system_params(self, scenario: Scenario) -> SystemParams:
        """命令行单位到内部单位（κ = 1）的唯一换算入口。"""
        pr = scenario.section("params")
        sign = pr["detuning_sign"]
        if pr["detuning_rule"] == "two-photon":
            magnitude = 1.0 / math.sqrt(2.0) + math.sqrt(2.0) * pr["eps_over_g"] ** 2
        else:
            magnitude = pr["detuning_over_g"]
        p = SystemParams.from_ratios(
            g_over_kappa=pr["g_over_kappa"],
            eps_over_g=pr["eps_over_g"],
            detuning_over_g=sign * magnitude,
            gamma_over_kappa=pr["gamma_over_kappa"],
            n_max=pr["n_max"],
        )
        if pr["impedance_matched"]:
            p = p.with_(impedance_matched=True)
        return p

    def unraveling_config(self, scenario: Scenario, params: SystemParams | None = None) -> UnravelingConfig:
        """由 [trajectory] 段构造 UnravelingConfig；dt = 0 时自动选取步长。"""
        params = params or self.to_system_params(scenario)
        tr = scenario.section("trajectory")
        bandwidth = tr["bandwidth_over_kappa"] * params.kappa
        dt = tr["dt"] / params.kappa
        if dt == 0.0:
            candidates = [MAX_AUTO_DT / params.kappa]
            if params.g > 0.0:
                candidates.append(math.pi / (BEAT_RESOLUTION * params.g))
            if tr["scheme"] != "direct" and bandwidth > 0.0:
                candidates.append(MAX_FILTER_STEP / bandwidth)
            dt = min(candidates)
        sign = scenario.get("params.detuning_sign")
        detuning_schedule = None
        if tr["detuning_schedule"]:
            pairs = [(t / params.kappa, sign * v * params.g) for t, v in self._pairs(tr["detuning_schedule"], "detuning_schedule")]
            detuning_schedule = Schedule.from_pairs(pairs)
        theta_schedule = None
        if tr["theta_schedule"]:
            pairs = [(t / params.kappa, v) for t, v in self._pairs(tr["theta_schedule"], "theta_schedule")]
            theta_schedule = Schedule.from_pairs(pairs)
        return UnravelingConfig(
            scheme=tr["scheme"],
            dt=dt,
            duration=tr["duration"] / params.kappa,
            seed=scenario.seed,
            r=tr["r"],
            theta=tr["theta"],
            bandwidth=bandwidth,
            integrator=tr["integrator"],
            detuning_schedule=detuning_schedule,
            theta_schedule=theta_schedule,
            snapshot_stride=tr["snapshot_stride"] or None,
        )

    @staticmethod
    def _pairs(raw: list, name: str) -> list[tuple[float, float]]:
        pairs = []
        for item in raw:
            if not isinstance(item, (list, tuple)) or len(item) != 2:
                raise ConfigError(f"{name} 的每一项必须是 [时间, 取值], 实际为 {item!r}")
            pairs.append((float(item[0]), float(item[1])))
        return pairs


def parse_scenario(text: str, overrides: dict[str, Any] | None = None, service: ConfigService | None = None) -> Scenario:
    """解析场景文本（TOML 或 JSON 回显）并校验。"""
    service = service or ConfigService()
    return service.resolve(service.parse_text(text), overrides)
