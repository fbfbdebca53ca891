import argparse
import json
import logging
import sys

from .command_handler import CommandHandler
from .config_service import ConfigService, Scenario
from .exceptions import JCError, ScenarioError
from .manifest_service import ManifestService

logger = logging.getLogger("jc_blockade")

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"

# 动词 -> (task, 子命令所在的配置项)
VERBS = {
    "steady": ("steady", None),
    "correlate": ("correlate", "correlate.kind"),
    "fourlevel": ("fourlevel", "fourlevel.action"),
    "trajectory": ("trajectory", "trajectory.action"),
    "wigner": ("wigner", None),
    "tomography": ("tomography", None),
    "scan": ("scan", None),
}


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="场景文件（TOML，或上次运行写出的 *_scenario.json）")
    common.add_argument("--seed", type=int, help="随机种子")
    common.add_argument("--out", help="输出路径前缀")
    common.add_argument("--n-max", dest="n_max", type=int, help="Fock 截断")
    common.add_argument("--format", choices=["csv", "json"], help="序列输出格式")
    common.add_argument("--preset", help="命名预设（见 presets 子命令）")
    common.add_argument("--strict", action="store_true", default=None, help="拒绝未知配置项")
    common.add_argument("-v", "--verbose", action="store_true", help="输出调试日志")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(prog="jc_blockade", description="受驱耗散 Jaynes–Cummings 多光子共振模拟")
    verbs = parser.add_subparsers(dest="verb", required=True)
    verbs.add_parser("steady", parents=[common], help="稳态摘要")
    correlate = verbs.add_parser("correlate", parents=[common], help="回归公式关联函数")
    correlate.add_argument("kind", nargs="?", choices=["g2", "g2ab", "htheta", "wait"])
    fourlevel = verbs.add_parser("fourlevel", parents=[common], help="四能级有效模型")
    fourlevel.add_argument("action", nargs="?", choices=["params", "g2ab", "resonant", "compare"])
    trajectory = verbs.add_parser("trajectory", parents=[common], help="量子轨迹")
    trajectory.add_argument("action", nargs="?", choices=["run", "ensemble", "sample-h"])
    verbs.add_parser("wigner", parents=[common], help="Wigner 函数与边缘分布")
    verbs.add_parser("tomography", parents=[common], help="自由衰减层析")
    verbs.add_parser("scan", parents=[common], help="失谐扫描")
    verbs.add_parser("presets", parents=[common], help="列出命名预设")
    verbs.add_parser("run", parents=[common], help="按场景文件中的 scenario.task 执行")
    return parser


def overrides_from_args(args: argparse.Namespace) -> dict:
    """把命令行参数转换为 "section.key" 覆盖项。"""
    overrides = {}
    if args.verb == "trajectory" and args.action == "ensemble":
        overrides["scenario.task"] = "ensemble"
    elif args.verb in VERBS:
        task, sub_key = VERBS[args.verb]
        overrides["scenario.task"] = task
        sub = getattr(args, "kind", None) or getattr(args, "action", None)
        if sub_key and sub:
            overrides[sub_key] = sub
    flags = {
        "seed": "scenario.seed",
        "out": "scenario.out",
        "n_max": "params.n_max",
        "format": "scenario.format",
        "preset": "scenario.preset",
        "strict": "scenario.strict",
    }
    for attr, key in flags.items():
        value = getattr(args, attr)
        if value is not None:
            overrides[key] = value
    return overrides


def run(scenario: Scenario, service: ConfigService | None = None) -> int:
    """执行一个已校验的场景，写出产物与清单。

    Returns:
        0 表示成功；任一模块抛出错误时为 1
    """
    service = service or ConfigService()
    manifest = ManifestService(scenario.out)
    echo = json.dumps(scenario.echo(), ensure_ascii=False, indent=2, sort_keys=True) + "\n"
    manifest.write_text("scenario.json", echo, "scenario")
    status = 0
    try:
        summary = CommandHandler(scenario, manifest, service).dispatch()
        print(summary)
    except (JCError, ValueError) as e:
        logger.error(f"任务 {scenario.task} 失败: {e}", exc_info=True)
        status = 1
    manifest.save_manifest()
    return status


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    service = ConfigService()
    if args.verb == "presets":
        for name, description in service.describe_presets():
            print(f"{name}: {description}")
        return 0
    try:
        user = service.load_file(args.config) if args.config else {}
        scenario = service.resolve(user, overrides_from_args(args))
    except ScenarioError as e:
        print("场景校验失败:", file=sys.stderr)
        for item in e.violations:
            print(f"  - {item}", file=sys.stderr)
        return 2
    return run(scenario, service)
