"""
输出文件格式与读取器
CSV：以 "# key = <JSON>" 注释行保存元数据，随后是表头与数据行；JSON：{"metadata": ..., "columns": ...}。
浮点数统一按最短往返十进制（repr）写出，同一输入总是得到逐字节相同的文件。
"""
import json
import logging
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .correlations import CorrelationSeries
from .operators import SystemParams
from .phase_space import Marginal, WignerGrid
from .trajectory_engine import TrajectoryRecord, UnravelingConfig

logger = logging.getLogger("jc_blockade")

FORMATS = ("csv", "json")
RECORD_SECTIONS = ("config", "jumps", "current")


def _fmt(x) -> str:
    return repr(float(x))


def jsonable(value):
    """把 numpy 标量/数组与元组转换为可 JSON 序列化的内置类型。"""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.complexfloating, complex)):
        return [float(value.real), float(value.imag)]
    return value


def _dumps(value) -> str:
    return json.dumps(jsonable(value), ensure_ascii=False, sort_keys=True)


def _check_format(fmt: str) -> None:
    if fmt not in FORMATS:
        raise ValueError(f"未知的输出格式: {fmt!r}，可选 {FORMATS}")


def _split_complex(columns: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    out = {}
    for name, col in columns.items():
        col = np.asarray(col)
        if np.iscomplexobj(col):
            out[f"{name}_re"] = col.real
            out[f"{name}_im"] = col.imag
        else:
            out[name] = col
    return out


def table_text(columns: dict[str, np.ndarray], metadata: dict | None = None, fmt: str = "csv") -> str:
    """把等长列渲染为 CSV 或 JSON 文本（复数列拆成 _re/_im 两列）。"""
    _check_format(fmt)
    columns = _split_complex(columns)
    lengths = {np.asarray(col).size for col in columns.values()}
    if len(lengths) > 1:
        raise ValueError(f"列长度不一致: {sorted(lengths)}")
    metadata = metadata or {}
    if fmt == "json":
        payload = {"metadata": jsonable(metadata), "columns": {k: jsonable(np.asarray(v)) for k, v in columns.items()}}
        return json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n"
    lines = [f"# {key} = {_dumps(metadata[key])}" for key in sorted(metadata)]
    names = list(columns)
    lines.append(",".join(names))
    arrays = [np.asarray(columns[name]).ravel() for name in names]
    for row in zip(*arrays):
        lines.append(",".join(_fmt(x) for x in row))
    return "\n".join(lines) + "\n"


def parse_table(text: str) -> tuple[dict, dict[str, np.ndarray]]:
    """解析 table_text 的输出（自动识别 CSV/JSON），返回 (metadata, columns)。"""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        payload = json.loads(text)
        columns = {k: np.asarray(v, dtype=float) for k, v in payload["columns"].items()}
        return payload.get("metadata", {}), columns
    metadata = {}
    rows = []
    header = None
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            metadata[key.strip()] = json.loads(value.strip())
        elif header is None:
            header = line.strip().split(",")
        else:
            rows.append([float(x) for x in line.split(",")])
    if header is None:
        raise ValueError("缺少表头行")
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return metadata, {name: data[:, k] for k, name in enumerate(header)}


def write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.debug(f"写出 {path}")
    return path


def series_text(series: CorrelationSeries, fmt: str = "csv", header: dict | None = None) -> str:
    meta = dict(series.metadata)
    meta.update(kind=series.kind, normalization=series.normalization)
    if series.theta is not None:
        meta["theta"] = series.theta
    if header:
        meta["scenario"] = header
    return table_text({"tau": series.tau_grid, "value": series.values}, meta, fmt)


def write_series(series: CorrelationSeries, path: str | Path, fmt: str = "csv", header: dict | None = None) -> Path:
    return write_text(path, series_text(series, fmt, header))


def read_series(path: str | Path) -> CorrelationSeries:
    meta, columns = parse_table(Path(path).read_text(encoding="utf-8"))
    if "value" in columns:
        values = columns["value"]
    else:
        values = columns["value_re"] + 1j * columns["value_im"]
    kind = meta.pop("kind")
    normalization = meta.pop("normalization")
    theta = meta.pop("theta", None)
    meta.pop("scenario", None)
    return CorrelationSeries(columns["tau"], values, kind, normalization, theta, meta)


def record_text(record: TrajectoryRecord) -> str:
    """三段式轨迹记录：[config] 配置回显，[jumps] t,channel，[current] t,re[,im]。"""
    lines = ["[config]"]
    config = dict(record.config.to_dict(), params=asdict(record.params))
    for key in sorted(config):
        lines.append(f"{key} = {_dumps(config[key])}")
    lines += ["", "[jumps]", "t,channel"]
    lines += [f"{_fmt(t)},{channel}" for t, channel in record.jumps]
    lines += ["", "[current]"]
    complex_current = np.iscomplexobj(record.current_values)
    lines.append("t,re,im" if complex_current else "t,re")
    for t, value in zip(record.current_times, record.current_values):
        if complex_current:
            lines.append(f"{_fmt(t)},{_fmt(value.real)},{_fmt(value.imag)}")
        else:
            lines.append(f"{_fmt(t)},{_fmt(value)}")
    return "\n".join(lines) + "\n"


def write_record(record: TrajectoryRecord, path: str | Path) -> Path:
    return write_text(path, record_text(record))


def parse_record(text: str) -> TrajectoryRecord:
    sections: dict[str, list[str]] = {}
    current = None
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1]
            if current not in RECORD_SECTIONS:
                raise ValueError(f"未知的记录段: [{current}]")
            sections[current] = []
        elif current is None:
            raise ValueError("记录必须以段标题开头")
        else:
            sections[current].append(stripped)
    missing = [name for name in RECORD_SECTIONS if name not in sections]
    if missing:
        raise ValueError(f"记录缺少段: {missing}")

    config = {}
    for line in sections["config"]:
        key, _, value = line.partition("=")
        config[key.strip()] = json.loads(value.strip())
    params = SystemParams(**config.pop("params"))
    cfg = UnravelingConfig.from_dict(config)

    jumps = []
    for line in sections["jumps"][1:]:
        t, channel = line.split(",")
        jumps.append((float(t), channel))
    header = sections["current"][0].split(",")
    rows = np.array([[float(x) for x in line.split(",")] for line in sections["current"][1:]], dtype=float)
    rows = rows.reshape(-1, len(header))
    values = rows[:, 1] + 1j * rows[:, 2] if len(header) == 3 else rows[:, 1]
    return TrajectoryRecord(config=cfg, params=params, jumps=jumps, current_times=rows[:, 0], current_values=values)


def read_record(path: str | Path) -> TrajectoryRecord:
    return parse_record(Path(path).read_text(encoding="utf-8"))


def wigner_text(grid: WignerGrid, fmt: str = "csv", header: dict | None = None) -> str:
    """CSV：两行坐标轴注释后接矩阵，第 i 行对应 x_i；JSON：x、y、values 三个字段。"""
    _check_format(fmt)
    meta = {"cell_area": grid.cell_area, "normalization": grid.normalization()}
    if header:
        meta["scenario"] = header
    if fmt == "json":
        payload = {
            "metadata": jsonable(meta),
            "x": jsonable(grid.x_grid),
            "y": jsonable(grid.y_grid),
            "values": jsonable(grid.values),
        }
        return json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n"
    lines = [f"# {key} = {_dumps(meta[key])}" for key in sorted(meta)]
    lines.append("# x = " + ",".join(_fmt(x) for x in grid.x_grid))
    lines.append("# y = " + ",".join(_fmt(y) for y in grid.y_grid))
    lines += [",".join(_fmt(v) for v in row) for row in grid.values]
    return "\n".join(lines) + "\n"


def write_wigner(grid: WignerGrid, path: str | Path, fmt: str = "csv", header: dict | None = None) -> Path:
    return write_text(path, wigner_text(grid, fmt, header))


def read_wigner(path: str | Path) -> WignerGrid:
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        payload = json.loads(text)
        x, y = np.asarray(payload["x"], float), np.asarray(payload["y"], float)
        values = np.asarray(payload["values"], float)
        return WignerGrid(x, y, values, float(payload["metadata"]["cell_area"]))
    axes, rows, meta = {}, [], {}
    for line in text.splitlines():
        if line.startswith("# x = ") or line.startswith("# y = "):
            axes[line[2]] = np.array([float(v) for v in line[6:].split(",")])
        elif line.startswith("#"):
            key, _, value = line[1:].partition("=")
            meta[key.strip()] = json.loads(value.strip())
        elif line.strip():
            rows.append([float(v) for v in line.split(",")])
    return WignerGrid(axes["x"], axes["y"], np.array(rows), float(meta["cell_area"]))


def marginal_text(m: Marginal, fmt: str = "csv", header: dict | None = None) -> str:
    meta = {"theta": m.theta}
    if header:
        meta["scenario"] = header
    return table_text({"q": m.q, "density": m.density}, meta, fmt)


def write_marginal(m: Marginal, path: str | Path, fmt: str = "csv", header: dict | None = None) -> Path:
    return write_text(path, marginal_text(m, fmt, header))


def read_marginal(path: str | Path) -> Marginal:
    meta, columns = parse_table(Path(path).read_text(encoding="utf-8"))
    return Marginal(q=columns["q"], density=columns["density"], theta=float(meta["theta"]))
