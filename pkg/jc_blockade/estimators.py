"""
轨迹记录上的估计量
波粒关联函数的操作性采样、条件态的时间平均、光电子等待时间直方图与计数统计。
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from .correlations import CorrelationSeries, h_theta
from .exceptions import ConfigError, EmptyEstimateError, InsufficientClicksError
from .operators import SystemParams, check_density_matrix
from .trajectory_engine import CHANNELS, TrajectoryRecord

logger = logging.getLogger("jc_blockade")

_CHANNEL_ALIASES = {"forward": "cavity", "cavity": "cavity", "side": "spontaneous", "spontaneous": "spontaneous"}


def _as_records(records) -> list[TrajectoryRecord]:
    if isinstance(records, TrajectoryRecord):
        return [records]
    records = list(records)
    if not records:
        raise EmptyEstimateError("没有轨迹记录")
    return records


def current_gain(r: float, kappa: float = 1.0) -> float:
    """零差电流中 ⟨A_θ⟩ 的增益 √(8κ(1−r))。"""
    return math.sqrt(8.0 * kappa * (1.0 - r))


def random_start_times(record: TrajectoryRecord, n: int, rng: np.random.Generator) -> np.ndarray:
    """在整条记录上均匀抽取 n 个起点（不以计数为条件的对照）。"""
    return np.sort(rng.uniform(0.0, record.duration, size=n))


def sample_h_operational(records, tau_grid, start_times=None) -> CorrelationSeries:
    """以 APD 计数时刻为起点对滤波电流取平均：H_θ(τ) = (1/N_s)Σ_j i(t_j + τ)。

    只使用整个延迟窗口都落在记录内的起点。

    Args:
        records: 一条或多条 wave_particle 记录（0 < r < 1）
        tau_grid: 严格递增的延迟网格
        start_times: 可选，替代计数时刻的起点（单条记录时为数组，多条时为数组列表）

    Returns:
        normalization="current" 的 CorrelationSeries；metadata 含 n_samples 与噪声尺度 √(B/(2N_s))

    Raises:
        EmptyEstimateError: 没有可用起点
    """
    records = _as_records(records)
    taus = np.asarray(tau_grid, dtype=float)
    if taus.ndim != 1 or taus.size == 0 or np.any(np.diff(taus) <= 0):
        raise ValueError("tau_grid 必须为非空且严格递增")
    first = records[0].config
    for rec in records:
        cfg = rec.config
        if cfg.scheme != "wave_particle" or not 0.0 < cfg.r < 1.0:
            raise ConfigError(f"需要 0 < r < 1 的 wave_particle 记录, 实际为 scheme={cfg.scheme} r={cfg.r}")
        if (cfg.r, cfg.theta, cfg.bandwidth) != (first.r, first.theta, first.bandwidth):
            raise ConfigError("合并的记录必须使用相同的 r、θ 与 B")
    if start_times is not None and len(records) == 1 and np.ndim(start_times) == 1:
        start_times = [start_times]

    total = np.zeros(taus.size)
    n_samples = 0
    for k, rec in enumerate(records):
        starts = rec.jump_times("cavity") if start_times is None else np.asarray(start_times[k], dtype=float)
        t_end = rec.current_times[-1]
        usable = starts[(starts + taus[0] >= 0.0) & (starts + taus[-1] <= t_end)]
        if usable.size == 0:
            continue
        points = usable[:, None] + taus[None, :]
        total += np.interp(points.ravel(), rec.current_times, rec.current_values).reshape(points.shape).sum(axis=0)
        n_samples += usable.size
    if n_samples == 0:
        raise EmptyEstimateError("没有完整落在记录内的 APD 计数，无法采样 H_θ")

    bandwidth = first.bandwidth
    meta = {
        "n_samples": n_samples,
        "bandwidth": bandwidth,
        "b_over_ns": bandwidth / n_samples,
        "noise_scale": math.sqrt(bandwidth / (2.0 * n_samples)),
        "gain": current_gain(first.r, records[0].params.kappa),
        "r": first.r,
        "conditioned_on": "clicks" if start_times is None else "given",
    }
    logger.info(f"H_θ 操作性采样: N_s={n_samples}, 噪声尺度 {meta['noise_scale']:.3f}")
    return CorrelationSeries(taus, total / n_samples, "H_theta", "current", theta=float(first.theta), metadata=meta)


def operational_reference(p: SystemParams, theta: float, r: float, bandwidth: float, tau_grid) -> CorrelationSeries:
    """操作性采样的回归公式对照：gain · (B e^{−Bt} ∗ H_θ^{photon_number})。

    tau_grid 须为均匀网格，且起点足够靠前使滤波器的初始条件可以忽略。
    """
    series = h_theta(p, theta, tau_grid).normalized("photon_number")
    filtered = series.filtered(bandwidth)
    gain = current_gain(r, p.kappa)
    meta = dict(filtered.metadata, gain=gain, r=r, bandwidth=bandwidth)
    return CorrelationSeries(filtered.tau_grid, gain * filtered.values, "H_theta", "current", theta, meta)


def time_averaged_state(record: TrajectoryRecord, window: tuple[float, float]) -> np.ndarray:
    """ρ̄ = (1/T)∫|ψ_REC⟩⟨ψ_REC|dt，对窗口内的快照做梯形积分。

    零长度窗口返回最接近该时刻的快照的纯态投影。
    """
    if record.snapshots.shape[0] == 0:
        raise EmptyEstimateError("记录不含条件态快照（snapshot_stride 未设置）")
    t0, t1 = float(window[0]), float(window[1])
    if t1 < t0:
        raise ValueError(f"窗口终点 {t1} 早于起点 {t0}")
    times = record.snapshot_times
    tol = 1e-9 * max(1.0, abs(t1))
    if t1 == t0:
        k = int(np.argmin(np.abs(times - t0)))
        psi = record.snapshots[k]
        return np.outer(psi, psi.conj())
    mask = (times >= t0 - tol) & (times <= t1 + tol)
    if np.count_nonzero(mask) < 2:
        raise EmptyEstimateError(f"窗口 [{t0}, {t1}] 内的快照少于两个")
    psis = record.snapshots[mask]
    weights = np.zeros(psis.shape[0])
    steps = np.diff(times[mask])
    weights[:-1] += 0.5 * steps
    weights[1:] += 0.5 * steps
    weights /= weights.sum()
    rho = np.einsum("k,ki,kj->ij", weights, psis, psis.conj())
    rho = 0.5 * (rho + rho.conj().T)
    return check_density_matrix(rho / np.trace(rho).real)


def growing_window_states(record: TrajectoryRecord, t_start: float, t_ends) -> list[np.ndarray]:
    """起点固定、终点逐渐延长的一组时间平均态。"""
    return [time_averaged_state(record, (t_start, t_end)) for t_end in np.atleast_1d(t_ends)]


def waiting_intervals(records, channel: str) -> np.ndarray:
    """同一通道相邻两次计数的间隔（只在单条记录内部取差）。"""
    if channel not in _CHANNEL_ALIASES:
        raise ValueError(f"未知的通道: {channel!r}")
    name = _CHANNEL_ALIASES[channel]
    parts = [np.diff(rec.jump_times(name)) for rec in _as_records(records)]
    return np.concatenate(parts) if parts else np.empty(0)


def waiting_histogram(records, channel: str, bins="fd") -> CorrelationSeries:
    """光电子等待时间的密度归一化直方图。

    Args:
        records: 一条或多条轨迹记录
        channel: forward/cavity 或 side/spontaneous
        bins: 传给 numpy.histogram_bin_edges 的分箱规则或箱数

    Returns:
        以箱中心为网格的 CorrelationSeries，metadata 含 count、mean、variance

    Raises:
        InsufficientClicksError: 该通道计数少于两次
    """
    intervals = waiting_intervals(records, channel)
    if intervals.size == 0:
        raise InsufficientClicksError(f"{channel} 通道计数少于两次，无法构造等待时间分布")
    edges = np.histogram_bin_edges(intervals, bins=bins, range=(0.0, float(intervals.max())))
    density, edges = np.histogram(intervals, bins=edges, density=True)
    centers = 0.5 * (edges[:-1] + edges[1:])
    meta = {
        "count": int(intervals.size),
        "mean": float(intervals.mean()),
        "variance": float(intervals.var(ddof=1)) if intervals.size > 1 else 0.0,
        "bin_width": float(edges[1] - edges[0]),
    }
    kind = "wait_forward" if _CHANNEL_ALIASES[channel] == "cavity" else "wait_side"
    return CorrelationSeries(centers, density, kind, "density", metadata=meta)


@dataclass
class ClickStatistics:
    """各通道计数合计与前向/侧向比。"""

    cavity: int
    spontaneous: int
    duration: float
    per_record: dict[str, np.ndarray]

    @property
    def forward_side_ratio(self) -> float:
        return self.cavity / self.spontaneous if self.spontaneous else float("inf")

    @property
    def cavity_rate(self) -> float:
        return self.cavity / self.duration

    @property
    def spontaneous_rate(self) -> float:
        return self.spontaneous / self.duration

    def to_dict(self) -> dict:
        return {
            "cavity": self.cavity,
            "spontaneous": self.spontaneous,
            "duration": self.duration,
            "forward_side_ratio": self.forward_side_ratio,
            "cavity_rate": self.cavity_rate,
            "spontaneous_rate": self.spontaneous_rate,
        }


def click_statistics(records) -> ClickStatistics:
    records = _as_records(records)
    per_record = {ch: np.array([rec.counts()[ch] for rec in records], dtype=int) for ch in CHANNELS}
    return ClickStatistics(
        cavity=int(per_record["cavity"].sum()),
        spontaneous=int(per_record["spontaneous"].sum()),
        duration=float(sum(rec.duration for rec in records)),
        per_record=per_record,
    )
