"""
量子轨迹
三种测量展开：直接光子计数 (direct)、波粒关联器 (wave_particle，分束比 r 的 APD 加平衡零差) 与外差探测 (heterodyne)。
非厄米哈密顿量 H′ 的精确传播子与测量更新按 Strang 分裂组合：U(dt/2) · 随机步 · U(dt/2)。
随机步默认用 Kloeden–Platen 显式二阶弱格式（三点分布增量），euler 模式用于交叉验证。
每步至多一次跃迁：一个均匀随机数与各通道的累积概率比较，概率取步首的条件态。
"""
import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np
from scipy import linalg

from .exceptions import ConfigError, DimensionMismatchError, DtTooLargeError, NormalizationError
from .operators import (
    SystemParams,
    build_atom_ops,
    build_cavity_ops,
    embed_cavity_state,
    excitation_number,
    nonhermitian_hamiltonian,
)
from .task_scheduler import TaskScheduler

logger = logging.getLogger("jc_blockade")

SCHEMES = ("direct", "wave_particle", "heterodyne", "free_decay")
INTEGRATORS = ("weak2", "euler")
CHANNELS = ("cavity", "spontaneous")
MAX_JUMP_PROBABILITY = 0.1
MAX_FILTER_STEP = 0.1
# dt ≤ π/(40g)
BEAT_RESOLUTION = 40.0
_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class Schedule:
    """分段线性时间表，区间外保持端点值。"""

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        values = tuple(float(v) for v in self.values)
        if not times or len(times) != len(values):
            raise ConfigError(f"时间表长度不一致: {len(times)} 个时间点, {len(values)} 个取值")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("时间表的时间点必须严格递增")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def linear(cls, start: float, stop: float, duration: float) -> "Schedule":
        return cls((0.0, duration), (start, stop))

    @classmethod
    def from_pairs(cls, pairs) -> "Schedule":
        pairs = [tuple(pair) for pair in pairs]
        return cls(tuple(t for t, _ in pairs), tuple(v for _, v in pairs))

    def to_pairs(self) -> list[list[float]]:
        return [[t, v] for t, v in zip(self.times, self.values)]

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))


@dataclass(frozen=True)
class UnravelingConfig:
    """一次测量展开的全部设置。

    bandwidth 为探测器带宽 B（rad/时间），theta 为本振相位；
    detuning_schedule / theta_schedule 存在时覆盖常数 Δω_d 与 θ。
    snapshot_stride 为 None 时不保存条件态；current_stride 为 None 时按 ceil((1/B)/(4dt)) 采样电流。
    """

    scheme: str = "direct"
    dt: float = 1e-3
    duration: float = 10.0
    seed: int = 0
    r: float = 1.0
    theta: float = 0.0
    bandwidth: float = 10.0
    integrator: str = "weak2"
    detuning_schedule: Schedule | None = None
    theta_schedule: Schedule | None = None
    snapshot_stride: int | None = None
    current_stride: int | None = None
    trajectory_index: int = 0
    free_decay_detuning: float = 0.0
    residual_fraction: float = 1e-4

    def violations(self, p: SystemParams | None = None) -> list[str]:
        """列出全部不满足的约束（空列表表示合法）。"""
        problems = []
        if self.scheme not in SCHEMES:
            problems.append(f"scheme={self.scheme!r} 不在 {SCHEMES} 中")
        if self.integrator not in INTEGRATORS:
            problems.append(f"integrator={self.integrator!r} 不在 {INTEGRATORS} 中")
        if not 0.0 <= self.r <= 1.0:
            problems.append(f"r={self.r} 超出 [0, 1]")
        if not self.dt > 0.0:
            problems.append(f"dt={self.dt} 必须为正")
        if not self.duration > 0.0:
            problems.append(f"duration={self.duration} 必须为正")
        if int(self.seed) != self.seed or self.seed < 0:
            problems.append(f"seed={self.seed} 必须为非负整数")
        if self.scheme in ("wave_particle", "heterodyne"):
            if not self.bandwidth > 0.0:
                problems.append(f"bandwidth={self.bandwidth} 必须为正")
            elif self.bandwidth * self.dt > MAX_FILTER_STEP * (1.0 + 1e-12):
                problems.append(f"bandwidth·dt={self.bandwidth * self.dt:.4g} 超过 {MAX_FILTER_STEP}")
        for name in ("snapshot_stride", "current_stride"):
            stride = getattr(self, name)
            if stride is not None and (int(stride) != stride or stride < 1):
                problems.append(f"{name}={stride} 必须为 ≥1 的整数")
        if not 0.0 < self.residual_fraction < 1.0:
            problems.append(f"residual_fraction={self.residual_fraction} 必须在 (0, 1) 内")
        if p is not None and p.g > 0.0 and self.dt > 0.0:
            limit = math.pi / (BEAT_RESOLUTION * p.g)
            if self.dt > limit * (1.0 + 1e-12):
                problems.append(f"dt={self.dt:.4g} 超过 π/(40g)={limit:.4g}，无法分辨量子拍")
        return problems

    def validate(self, p: SystemParams | None = None) -> None:
        problems = self.violations(p)
        if problems:
            raise ConfigError("轨迹配置不合法: " + "; ".join(problems))

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.duration / self.dt)))

    @property
    def sample_stride(self) -> int:
        """电流记录的采样间隔（步数）。"""
        if self.current_stride is not None:
            return int(self.current_stride)
        return max(1, math.ceil((1.0 / self.bandwidth) / (4.0 * self.dt) - 1e-9))

    def theta_at(self, t: float) -> float:
        return self.theta_schedule(t) if self.theta_schedule is not None else self.theta

    def detuning_at(self, p: SystemParams, t: float) -> float:
        return self.detuning_schedule(t) if self.detuning_schedule is not None else p.delta_omega_d

    def rng(self) -> np.random.Generator:
        """(seed, trajectory_index) 决定的独立 Philox 随机流。"""
        return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(self.seed), int(self.trajectory_index)])))

    def for_trajectory(self, index: int) -> "UnravelingConfig":
        return replace(self, trajectory_index=int(index))

    def to_dict(self) -> dict:
        data = {name: getattr(self, name) for name in self.__dataclass_fields__}
        for name in ("detuning_schedule", "theta_schedule"):
            if data[name] is not None:
                data[name] = data[name].to_pairs()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "UnravelingConfig":
        data = dict(data)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"未知的轨迹配置项: {sorted(unknown)}")
        for name in ("detuning_schedule", "theta_schedule"):
            if data.get(name) is not None and not isinstance(data[name], Schedule):
                data[name] = Schedule.from_pairs(data[name])
        return cls(**data)


class ConditionedState:
    """条件态：归一化视图 psi、自上次跃迁以来未归一化态的 log‖ψ̄‖² 以及时间 t。"""

    def __init__(self, psi: np.ndarray, t: float = 0.0):
        psi = np.asarray(psi, dtype=complex).copy()
        norm2 = float(np.vdot(psi, psi).real)
        if norm2 <= 0.0:
            raise NormalizationError("初始态为零向量")
        self.psi = psi / math.sqrt(norm2)
        self.t = float(t)
        self.log_norm = 0.0

    def absorb(self, psi_bar: np.ndarray, t: float) -> None:
        """接受一步连续演化的未归一化结果并重新归一化。"""
        norm2 = float(np.vdot(psi_bar, psi_bar).real)
        if not norm2 > 0.0:
            raise NormalizationError(f"t={t:.6g} 处条件态范数为零")
        self.log_norm += math.log(norm2)
        self.psi = psi_bar / math.sqrt(norm2)
        self.t = float(t)

    def jump(self, op: np.ndarray) -> None:
        psi = op @ self.psi
        norm2 = float(np.vdot(psi, psi).real)
        if not norm2 > 0.0:
            raise NormalizationError(f"t={self.t:.6g} 处跃迁后的态为零向量")
        self.psi = psi / math.sqrt(norm2)
        self.log_norm = 0.0

    def expect(self, op: np.ndarray) -> complex:
        return complex(np.vdot(self.psi, op @ self.psi))


@dataclass
class TrajectoryRecord:
    """一条轨迹的记录：跃迁表、滤波电流采样、可选条件态快照与检查点期望值。"""

    config: UnravelingConfig
    params: SystemParams
    jumps: list[tuple[float, str]] = field(default_factory=list)
    current_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    current_values: np.ndarray = field(default_factory=lambda: np.empty(0))
    snapshot_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    snapshots: np.ndarray = field(default_factory=lambda: np.empty((0, 0), dtype=complex))
    checkpoint_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    checkpoint_photon: np.ndarray = field(default_factory=lambda: np.empty(0))
    checkpoint_quadrature: np.ndarray = field(default_factory=lambda: np.empty(0))
    final_state: np.ndarray | None = None

    @property
    def duration(self) -> float:
        return self.config.n_steps * self.config.dt

    @property
    def current_samples(self) -> list[tuple[float, float | complex]]:
        return list(zip(self.current_times.tolist(), self.current_values.tolist()))

    def jump_times(self, channel: str | None = None) -> np.ndarray:
        if channel is not None and channel not in CHANNELS:
            raise ValueError(f"未知的通道: {channel!r}")
        return np.array([t for t, ch in self.jumps if channel is None or ch == channel], dtype=float)

    def counts(self) -> dict[str, int]:
        out = dict.fromkeys(CHANNELS, 0)
        for _, ch in self.jumps:
            out[ch] += 1
        return out

    def current_at(self, t) -> np.ndarray:
        """电流在任意时刻的线性插值。"""
        if self.current_times.size == 0:
            raise ValueError(f"{self.config.scheme} 记录不含电流")
        if np.iscomplexobj(self.current_values):
            return np.interp(t, self.current_times, self.current_values.real) + 1j * np.interp(
                t, self.current_times, self.current_values.imag
            )
        return np.interp(t, self.current_times, self.current_values)


def three_point_increments(rng: np.random.Generator, dt: float, size) -> np.ndarray:
    """弱二阶格式的增量：±√(3dt) 各 1/6，0 为 2/3。"""
    u = rng.random(size)
    step = math.sqrt(3.0 * dt)
    return np.where(u < 1.0 / 6.0, step, np.where(u < 1.0 / 3.0, -step, 0.0))


def two_point_matrix(rng: np.random.Generator, dt: float, m: int, batch: tuple = ()) -> np.ndarray:
    """V_{r,j}：对角为 −dt，下三角 ±dt 等概率，上三角取反。"""
    v = np.zeros(batch + (m, m))
    for j in range(m):
        v[..., j, j] = -dt
        for r in range(j):
            sign = np.where(rng.random(batch) < 0.5, dt, -dt)
            v[..., j, r] = sign
            v[..., r, j] = -sign
    return v


def complex_increments(rng: np.random.Generator, dt: float, size) -> np.ndarray:
    """复 Wiener 增量 dZ = (dW_x + i dW_y)/√2，E[|dZ|²] = dt，E[dZ²] = 0。"""
    scale = math.sqrt(dt)
    return (rng.normal(0.0, scale, size) + 1j * rng.normal(0.0, scale, size)) / _SQRT2


def weak2_step(y, drift: Callable, diffusions: list[Callable], dt: float, dw, v=None):
    """Kloeden–Platen 显式二阶弱格式（自治方程，m 维实噪声）。

    y 可以带批量前导维；dw 形状 (..., m)；v 为 (..., m, m) 的 V_{r,j}，m = 1 时可省略。
    """
    sq = math.sqrt(dt)
    m = len(diffusions)
    dw = np.asarray(dw)
    w = [dw[..., j][..., None] for j in range(m)]
    a0 = drift(y)
    b0 = [b(y) for b in diffusions]
    base = y + a0 * dt
    support = base + sum(b0[j] * w[j] for j in range(m))
    out = y + 0.5 * (drift(support) + a0) * dt
    for j, bj in enumerate(diffusions):
        plus = bj(base + b0[j] * sq)
        minus = bj(base - b0[j] * sq)
        out = out + 0.25 * (plus + minus + 2.0 * b0[j]) * w[j]
        out = out + 0.25 * (plus - minus) * (w[j] ** 2 - dt) / sq
        for r in range(m):
            if r == j:
                continue
            up = bj(y + b0[r] * sq)
            um = bj(y - b0[r] * sq)
            vrj = np.asarray(v)[..., r, j][..., None]
            out = out + 0.25 * (up + um - 2.0 * b0[j]) * w[j] / sq
            out = out + 0.25 * (up - um) * (w[j] * w[r] + vrj) / sq
    return out


def euler_step(y, drift: Callable, diffusions: list[Callable], dt: float, dw, v=None):
    """Euler–Maruyama 步（v 忽略）。"""
    dw = np.asarray(dw)
    out = y + drift(y) * dt
    for j, bj in enumerate(diffusions):
        out = out + bj(y) * dw[..., j][..., None]
    return out


STEPPERS = {"weak2": weak2_step, "euler": euler_step}


class TrajectoryEngine:
    """一组 (SystemParams, UnravelingConfig) 的算符与传播子；run() 产生一条轨迹。

    同一实例可被多个线程共享，每条轨迹的随机流由 trajectory_index 区分。
    """

    def __init__(self, p: SystemParams, cfg: UnravelingConfig):
        if cfg.scheme == "free_decay":
            raise ConfigError("free_decay 展开由 tomography.free_decay_tomography 执行")
        cfg.validate(p)
        self.params = p
        self.config = cfg
        self.a, self.a_dag = build_cavity_ops(p.n_max)
        self.sigma_minus, sigma_plus = build_atom_ops(p.n_max)
        self.number_op = self.a_dag @ self.a
        self.atom_excitation = sigma_plus @ self.sigma_minus
        self._h_eff = nonhermitian_hamiltonian(p)
        self._excitation = excitation_number(p.n_max)
        self._step = STEPPERS[cfg.integrator]
        self._fixed_half = None if cfg.detuning_schedule is not None else self._half_propagator(p.delta_omega_d)

    def _half_propagator(self, delta: float) -> np.ndarray:
        h = self._h_eff - (delta - self.params.delta_omega_d) * self._excitation
        return linalg.expm(-0.5j * self.config.dt * h)

    def half_step(self, t: float) -> np.ndarray:
        """exp(−iH′dt/2)，失谐取该步中点的时间表值。"""
        if self._fixed_half is not None:
            return self._fixed_half
        return self._half_propagator(self.config.detuning_at(self.params, t + 0.5 * self.config.dt))

    @property
    def noise_dimension(self) -> int:
        return {"direct": 0, "wave_particle": 1, "heterodyne": 2}[self.config.scheme]

    def _homodyne_update(self, psi: np.ndarray, theta: float, dw, v) -> np.ndarray:
        kappa, r = self.params.kappa, self.config.r
        if r >= 1.0:
            return psi
        phase = np.exp(-1j * theta)
        c = math.sqrt(2.0 * kappa * (1.0 - r)) * phase * self.a
        gain = math.sqrt(8.0 * kappa * (1.0 - r))
        a = self.a

        def drift(y):
            quad = (phase * np.vdot(y, a @ y)).real / np.vdot(y, y).real
            return gain * quad * (c @ y)

        return self._step(psi, drift, [lambda y: c @ y], self.config.dt, dw, v)

    def _heterodyne_update(self, psi: np.ndarray, dw, v) -> np.ndarray:
        root = math.sqrt(2.0 * self.params.kappa)
        c = root * self.a
        a = self.a

        def drift(y):
            a_dag_mean = np.conj(np.vdot(y, a @ y)) / np.vdot(y, y).real
            return root * a_dag_mean * (c @ y)

        diffusions = [lambda y: (c @ y) / _SQRT2, lambda y: 1j * (c @ y) / _SQRT2]
        return self._step(psi, drift, diffusions, self.config.dt, dw, v)

    def advance(self, psi: np.ndarray, t: float, dw=None, v=None) -> np.ndarray:
        """一步连续演化（不含跃迁），返回未归一化的 ψ̄。"""
        half = self.half_step(t)
        psi = half @ psi
        scheme = self.config.scheme
        if scheme == "wave_particle":
            psi = self._homodyne_update(psi, self.config.theta_at(t), dw, v)
        elif scheme == "heterodyne":
            psi = self._heterodyne_update(psi, dw, v)
        return half @ psi

    def _increments(self, rng: np.random.Generator):
        m = self.noise_dimension
        if m == 0:
            return None, None
        dt = self.config.dt
        if self.config.integrator == "weak2":
            dw = three_point_increments(rng, dt, m)
            v = two_point_matrix(rng, dt, m) if m > 1 else None
            return dw, v
        return rng.normal(0.0, math.sqrt(dt), m), None

    def initial_state(self, psi0=None) -> np.ndarray:
        """psi0 可为全空间态、腔模态（原子取 |−⟩）或 None（|0,−⟩）。"""
        dim = self.params.dim
        if psi0 is None:
            psi = np.zeros(dim, dtype=complex)
            psi[0] = 1.0
            return psi
        psi = np.asarray(psi0, dtype=complex).ravel()
        if psi.size == self.params.cavity_dim:
            psi = embed_cavity_state(psi)
        if psi.size != dim:
            raise DimensionMismatchError(f"初始态维度 {psi.size} 与系统维度 {dim} 不一致")
        return psi

    def checkpoint_steps(self, checkpoints) -> np.ndarray:
        if checkpoints is None:
            return np.empty(0, dtype=int)
        times = np.atleast_1d(np.asarray(checkpoints, dtype=float))
        if times.size and (times.min() < 0.0 or np.any(np.diff(times) < 0.0)):
            raise ValueError("检查点时间必须非负且递增")
        return np.clip(np.rint(times / self.config.dt).astype(int), 0, self.config.n_steps)

    def run(self, psi0=None, checkpoints=None, trajectory_index: int | None = None) -> TrajectoryRecord:
        """积分一条轨迹。

        Args:
            psi0: 初始态
            checkpoints: 需要记录 ⟨a†a⟩ 与 ⟨A_θ⟩ 的时刻（取最近的步）
            trajectory_index: 覆盖配置中的轨迹编号（决定随机流）

        Returns:
            TrajectoryRecord

        Raises:
            DtTooLargeError: 某一步总跃迁概率超过 0.1
        """
        p = self.params
        cfg = self.config if trajectory_index is None else self.config.for_trajectory(trajectory_index)
        scheme, dt, n_steps = cfg.scheme, cfg.dt, cfg.n_steps
        rng = cfg.rng()
        state = ConditionedState(self.initial_state(psi0))
        logger.debug(f"轨迹开始: scheme={scheme} steps={n_steps} seed={cfg.seed} index={cfg.trajectory_index}")

        measured = scheme in ("wave_particle", "heterodyne")
        cavity_fraction = {"direct": 1.0, "wave_particle": cfg.r, "heterodyne": 0.0}[scheme]
        stride = cfg.sample_stride if measured else 0
        decay = math.exp(-cfg.bandwidth * dt) if measured else 0.0
        gain = math.sqrt(8.0 * p.kappa * (1.0 - cfg.r))
        root = math.sqrt(2.0 * p.kappa)
        current = 0.0j if scheme == "heterodyne" else 0.0

        cp_steps = self.checkpoint_steps(checkpoints)
        cp_photon = np.empty(cp_steps.size)
        cp_quad = np.empty(cp_steps.size)
        cp_next = 0
        jumps: list[tuple[float, str]] = []
        samples_t, samples_i = [], []
        snap_t, snaps = [], []
        snapshot_stride = cfg.snapshot_stride

        def observe(k: int):
            nonlocal cp_next
            if measured and k % stride == 0:
                samples_t.append(k * dt)
                samples_i.append(current)
            if snapshot_stride and k % snapshot_stride == 0:
                snap_t.append(k * dt)
                snaps.append(state.psi.copy())
            while cp_next < cp_steps.size and cp_steps[cp_next] == k:
                theta = cfg.theta_at(k * dt)
                cp_photon[cp_next] = state.expect(self.number_op).real
                cp_quad[cp_next] = (np.exp(-1j * theta) * state.expect(self.a)).real
                cp_next += 1

        observe(0)
        for step in range(n_steps):
            t = step * dt
            psi = state.psi
            p_cavity = 2.0 * p.kappa * cavity_fraction * state.expect(self.number_op).real * dt
            p_spont = p.gamma * state.expect(self.atom_excitation).real * dt
            if p_cavity + p_spont > MAX_JUMP_PROBABILITY:
                raise DtTooLargeError(
                    f"t={t:.6g} 处单步跃迁概率 {p_cavity + p_spont:.3f} 超过 {MAX_JUMP_PROBABILITY}，请减小 dt"
                )
            dw, v = self._increments(rng)
            if scheme == "wave_particle":
                signal = gain * (np.exp(-1j * cfg.theta_at(t)) * state.expect(self.a)).real
                current = current * decay + cfg.bandwidth * (signal * dt + dw[0])
            elif scheme == "heterodyne":
                signal = root * np.conj(state.expect(self.a))
                # 噪声项不带 √(2κ)：ĩ/√(2κ) 的均值估计 ⟨a⟩*，每个正交分量的噪声方差为 dt/2
                current = current * decay + cfg.bandwidth * (signal * dt + (dw[0] + 1j * dw[1]) / _SQRT2)

            state.absorb(self.advance(psi, t, dw, v), (step + 1) * dt)

            u = rng.random()
            if u < p_cavity:
                state.jump(self.a)
                jumps.append(((step + 1) * dt, "cavity"))
            elif u < p_cavity + p_spont:
                state.jump(self.sigma_minus)
                jumps.append(((step + 1) * dt, "spontaneous"))
            observe(step + 1)

        record = TrajectoryRecord(
            config=cfg,
            params=p,
            jumps=jumps,
            current_times=np.asarray(samples_t, dtype=float),
            current_values=np.asarray(samples_i, dtype=complex if scheme == "heterodyne" else float),
            snapshot_times=np.asarray(snap_t, dtype=float),
            snapshots=np.asarray(snaps, dtype=complex).reshape(len(snaps), p.dim),
            checkpoint_times=cp_steps * dt,
            checkpoint_photon=cp_photon,
            checkpoint_quadrature=cp_quad,
            final_state=state.psi.copy(),
        )
        counts = record.counts()
        logger.debug(f"轨迹结束: index={cfg.trajectory_index} cavity={counts['cavity']} spontaneous={counts['spontaneous']}")
        return record


def _run_scheme(scheme: str, p: SystemParams, cfg: UnravelingConfig, psi0, checkpoints) -> TrajectoryRecord:
    if cfg.scheme != scheme:
        raise ConfigError(f"需要 scheme={scheme!r}, 实际为 {cfg.scheme!r}")
    return TrajectoryEngine(p, cfg).run(psi0, checkpoints)


def run_direct(p: SystemParams, cfg: UnravelingConfig, psi0=None, checkpoints=None) -> TrajectoryRecord:
    """直接光子计数：腔输出 √(2κ)a 与自发辐射 √γσ₋ 两个跃迁通道。"""
    return _run_scheme("direct", p, cfg, psi0, checkpoints)


def run_wave_particle(p: SystemParams, cfg: UnravelingConfig, psi0=None, checkpoints=None) -> TrajectoryRecord:
    """波粒关联器：分数 r 进入 APD（跃迁 √(2κr)a），其余进入平衡零差。

    滤波电流 i ← i e^{−BΔ} + B(√(8κ(1−r))⟨A_θ⟩Δ + ΔW)，与态更新共用同一增量。
    """
    return _run_scheme("wave_particle", p, cfg, psi0, checkpoints)


def run_heterodyne(p: SystemParams, cfg: UnravelingConfig, psi0=None, checkpoints=None) -> TrajectoryRecord:
    """外差探测：dq̃ = √(2κ)⟨a†⟩dt + dZ，态更新项 √(2κ)a dq̃；复电流 ĩ/√(2κ) 的长时平均趋于 ⟨a⟩*。"""
    return _run_scheme("heterodyne", p, cfg, psi0, checkpoints)


def run_trajectory(p: SystemParams, cfg: UnravelingConfig, psi0=None, checkpoints=None) -> TrajectoryRecord:
    return _run_scheme(cfg.scheme, p, cfg, psi0, checkpoints)


@dataclass
class EnsembleResult:
    """轨迹系综在检查点上的均值与标准误，以及每条轨迹各通道的计数。"""

    checkpoint_times: np.ndarray
    photon_mean: np.ndarray
    photon_se: np.ndarray
    quadrature_mean: np.ndarray
    quadrature_se: np.ndarray
    click_counts: dict[str, np.ndarray]
    records: list[TrajectoryRecord] = field(default_factory=list)

    @property
    def n_trajectories(self) -> int:
        return int(self.click_counts["cavity"].size)

    def total_clicks(self) -> dict[str, int]:
        return {ch: int(counts.sum()) for ch, counts in self.click_counts.items()}

    def columns(self) -> dict[str, np.ndarray]:
        return {
            "t": self.checkpoint_times,
            "photon_mean": self.photon_mean,
            "photon_se": self.photon_se,
            "quadrature_mean": self.quadrature_mean,
            "quadrature_se": self.quadrature_se,
        }


def _mean_and_se(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = samples.shape[0]
    mean = samples.mean(axis=0)
    if n < 2:
        return mean, np.zeros_like(mean)
    return mean, samples.std(axis=0, ddof=1) / math.sqrt(n)


def run_ensemble(
    p: SystemParams,
    cfg: UnravelingConfig,
    psi0=None,
    n_trajectories: int = 100,
    checkpoints=None,
    keep_records: bool = False,
    max_workers: int | None = None,
) -> EnsembleResult:
    """并发运行 n_trajectories 条独立轨迹（随机流由 (seed, 编号) 决定）并汇总。

    汇总按轨迹编号顺序进行，结果与线程调度无关。
    """
    if int(n_trajectories) != n_trajectories or n_trajectories < 1:
        raise ConfigError(f"n_trajectories={n_trajectories} 必须为 ≥1 的整数")
    engine = TrajectoryEngine(p, cfg)
    if checkpoints is None:
        checkpoints = np.linspace(0.0, cfg.n_steps * cfg.dt, 21)
    logger.info(f"系综开始: scheme={cfg.scheme} N={n_trajectories} steps={cfg.n_steps} seed={cfg.seed}")
    jobs = [(f"trajectory-{k}", partial(engine.run, psi0, checkpoints, k)) for k in range(int(n_trajectories))]
    records = TaskScheduler(max_workers).run_all(jobs)

    photon_mean, photon_se = _mean_and_se(np.stack([rec.checkpoint_photon for rec in records]))
    quad_mean, quad_se = _mean_and_se(np.stack([rec.checkpoint_quadrature for rec in records]))
    clicks = {ch: np.array([rec.counts()[ch] for rec in records], dtype=int) for ch in CHANNELS}
    result = EnsembleResult(
        checkpoint_times=records[0].checkpoint_times,
        photon_mean=photon_mean,
        photon_se=photon_se,
        quadrature_mean=quad_mean,
        quadrature_se=quad_se,
        click_counts=clicks,
        records=records if keep_records else [],
    )
    totals = result.total_clicks()
    logger.info(f"系综完成: cavity={totals['cavity']} spontaneous={totals['spontaneous']}")
    return result
