"""
双时关联函数
基于量子回归公式：先用算符对稳态做条件化，再用 e^{ℒτ} 传播，最后读出观测量。
同一参数的 Liouvillian、稳态与谱分解由 CorrelationEngine 缓存，多次调用共享只读数据。
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from .exceptions import NormalizationError
from .master_equation import (
    Liouvillian,
    build_liouvillian,
    collapse_operators,
    default_delay_grid,
    expm_evolve_observable,
    observable_row,
    steady_state,
    TRUNCATION_TOLERANCE,
    vec,
)
from .operators import SystemParams, build_atom_ops, build_cavity_ops, truncation_population

logger = logging.getLogger("jc_blockade")

SERIES_KINDS = ("g2", "g2_AB", "H_theta", "wait_forward", "wait_side")
H_NORMALIZATIONS = ("raw", "photon_number", "unit", "current")
# 稳态激发低于该值时无法归一化
MIN_EXCITATION = 1e-12


@dataclass
class CorrelationSeries:
    """延迟网格上的关联函数及其元数据。

    normalization 描述数值的归一化方式（H_θ 在不同场合使用不同约定，因此总是显式携带）。
    metadata 保存稳态量、网格质量等附加信息，写文件时作为注释行输出。
    """

    tau_grid: np.ndarray
    values: np.ndarray
    kind: str
    normalization: str = "raw"
    theta: float | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tau_grid = np.asarray(self.tau_grid, dtype=float)
        self.values = np.asarray(self.values)
        if self.kind not in SERIES_KINDS:
            raise ValueError(f"未知的关联类型: {self.kind!r}")
        if self.tau_grid.ndim != 1 or self.values.shape != self.tau_grid.shape:
            raise ValueError(f"网格与数值长度不一致: {self.tau_grid.shape} vs {self.values.shape}")
        if self.tau_grid.size > 1 and np.any(np.diff(self.tau_grid) <= 0):
            raise ValueError("tau_grid 必须严格递增")
        if self.kind in ("g2", "g2_AB"):
            if np.iscomplexobj(self.values):
                self.values = self.values.real
            if self.values.size and self.values.min() < -1e-8:
                raise ValueError(f"{self.kind} 出现负值: {self.values.min():.3e}")

    def __len__(self):
        return self.tau_grid.size

    def value_at(self, tau) -> np.ndarray:
        """在任意延迟处线性插值（复数值分别插值实部与虚部）。"""
        if np.iscomplexobj(self.values):
            return np.interp(tau, self.tau_grid, self.values.real) + 1j * np.interp(
                tau, self.tau_grid, self.values.imag
            )
        return np.interp(tau, self.tau_grid, self.values)

    def at_zero(self, side: str = "+") -> float:
        """τ = 0⁺ 或 0⁻ 的取值；网格须包含 0。"""
        hits = np.flatnonzero(self.tau_grid == 0.0)
        if hits.size == 0:
            raise ValueError("网格不包含 τ = 0")
        key = "value_at_zero_minus" if side == "-" else "value_at_zero_plus"
        if key in self.metadata:
            return float(self.metadata[key]) / float(self.metadata.get("scale_to_raw", 1.0))
        return float(np.real(self.values[hits[0]]))

    def normalized(self, normalization: str) -> "CorrelationSeries":
        """在 H_θ 的几种归一化之间切换。

        Args:
            normalization: raw（原始）、photon_number（除以 ⟨a†a⟩_ss）、unit（除以 τ=0⁺ 处的值）

        Returns:
            新的 CorrelationSeries
        """
        if self.kind != "H_theta":
            raise ValueError("只有 H_theta 支持切换归一化")
        if normalization not in ("raw", "photon_number", "unit"):
            raise ValueError(f"未知的归一化: {normalization!r}")
        raw = self.values * self.metadata.get("scale_to_raw", 1.0)
        n_ss = float(self.metadata["n_ss"])
        if normalization == "raw":
            scale = 1.0
        elif normalization == "photon_number":
            scale = n_ss
        else:
            scale = float(self.metadata.get("value_at_zero_plus", np.interp(0.0, self.tau_grid, raw)))
            if scale == 0.0:
                raise NormalizationError("τ=0 处 H_θ 为零，无法做单位归一化")
        meta = dict(self.metadata, scale_to_raw=scale)
        return CorrelationSeries(self.tau_grid, raw / scale, self.kind, normalization, self.theta, meta)

    def filtered(self, bandwidth: float) -> "CorrelationSeries":
        """与探测器响应 B e^{−Bt}（因果）做卷积；要求均匀网格。

        网格起点之前视为恒等于首个取值。
        """
        steps = np.diff(self.tau_grid)
        if steps.size and not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ValueError("filtered 需要均匀网格")
        decay = np.exp(-bandwidth * steps[0]) if steps.size else 0.0
        out = np.empty_like(self.values)
        acc = self.values[0]
        for k, x in enumerate(self.values):
            if k:
                acc = acc * decay + (1.0 - decay) * x
            out[k] = acc
        meta = dict(self.metadata, filter_bandwidth=bandwidth)
        return CorrelationSeries(self.tau_grid, out, self.kind, self.normalization, self.theta, meta)

    def asymmetry(self) -> float:
        """∫₀^T |f(τ) − f(−τ)| dτ，衡量细致平衡的破缺。"""
        positive = self.tau_grid[self.tau_grid >= 0.0]
        limit = min(positive.max(initial=0.0), -self.tau_grid.min())
        taus = positive[positive <= limit]
        if taus.size < 2:
            return 0.0
        diff = np.abs(np.real(self.value_at(taus)) - np.real(self.value_at(-taus)))
        return float(np.trapezoid(diff, taus))

    def max_branch_difference(self) -> float:
        """max_τ |f(τ) − f(−τ)|。"""
        taus = self.tau_grid[self.tau_grid >= 0.0]
        taus = taus[taus <= -self.tau_grid.min()]
        if taus.size == 0:
            return 0.0
        return float(np.max(np.abs(np.real(self.value_at(taus)) - np.real(self.value_at(-taus)))))


class CorrelationEngine:
    """一组参数对应的 ℒ、稳态与所需算符；所有关联函数在此计算。"""

    def __init__(self, p: SystemParams, method: str = "spectral"):
        if method not in ("spectral", "expm"):
            raise ValueError(f"未知的计算方法: {method!r}")
        self.params = p
        self.method = method
        self.liouvillian = build_liouvillian(p)
        self.rho_ss = steady_state(self.liouvillian)
        self.a, self.a_dag = build_cavity_ops(p.n_max)
        self.sigma_minus, self.sigma_plus = build_atom_ops(p.n_max)
        self.number_op = self.a_dag @ self.a
        self.atom_excitation = self.sigma_plus @ self.sigma_minus
        self.n_ss = float(np.trace(self.number_op @ self.rho_ss).real)
        self.s_ss = float(np.trace(self.atom_excitation @ self.rho_ss).real)
        self.truncation_flag = truncation_population(self.rho_ss, p.n_max) > TRUNCATION_TOLERANCE

    @cached_property
    def forward_exclusive(self) -> Liouvillian:
        return self.liouvillian.without_jumps(collapse_operators(self.params)["cavity"])

    @cached_property
    def side_exclusive(self) -> Liouvillian:
        return self.liouvillian.without_jumps(collapse_operators(self.params)["spontaneous"])

    def _base_metadata(self) -> dict:
        p = self.params
        return {
            "g": p.g,
            "kappa": p.kappa,
            "gamma": p.gamma,
            "eps_d": p.eps_d,
            "delta_omega_d": p.delta_omega_d,
            "n_max": p.n_max,
            "n_ss": self.n_ss,
            "atom_excitation_ss": self.s_ss,
            "method": self.method,
            "truncation_flag": bool(self.truncation_flag),
        }

    def _require(self, value: float, name: str) -> None:
        if value <= MIN_EXCITATION:
            raise NormalizationError(f"稳态 {name} = {value:.3e} 过小，无法归一化")

    def evolve_expectation(self, L: Liouvillian, rho: np.ndarray, op: np.ndarray, taus) -> np.ndarray:
        """tr(O e^{ℒτ}[ρ])，τ ≥ 0。"""
        taus = np.asarray(taus, dtype=float)
        row = observable_row(op)
        if self.method == "spectral" and L.spectrum.well_conditioned:
            return L.spectrum.evolve_observable(vec(rho), row, taus)
        if self.method == "spectral":
            logger.info(f"本征基病态 (cond={L.spectrum.condition:.2e})，关联函数改用缩放平方法")
        return expm_evolve_observable(L.matrix, vec(rho), row, taus)

    def _two_sided(self, taus, positive, negative) -> tuple[np.ndarray, complex, complex]:
        """按 τ 的符号分别求值；τ=0 取正分支，同时返回 0⁺ 与 0⁻ 的值。"""
        taus = _check_grid(taus)
        values = np.empty(taus.size, dtype=complex)
        pos = taus >= 0.0
        neg = ~pos
        zero = np.array([0.0])
        if pos.any():
            values[pos] = positive(taus[pos])
        if neg.any():
            values[neg] = negative(-taus[neg])
        return values, complex(positive(zero)[0]), complex(negative(zero)[0])

    def g2_forward(self, taus) -> CorrelationSeries:
        """g²(τ) = tr{a†a e^{ℒ|τ|}[aρa†]}/⟨a†a⟩²，按构造为偶函数。"""
        self._require(self.n_ss, "⟨a†a⟩")
        taus = _check_grid(taus)
        rho_cond = self.a @ self.rho_ss @ self.a_dag / self.n_ss
        abs_taus, inverse = np.unique(np.abs(taus), return_inverse=True)
        values = self.evolve_expectation(self.liouvillian, rho_cond, self.number_op, abs_taus) / self.n_ss
        meta = self._base_metadata()
        return CorrelationSeries(taus, values.real[inverse], "g2", "steady_state", metadata=meta)

    def g2_zero(self) -> float:
        self._require(self.n_ss, "⟨a†a⟩")
        a2 = self.a @ self.a
        return float(np.trace(a2.conj().T @ a2 @ self.rho_ss).real / self.n_ss**2)

    def g2_cross(self, taus) -> CorrelationSeries:
        """腔-侧向强度互关联 g²_AB(τ)。

        τ ≥ 0：以腔发射 aρa† 条件化，读出 σ₊σ₋；τ ≤ 0：以侧向发射 σ₋ρσ₊ 条件化，读出 a†a。
        """
        self._require(self.n_ss, "⟨a†a⟩")
        self._require(self.s_ss, "⟨σ₊σ₋⟩")
        after_cavity = self.a @ self.rho_ss @ self.a_dag / self.n_ss
        after_side = self.sigma_minus @ self.rho_ss @ self.sigma_plus / self.s_ss
        L = self.liouvillian

        def positive(t):
            return self.evolve_expectation(L, after_cavity, self.atom_excitation, t) / self.s_ss

        def negative(t):
            return self.evolve_expectation(L, after_side, self.number_op, t) / self.n_ss

        values, zero_plus, zero_minus = self._two_sided(taus, positive, negative)
        meta = self._base_metadata()
        meta.update(value_at_zero_plus=zero_plus.real, value_at_zero_minus=zero_minus.real)
        return CorrelationSeries(taus, values.real, "g2_AB", "steady_state", metadata=meta)

    def h_theta(self, theta: float, taus) -> CorrelationSeries:
        """波粒关联函数 H_θ(τ)（raw 归一化）。

        τ ≥ 0：X = tr{a e^{ℒτ}[aρa†]}；τ ≤ 0：X = tr{a†a e^{ℒ|τ|}[aρ]}；H_θ = Re(e^{−iθ}X)。
        两端尾部趋于 ⟨a†a⟩_ss·⟨A_θ⟩_ss。
        """
        L = self.liouvillian
        after_click = self.a @ self.rho_ss @ self.a_dag
        after_field = self.a @ self.rho_ss
        phase = np.exp(-1j * theta)

        def positive(t):
            return self.evolve_expectation(L, after_click, self.a, t)

        def negative(t):
            return self.evolve_expectation(L, after_field, self.number_op, t)

        values, zero_plus, zero_minus = self._two_sided(taus, positive, negative)
        a_mean = complex(np.trace(self.a @ self.rho_ss))
        meta = self._base_metadata()
        meta.update(
            quadrature_ss=float((phase * a_mean).real),
            tail_level=float(self.n_ss * (phase * a_mean).real),
            value_at_zero_plus=float((phase * zero_plus).real),
            value_at_zero_minus=float((phase * zero_minus).real),
        )
        return CorrelationSeries(taus, (phase * values).real, "H_theta", "raw", theta=float(theta), metadata=meta)

    def waiting_time(self, channel: str, taus=None) -> CorrelationSeries:
        """排他等待时间分布 w(τ)：在同一通道两次发射之间不再有该通道的发射。

        forward: w_F = 2κ tr{a†a e^{ℒ̄τ}[aρa†]}/⟨a†a⟩，ℒ̄ = ℒ − 2κ a·a†；
        side:    w_S = γ tr{σ₊σ₋ e^{ℒ̄τ}[σ₋ρσ₊]}/⟨σ₊σ₋⟩，ℒ̄ = ℒ − γ σ₋·σ₊。
        """
        p = self.params
        if channel == "forward":
            self._require(self.n_ss, "⟨a†a⟩")
            rate, L = 2.0 * p.kappa, self.forward_exclusive
            rho_cond = self.a @ self.rho_ss @ self.a_dag / self.n_ss
            op, flux = self.number_op, 2.0 * p.kappa * self.n_ss
        elif channel == "side":
            self._require(self.s_ss, "⟨σ₊σ₋⟩")
            rate, L = p.gamma, self.side_exclusive
            rho_cond = self.sigma_minus @ self.rho_ss @ self.sigma_plus / self.s_ss
            op, flux = self.atom_excitation, p.gamma * self.s_ss
        else:
            raise ValueError(f"channel 只能是 forward 或 side, 实际为 {channel!r}")

        if taus is None:
            taus = default_waiting_grid(p, flux)
        taus = _check_grid(taus)
        if taus.min() < 0.0:
            raise ValueError("等待时间网格必须非负")
        values = rate * self.evolve_expectation(L, rho_cond, op, taus).real

        mass = float(np.trapezoid(values, taus))
        mean = float(np.trapezoid(taus * values, taus) / mass) if mass > 0 else float("nan")
        if abs(mass - 1.0) > 0.02:
            logger.warning(f"等待时间网格过短或过粗: 积分质量 {mass:.4f} 偏离 1 超过 2%")
        meta = self._base_metadata()
        meta.update(mass=mass, mean=mean, flux=flux)
        kind = "wait_forward" if channel == "forward" else "wait_side"
        return CorrelationSeries(taus, values, kind, "density", metadata=meta)


def _check_grid(taus) -> np.ndarray:
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    if taus.size > 1 and np.any(np.diff(taus) <= 0):
        raise ValueError("tau_grid 必须严格递增")
    return taus


def default_waiting_grid(p: SystemParams, flux: float, mean_intervals: float = 10.0) -> np.ndarray:
    """[0, mean_intervals/flux] 上的等待时间网格，按拍频需要加密。"""
    stop = mean_intervals / max(flux, MIN_EXCITATION)
    step = min(stop / 2000.0, np.pi / (20.0 * max(p.g, p.kappa)))
    points = int(np.ceil(stop / step)) + 1
    return np.linspace(0.0, stop, points)


@lru_cache(maxsize=16)
def get_engine(p: SystemParams, method: str = "spectral") -> CorrelationEngine:
    return CorrelationEngine(p, method)


def g2_forward(p: SystemParams, tau_grid=None, method: str = "spectral") -> CorrelationSeries:
    taus = default_delay_grid(p) if tau_grid is None else tau_grid
    return get_engine(p, method).g2_forward(taus)


def g2_cross(p: SystemParams, tau_grid=None, method: str = "spectral") -> CorrelationSeries:
    taus = default_delay_grid(p) if tau_grid is None else tau_grid
    return get_engine(p, method).g2_cross(taus)


def h_theta(p: SystemParams, theta: float, tau_grid=None, method: str = "spectral") -> CorrelationSeries:
    taus = default_delay_grid(p) if tau_grid is None else tau_grid
    return get_engine(p, method).h_theta(theta, taus)


def waiting_time(p: SystemParams, channel: str, tau_grid=None, method: str = "spectral") -> CorrelationSeries:
    return get_engine(p, method).waiting_time(channel, tau_grid)


@dataclass
class DetuningScan:
    """失谐扫描下的稳态光子数与 g²(0)。"""

    detunings: np.ndarray
    photon_number: np.ndarray
    g2_zero: np.ndarray
    truncation_flags: np.ndarray

    def columns(self) -> dict[str, np.ndarray]:
        return {
            "detuning": self.detunings,
            "photon_number": self.photon_number,
            "g2_zero": self.g2_zero,
            "truncation_flag": self.truncation_flags.astype(int),
        }


def detuning_scan(p: SystemParams, detunings) -> DetuningScan:
    """逐点求稳态，给出 ⟨a†a⟩_ss 与 g²(0) 随 Δω_d 的变化（Δω_d 取内部单位、带符号）。"""
    detunings = np.asarray(detunings, dtype=float)
    a, a_dag = build_cavity_ops(p.n_max)
    number = a_dag @ a
    pair = a_dag @ a_dag @ a @ a
    photons = np.empty(detunings.size)
    g2 = np.empty(detunings.size)
    flags = np.zeros(detunings.size, dtype=bool)
    for k, delta in enumerate(detunings):
        L = build_liouvillian(p.with_(delta_omega_d=float(delta)))
        rho = steady_state(L)
        photons[k] = np.trace(number @ rho).real
        g2[k] = np.trace(pair @ rho).real / photons[k] ** 2 if photons[k] > MIN_EXCITATION else np.nan
        flags[k] = truncation_population(rho, p.n_max) > TRUNCATION_TOLERANCE
    logger.info(f"失谐扫描完成: {detunings.size} 个点, 截断告警 {int(flags.sum())} 个")
    return DetuningScan(detunings, photons, g2, flags)
