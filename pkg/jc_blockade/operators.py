"""
算符与希尔伯特空间
截断的 原子 ⊗ 腔 空间（原子指标为慢指标）、阶梯算符、JC 哈密顿量与缀饰态。
所有构造函数都是纯函数，返回的 numpy 数组可在线程间共享（只读）。
"""
import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg

from .exceptions import ConfigError, DimensionMismatchError, InvalidTruncationError

logger = logging.getLogger("jc_blockade")

# 默认腔模截断到第 14 个光子能级
DEFAULT_N_MAX = 14

# 原子基矢顺序: 0 -> |−⟩(基态), 1 -> |+⟩(激发态)
ATOM_GROUND = 0
ATOM_EXCITED = 1

# 类型别名，仅用于注解
OperatorMatrix = np.ndarray
StateVector = np.ndarray
DensityMatrix = np.ndarray


@dataclass(frozen=True)
class SystemParams:
    """一个场景的物理参数（内部单位：rad/time，ħ = 1）。

    delta_omega_d 为带符号的失谐，直接进入 H = −Δω_d(σ₊σ₋ + a†a) + ...；
    多光子共振峰取正失谐分支，此时 ⟨A_π/4⟩_ss > 0（参见 ``SystemParams.multiphoton_peak``）。
    """

    g: float
    kappa: float
    gamma: float
    eps_d: float
    delta_omega_d: float
    n_max: int = DEFAULT_N_MAX
    impedance_matched: bool = False

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise InvalidTruncationError(f"n_max 必须为 ≥1 的整数, 实际为 {self.n_max}")
        for name in ("g", "kappa", "gamma", "eps_d"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ConfigError(f"{name} 必须为非负有限值, 实际为 {value}")
        if not np.isfinite(self.delta_omega_d):
            raise ConfigError(f"delta_omega_d 必须为有限值, 实际为 {self.delta_omega_d}")
        if self.impedance_matched and self.gamma != 2.0 * self.kappa:
            raise ConfigError(
                f"impedance_matched 要求 gamma = 2·kappa, 实际 gamma={self.gamma}, kappa={self.kappa}"
            )

    @property
    def cavity_dim(self) -> int:
        return self.n_max + 1

    @property
    def dim(self) -> int:
        return 2 * (self.n_max + 1)

    def with_(self, **changes) -> "SystemParams":
        """返回替换了部分字段的新参数。"""
        if "gamma" in changes or "kappa" in changes:
            gamma = changes.get("gamma", self.gamma)
            kappa = changes.get("kappa", self.kappa)
            if gamma != 2.0 * kappa:
                changes.setdefault("impedance_matched", False)
        return replace(self, **changes)

    @classmethod
    def from_ratios(
        cls,
        g_over_kappa: float,
        eps_over_g: float,
        detuning_over_g: float,
        gamma_over_kappa: float = 2.0,
        n_max: int = DEFAULT_N_MAX,
        kappa: float = 1.0,
    ) -> "SystemParams":
        """按命令行单位构造参数：速率相对 κ，驱动与失谐相对 g。

        Args:
            g_over_kappa: g/κ
            eps_over_g: ε_d/g
            detuning_over_g: 带符号的 Δω_d/g
            gamma_over_kappa: γ/κ，默认 2（阻抗匹配）
            n_max: Fock 截断
            kappa: κ 的内部取值

        Returns:
            SystemParams
        """
        g = g_over_kappa * kappa
        return cls(
            g=g,
            kappa=kappa,
            gamma=gamma_over_kappa * kappa,
            eps_d=eps_over_g * g,
            delta_omega_d=detuning_over_g * g,
            n_max=n_max,
            impedance_matched=gamma_over_kappa == 2.0,
        )

    @classmethod
    def two_photon_peak(
        cls,
        eps_over_g: float,
        g_over_kappa: float = 200.0,
        gamma_over_kappa: float = 2.0,
        n_max: int = DEFAULT_N_MAX,
        kappa: float = 1.0,
    ) -> "SystemParams":
        """双光子共振峰: Δω_d/g = +(1/√2 + √2(ε_d/g)²)，取正失谐分支。"""
        detuning = 1.0 / math.sqrt(2.0) + math.sqrt(2.0) * eps_over_g**2
        return cls.from_ratios(
            g_over_kappa, eps_over_g, detuning, gamma_over_kappa, n_max, kappa
        )

    @classmethod
    def multiphoton_peak(
        cls,
        eps_over_g: float,
        abs_detuning_over_g: float,
        g_over_kappa: float = 1000.0,
        gamma_over_kappa: float = 2.0,
        n_max: int = DEFAULT_N_MAX,
        kappa: float = 1.0,
    ) -> "SystemParams":
        """给定 |Δω_d|/g 的多光子共振（正失谐分支），例如七光子峰 (0.14, 0.38674)。"""
        return cls.from_ratios(
            g_over_kappa, eps_over_g, abs(abs_detuning_over_g), gamma_over_kappa, n_max, kappa
        )


def _check_n_max(n_max: int) -> None:
    if int(n_max) != n_max or n_max < 1:
        raise InvalidTruncationError(f"n_max 必须为 ≥1 的整数, 实际为 {n_max}")


def cavity_lowering(n_max: int) -> np.ndarray:
    """腔模空间 (n_max+1 维) 上的湮灭算符。"""
    _check_n_max(n_max)
    return np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), k=1).astype(complex)


def build_cavity_ops(n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """构造全空间（原子 ⊗ 腔）上的 a 与 a†。

    Args:
        n_max: Fock 截断

    Returns:
        (a, a_dag)，维度 2·(n_max+1)
    """
    a_cav = cavity_lowering(n_max)
    a = np.kron(np.eye(2), a_cav)
    return a, a.conj().T


def build_atom_ops(n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """原子的 σ₋ = |−⟩⟨+| 与 σ₊，嵌入全空间。"""
    _check_n_max(n_max)
    sm = np.zeros((2, 2), dtype=complex)
    sm[ATOM_GROUND, ATOM_EXCITED] = 1.0
    sigma_minus = np.kron(sm, np.eye(n_max + 1))
    return sigma_minus, sigma_minus.conj().T


def excitation_number(n_max: int) -> np.ndarray:
    """激发数算符 a†a + σ₊σ₋。"""
    a, a_dag = build_cavity_ops(n_max)
    sm, sp = build_atom_ops(n_max)
    return a_dag @ a + sp @ sm


def quadrature_operator(n_max: int, theta: float) -> np.ndarray:
    """A_θ = ½(e^{iθ}a† + e^{−iθ}a)。"""
    a, a_dag = build_cavity_ops(n_max)
    return 0.5 * (np.exp(1j * theta) * a_dag + np.exp(-1j * theta) * a)


def build_jc_hamiltonian(p: SystemParams) -> np.ndarray:
    """相互作用绘景下的受驱 JC 哈密顿量（ħ = 1）。

    H = −Δω_d(σ₊σ₋ + a†a) + g(aσ₊ + a†σ₋) + ε_d(a + a†)
    """
    a, a_dag = build_cavity_ops(p.n_max)
    sm, sp = build_atom_ops(p.n_max)
    h = -p.delta_omega_d * (sp @ sm + a_dag @ a)
    h = h + p.g * (a @ sp + a_dag @ sm)
    h = h + p.eps_d * (a + a_dag)
    return h


def nonhermitian_hamiltonian(p: SystemParams) -> np.ndarray:
    """量子跳跃之间的有效哈密顿量 H′ = H − iκa†a − i(γ/2)σ₊σ₋。"""
    a, a_dag = build_cavity_ops(p.n_max)
    sm, sp = build_atom_ops(p.n_max)
    return build_jc_hamiltonian(p) - 1j * p.kappa * (a_dag @ a) - 0.5j * p.gamma * (sp @ sm)


def basis_state(n: int, atom: int, n_max: int) -> np.ndarray:
    """|n, ±⟩，atom 取 ATOM_GROUND 或 ATOM_EXCITED。"""
    _check_n_max(n_max)
    if not 0 <= n <= n_max:
        raise IndexError(f"光子数 {n} 超出截断 [0, {n_max}]")
    psi = np.zeros(2 * (n_max + 1), dtype=complex)
    psi[atom * (n_max + 1) + n] = 1.0
    return psi


def fock_state_cavity(n: int, n_max: int) -> np.ndarray:
    """腔模空间内的 Fock 态 |n⟩。"""
    _check_n_max(n_max)
    if not 0 <= n <= n_max:
        raise IndexError(f"光子数 {n} 超出截断 [0, {n_max}]")
    psi = np.zeros(n_max + 1, dtype=complex)
    psi[n] = 1.0
    return psi


def dressed_state(n: int, branch: str, n_max: int) -> np.ndarray:
    """第 n 个激发偶态中的缀饰态。

    n = 0 时返回基态 |ξ₀⟩ = |0,−⟩（忽略 branch）；
    lower: |ξ_{2n−1}⟩ = (|n,−⟩ − |n−1,+⟩)/√2，
    upper: |ξ_{2n}⟩   = (|n,−⟩ + |n−1,+⟩)/√2。
    """
    _check_n_max(n_max)
    if n == 0:
        return basis_state(0, ATOM_GROUND, n_max)
    if not 1 <= n <= n_max:
        raise IndexError(f"偶态序号 {n} 超出范围 [1, {n_max}]")
    if branch not in ("lower", "upper"):
        raise ValueError(f"branch 只能是 lower 或 upper, 实际为 {branch!r}")
    sign = -1.0 if branch == "lower" else 1.0
    psi = basis_state(n, ATOM_GROUND, n_max) + sign * basis_state(n - 1, ATOM_EXCITED, n_max)
    return psi / math.sqrt(2.0)


def dressed_state_by_index(k: int, n_max: int) -> np.ndarray:
    """按 ξ_k 的编号取缀饰态：k=0 基态，奇数为下分支，偶数为上分支。"""
    if k < 0:
        raise IndexError(f"缀饰态编号必须非负, 实际为 {k}")
    if k == 0:
        return dressed_state(0, "lower", n_max)
    if k % 2 == 1:
        return dressed_state((k + 1) // 2, "lower", n_max)
    return dressed_state(k // 2, "upper", n_max)


def partial_trace_atom(rho: np.ndarray) -> np.ndarray:
    """对原子自由度求偏迹，得到腔模密度矩阵。"""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] % 2 != 0:
        raise DimensionMismatchError(f"期望 2(n_max+1) 维方阵, 实际形状 {rho.shape}")
    n_cav = rho.shape[0] // 2
    return rho.reshape(2, n_cav, 2, n_cav).trace(axis1=0, axis2=2)


def ket_to_dm(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def normalize_state(psi: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(psi)
    if norm == 0.0:
        raise ValueError("零向量无法归一化")
    return psi / norm


def expect(op: np.ndarray, state: np.ndarray) -> complex:
    """态（向量或密度矩阵）下的期望值；向量假定已归一化。"""
    state = np.asarray(state)
    if state.ndim == 1:
        return complex(np.vdot(state, op @ state))
    return complex(np.trace(op @ state))


def check_density_matrix(rho: np.ndarray, atol: float = 1e-10, psd_tol: float = 1e-8) -> np.ndarray:
    """校验密度矩阵不变量：厄米、迹为 1、最小本征值 ≥ −psd_tol。

    Returns:
        输入本身（便于链式调用）
    """
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionMismatchError(f"密度矩阵必须为方阵, 实际形状 {rho.shape}")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > atol:
        raise ValueError(f"密度矩阵非厄米: 偏差 {herm:.3e}")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > atol:
        raise ValueError(f"密度矩阵迹不为 1: {tr!r}")
    min_eig = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    if min_eig < -psd_tol:
        raise ValueError(f"密度矩阵非半正定: 最小本征值 {min_eig:.3e}")
    return rho


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """迹距离 ½‖ρ − σ‖₁。"""
    diff = np.asarray(rho) - np.asarray(sigma)
    diff = 0.5 * (diff + diff.conj().T)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def truncation_population(rho: np.ndarray, n_max: int) -> float:
    """最高 Fock 能级 |n_max⟩ 的布居（全空间或腔模空间均可）。"""
    rho = np.asarray(rho)
    if rho.shape[0] == 2 * (n_max + 1):
        rho_cav = partial_trace_atom(rho)
    elif rho.shape[0] == n_max + 1:
        rho_cav = rho
    else:
        raise DimensionMismatchError(f"维度 {rho.shape[0]} 与 n_max={n_max} 不匹配")
    return float(rho_cav[-1, -1].real)


def coherent_amplitude(p: SystemParams) -> complex:
    """g = 0 时受驱空腔的稳态相干振幅 α = −iε_d/(κ − iΔω_d)。"""
    return complex(-1j * p.eps_d / (p.kappa - 1j * p.delta_omega_d))


def coherent_state_cavity(alpha: complex, n_max: int) -> np.ndarray:
    """截断空间中的相干态（按位移算符作用于真空后重新归一化）。"""
    _check_n_max(n_max)
    pad = n_max + 1 + 40
    a_big = cavity_lowering(pad - 1)
    vac = np.zeros(pad, dtype=complex)
    vac[0] = 1.0
    psi = linalg.expm(alpha * a_big.conj().T - np.conj(alpha) * a_big) @ vac
    lost = 1.0 - float(np.linalg.norm(psi[: n_max + 1]) ** 2)
    if lost > 1e-6:
        logger.warning(f"相干态 |α|={abs(alpha):.3f} 在 n_max={n_max} 处截断，丢失布居 {lost:.2e}")
    return normalize_state(psi[: n_max + 1])


def embed_cavity_state(psi_cav: np.ndarray, atom: int = ATOM_GROUND) -> np.ndarray:
    """把腔模态与原子态 |−⟩（或 |+⟩）做张量积。"""
    atom_vec = np.zeros(2, dtype=complex)
    atom_vec[atom] = 1.0
    return np.kron(atom_vec, np.asarray(psi_cav, dtype=complex))
