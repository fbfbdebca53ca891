"""
主方程
Liouvillian 的构造（行优先向量化）、稳态零空间求解与瞬态传播。
向量化约定: vec(ρ)[i·D + j] = ρ[i, j]，因此 vec(AρB) = (A ⊗ Bᵀ) vec(ρ)。
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg

from .exceptions import AmbiguousSteadyStateError, DimensionMismatchError, SolverError
from .operators import (
    SystemParams,
    build_atom_ops,
    build_cavity_ops,
    build_jc_hamiltonian,
    truncation_population,
)

logger = logging.getLogger("jc_blockade")

# 谱分解的本征矩阵条件数超过该值时改用缩放平方法求矩阵指数
MAX_EIGENBASIS_CONDITION = 1e10
# 截断检查：|n_max⟩ 的稳态布居上限
TRUNCATION_TOLERANCE = 1e-6
# 按块计算 e^{λτ}，限制内存占用
_TAU_CHUNK = 1024


def vec(rho: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(rho).reshape(-1)


def unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(v).reshape(dim, dim)


def spre(op: np.ndarray) -> np.ndarray:
    """ρ ↦ Aρ"""
    return np.kron(op, np.eye(op.shape[0]))


def spost(op: np.ndarray) -> np.ndarray:
    """ρ ↦ ρB"""
    return np.kron(np.eye(op.shape[0]), op.T)


def sprepost(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """ρ ↦ AρB"""
    return np.kron(left, right.T)


def dissipator(c: np.ndarray) -> np.ndarray:
    """Lindblad 耗散子 D[C]ρ = CρC† − ½{C†C, ρ}。"""
    cdc = c.conj().T @ c
    return sprepost(c, c.conj().T) - 0.5 * spre(cdc) - 0.5 * spost(cdc)


def jump_superoperator(c: np.ndarray) -> np.ndarray:
    """跃迁超算符 J[C]ρ = CρC†。"""
    return sprepost(c, c.conj().T)


def observable_row(op: np.ndarray) -> np.ndarray:
    """tr(Oρ) = observable_row(O) · vec(ρ)。"""
    return vec(np.asarray(op).T)


class LiouvillianSpectrum:
    """Liouvillian 的稠密本征分解，供相关函数与传播复用（构造后只读）。"""

    def __init__(self, matrix: np.ndarray):
        self.eigenvalues, self.right = linalg.eig(matrix)
        self.condition = float(np.linalg.cond(self.right))
        try:
            self.left = linalg.inv(self.right)
        except linalg.LinAlgError as e:
            raise SolverError(f"本征基不可逆: {e}") from e
        logger.debug(f"Liouvillian 谱分解完成: dim={matrix.shape[0]}, cond={self.condition:.3e}")

    @property
    def well_conditioned(self) -> bool:
        return self.condition < MAX_EIGENBASIS_CONDITION

    def slowest_rate(self) -> float:
        """非零本征值中最小的 |Re λ|。"""
        rates = np.abs(self.eigenvalues.real)
        order = np.argsort(np.abs(self.eigenvalues))
        nonzero = rates[order[1:]]
        return float(nonzero[nonzero > 0].min())

    def evolve_vector(self, v0: np.ndarray, times: np.ndarray) -> np.ndarray:
        """返回形状 (len(times), D²) 的 e^{ℒt} v0。"""
        coeffs = self.left @ v0
        times = np.asarray(times, dtype=float)
        out = np.empty((times.size, v0.size), dtype=complex)
        for start in range(0, times.size, _TAU_CHUNK):
            block = times[start : start + _TAU_CHUNK]
            out[start : start + block.size] = (np.exp(np.outer(block, self.eigenvalues)) * coeffs) @ self.right.T
        return out

    def evolve_observable(self, v0: np.ndarray, row: np.ndarray, times: np.ndarray) -> np.ndarray:
        """返回 row · e^{ℒt} v0，对每个 t。"""
        weights = (row @ self.right) * (self.left @ v0)
        times = np.asarray(times, dtype=float)
        out = np.empty(times.size, dtype=complex)
        for start in range(0, times.size, _TAU_CHUNK):
            block = times[start : start + _TAU_CHUNK]
            out[start : start + block.size] = np.exp(np.outer(block, self.eigenvalues)) @ weights
        return out


def _expm_steps(matrix: np.ndarray, v0: np.ndarray, times: np.ndarray):
    """按时间升序逐段推进，依次产出 (原下标, e^{ℒt} v0)。"""
    order = np.argsort(times, kind="stable")
    cache: dict[float, np.ndarray] = {}
    current = np.array(v0, dtype=complex)
    previous = 0.0
    for idx in order:
        step = float(times[idx]) - previous
        if step > 0.0:
            key = round(step, 14)
            if key not in cache:
                cache[key] = linalg.expm(matrix * step)
            current = cache[key] @ current
            previous = float(times[idx])
        yield idx, current


def expm_evolve(matrix: np.ndarray, v0: np.ndarray, times: np.ndarray) -> np.ndarray:
    """用缩放平方法的矩阵指数逐段推进；times 须非负。返回 (len(times), D²)。"""
    times = np.asarray(times, dtype=float)
    out = np.empty((times.size, v0.size), dtype=complex)
    for idx, v in _expm_steps(matrix, v0, times):
        out[idx] = v
    return out


def expm_evolve_observable(matrix: np.ndarray, v0: np.ndarray, row: np.ndarray, times: np.ndarray) -> np.ndarray:
    """expm 路径下只保留 row · e^{ℒt} v0，不存整段态。"""
    times = np.asarray(times, dtype=float)
    out = np.empty(times.size, dtype=complex)
    for idx, v in _expm_steps(matrix, v0, times):
        out[idx] = row @ v
    return out


def default_delay_grid(p: SystemParams, span: float = 8.0, points: int = 801) -> np.ndarray:
    """对称延迟网格 [−span/κ, span/κ]，点数取奇数以包含 τ = 0。

    g/κ ≥ 200 时加密网格，使步长 ≤ π/(20g) 以分辨量子拍频。
    """
    half = span / p.kappa
    if p.g >= 200.0 * p.kappa:
        needed = int(np.ceil(2.0 * half / (np.pi / (20.0 * p.g)))) + 1
        points = max(points, needed)
    if points % 2 == 0:
        points += 1
    return np.linspace(-half, half, points)


class Liouvillian:
    """ℒ 的稠密超算符矩阵（D² × D²）与其来源参数。"""

    def __init__(self, matrix: np.ndarray, params: SystemParams):
        self.matrix = np.asarray(matrix, dtype=complex)
        self.params = params

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def hilbert_dim(self) -> int:
        return int(round(np.sqrt(self.dim)))

    def apply(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho)
        if rho.shape != (self.hilbert_dim, self.hilbert_dim):
            raise DimensionMismatchError(f"ρ 形状 {rho.shape} 与 Liouvillian 维度 {self.hilbert_dim} 不符")
        return unvec(self.matrix @ vec(rho), self.hilbert_dim)

    @cached_property
    def spectrum(self) -> LiouvillianSpectrum:
        return LiouvillianSpectrum(self.matrix)

    def without_jumps(self, *collapse_ops: np.ndarray) -> "Liouvillian":
        """去掉指定通道跃迁项后的 ℒ̄ = ℒ − Σ CρC†（排他等待时间用）。"""
        matrix = self.matrix.copy()
        for c in collapse_ops:
            matrix = matrix - jump_superoperator(c)
        return Liouvillian(matrix, self.params)


def collapse_operators(p: SystemParams) -> dict[str, np.ndarray]:
    """两个监测通道的塌缩算符：腔 √(2κ)a，自发辐射 √γ σ₋。"""
    a, _ = build_cavity_ops(p.n_max)
    sm, _ = build_atom_ops(p.n_max)
    return {"cavity": np.sqrt(2.0 * p.kappa) * a, "spontaneous": np.sqrt(p.gamma) * sm}


def build_liouvillian(p: SystemParams) -> Liouvillian:
    """ℒρ = −i[H,ρ] + κ(2aρa† − a†aρ − ρa†a) + (γ/2)(2σ₋ρσ₊ − σ₊σ₋ρ − ρσ₊σ₋)。"""
    h = build_jc_hamiltonian(p)
    matrix = -1j * (spre(h) - spost(h))
    for c in collapse_operators(p).values():
        matrix = matrix + dissipator(c)
    return Liouvillian(matrix, p)


def steady_state(L: Liouvillian) -> np.ndarray:
    """通过奇异值分解提取 ℒ 的零空间，得到迹为 1 的稳态。

    Raises:
        AmbiguousSteadyStateError: 零空间维度大于 1
        SolverError: 残差过大或结果不是合法密度矩阵
    """
    try:
        _, s, vh = linalg.svd(L.matrix)
    except linalg.LinAlgError as e:
        raise SolverError(f"稳态 SVD 未收敛: {e}") from e
    scale = max(1.0, float(s[0]))
    if s[-2] < 1e-10 * scale:
        raise AmbiguousSteadyStateError(
            f"ℒ 的零空间维度大于 1: 最小两个奇异值 {s[-1]:.3e}, {s[-2]:.3e}"
        )
    dim = L.hilbert_dim
    rho = unvec(vh[-1].conj(), dim)
    tr = np.trace(rho)
    if abs(tr) < 1e-14:
        raise SolverError("零空间向量的迹为零，无法归一化")
    rho = rho / tr
    rho = 0.5 * (rho + rho.conj().T)
    residual = float(np.linalg.norm(L.matrix @ vec(rho)))
    if residual > 1e-9:
        raise SolverError(f"稳态残差过大: {residual:.3e}")
    min_eig = float(np.linalg.eigvalsh(rho).min())
    if min_eig < -1e-8:
        raise SolverError(f"稳态非半正定: 最小本征值 {min_eig:.3e}")
    leak = truncation_population(rho, L.params.n_max)
    if leak > TRUNCATION_TOLERANCE:
        logger.warning(
            f"截断泄漏: |n_max={L.params.n_max}⟩ 稳态布居 {leak:.3e} > {TRUNCATION_TOLERANCE:.0e}，建议增大 n_max"
        )
    return rho


@dataclass
class Propagation:
    """瞬态传播结果。method 为 "spectral" 或 "expm"。"""

    times: np.ndarray
    states: list[np.ndarray] = field(default_factory=list)
    method: str = "spectral"

    def __iter__(self):
        return iter(self.states)

    def __len__(self):
        return len(self.states)

    def __getitem__(self, idx):
        return self.states[idx]

    def expect(self, op: np.ndarray) -> np.ndarray:
        return np.array([np.trace(op @ rho) for rho in self.states])


def propagate(L: Liouvillian, rho0: np.ndarray, t_grid, method: str | None = None) -> Propagation:
    """求 ρ(t) = e^{ℒt}ρ₀ 在给定时间点上的值。

    Args:
        L: Liouvillian
        rho0: 初态密度矩阵
        t_grid: 非负时间点
        method: None 自动选择；"spectral" 谱分解；"expm" 缩放平方法

    Returns:
        Propagation，其中 method 字段记录实际使用的方法
    """
    times = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if np.any(times < 0):
        raise ValueError("传播时间必须非负")
    rho0 = np.asarray(rho0, dtype=complex)
    dim = L.hilbert_dim
    if rho0.shape != (dim, dim):
        raise DimensionMismatchError(f"初态形状 {rho0.shape} 与空间维度 {dim} 不符")

    if method is None:
        method = "spectral" if L.spectrum.well_conditioned else "expm"
        if method == "expm":
            logger.info(f"本征基病态 (cond={L.spectrum.condition:.2e})，改用缩放平方法传播")
    if method == "spectral":
        vectors = L.spectrum.evolve_vector(vec(rho0), times)
    elif method == "expm":
        vectors = expm_evolve(L.matrix, vec(rho0), times)
    else:
        raise ValueError(f"未知传播方法: {method!r}")

    states = []
    for t, v in zip(times, vectors):
        if t == 0.0:
            states.append(rho0.copy())
            continue
        rho = unvec(v, dim)
        states.append(0.5 * (rho + rho.conj().T))
    return Propagation(times=times, states=states, method=method)
