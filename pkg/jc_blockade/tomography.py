"""
自由衰减层析
关闭驱动与耦合后腔场自由衰减，本振与衰减模式 e^{−κ(t−T)} 匹配，
累积电荷 Q = √(κ/2)∫e^{−κs}dq 的分布即 Wigner 函数沿 θ 的边缘分布。
线性随机薛定谔方程 d|ψ̄⟩ = [−(iΔ + κ)a†a dt + e^{−iθ}√(2κ)a dq]|ψ̄⟩ 在腔模空间内按样本批量积分。
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, DimensionMismatchError
from .operators import SystemParams, cavity_lowering, partial_trace_atom
from .trajectory_engine import STEPPERS, UnravelingConfig, three_point_increments

logger = logging.getLogger("jc_blockade")

DEFAULT_BINS = 25
DEFAULT_DT = 2e-3
BATCH_SIZE = 4096


@dataclass
class QuadratureHistogram:
    """电荷 Q 的密度归一化直方图与原始样本。"""

    edges: np.ndarray
    density: np.ndarray
    samples: np.ndarray
    theta: float

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def mean(self) -> float:
        return float(self.samples.mean())

    def variance(self) -> float:
        return float(self.samples.var(ddof=1))

    def l1_distance(self, density, oversample: int = 9) -> float:
        """∫|h(q) − P(q)|dq，P 取每个箱内的平均值。density 为可调用对象（如 phase_space.Marginal）。"""
        widths = np.diff(self.edges)
        frac = (np.arange(oversample) + 0.5) / oversample
        points = self.edges[:-1, None] + widths[:, None] * frac[None, :]
        binned = np.asarray(density(points.ravel()), dtype=float).reshape(points.shape).mean(axis=1)
        inside = float(np.sum(np.abs(self.density - binned) * widths))
        # 直方图范围以外的参考质量
        lo = np.linspace(self.edges[0] - 6.0, self.edges[0], 601)
        hi = np.linspace(self.edges[-1], self.edges[-1] + 6.0, 601)
        outside = float(np.trapezoid(density(lo), lo) + np.trapezoid(density(hi), hi))
        return inside + outside


def cavity_density_matrix(state, params: SystemParams | None = None) -> np.ndarray:
    """把输入（腔模或全空间的态矢量/密度矩阵）化为腔模密度矩阵。

    params 为 None 时输入按腔模空间解释。
    """
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        state = np.outer(state, state.conj())
    if state.ndim != 2 or state.shape[0] != state.shape[1]:
        raise DimensionMismatchError(f"无法解释形状为 {state.shape} 的态")
    if params is not None and state.shape[0] == params.dim:
        return partial_trace_atom(state)
    if params is not None and state.shape[0] != params.cavity_dim:
        raise DimensionMismatchError(f"维度 {state.shape[0]} 与 n_max={params.n_max} 不匹配")
    return state


def sample_pure_states(rho_cav: np.ndarray, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """按本征分解抽取纯态，返回形状 (n_samples, dim)。"""
    weights, vectors = np.linalg.eigh(0.5 * (rho_cav + rho_cav.conj().T))
    weights = np.clip(weights, 0.0, None)
    weights /= weights.sum()
    picks = rng.choice(weights.size, size=n_samples, p=weights)
    return vectors[:, picks].T.copy()


def free_decay_charges(
    psi: np.ndarray,
    theta: float,
    kappa: float,
    rng: np.random.Generator,
    dt: float = DEFAULT_DT,
    integrator: str = "weak2",
    detuning: float = 0.0,
    residual_fraction: float = 1e-4,
) -> np.ndarray:
    """对一批腔模纯态积分自由衰减并返回每个样本的电荷 Q。

    积分到 e^{−2κs} < residual_fraction 为止；dq = √(8κ)⟨A_θ⟩dt + dW。
    """
    psi = np.array(psi, dtype=complex, ndmin=2)
    n_samples, dim = psi.shape
    a = cavity_lowering(dim - 1)
    phase = np.exp(-1j * theta)
    c_t = (phase * math.sqrt(2.0 * kappa) * a).T
    a_t = a.T
    gain = math.sqrt(8.0 * kappa)
    weight = math.sqrt(0.5 * kappa)
    half = np.exp(-0.5 * dt * (1j * detuning + kappa) * np.arange(dim))
    n_steps = math.ceil(math.log(1.0 / residual_fraction) / (2.0 * kappa * dt))
    stepper = STEPPERS[integrator]

    def quadrature(y):
        norm2 = np.einsum("bi,bi->b", y.conj(), y).real
        return (phase * np.einsum("bi,bi->b", y.conj(), y @ a_t)).real / norm2

    def drift(y):
        return (gain * quadrature(y))[:, None] * (y @ c_t)

    def diffusion(y):
        return y @ c_t

    charge = np.zeros(n_samples)
    for step in range(n_steps):
        s = step * dt
        if integrator == "weak2":
            dw = three_point_increments(rng, dt, (n_samples, 1))
        else:
            dw = rng.normal(0.0, math.sqrt(dt), (n_samples, 1))
        charge += weight * math.exp(-kappa * (s + 0.5 * dt)) * (gain * quadrature(psi) * dt + dw[:, 0])
        psi = half * psi
        psi = stepper(psi, drift, [diffusion], dt, dw)
        psi = half * psi
        psi /= np.sqrt(np.einsum("bi,bi->b", psi.conj(), psi).real)[:, None]
    return charge


def free_decay_tomography(
    state,
    theta: float,
    n_samples: int,
    seed: int,
    params: SystemParams | None = None,
    dt: float = DEFAULT_DT,
    bins=DEFAULT_BINS,
    integrator: str = "weak2",
    detuning: float = 0.0,
    residual_fraction: float = 1e-4,
) -> QuadratureHistogram:
    """自由衰减零差层析，估计 P_θ(Q)。

    Args:
        state: 腔模或全空间的态矢量或密度矩阵（混态按本征分解抽样）
        theta: 本振相位
        n_samples: 样本数
        seed: 随机种子
        params: 衰减期间的系统参数；给出时要求 ε_d = g = 0，κ 取自其中。
            为 None 时不做检查，调用方须保证 state 已是驱动与耦合关闭后的腔场，κ 取 1
        dt: 积分步长
        bins: 分箱数或 numpy 分箱规则

    Returns:
        QuadratureHistogram

    Raises:
        ConfigError: 衰减期间驱动或耦合未关闭，或配置不合法
    """
    if params is not None and (params.eps_d != 0.0 or params.g != 0.0):
        raise ConfigError(f"自由衰减期间驱动与耦合必须关闭: ε_d={params.eps_d}, g={params.g}")
    if params is None:
        logger.debug("未给出衰减参数: 假定 state 已处于自由衰减 (ε_d = g = 0)，κ = 1")
    if int(n_samples) != n_samples or n_samples < 2:
        raise ConfigError(f"n_samples={n_samples} 必须为 ≥2 的整数")
    kappa = params.kappa if params is not None else 1.0
    cfg = UnravelingConfig(
        scheme="free_decay",
        dt=dt,
        duration=math.log(1.0 / residual_fraction) / (2.0 * kappa),
        seed=seed,
        theta=theta,
        integrator=integrator,
        free_decay_detuning=detuning,
        residual_fraction=residual_fraction,
    )
    cfg.validate()
    rng = cfg.rng()
    rho_cav = cavity_density_matrix(state, params)
    psi = sample_pure_states(rho_cav, int(n_samples), rng)
    logger.info(f"自由衰减层析: θ={theta:.4f}, {n_samples} 个样本, {cfg.n_steps} 步")

    charges = np.concatenate([
        free_decay_charges(psi[start:start + BATCH_SIZE], theta, kappa, rng, dt, integrator, detuning, residual_fraction)
        for start in range(0, psi.shape[0], BATCH_SIZE)
    ])
    density, edges = np.histogram(charges, bins=bins, density=True)
    return QuadratureHistogram(edges=edges, density=density, samples=charges, theta=float(theta))
