"""
四能级解析模型
双光子共振附近的最小模型 {|ξ₀⟩, |ξ₁⟩, |ξ₂⟩, |ξ₃⟩}：有效参数、条件态、
g²_AB(τ) 的闭式表达式，以及共振弱驱动极限。
约定：失谐以绝对值 |Δω_d| 表示；内部 SystemParams 中双光子峰对应正失谐。
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize

from .correlations import g2_cross
from .exceptions import SingularParameterError
from .master_equation import dissipator, spost, spre, unvec, vec
from .operators import SystemParams

logger = logging.getLogger("jc_blockade")

SQRT2 = math.sqrt(2.0)
# 超过该 ε_d/g 时二阶微扰不再可靠
PERTURBATIVE_LIMIT = 0.2
# 条件态的反转 Σ(0) 与拍频系数 D
EMISSION_CONSTANTS = {
    "forward": (-2.0 / 5.0, 1.0 / 5.0),
    "side": (-2.0 / 3.0, 1.0 / 3.0),
}


@dataclass(frozen=True)
class FourLevelParams:
    """四能级有效模型参数（rad/time）。"""

    omega: float
    nu: float
    gamma31: float
    gamma32: float
    big_gamma: float
    deltas: tuple[float, float, float, float]
    p3: float
    gamma: float
    kappa: float

    @property
    def atom_excitation_ss(self) -> float:
        return 1.5 * self.p3

    @property
    def photon_number_ss(self) -> float:
        return 2.5 * self.p3

    @property
    def cascade_ratio(self) -> float:
        return self.gamma31 / self.gamma32


def effective_detuning(p: SystemParams) -> float:
    """双光子峰的 |Δω_d|/g = 1/√2 + √2(ε_d/g)²。"""
    if p.g == 0.0:
        raise SingularParameterError("g = 0 时双光子共振无定义")
    return 1.0 / SQRT2 + SQRT2 * (p.eps_d / p.g) ** 2


def level_shifts(eps_d: float, g: float) -> tuple[float, float, float, float]:
    """二阶微扰能移 δ₀..δ₃。"""
    x = eps_d**2 / g
    return (
        SQRT2 * x,
        -((20.0 + 19.0 * SQRT2) / 7.0) * x,
        ((20.0 - 19.0 * SQRT2) / 7.0) * x,
        -SQRT2 * x,
    )


def cascade_rates(gamma: float, kappa: float) -> tuple[float, float, float]:
    """(Γ31, Γ32, Γ)，对任意 γ/κ 成立。"""
    gamma31 = gamma / 4.0 + (SQRT2 + 1.0) ** 2 * kappa / 2.0
    gamma32 = gamma / 4.0 + (SQRT2 - 1.0) ** 2 * kappa / 2.0
    return gamma31, gamma32, gamma / 2.0 + kappa


def gamma_ratio(gamma: float, kappa: float) -> float:
    """Γ31/Γ32：γ = 2κ 时约 5.83，γ = 0 时为 (√2+1)⁴ ≈ 34。"""
    gamma31, gamma32, _ = cascade_rates(gamma, kappa)
    return gamma31 / gamma32


def effective_params(p: SystemParams) -> FourLevelParams:
    """由完整参数计算四能级有效参数。

    Args:
        p: 系统参数（模型在阻抗匹配 γ = 2κ 下推导）

    Returns:
        FourLevelParams
    """
    if p.g == 0.0:
        raise SingularParameterError("g = 0 时有效耦合 Ω = 2√2ε²/g 无定义")
    if p.gamma != 2.0 * p.kappa:
        logger.warning(f"四能级模型假设 γ = 2κ，当前 γ/κ = {p.gamma / p.kappa:.3f}")
    ratio = p.eps_d / p.g
    if ratio > PERTURBATIVE_LIMIT:
        logger.warning(f"ε_d/g = {ratio:.3f} 超出微扰区 (> {PERTURBATIVE_LIMIT})，解析结果仅供参考")
    omega = 2.0 * SQRT2 * p.eps_d**2 / p.g
    deltas = level_shifts(p.eps_d, p.g)
    gamma31, gamma32, big_gamma = cascade_rates(p.gamma, p.kappa)
    denom = 4.0 * omega**2 + p.gamma**2
    p3 = omega**2 / denom if denom > 0 else 0.0
    return FourLevelParams(
        omega=omega,
        nu=2.0 * p.g + deltas[2] - deltas[1],
        gamma31=gamma31,
        gamma32=gamma32,
        big_gamma=big_gamma,
        deltas=deltas,
        p3=p3,
        gamma=p.gamma,
        kappa=p.kappa,
    )


def _ket(*amplitudes) -> np.ndarray:
    return np.array(amplitudes, dtype=complex)


def conditioned_states() -> tuple[np.ndarray, np.ndarray]:
    """腔发射与侧向发射之后的四能级条件态（基矢顺序 ξ₀, ξ₁, ξ₂, ξ₃）。

    腔发射: a|ξ₃⟩ ∝ ψ_super = √(2/3)[(√2+1)/2 |ξ₁⟩ + (√2−1)/2 |ξ₂⟩]，
    侧向发射: σ₋|ξ₃⟩ ∝ |1,−⟩ = (|ξ₁⟩ + |ξ₂⟩)/√2；
    |ξ₁⟩、|ξ₂⟩ 的稳态布居在两种发射后都落到 |ξ₀⟩。
    """
    ground = _ket(1, 0, 0, 0)
    psi_super = math.sqrt(2.0 / 3.0) * _ket(0, (SQRT2 + 1.0) / 2.0, (SQRT2 - 1.0) / 2.0, 0)
    one_minus = _ket(0, 1, 1, 0) / SQRT2
    rho_cond_1 = 0.4 * np.outer(ground, ground) + 0.6 * np.outer(psi_super, psi_super.conj())
    rho_cond_2 = (2.0 / 3.0) * np.outer(ground, ground) + (1.0 / 3.0) * np.outer(one_minus, one_minus.conj())
    return rho_cond_1, rho_cond_2


def solution_constants(fp: FourLevelParams, emission: str) -> tuple[float, float, float]:
    """(Σ(0), C, D)，emission 取 forward 或 side。"""
    if emission not in EMISSION_CONSTANTS:
        raise ValueError(f"emission 只能是 forward 或 side, 实际为 {emission!r}")
    sigma0, d = EMISSION_CONSTANTS[emission]
    k = 1.0 / (fp.gamma**2 + 4.0 * fp.omega**2)
    c = -(fp.omega**2) * k * (1.0 + 2.0 * sigma0)
    return sigma0, c, d


def matrix_elements(fp: FourLevelParams, emission: str, tau) -> dict[str, np.ndarray]:
    """条件化之后 τ ≥ 0 的 ρ33、ρ11+ρ22 与 2Re ρ12 闭式解。"""
    sigma0, c, d = solution_constants(fp, emission)
    tau = np.asarray(tau, dtype=float)
    g, om, nu = fp.gamma, fp.omega, fp.nu
    k = 1.0 / (g**2 + 4.0 * om**2)
    slow = np.exp(-g * tau)
    fast = np.exp(-2.0 * g * tau)
    s2, c2 = np.sin(2.0 * om * tau), np.cos(2.0 * om * tau)
    rho33 = c * fast + om**2 * k - sigma0 * slow * g * om * k * (s2 - 2.0 * (om / g) * c2) - om * g * k * slow * s2
    pop12 = (
        -2.0 * c * fast
        + 2.0 * om**2 * k
        + 2.0 * sigma0 * slow * g * om * k * ((g / (2.0 * om)) * c2 + s2)
        + g**2 * k * slow * c2
    )
    beat = d * slow * np.cos(nu * tau)
    return {"rho33": rho33, "rho11_plus_rho22": pop12, "two_re_rho12": beat}


def g2_ab_from_matrix_elements(fp: FourLevelParams, tau) -> np.ndarray:
    """由矩阵元拼出 g²_AB(τ)，与 g2_ab_analytic 互为校验。"""
    tau = np.asarray(tau, dtype=float)
    if fp.omega == 0.0:
        raise SingularParameterError("Ω = 0，解析关联函数无定义")
    fwd = matrix_elements(fp, "forward", np.abs(tau))
    side = matrix_elements(fp, "side", np.abs(tau))
    positive = 0.5 * (fwd["rho11_plus_rho22"] + fwd["rho33"] - fwd["two_re_rho12"]) / fp.atom_excitation_ss
    negative = 0.5 * (side["rho11_plus_rho22"] + 3.0 * side["rho33"] + side["two_re_rho12"]) / fp.photon_number_ss
    return np.where(tau >= 0.0, positive, negative)


def g2_ab_analytic(fp: FourLevelParams, tau) -> np.ndarray:
    """时间不对称的 g²_AB(τ) 闭式表达式（τ 带符号）。

    Raises:
        SingularParameterError: Ω = 0
    """
    if fp.omega == 0.0:
        raise SingularParameterError("Ω = 0，解析关联函数无定义")
    tau = np.asarray(tau, dtype=float)
    t = np.abs(tau)
    g, om, nu = fp.gamma, fp.omega, fp.nu
    ratio = g / om
    env = np.exp(-g * t)
    common = 1.0 + np.exp(-2.0 * g * t) / 15.0 - (7.0 / 15.0) * ratio * env * np.sin(2.0 * om * t)
    beat = ((g**2 + 4.0 * om**2) / om**2) * env * np.cos(nu * t) / 15.0
    positive = common + (3.0 * ratio**2 - 4.0) * env * np.cos(2.0 * om * t) / 15.0 - beat
    negative = common + (ratio**2 - 12.0) * env * np.cos(2.0 * om * t) / 15.0 + beat
    result = np.where(tau >= 0.0, positive, negative)
    return result if result.ndim else float(result)


def g2_ab_zero(fp: FourLevelParams) -> float:
    """τ = 0 的闭式值 8/15 + (2/15)(γ/Ω)²。"""
    if fp.omega == 0.0:
        raise SingularParameterError("Ω = 0，解析关联函数无定义")
    return 8.0 / 15.0 + (2.0 / 15.0) * (fp.gamma / fp.omega) ** 2


def g2_ab_resonant(g: float, gamma: float, tau, approximate: bool = False):
    """共振弱驱动极限下的 g²_AB,res(τ)。

    Args:
        g: 耦合强度
        gamma: 原子衰减率
        tau: 带符号延迟
        approximate: True 时返回 [1 − e^{−γ|τ|/2}(2g/γ)sin gτ]²

    Returns:
        与 tau 同形的数组
    """
    if gamma <= 0.0 or g <= 0.0:
        raise SingularParameterError("共振极限要求 g > 0 且 γ > 0")
    tau = np.asarray(tau, dtype=float)
    env = np.exp(-gamma * np.abs(tau) / 2.0)
    if approximate:
        out = (1.0 - env * (2.0 * g / gamma) * np.sin(g * tau)) ** 2
    else:
        k = 2.0 * g / gamma - (gamma / (2.0 * g)) * np.sign(tau)
        out = (1.0 + env * (np.cos(g * tau) - k * np.sin(g * tau))) ** 2
    return out if out.ndim else float(out)


def resonant_peak(g: float, gamma: float) -> tuple[float, float]:
    """τ = 0 旁第一个 Rabi 峰（τ < 0 侧）的位置与高度，峰值约为 (2g/γ)²。"""
    res = optimize.minimize_scalar(
        lambda t: -g2_ab_resonant(g, gamma, t),
        bounds=(-math.pi / g, 0.0),
        method="bounded",
        options={"xatol": 1e-10 / g},
    )
    return float(res.x), float(-res.fun)


def resonant_zeros(g: float, gamma: float, m) -> np.ndarray:
    """Rabi 振荡项 cos gτ − k sin gτ 的零点，位于 mπ/g 附近。"""
    m = np.asarray(m, dtype=float)
    sign = np.where(m >= 0, 1.0, -1.0)
    k = 2.0 * g / gamma - (gamma / (2.0 * g)) * sign
    return (m * math.pi + np.arctan(1.0 / k)) / g


def intermediate_period_ratio() -> tuple[float, float]:
    """两条级联路径的周期与拍频周期之比：2√2/(√2−1) ≈ 6.8 与 2√2/(√2+1) ≈ 1.2。"""
    return 2.0 * SQRT2 / (SQRT2 - 1.0), 2.0 * SQRT2 / (SQRT2 + 1.0)


def four_level_liouvillian(fp: FourLevelParams) -> np.ndarray:
    """有效主方程在 {ξ₀..ξ₃} 上的 16×16 生成元。

    H = −(ν/2)|1⟩⟨1| + (ν/2)|2⟩⟨2| + Ω(|0⟩⟨3| + |3⟩⟨0|)，
    耗散 Γ31 D[|1⟩⟨3|] + Γ32 D[|2⟩⟨3|] + Γ D[|0⟩⟨1|] + Γ D[|0⟩⟨2|]。
    """

    def proj(i, j):
        m = np.zeros((4, 4), dtype=complex)
        m[i, j] = 1.0
        return m

    h = -0.5 * fp.nu * proj(1, 1) + 0.5 * fp.nu * proj(2, 2) + fp.omega * (proj(0, 3) + proj(3, 0))
    gen = -1j * (spre(h) - spost(h))
    gen = gen + fp.gamma31 * dissipator(proj(1, 3)) + fp.gamma32 * dissipator(proj(2, 3))
    gen = gen + fp.big_gamma * (dissipator(proj(0, 1)) + dissipator(proj(0, 2)))
    return gen


def four_level_steady_state(fp: FourLevelParams) -> np.ndarray:
    null = linalg.null_space(four_level_liouvillian(fp))
    if null.shape[1] != 1:
        raise SingularParameterError(f"四能级生成元零空间维度为 {null.shape[1]}")
    rho = unvec(null[:, 0], 4)
    rho = rho / np.trace(rho)
    return 0.5 * (rho + rho.conj().T)


def evolve_four_level(fp: FourLevelParams, rho0: np.ndarray, tau) -> np.ndarray:
    """数值传播四能级条件态，返回 (len(tau), 4, 4)。"""
    gen = four_level_liouvillian(fp)
    return np.array([unvec(linalg.expm(gen * t) @ vec(rho0), 4) for t in np.atleast_1d(tau)])


def dominant_frequency(tau, values, band: tuple[float, float]) -> float:
    """均匀网格上 values 在角频率区间 band 内的谱峰位置。"""
    tau = np.asarray(tau, dtype=float)
    values = np.asarray(values, dtype=float)
    dt = tau[1] - tau[0]
    padded = 8 * tau.size
    spectrum = np.abs(np.fft.rfft((values - values.mean()) * np.hanning(tau.size), n=padded))
    freqs = 2.0 * np.pi * np.fft.rfftfreq(padded, d=dt)
    mask = (freqs >= band[0]) & (freqs <= band[1])
    if not mask.any():
        raise ValueError(f"频带 {band} 超出可分辨范围")
    return float(freqs[mask][np.argmax(spectrum[mask])])


def compare(p: SystemParams, tau_grid=None) -> dict[str, np.ndarray]:
    """解析 g²_AB 与完整主方程 g²_AB 的成对列。"""
    numeric = g2_cross(p, tau_grid)
    analytic = g2_ab_analytic(effective_params(p), numeric.tau_grid)
    return {"tau": numeric.tau_grid, "analytic": np.asarray(analytic), "numeric": numeric.values}
