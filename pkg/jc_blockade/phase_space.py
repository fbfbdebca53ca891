"""
相空间
腔场 Wigner 函数（位移宇称的闭式 Laguerre 展开）、正交分量边缘分布与对称序特征函数。
约定: α = x + iy，真空 W = (2/π)e^{−2|α|²}，A_θ = ½(e^{iθ}a† + e^{−iθ}a) 的取值为 x cosθ + y sinθ。
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import interpolate, linalg, special

from .exceptions import DimensionMismatchError
from .operators import cavity_lowering

logger = logging.getLogger("jc_blockade")

DEFAULT_EXTENT = 3.5
DEFAULT_POINTS = 141
NORMALIZATION_TOLERANCE = 1e-4
# 真空宽度为 1/2，网格步长超过其一半视为分辨率不足
MAX_MARGINAL_STEP = 0.25
_MAX_WIDENINGS = 4


@dataclass
class WignerGrid:
    """相空间格点上的 Wigner 函数，values[i, j] = W(x_i, y_j)。

    source 保留生成该网格的腔模密度矩阵，边缘分布可在旋转格点上精确重算。
    """

    x_grid: np.ndarray
    y_grid: np.ndarray
    values: np.ndarray
    cell_area: float
    source: np.ndarray | None = None

    def normalization(self) -> float:
        return float(self.values.sum() * self.cell_area)

    def min_value(self) -> float:
        return float(self.values.min())


@dataclass
class Marginal:
    """正交分量 x_θ 的概率密度。"""

    q: np.ndarray
    density: np.ndarray
    theta: float

    def normalization(self) -> float:
        return float(np.trapezoid(self.density, self.q))

    def variance(self) -> float:
        norm = self.normalization()
        mean = np.trapezoid(self.q * self.density, self.q) / norm
        return float(np.trapezoid((self.q - mean) ** 2 * self.density, self.q) / norm)

    def __call__(self, q):
        return np.interp(q, self.q, self.density, left=0.0, right=0.0)


def _check_cavity_rho(rho_cav: np.ndarray) -> np.ndarray:
    rho_cav = np.asarray(rho_cav, dtype=complex)
    if rho_cav.ndim != 2 or rho_cav.shape[0] != rho_cav.shape[1]:
        raise DimensionMismatchError(f"期望腔模密度矩阵（方阵），实际形状 {rho_cav.shape}")
    return rho_cav


def wigner_values(rho_cav: np.ndarray, alpha) -> np.ndarray:
    """任意复振幅 α 处的 Wigner 函数。

    W(α) = (2/π)e^{−2|α|²}[Σ_m ρ_mm(−1)^m L_m(4|α|²)
           + 2 Σ_{n>m} Re(ρ_mn(−1)^m(2α)^{n−m}√(m!/n!) L_m^{n−m}(4|α|²))]
    """
    rho_cav = _check_cavity_rho(rho_cav)
    alpha = np.asarray(alpha, dtype=complex)
    x = 4.0 * np.abs(alpha) ** 2
    two_alpha = 2.0 * alpha
    total = np.zeros(alpha.shape)
    dim = rho_cav.shape[0]
    for m in range(dim):
        sign = -1.0 if m % 2 else 1.0
        total += sign * rho_cav[m, m].real * special.eval_genlaguerre(m, 0, x)
        for n in range(m + 1, dim):
            if rho_cav[m, n] == 0:
                continue
            ratio = math.exp(0.5 * (special.gammaln(m + 1) - special.gammaln(n + 1)))
            term = rho_cav[m, n] * sign * ratio * two_alpha ** (n - m) * special.eval_genlaguerre(m, n - m, x)
            total += 2.0 * term.real
    return (2.0 / np.pi) * np.exp(-0.5 * x) * total


def default_grid(extent: float = DEFAULT_EXTENT, points: int = DEFAULT_POINTS) -> tuple[np.ndarray, np.ndarray]:
    axis = np.linspace(-extent, extent, points)
    return axis, axis.copy()


def wigner(rho_cav: np.ndarray, grid=None, keep_source: bool = True) -> WignerGrid:
    """计算格点上的 Wigner 函数。

    Args:
        rho_cav: 腔模密度矩阵
        grid: (x_grid, y_grid)；为 None 时用默认 141×141 网格并按需放宽范围
        keep_source: 是否在结果中保留 ρ，供边缘分布精确重算

    Returns:
        WignerGrid
    """
    rho_cav = _check_cavity_rho(rho_cav)
    leak = float(rho_cav[-1, -1].real)
    if leak > 1e-6:
        logger.warning(f"截断泄漏: 腔模最高能级布居 {leak:.3e}，Wigner 函数精度可能不足")

    auto = grid is None
    extent, points = DEFAULT_EXTENT, DEFAULT_POINTS
    x_grid, y_grid = default_grid() if auto else (np.asarray(grid[0], float), np.asarray(grid[1], float))
    for attempt in range(_MAX_WIDENINGS + 1):
        xx, yy = np.meshgrid(x_grid, y_grid, indexing="ij")
        values = wigner_values(rho_cav, xx + 1j * yy)
        cell = float((x_grid[1] - x_grid[0]) * (y_grid[1] - y_grid[0]))
        result = WignerGrid(x_grid, y_grid, values, cell, rho_cav if keep_source else None)
        norm = result.normalization()
        if abs(norm - 1.0) <= NORMALIZATION_TOLERANCE:
            break
        if not auto or attempt == _MAX_WIDENINGS:
            logger.warning(f"Wigner 归一化偏差 {abs(norm - 1.0):.2e} 超过 {NORMALIZATION_TOLERANCE:.0e}")
            break
        step = 2.0 * extent / (points - 1)
        extent *= 1.5
        points = int(round(2.0 * extent / step)) + 1
        logger.debug(f"Wigner 网格放宽到 ±{extent:.3f}（{points} 点）")
        x_grid, y_grid = default_grid(extent, points)
    return result


def marginal(w: WignerGrid, theta: float) -> Marginal:
    """沿 θ 方向的正交分量边缘分布：对与 θ 正交的方向积分。

    有 source 时在旋转格点上重算 W；否则对已有网格做三次插值（网格外取 0）。
    """
    dx = float(w.x_grid[1] - w.x_grid[0])
    dy = float(w.y_grid[1] - w.y_grid[0])
    if max(dx, dy) > MAX_MARGINAL_STEP:
        raise ValueError(f"网格分辨率不足: 步长 {max(dx, dy):.3f} > {MAX_MARGINAL_STEP}")
    q = w.x_grid
    p = w.y_grid
    qq, pp = np.meshgrid(q, p, indexing="ij")
    c, s = math.cos(theta), math.sin(theta)
    xs = qq * c - pp * s
    ys = qq * s + pp * c
    if w.source is not None:
        rotated = wigner_values(w.source, xs + 1j * ys)
    else:
        interp = interpolate.RegularGridInterpolator(
            (w.x_grid, w.y_grid), w.values, method="cubic", bounds_error=False, fill_value=0.0
        )
        rotated = interp(np.stack([xs.ravel(), ys.ravel()], axis=-1)).reshape(xs.shape)
    density = np.trapezoid(rotated, p, axis=1)
    return Marginal(q=np.asarray(q), density=density, theta=float(theta))


def displacement_matrix(beta, dim: int) -> np.ndarray:
    """截断空间内 D(β) 的精确矩阵元 ⟨m|D(β)|n⟩（无限维闭式取前 dim 行列）。

    beta 可以是数组，结果形状为 (dim, dim) + beta.shape。
    """
    beta = np.asarray(beta, dtype=complex)
    x = np.abs(beta) ** 2
    pref = np.exp(-0.5 * x)
    out = np.empty((dim, dim) + beta.shape, dtype=complex)
    for m in range(dim):
        for n in range(dim):
            lo, hi = min(m, n), max(m, n)
            ratio = math.exp(0.5 * (special.gammaln(lo + 1) - special.gammaln(hi + 1)))
            factor = beta ** (m - n) if m >= n else (-np.conj(beta)) ** (n - m)
            out[m, n] = pref * ratio * factor * special.eval_genlaguerre(lo, hi - lo, x)
    return out


def characteristic_function(rho_cav: np.ndarray, mu, nu):
    """对称序特征函数 χ_S(μ, ν) = tr{ρ e^{i[(μ+iν)a† + (μ−iν)a]}} = tr{ρ D(β)}，β = −ν + iμ。"""
    rho_cav = _check_cavity_rho(rho_cav)
    beta = -np.asarray(nu, dtype=float) + 1j * np.asarray(mu, dtype=float)
    chi = np.einsum("nm,mn...->...", rho_cav, displacement_matrix(beta, rho_cav.shape[0]))
    return complex(chi) if chi.ndim == 0 else chi


def wigner_from_characteristic(rho_cav: np.ndarray, x, y, extent: float = 6.0, points: int = 121) -> np.ndarray:
    """对特征函数做二维傅里叶积分得到 W（慢速校验路径）。

    W(α) = (1/π²)∫ χ(β) e^{αβ* − α*β} d²β
    """
    rho_cav = _check_cavity_rho(rho_cav)
    axis = np.linspace(-extent, extent, points)
    h = axis[1] - axis[0]
    br, bi = np.meshgrid(axis, axis, indexing="ij")
    beta = br + 1j * bi
    chi = np.einsum("nm,mn...->...", rho_cav, displacement_matrix(beta, rho_cav.shape[0]))
    alphas = np.asarray(x, dtype=float) + 1j * np.asarray(y, dtype=float)
    out = np.empty(alphas.shape)
    for idx in np.ndindex(alphas.shape):
        a = alphas[idx]
        kernel = np.exp(a * np.conj(beta) - np.conj(a) * beta)
        out[idx] = float((chi * kernel).sum().real * h * h / np.pi**2)
    return out


def displaced_parity(rho_cav: np.ndarray, alpha: complex, pad: int = 30) -> float:
    """直接计算 (2/π)Σ_n(−1)^n⟨n|D(−α)ρD(α)|n⟩，在扩充的 Fock 空间中用矩阵指数求位移。"""
    rho_cav = _check_cavity_rho(rho_cav)
    dim = rho_cav.shape[0]
    big = dim + pad
    a = cavity_lowering(big - 1)
    rho_big = np.zeros((big, big), dtype=complex)
    rho_big[:dim, :dim] = rho_cav
    disp = linalg.expm(-alpha * a.conj().T + np.conj(alpha) * a)
    shifted = disp @ rho_big @ disp.conj().T
    parity = np.where(np.arange(big) % 2, -1.0, 1.0)
    return float((2.0 / np.pi) * np.sum(parity * np.diag(shifted).real))


def _hermite_functions(n_max: int, q: np.ndarray) -> np.ndarray:
    """A_0 本征函数 ψ_n(q) = 2^{1/4} h_n(√2 q)，按递推计算，形状 (n_max+1, len(q))。"""
    x = math.sqrt(2.0) * np.asarray(q, dtype=float)
    out = np.empty((n_max + 1, x.size))
    out[0] = np.pi ** -0.25 * np.exp(-0.5 * x**2)
    if n_max >= 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for n in range(1, n_max):
        out[n + 1] = math.sqrt(2.0 / (n + 1)) * x * out[n] - math.sqrt(n / (n + 1)) * out[n - 1]
    return 2.0**0.25 * out


def quadrature_distribution(rho_cav: np.ndarray, theta: float, q) -> np.ndarray:
    """由 Hermite 函数直接计算 P_θ(q) = ⟨q_θ|ρ|q_θ⟩，⟨q_θ|n⟩ = e^{−inθ}ψ_n(q)。"""
    rho_cav = _check_cavity_rho(rho_cav)
    q = np.asarray(q, dtype=float)
    psi = _hermite_functions(rho_cav.shape[0] - 1, q.ravel())
    phases = np.exp(-1j * theta * np.arange(rho_cav.shape[0]))
    amps = phases[:, None] * psi
    density = np.einsum("mq,mn,nq->q", amps, rho_cav, amps.conj())
    return density.real.reshape(q.shape)
