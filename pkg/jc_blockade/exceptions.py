"""
异常定义
所有模块抛出的错误都继承自 JCError，同时继承最接近的内置异常，
这样上层使用 ValueError / RuntimeError 捕获时依然有效。
"""


class JCError(Exception):
    """jc_blockade 所有错误的基类。"""


class InvalidTruncationError(JCError, ValueError):
    """Fock 截断 n_max < 1。"""


class DimensionMismatchError(JCError, ValueError):
    """矩阵/向量维度与截断空间不一致。"""


class AmbiguousSteadyStateError(JCError, RuntimeError):
    """Liouvillian 零空间维度大于 1，稳态不唯一。"""


class SolverError(JCError, RuntimeError):
    """数值求解未收敛或残差过大。"""


class NormalizationError(JCError, ValueError):
    """归一化所需的稳态激发过小（例如 <a†a>_ss ≈ 0）。"""


class SingularParameterError(JCError, ValueError):
    """解析公式在该参数下奇异（例如 Ω = 0）。"""


class ConfigError(JCError, ValueError):
    """轨迹/层析配置不合法。"""


class DtTooLargeError(ConfigError):
    """单步总跃迁概率超过 0.1。"""


class EmptyEstimateError(JCError, ValueError):
    """没有可用的采样起点（零次计数）。"""


class InsufficientClicksError(JCError, ValueError):
    """某一通道的计数不足以构造等待时间直方图。"""


class ScenarioError(JCError, ValueError):
    """场景配置校验失败，携带全部违规项。"""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
