# 受驱耗散 Jaynes–Cummings 振子多光子共振模拟包

from .config_service import ConfigService, Scenario, parse_scenario
from .correlations import CorrelationSeries, g2_cross, g2_forward, h_theta, waiting_time
from .exceptions import JCError
from .master_equation import build_liouvillian, propagate, steady_state
from .operators import SystemParams
from .trajectory_engine import TrajectoryRecord, UnravelingConfig, run_ensemble, run_trajectory

__version__ = "0.1.0"

__all__ = [
    "ConfigService",
    "CorrelationSeries",
    "JCError",
    "Scenario",
    "SystemParams",
    "TrajectoryRecord",
    "UnravelingConfig",
    "build_liouvillian",
    "g2_cross",
    "g2_forward",
    "h_theta",
    "parse_scenario",
    "propagate",
    "run_ensemble",
    "run_trajectory",
    "steady_state",
    "waiting_time",
]
