import logging

import pytest

from jc_blockade.operators import SystemParams


@pytest.fixture
def small_params() -> SystemParams:
    """弱耦合的小截断参数，单次求解在毫秒量级。"""
    return SystemParams(g=2.0, kappa=1.0, gamma=2.0, eps_d=0.8, delta_omega_d=-0.5, n_max=6)


@pytest.fixture
def empty_cavity() -> SystemParams:
    """g = 0 的受驱空腔，稳态为相干态。"""
    return SystemParams(g=0.0, kappa=1.0, gamma=2.0, eps_d=0.5, delta_omega_d=0.3, n_max=10)


@pytest.fixture(scope="session")
def peak_params() -> SystemParams:
    """g/κ = 200 的双光子共振峰，ε_d/g = 0.08。"""
    return SystemParams.two_photon_peak(0.08)


@pytest.fixture(autouse=True)
def _quiet_logs(caplog):
    caplog.set_level(logging.INFO, logger="jc_blockade")
