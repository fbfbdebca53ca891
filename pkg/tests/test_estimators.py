import math

import numpy as np
import pytest

from jc_blockade.correlations import get_engine, waiting_time
from jc_blockade.estimators import (
    click_statistics,
    current_gain,
    growing_window_states,
    operational_reference,
    random_start_times,
    sample_h_operational,
    time_averaged_state,
    waiting_histogram,
    waiting_intervals,
)
from jc_blockade.exceptions import ConfigError, EmptyEstimateError, InsufficientClicksError
from jc_blockade.operators import SystemParams, check_density_matrix, trace_distance
from jc_blockade.trajectory_engine import TrajectoryRecord, UnravelingConfig, run_direct, run_ensemble, run_wave_particle


def _synthetic_record(params, jumps, scheme="direct"):
    cfg = UnravelingConfig(scheme=scheme, dt=0.01, duration=2.0, r=0.5)
    return TrajectoryRecord(config=cfg, params=params, jumps=jumps)


def test_current_gain():
    assert current_gain(0.5, 1.0) == pytest.approx(2.0)
    assert current_gain(1.0) == 0.0


def test_waiting_intervals_stay_within_records(small_params):
    first = _synthetic_record(small_params, [(0.1, "cavity"), (0.4, "cavity"), (0.5, "spontaneous"), (1.0, "cavity")])
    second = _synthetic_record(small_params, [(0.2, "cavity"), (0.3, "cavity")])
    np.testing.assert_allclose(waiting_intervals([first, second], "forward"), [0.3, 0.6, 0.1])
    assert waiting_intervals(first, "side").size == 0
    with pytest.raises(ValueError):
        waiting_intervals(first, "up")


def test_waiting_histogram_needs_two_clicks(small_params):
    record = _synthetic_record(small_params, [(0.5, "spontaneous")])
    with pytest.raises(InsufficientClicksError):
        waiting_histogram(record, "side")


def test_waiting_histogram_is_density(small_params):
    cfg = UnravelingConfig(scheme="direct", dt=0.005, duration=10.0, seed=12)
    result = run_ensemble(small_params, cfg, n_trajectories=20, keep_records=True)
    hist = waiting_histogram(result.records, "forward", bins=20)
    assert hist.kind == "wait_forward"
    width = hist.metadata["bin_width"]
    assert hist.values.sum() * width == pytest.approx(1.0)
    assert hist.metadata["count"] == waiting_intervals(result.records, "cavity").size


def test_click_statistics(small_params):
    records = [
        _synthetic_record(small_params, [(0.1, "cavity"), (0.2, "spontaneous"), (0.3, "cavity")]),
        _synthetic_record(small_params, [(0.4, "cavity")]),
    ]
    stats = click_statistics(records)
    assert (stats.cavity, stats.spontaneous) == (3, 1)
    assert stats.duration == pytest.approx(4.0)
    assert stats.forward_side_ratio == pytest.approx(3.0)
    assert stats.to_dict()["cavity_rate"] == pytest.approx(0.75)
    np.testing.assert_array_equal(stats.per_record["cavity"], [2, 1])
    with pytest.raises(EmptyEstimateError):
        click_statistics([])


def test_time_average_requires_snapshots(small_params):
    record = _synthetic_record(small_params, [])
    with pytest.raises(EmptyEstimateError):
        time_averaged_state(record, (0.0, 1.0))


def test_time_averaged_state_is_density_matrix(small_params):
    cfg = UnravelingConfig(scheme="direct", dt=0.005, duration=4.0, seed=3, snapshot_stride=10)
    record = run_direct(small_params, cfg)
    rho = time_averaged_state(record, (1.0, 4.0))
    check_density_matrix(rho, atol=1e-9)
    point = time_averaged_state(record, (2.0, 2.0))
    assert np.trace(point @ point).real == pytest.approx(1.0)
    states = growing_window_states(record, 0.0, [1.0, 2.0, 4.0])
    assert len(states) == 3
    with pytest.raises(ValueError):
        time_averaged_state(record, (3.0, 1.0))


def test_sample_h_requires_partial_homodyne(small_params):
    record = _synthetic_record(small_params, [(0.5, "cavity")])
    with pytest.raises(ConfigError):
        sample_h_operational(record, np.linspace(-0.1, 0.1, 5))


def test_sample_h_without_usable_clicks():
    p = SystemParams(g=2.0, kappa=1.0, gamma=2.0, eps_d=0.0, delta_omega_d=0.0, n_max=3)
    cfg = UnravelingConfig(scheme="wave_particle", dt=0.005, duration=1.0, r=0.5, bandwidth=10.0)
    record = run_wave_particle(p, cfg)
    assert record.jumps == []
    with pytest.raises(EmptyEstimateError):
        sample_h_operational(record, np.linspace(-0.1, 0.1, 5))


def test_unconditioned_start_times_give_mean_current(small_params):
    theta = math.pi / 4
    cfg = UnravelingConfig(scheme="wave_particle", dt=0.005, duration=60.0, r=0.5, theta=theta, bandwidth=10.0, seed=2)
    record = run_wave_particle(small_params, cfg)
    starts = random_start_times(record, 400, np.random.default_rng(0))
    taus = np.linspace(-0.5, 0.5, 11)
    series = sample_h_operational(record, taus, start_times=starts)
    assert series.metadata["conditioned_on"] == "given"
    engine = get_engine(small_params)
    a_mean = np.trace(engine.a @ engine.rho_ss)
    level = current_gain(cfg.r, small_params.kappa) * (np.exp(-1j * theta) * a_mean).real
    # 起点相互独立的前提下噪声尺度为 √(B/(2N_s))；相邻起点的电流相关，放宽到 6 倍
    assert abs(series.values.mean() - level) < 6.0 * series.metadata["noise_scale"] + 0.05


def test_operational_reference_tails(small_params):
    taus = np.linspace(-40.0, 40.0, 1601)
    ref = operational_reference(small_params, 0.3, 0.5, 10.0, taus)
    engine = get_engine(small_params)
    a_mean = np.trace(engine.a @ engine.rho_ss)
    level = current_gain(0.5) * (np.exp(-0.3j) * a_mean).real
    assert ref.values[-1] == pytest.approx(level, abs=1e-6)
    assert ref.normalization == "current"


@pytest.mark.slow
def test_direct_waiting_histogram_mean_at_peak(peak_params):
    cfg = UnravelingConfig(scheme="direct", dt=2e-4, duration=400.0, seed=31)
    record = run_direct(peak_params, cfg)
    hist = waiting_histogram(record, "forward")
    assert hist.metadata["count"] >= 300
    assert hist.metadata["mean"] == pytest.approx(waiting_time(peak_params, "forward").metadata["mean"], rel=0.1)


@pytest.mark.slow
def test_long_run_time_average_approaches_steady_state(small_params):
    cfg = UnravelingConfig(scheme="direct", dt=0.005, duration=400.0, seed=4, snapshot_stride=20)
    record = run_direct(small_params, cfg)
    rho = time_averaged_state(record, (0.0, 400.0))
    assert trace_distance(rho, get_engine(small_params).rho_ss) < 0.05


@pytest.mark.slow
@pytest.mark.parametrize("theta", [math.pi / 4, 3 * math.pi / 4])
def test_time_averaged_current_at_peak(peak_params, theta):
    cfg = UnravelingConfig(scheme="wave_particle", dt=5e-4, duration=160.0, r=0.5, theta=theta, bandwidth=10.0, seed=23)
    result = run_ensemble(peak_params, cfg, n_trajectories=8, keep_records=True)
    means = []
    for record in result.records:
        settled = record.current_times >= 10.0
        means.append(record.current_values[settled].mean())
    means = np.asarray(means)
    engine = get_engine(peak_params)
    a_mean = np.trace(engine.a @ engine.rho_ss)
    signal = current_gain(cfg.r, peak_params.kappa) * (np.exp(-1j * theta) * a_mean).real
    # 离散滤波的稳态均值比信号高出 BΔ/(1−e^{−BΔ})
    b_dt = cfg.bandwidth * cfg.dt
    level = signal * b_dt / (1.0 - math.exp(-b_dt))
    se = means.std(ddof=1) / math.sqrt(means.size)
    assert np.sign(means.mean()) == np.sign(level)
    assert abs(means.mean() - level) < 4.0 * se + 0.02
