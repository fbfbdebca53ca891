import math

import numpy as np
import pytest

from jc_blockade.correlations import (
    CorrelationEngine,
    CorrelationSeries,
    detuning_scan,
    g2_cross,
    g2_forward,
    get_engine,
    h_theta,
    waiting_time,
)
from jc_blockade.exceptions import NormalizationError
from jc_blockade.four_level import effective_params, g2_ab_zero
from jc_blockade.operators import SystemParams, quadrature_operator


def test_series_rejects_unknown_kind():
    with pytest.raises(ValueError, match="未知的关联类型"):
        CorrelationSeries(np.arange(3.0), np.ones(3), "g3")


def test_series_rejects_negative_intensity_correlation():
    with pytest.raises(ValueError):
        CorrelationSeries(np.arange(3.0), np.array([1.0, -0.5, 1.0]), "g2")


def test_series_requires_increasing_grid():
    with pytest.raises(ValueError, match="严格递增"):
        CorrelationSeries(np.array([0.0, 2.0, 1.0]), np.ones(3), "g2")


def test_filtered_constant_series_is_unchanged():
    s = CorrelationSeries(np.linspace(0.0, 5.0, 51), np.full(51, 2.5), "H_theta", metadata={"n_ss": 1.0})
    np.testing.assert_allclose(s.filtered(3.0).values, 2.5)


def test_filtered_requires_uniform_grid():
    s = CorrelationSeries(np.array([0.0, 0.1, 0.5]), np.ones(3), "g2")
    with pytest.raises(ValueError, match="均匀"):
        s.filtered(1.0)


def test_empty_cavity_g2_is_flat(empty_cavity):
    taus = np.linspace(-5.0, 5.0, 41)
    series = g2_forward(empty_cavity, taus)
    np.testing.assert_allclose(series.values, 1.0, atol=1e-8)
    assert get_engine(empty_cavity).g2_zero() == pytest.approx(1.0, abs=1e-8)


def test_g2_forward_is_even_and_decays_to_one(small_params):
    taus = np.linspace(-40.0, 40.0, 161)
    series = g2_forward(small_params, taus)
    np.testing.assert_allclose(series.values, series.values[::-1], atol=1e-12)
    assert series.values[-1] == pytest.approx(1.0, abs=1e-4)
    assert series.at_zero() == pytest.approx(get_engine(small_params).g2_zero(), rel=1e-8)
    assert series.asymmetry() == pytest.approx(0.0, abs=1e-10)


def test_g2_cross_is_continuous_at_zero(small_params):
    series = g2_cross(small_params, np.linspace(-40.0, 40.0, 161))
    assert series.at_zero("+") == pytest.approx(series.at_zero("-"), abs=1e-8)
    assert series.values[0] == pytest.approx(1.0, abs=1e-4)
    assert series.values[-1] == pytest.approx(1.0, abs=1e-4)


def test_h_theta_phase_flip(small_params):
    taus = np.linspace(-5.0, 5.0, 41)
    h0 = h_theta(small_params, 0.3, taus)
    h1 = h_theta(small_params, 0.3 + math.pi, taus)
    np.testing.assert_allclose(h1.values, -h0.values, atol=1e-12)


def test_h_theta_tails_and_normalizations(small_params):
    taus = np.linspace(-40.0, 40.0, 161)
    series = h_theta(small_params, math.pi / 4, taus)
    tail = series.metadata["tail_level"]
    assert series.values[0] == pytest.approx(tail, abs=1e-6)
    assert series.values[-1] == pytest.approx(tail, abs=1e-6)
    unit = series.normalized("unit")
    assert unit.at_zero("+") == pytest.approx(1.0)
    per_photon = series.normalized("photon_number")
    np.testing.assert_allclose(per_photon.values * series.metadata["n_ss"], series.values, atol=1e-12)
    assert per_photon.normalized("raw").values == pytest.approx(series.values)


def test_normalized_only_for_h_theta(small_params):
    with pytest.raises(ValueError):
        g2_forward(small_params, np.linspace(0.0, 1.0, 3)).normalized("unit")


def test_spectral_and_expm_paths_agree(small_params):
    taus = np.linspace(-3.0, 3.0, 13)
    spectral = CorrelationEngine(small_params, "spectral")
    stepped = CorrelationEngine(small_params, "expm")
    np.testing.assert_allclose(stepped.g2_forward(taus).values, spectral.g2_forward(taus).values, rtol=1e-6)
    np.testing.assert_allclose(stepped.g2_cross(taus).values, spectral.g2_cross(taus).values, rtol=1e-6)
    np.testing.assert_allclose(
        stepped.h_theta(0.7, taus).values, spectral.h_theta(0.7, taus).values, rtol=1e-6, atol=1e-12
    )


def test_waiting_time_is_normalized(small_params):
    w = waiting_time(small_params, "forward")
    assert w.metadata["mass"] == pytest.approx(1.0, abs=0.02)
    assert np.all(w.values >= -1e-10)
    assert w.metadata["mean"] == pytest.approx(1.0 / w.metadata["flux"], rel=0.02)


def test_waiting_time_rejects_unknown_channel(small_params):
    with pytest.raises(ValueError, match="channel"):
        waiting_time(small_params, "backward")


def test_undriven_system_cannot_normalize():
    p = SystemParams(g=1.0, kappa=1.0, gamma=2.0, eps_d=0.0, delta_omega_d=0.0, n_max=3)
    with pytest.raises(NormalizationError):
        g2_forward(p, np.linspace(0.0, 1.0, 3))


def test_detuning_scan_columns(small_params):
    detunings = np.linspace(-3.0, 3.0, 7)
    scan = detuning_scan(small_params, detunings)
    cols = scan.columns()
    assert list(cols) == ["detuning", "photon_number", "g2_zero", "truncation_flag"]
    assert np.all(cols["photon_number"] > 0.0)
    centre = get_engine(small_params.with_(delta_omega_d=0.0))
    assert cols["photon_number"][3] == pytest.approx(centre.n_ss, rel=1e-8)


class TestTwoPhotonPeak:
    """g/κ = 200 双光子共振峰处的稳态与关联量。"""

    def test_steady_photon_number(self, peak_params):
        assert get_engine(peak_params).n_ss == pytest.approx(0.61, abs=0.03)

    def test_g2_zero(self, peak_params):
        assert get_engine(peak_params).g2_zero() == pytest.approx(0.82, abs=0.04)

    def test_quadrature_tail(self, peak_params):
        series = h_theta(peak_params, math.pi / 4, np.linspace(-0.05, 0.05, 401))
        assert series.metadata["quadrature_ss"] == pytest.approx(0.11, abs=0.01)

    def test_steady_quadratures_are_signed(self, peak_params):
        engine = get_engine(peak_params)
        n_max = peak_params.n_max
        a_pi4 = np.trace(quadrature_operator(n_max, math.pi / 4) @ engine.rho_ss).real
        a_3pi4 = np.trace(quadrature_operator(n_max, 3 * math.pi / 4) @ engine.rho_ss).real
        assert a_pi4 == pytest.approx(0.11, abs=0.01)
        assert a_3pi4 < -0.15

    def test_mirrored_detuning_swaps_quadratures(self, peak_params):
        mirrored = get_engine(peak_params.with_(delta_omega_d=-peak_params.delta_omega_d))
        engine = get_engine(peak_params)
        assert mirrored.n_ss == pytest.approx(engine.n_ss, rel=1e-8)
        a = np.trace(engine.a @ engine.rho_ss)
        a_mirror = np.trace(mirrored.a @ mirrored.rho_ss)
        assert a_mirror == pytest.approx(-np.conj(a), abs=1e-8)

    def test_forward_waiting_mean(self, peak_params):
        w = waiting_time(peak_params, "forward")
        assert w.metadata["mean"] == pytest.approx(0.82, abs=0.03)
        assert 1.0 / w.metadata["mean"] == pytest.approx(2.0 * peak_params.kappa * get_engine(peak_params).n_ss, rel=0.02)

    def test_weak_drive_bunching(self):
        p = SystemParams.two_photon_peak(0.02)
        assert get_engine(p).g2_zero() == pytest.approx(12.8, abs=0.6)

    def test_weak_drive_photon_number(self):
        p = SystemParams.two_photon_peak(0.02)
        assert get_engine(p).n_ss == pytest.approx(0.03, abs=0.005)

    def test_weak_drive_cross_correlation_matches_four_level(self):
        p = SystemParams.two_photon_peak(0.02)
        series = g2_cross(p, np.array([-0.01, 0.0, 0.01]))
        assert series.at_zero() == pytest.approx(g2_ab_zero(effective_params(p)), rel=0.15)


def test_seven_photon_peak_photon_number():
    p = SystemParams.multiphoton_peak(0.14, 0.38674, n_max=20)
    engine = get_engine(p)
    assert engine.n_ss == pytest.approx(1.83, abs=0.05)
