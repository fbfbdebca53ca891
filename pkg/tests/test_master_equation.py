import numpy as np
import pytest

from jc_blockade.exceptions import AmbiguousSteadyStateError, DimensionMismatchError
from jc_blockade.master_equation import (
    build_liouvillian,
    collapse_operators,
    default_delay_grid,
    dissipator,
    propagate,
    spost,
    spre,
    sprepost,
    steady_state,
    unvec,
    vec,
)
from jc_blockade.operators import (
    ATOM_GROUND,
    SystemParams,
    basis_state,
    build_cavity_ops,
    check_density_matrix,
    coherent_amplitude,
    coherent_state_cavity,
    embed_cavity_state,
    ket_to_dm,
    trace_distance,
)


def _random_rho(dim: int, seed: int = 3) -> np.ndarray:
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = m @ m.conj().T
    return rho / np.trace(rho)


def test_vectorization_identities():
    rng = np.random.default_rng(0)
    a, b, rho = (rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)) for _ in range(3))
    np.testing.assert_allclose(unvec(spre(a) @ vec(rho), 4), a @ rho)
    np.testing.assert_allclose(unvec(spost(b) @ vec(rho), 4), rho @ b)
    np.testing.assert_allclose(unvec(sprepost(a, b) @ vec(rho), 4), a @ rho @ b)


def test_dissipator_is_traceless():
    a, _ = build_cavity_ops(3)
    rho = _random_rho(8)
    out = unvec(dissipator(a) @ vec(rho), 8)
    assert abs(np.trace(out)) < 1e-12


def test_liouvillian_preserves_trace_and_hermiticity(small_params):
    L = build_liouvillian(small_params)
    rho = _random_rho(small_params.dim)
    out = L.apply(rho)
    assert abs(np.trace(out)) < 1e-10
    np.testing.assert_allclose(out, out.conj().T, atol=1e-10)


def test_apply_rejects_wrong_shape(small_params):
    L = build_liouvillian(small_params)
    with pytest.raises(DimensionMismatchError):
        L.apply(np.eye(3))


def test_collapse_operator_rates(small_params):
    ops = collapse_operators(small_params)
    assert set(ops) == {"cavity", "spontaneous"}
    a, _ = build_cavity_ops(small_params.n_max)
    np.testing.assert_allclose(ops["cavity"], np.sqrt(2.0 * small_params.kappa) * a)


def test_steady_state_is_valid_density_matrix(small_params):
    L = build_liouvillian(small_params)
    rho = steady_state(L)
    check_density_matrix(rho, atol=1e-9)
    assert np.linalg.norm(L.apply(rho)) < 1e-9


def test_empty_cavity_steady_state_is_coherent(empty_cavity):
    p = empty_cavity
    rho = steady_state(build_liouvillian(p))
    alpha = coherent_amplitude(p)
    expected = ket_to_dm(embed_cavity_state(coherent_state_cavity(alpha, p.n_max)))
    assert trace_distance(rho, expected) < 1e-8
    a, a_dag = build_cavity_ops(p.n_max)
    assert np.trace(a @ rho) == pytest.approx(alpha, abs=1e-8)
    assert np.trace(a_dag @ a @ rho).real == pytest.approx(abs(alpha) ** 2, abs=1e-8)


def test_undriven_lossless_system_is_ambiguous():
    p = SystemParams(g=0.0, kappa=0.0, gamma=0.0, eps_d=0.0, delta_omega_d=0.0, n_max=2)
    with pytest.raises(AmbiguousSteadyStateError):
        steady_state(build_liouvillian(p))


def test_truncation_leak_is_logged(caplog):
    p = SystemParams(g=0.0, kappa=1.0, gamma=2.0, eps_d=3.0, delta_omega_d=0.0, n_max=4)
    steady_state(build_liouvillian(p))
    assert "截断泄漏" in caplog.text


def test_propagation_methods_agree(small_params):
    L = build_liouvillian(small_params)
    rho0 = ket_to_dm(basis_state(0, ATOM_GROUND, small_params.n_max))
    times = np.linspace(0.0, 3.0, 7)
    spectral = propagate(L, rho0, times, method="spectral")
    direct = propagate(L, rho0, times, method="expm")
    assert spectral.method == "spectral" and direct.method == "expm"
    for rho_s, rho_e in zip(spectral, direct):
        assert trace_distance(rho_s, rho_e) < 1e-8
    np.testing.assert_allclose(spectral[0], rho0)


def test_propagation_relaxes_to_steady_state(small_params):
    L = build_liouvillian(small_params)
    rho0 = ket_to_dm(basis_state(0, ATOM_GROUND, small_params.n_max))
    late = propagate(L, rho0, [40.0])[0]
    assert trace_distance(late, steady_state(L)) < 1e-6


def test_propagation_rejects_negative_time(small_params):
    L = build_liouvillian(small_params)
    with pytest.raises(ValueError):
        propagate(L, _random_rho(small_params.dim), [-1.0])


def test_propagation_expectation_of_free_decay():
    p = SystemParams(g=0.0, kappa=1.0, gamma=2.0, eps_d=0.0, delta_omega_d=0.0, n_max=3)
    L = build_liouvillian(p)
    a, a_dag = build_cavity_ops(p.n_max)
    rho0 = ket_to_dm(basis_state(2, ATOM_GROUND, p.n_max))
    times = np.linspace(0.0, 2.0, 5)
    n_t = propagate(L, rho0, times).expect(a_dag @ a).real
    np.testing.assert_allclose(n_t, 2.0 * np.exp(-2.0 * times), atol=1e-10)


def test_default_delay_grid_contains_zero_and_resolves_beats():
    p = SystemParams.two_photon_peak(0.08)
    grid = default_delay_grid(p)
    assert grid.size % 2 == 1
    assert grid[grid.size // 2] == pytest.approx(0.0, abs=1e-12)
    assert np.diff(grid).max() <= np.pi / (20.0 * p.g) * (1 + 1e-9)
    np.testing.assert_allclose(grid, -grid[::-1], atol=1e-12)


def test_without_jumps_lowers_trace(small_params):
    L = build_liouvillian(small_params)
    c = collapse_operators(small_params)["cavity"]
    rho = steady_state(L)
    out = L.without_jumps(c).apply(rho)
    # 去掉跃迁项后 d tr/dt = −tr(CρC†)
    assert np.trace(out).real == pytest.approx(-np.trace(c @ rho @ c.conj().T).real, abs=1e-10)
