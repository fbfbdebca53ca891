import json
import math

import pytest

from jc_blockade.config_service import ConfigService, parse_scenario
from jc_blockade.exceptions import ScenarioError


@pytest.fixture(scope="module")
def service():
    return ConfigService()


def test_defaults_resolve_to_two_photon_peak(service):
    scenario = service.resolve()
    assert scenario.task == "steady"
    assert scenario.seed == 20240611
    assert scenario.format == "csv"

    p = service.to_system_params(scenario)
    assert p.kappa == 1.0
    assert p.g == pytest.approx(200.0)
    assert p.gamma == pytest.approx(2.0)
    assert p.eps_d == pytest.approx(16.0)
    magnitude = 1.0 / math.sqrt(2.0) + math.sqrt(2.0) * 0.08**2
    assert p.delta_omega_d == pytest.approx(magnitude * 200.0)
    assert p.n_max == 14


def test_out_of_range_is_named_with_bounds(service):
    with pytest.raises(ScenarioError) as info:
        parse_scenario("[trajectory]\nr = 1.2\n", service=service)
    assert "trajectory.r=1.2 超出范围 [0.0, 1.0]" in info.value.violations


def test_all_violations_are_collected(service):
    text = "[params]\nn_max = 0\n\n[ensemble]\nn_trajectories = 0\n\n[scenario]\nformat = \"xml\"\n"
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text, service=service)
    joined = "\n".join(info.value.violations)
    assert "params.n_max=0" in joined
    assert "ensemble.n_trajectories=0" in joined
    assert "scenario.format='xml'" in joined
    assert len(info.value.violations) >= 3


def test_type_mismatch(service):
    with pytest.raises(ScenarioError) as info:
        parse_scenario('[params]\nn_max = "ten"\n', service=service)
    assert any(v.startswith("params.n_max: 期望 int") for v in info.value.violations)


def test_unknown_key_strict_and_lenient(service, caplog):
    with pytest.raises(ScenarioError) as info:
        parse_scenario("[scenario]\nstrict = true\n\n[params]\ng_over_kapa = 10.0\n", service=service)
    assert "未知配置项 params.g_over_kapa" in info.value.violations

    scenario = parse_scenario("[params]\ng_over_kapa = 10.0\n", service=service)
    assert scenario.get("params.g_over_kappa") == 200.0
    assert "忽略未知配置项 params.g_over_kapa" in caplog.text


def test_unparseable_text(service):
    with pytest.raises(ScenarioError) as info:
        service.parse_text("[params\n")
    assert info.value.violations[0].startswith("无法解析场景文本")


def test_missing_file(service, tmp_path):
    with pytest.raises(ScenarioError):
        service.load_file(tmp_path / "absent.toml")


def test_unknown_preset(service):
    with pytest.raises(ScenarioError) as info:
        service.resolve({"scenario": {"preset": "no-such-preset"}})
    assert "no-such-preset" in info.value.violations[0]


def test_preset_applies_operating_point(service):
    scenario = service.resolve(overrides={"scenario.preset": "seven-photon-g2"})
    assert scenario.task == "correlate"
    assert scenario.get("correlate.kind") == "g2"
    p = service.to_system_params(scenario)
    assert p.g == pytest.approx(1000.0)
    assert p.eps_d == pytest.approx(140.0)
    assert p.delta_omega_d == pytest.approx(386.74)


def test_precedence_preset_file_override(service):
    user = {"scenario": {"preset": "seven-photon-g2"}, "params": {"eps_over_g": 0.1}}
    scenario = service.resolve(user)
    assert scenario.get("params.eps_over_g") == 0.1
    assert scenario.get("params.g_over_kappa") == 1000.0

    scenario = service.resolve(user, {"params.n_max": 9, "scenario.seed": 7})
    assert scenario.get("params.n_max") == 9
    assert scenario.seed == 7


def test_explicit_detuning_implies_explicit_rule(service):
    scenario = parse_scenario("[params]\ndetuning_over_g = 0.5\n", service=service)
    assert scenario.get("params.detuning_rule") == "explicit"
    assert service.to_system_params(scenario).delta_omega_d == pytest.approx(100.0)


def test_detuning_sign_selects_branch(service):
    scenario = parse_scenario("[params]\ndetuning_sign = -1\n", service=service)
    p = service.to_system_params(scenario)
    magnitude = 1.0 / math.sqrt(2.0) + math.sqrt(2.0) * 0.08**2
    assert p.delta_omega_d == pytest.approx(-magnitude * 200.0)
    assert service.to_system_params(service.resolve()).delta_omega_d == pytest.approx(-p.delta_omega_d)


def test_integer_for_float_field_is_coerced(service):
    scenario = parse_scenario("[params]\ng_over_kappa = 20\n", service=service)
    value = scenario.get("params.g_over_kappa")
    assert isinstance(value, float) and value == 20.0


def test_echo_reparses_to_same_settings(service):
    scenario = parse_scenario(
        "[scenario]\ntask = \"correlate\"\nseed = 3\n\n[params]\ng_over_kappa = 20\nn_max = 6\n\n"
        "[correlate]\nkind = \"g2ab\"\n",
        service=service,
    )
    echo = json.dumps(scenario.echo(), ensure_ascii=False, sort_keys=True)
    again = parse_scenario(echo, service=service)
    assert again.settings == scenario.settings
    assert list(scenario.echo()) == sorted(scenario.echo())


def test_impedance_matching_follows_gamma(service):
    assert service.to_system_params(service.resolve()).impedance_matched
    p = service.to_system_params(parse_scenario("[params]\ngamma_over_kappa = 0.0\n", service=service))
    assert not p.impedance_matched

    with pytest.raises(ScenarioError) as info:
        parse_scenario("[params]\ngamma_over_kappa = 0.0\nimpedance_matched = true\n", service=service)
    assert info.value.violations[0].startswith("params: impedance_matched")


def test_unraveling_config_units_and_schedules(service):
    text = """
[scenario]
task = "trajectory"

[params]
g_over_kappa = 1000.0
eps_over_g = 0.14
detuning_over_g = 0.38674

[trajectory]
duration = 20.0
detuning_schedule = [[0.0, 0.3], [20.0, 0.8]]
"""
    scenario = parse_scenario(text, service=service)
    p = service.to_system_params(scenario)
    cfg = service.unraveling_config(scenario, p)
    assert cfg.scheme == "direct"
    assert cfg.duration == pytest.approx(20.0)
    assert cfg.dt == pytest.approx(math.pi / 40000.0)
    assert cfg.detuning_schedule(0.0) == pytest.approx(300.0)
    assert cfg.detuning_schedule(20.0) == pytest.approx(800.0)
    assert cfg.violations(p) == []


def test_auto_dt_respects_filter_bandwidth(service):
    overrides = {
        "scenario.task": "trajectory",
        "params.g_over_kappa": 1.0,
        "trajectory.scheme": "wave_particle",
        "trajectory.bandwidth_over_kappa": 400.0,
    }
    scenario = service.resolve(overrides=overrides)
    cfg = service.unraveling_config(scenario)
    assert cfg.dt == pytest.approx(0.1 / 400.0)
    assert cfg.bandwidth == pytest.approx(400.0)


def test_explicit_dt_too_large_is_rejected(service):
    overrides = {"scenario.task": "trajectory", "trajectory.dt": 0.01}
    with pytest.raises(ScenarioError) as info:
        service.resolve(overrides=overrides)
    assert any(v.startswith("trajectory: dt=") for v in info.value.violations)


def test_malformed_schedule_is_reported(service):
    overrides = {"scenario.task": "trajectory", "trajectory.theta_schedule": [[0.0, 1.0, 2.0]]}
    with pytest.raises(ScenarioError) as info:
        service.resolve(overrides=overrides)
    assert info.value.violations[0].startswith("trajectory: theta_schedule")


def test_cross_field_checks(service):
    with pytest.raises(ScenarioError) as info:
        service.resolve(overrides={"scan.detuning_from": 0.8, "scan.detuning_to": 0.3})
    assert "scan.detuning_from 必须小于 scan.detuning_to" in info.value.violations


def test_presets_are_listed_and_valid(service):
    listed = service.describe_presets()
    names = [name for name, _ in listed]
    assert names == sorted(names)
    assert "two-photon-peak" in names
    for name in names:
        service.resolve(overrides={"scenario.preset": name})
