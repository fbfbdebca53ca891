import numpy as np
import pytest

from jc_blockade.correlations import CorrelationSeries
from jc_blockade.operators import fock_state_cavity, ket_to_dm
from jc_blockade.phase_space import default_grid, marginal, wigner
from jc_blockade.series_io import (
    jsonable,
    parse_record,
    parse_table,
    read_marginal,
    read_record,
    read_series,
    read_wigner,
    record_text,
    series_text,
    table_text,
    write_marginal,
    write_record,
    write_series,
    write_wigner,
)
from jc_blockade.trajectory_engine import Schedule, UnravelingConfig, run_heterodyne, run_wave_particle


def test_jsonable_converts_numpy_types():
    value = jsonable({"a": np.float64(1.5), "b": np.arange(3), "c": (1j, np.bool_(True)), 4: np.int64(2)})
    assert value == {"a": 1.5, "b": [0, 1, 2], "c": [[0.0, 1.0], True], "4": 2}


def test_csv_table_layout():
    text = table_text({"tau": np.array([0.0, 0.5]), "value": np.array([1.0, 0.25])}, {"kind": "g2"})
    lines = text.splitlines()
    assert lines[0] == '# kind = "g2"'
    assert lines[1] == "tau,value"
    assert lines[2] == "0.0,1.0"
    meta, cols = parse_table(text)
    assert meta == {"kind": "g2"}
    np.testing.assert_array_equal(cols["value"], [1.0, 0.25])


def test_complex_columns_split():
    text = table_text({"z": np.array([1 + 2j, 3 - 1j])}, fmt="json")
    _, cols = parse_table(text)
    np.testing.assert_array_equal(cols["z_re"], [1.0, 3.0])
    np.testing.assert_array_equal(cols["z_im"], [2.0, -1.0])


def test_table_rejects_ragged_columns():
    with pytest.raises(ValueError, match="列长度"):
        table_text({"a": np.zeros(2), "b": np.zeros(3)})


def test_table_rejects_unknown_format():
    with pytest.raises(ValueError):
        table_text({"a": np.zeros(2)}, fmt="xlsx")


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_series_file_round_trip(tmp_path, fmt):
    series = CorrelationSeries(
        np.linspace(-1.0, 1.0, 5),
        np.array([0.1, -0.2, 0.3, 0.05, 0.0]),
        "H_theta",
        "raw",
        theta=0.785,
        metadata={"n_ss": 0.61},
    )
    path = write_series(series, tmp_path / f"h.{fmt}", fmt, header={"scenario": {"task": "correlate"}})
    loaded = read_series(path)
    assert loaded.kind == "H_theta"
    assert loaded.theta == pytest.approx(0.785)
    assert loaded.metadata["n_ss"] == pytest.approx(0.61)
    np.testing.assert_array_equal(loaded.values, series.values)
    np.testing.assert_array_equal(loaded.tau_grid, series.tau_grid)


def test_series_text_is_deterministic():
    series = CorrelationSeries(np.array([0.0, 1.0]), np.array([2.0, 1.0]), "g2", metadata={"b": 1, "a": 2})
    assert series_text(series) == series_text(series)
    assert series_text(series).index("# a =") < series_text(series).index("# b =")


def test_record_round_trip(tmp_path, small_params):
    cfg = UnravelingConfig(
        scheme="wave_particle",
        dt=0.005,
        duration=2.0,
        r=0.5,
        theta=0.3,
        bandwidth=10.0,
        seed=3,
        theta_schedule=Schedule.linear(0.3, 0.6, 2.0),
    )
    record = run_wave_particle(small_params, cfg)
    text = record_text(record)
    assert text.startswith("[config]")
    parsed = parse_record(text)
    assert parsed.config == record.config
    assert parsed.params == record.params
    assert parsed.jumps == record.jumps
    np.testing.assert_array_equal(parsed.current_values, record.current_values)
    assert record_text(parsed) == text
    assert read_record(write_record(record, tmp_path / "rec.txt")).jumps == record.jumps


def test_heterodyne_record_keeps_complex_current(small_params):
    cfg = UnravelingConfig(scheme="heterodyne", dt=0.005, duration=0.5, bandwidth=10.0, seed=1)
    record = run_heterodyne(small_params, cfg)
    parsed = parse_record(record_text(record))
    assert np.iscomplexobj(parsed.current_values)
    np.testing.assert_array_equal(parsed.current_values, record.current_values)


def test_parse_record_rejects_unknown_section():
    with pytest.raises(ValueError, match="未知的记录段"):
        parse_record("[config]\n[extra]\n")
    with pytest.raises(ValueError, match="缺少"):
        parse_record("[config]\n")


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_wigner_and_marginal_files(tmp_path, fmt):
    grid = wigner(ket_to_dm(fock_state_cavity(1, 3)), grid=default_grid(3.0, 31))
    loaded = read_wigner(write_wigner(grid, tmp_path / f"w.{fmt}", fmt))
    np.testing.assert_array_equal(loaded.values, grid.values)
    np.testing.assert_array_equal(loaded.x_grid, grid.x_grid)
    assert loaded.cell_area == pytest.approx(grid.cell_area)
    m = marginal(grid, 0.5)
    loaded_m = read_marginal(write_marginal(m, tmp_path / f"m.{fmt}", fmt))
    np.testing.assert_array_equal(loaded_m.density, m.density)
    assert loaded_m.theta == pytest.approx(0.5)
