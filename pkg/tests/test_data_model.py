import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from flexhca.data_model import (
    FeederModel,
    Line,
    LoadSet,
    NewLoadSpec,
    TimeGrid,
    feeder_from_dict,
    format_load_csv,
    load_csv,
    parse_load_csv,
    scale_case_study,
    synth_ev_profile,
    synth_feeder,
    synth_loads,
    write_csv,
)
from flexhca.errors import InfeasibleScaling, InvalidFeeder, MalformedCsv, NegativeLoad
from flexhca.network import build_impedance, node_voltages
from flexhca.tail import fit_tail


def test_time_grid_full_year():
    assert TimeGrid.full_year().T == 35040
    with pytest.raises(ValueError):
        TimeGrid(0)
    with pytest.raises(ValueError):
        TimeGrid(4, slot_minutes=0)


def test_parse_three_rows():
    loads = parse_load_csv("slot,bus_1\n0,4\n1,8\n2,6\n", TimeGrid(3))
    np.testing.assert_array_equal(loads.values, [[4, 8, 6]])
    assert loads.bus_ids == (1,)


def test_parse_row_mismatch():
    with pytest.raises(MalformedCsv):
        parse_load_csv("slot,bus_1\n0,4\n1,8\n", TimeGrid(3))


def test_parse_negative():
    with pytest.raises(NegativeLoad):
        parse_load_csv("slot,bus_1\n0,4\n1,-1\n2,6\n", TimeGrid(3))


@pytest.mark.parametrize(
    "text",
    [
        "slot,bus_1\n0,4\n1,x\n2,6\n",
        "time,bus_1\n0,4\n1,8\n2,6\n",
        "slot,load\n0,4\n1,8\n2,6\n",
        "slot,bus_1\n0,4\n2,8\n1,6\n",
        "slot,bus_1\n0,4\n1,nan\n2,6\n",
        "slot,bus_1,bus_2\n0,4,1\n1,8\n2,6,1\n",
        "",
    ],
)
def test_parse_malformed(text):
    with pytest.raises(MalformedCsv):
        parse_load_csv(text, TimeGrid(3))


def test_csv_round_trip_bytes(tmp_path):
    text = "slot,bus_1,bus_7\n0,4,0.25\n1,8,1.5\n2,6,0\n"
    f = tmp_path / "in.csv"
    f.write_text(text)
    g = tmp_path / "out.csv"
    write_csv(load_csv(f, TimeGrid(3)), g)
    assert g.read_text() == text


@given(arrays(np.float64, (2, 5), elements=st.floats(0, 1e6, allow_nan=False)))
def test_csv_round_trip_values(values):
    loads = LoadSet(TimeGrid(5), values, (1, 2))
    back = parse_load_csv(format_load_csv(loads), TimeGrid(5))
    np.testing.assert_array_equal(back.values, loads.values)


def test_profile_bounds():
    with pytest.raises(ValueError):
        NewLoadSpec(np.array([0.5, 1.2]))


def test_synth_loads_deterministic():
    g = TimeGrid(2000)
    a = synth_loads(3, g, 11, 100.0, 1.1)
    b = synth_loads(3, g, 11, 100.0, 1.1)
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, synth_loads(3, g, 12, 100.0, 1.1).values)


def test_synth_loads_peak_and_tail(year):
    agg = year.loads.aggregate
    assert 1528.5 <= agg.max() <= 1531.5
    fit = fit_tail(agg)
    assert abs(fit.model.alpha - 1.10) <= 0.25


def test_synth_profile_range():
    spec = synth_ev_profile(TimeGrid(96 * 7), 1)
    assert spec.profile.max() == 1.0
    assert spec.profile.min() >= 0.0


def _single_bus(v_lower=0.95, r=0.005, base_kw=1000.0):
    # 2 * Z = 2 * r / base_kw = 1e-5 per kW, i.e. v = 1 - 1e-5 * p
    return FeederModel(
        buses=(0, 1), lines=(Line(0, 1, r, 0.0),), eta=[0.0], v_lower=[v_lower], v_upper=[1.05],
        p0_max_kw=1.0, base_kw=base_kw,
    )


def test_scale_hand_example():
    loads = LoadSet(TimeGrid(4), np.ones((1, 4)), (1,))
    scaled, feeder = scale_case_study(loads, _single_bus(), 0.10)
    assert feeder.metadata["scaling_gamma"] == pytest.approx(5000.0, rel=1e-8)
    assert feeder.p0_max_kw == pytest.approx(5000.0, rel=1e-8)
    np.testing.assert_allclose(scaled.values, 4500.0, rtol=1e-8)
    assert feeder.metadata["p0_max_rule"] == "peak of scaled total load"


def test_scale_zero_headroom_is_identity_on_step_b():
    loads = LoadSet(TimeGrid(3), np.array([[1.0, 2.0, 0.5]]), (1,))
    scaled, feeder = scale_case_study(loads, _single_bus(), 0.0)
    np.testing.assert_allclose(scaled.values, loads.values * feeder.metadata["scaling_gamma"])


def test_scale_min_voltage_hits_bound():
    feeder = synth_feeder(15, 2, v_lower=0.93)
    loads = synth_loads(15, TimeGrid(300), 2, 1.0, 1.1)
    _, out = scale_case_study(loads, feeder, 0.1)
    lmat = out.load_matrix(loads.scaled(out.metadata["scaling_gamma"]))
    v = node_voltages(lmat, build_impedance(out), out)
    assert abs(v.min() - 0.93) <= 1e-6


def test_scale_infeasible():
    zero = LoadSet(TimeGrid(2), np.zeros((1, 2)), (1,))
    with pytest.raises(InfeasibleScaling):
        scale_case_study(zero, _single_bus())


def test_feeder_rejects_bound_above_root():
    with pytest.raises(InvalidFeeder):
        _single_bus(v_lower=1.0)


def test_feeder_json_round_trip():
    f = synth_feeder(6, 0)
    g = feeder_from_dict(f.to_json_dict())
    assert g.lines == f.lines
    np.testing.assert_array_equal(g.eta, f.eta)
    assert g.p0_max_kw == f.p0_max_kw
