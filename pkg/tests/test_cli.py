import csv
import json
from pathlib import Path

import numpy as np
import pytest

from flexhca.cli import main
from flexhca.data_model import TimeGrid, synth_ev_profile, synth_loads, write_csv, write_profile_csv

GOLDEN = Path(__file__).parent / "golden"


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def tiny(tmp_path):
    (tmp_path / "loads.csv").write_text("slot,bus_1\n0,4\n1,8\n2,6\n")
    (tmp_path / "profile.csv").write_text("slot,lhat\n0,1\n1,0.5\n2,1\n")
    return tmp_path


@pytest.fixture
def single_bus(tmp_path):
    (tmp_path / "loads.csv").write_text("slot,bus_1\n0,1000\n")
    feeder = {"buses": [0, 1], "lines": [{"from": 0, "to": 1, "r": 0.01, "x": 0.0}], "eta": [0.0],
              "v0": 1.0, "v_lower": [0.95], "v_upper": [1.05], "p0_max_kw": 7000.0, "base_kw": 1000.0}
    (tmp_path / "feeder.json").write_text(json.dumps(feeder))
    return tmp_path


@pytest.fixture(scope="module")
def week(tmp_path_factory):
    d = tmp_path_factory.mktemp("week")
    grid = TimeGrid(672)
    write_csv(synth_loads(1, grid, 7, 1530.0, 1.1), d / "loads.csv")
    write_profile_csv(synth_ev_profile(grid, 7), d / "profile.csv")
    return d


def test_capacity_copperplate_golden(tiny):
    out = tiny / "out"
    assert main(["capacity", "--loads", str(tiny / "loads.csv"), "--profile", str(tiny / "profile.csv"),
                 "--p0-max", "10", "--out", str(out)]) == 0
    assert (out / "capacity.csv").read_text() == (GOLDEN / "capacity_copperplate.csv").read_text()
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["files"]) == {"capacity.csv", "report.json"}


def test_capacity_network_golden(single_bus):
    out = single_bus / "out"
    code = main(["capacity", "--loads", str(single_bus / "loads.csv"), "--feeder", str(single_bus / "feeder.json"),
                 "--mode", "network", "--attach-bus", "1", "--out", str(out)])
    assert code == 0
    got, want = rows(out / "capacity.csv"), rows(GOLDEN / "capacity_network_single_bus.csv")
    assert [r["slot"] for r in got] == [r["slot"] for r in want]
    for g, w in zip(got, want):
        for col in ("c_res_kw", "c_dyn_kw"):
            assert float(g[col]) == pytest.approx(float(w[col]), rel=1e-9)
        assert g["rank"] == w["rank"]
    assert rows(out / "binding.csv") == [{"slot": "0", "binding": "voltage@1"}]


def test_network_requires_feeder(tiny, capsys):
    code = main(["capacity", "--loads", str(tiny / "loads.csv"), "--mode", "network", "--out", str(tiny / "o")])
    assert code == 2
    assert "ConfigError" in capsys.readouterr().err


def test_missing_p0_is_config_error(tiny):
    assert main(["capacity", "--loads", str(tiny / "loads.csv"), "--out", str(tiny / "o")]) == 2


def test_malformed_csv_is_config_error(tiny):
    (tiny / "bad.csv").write_text("slot,bus_1\n0,4\n1,x\n")
    assert main(["capacity", "--loads", str(tiny / "bad.csv"), "--p0-max", "10", "--out", str(tiny / "o")]) == 2


def test_infeasible_exit_code(tiny):
    code = main(["cf", "--loads", str(tiny / "loads.csv"), "--p0-max", "5", "--k", "0", "--out", str(tiny / "o")])
    assert code == 3
    report = json.loads((tiny / "o" / "report.json").read_text())
    assert report["error"]["type"] == "Infeasible" and report["error"]["exit_code"] == 3


def test_assumption_exit_code(tmp_path):
    (tmp_path / "loads.csv").write_text("slot,bus_1,bus_2\n0,1,1\n")
    feeder = {"buses": [0, 1, 2], "lines": [{"from": 0, "to": 1, "r": 0.01, "x": 0}, {"from": 0, "to": 2, "r": 0.01, "x": 0}],
              "eta": [0, 0], "v_lower": [0.95, 0.95], "v_upper": [1.05, 1.05], "p0_max_kw": 100}
    (tmp_path / "feeder.json").write_text(json.dumps(feeder))
    code = main(["capacity", "--loads", str(tmp_path / "loads.csv"), "--feeder", str(tmp_path / "feeder.json"),
                 "--mode", "network", "--attach-bus", "1", "--out", str(tmp_path / "o")])
    assert code == 4
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["error"]["type"] == "ThmFourPreconditionViolated"


def test_cf_sweep(week):
    out = week / "cf"
    code = main(["cf", "--loads", str(week / "loads.csv"), "--profile", str(week / "profile.csv"), "--p0-max", "1683",
                 "--k-sweep", "0,7,20", "--mu", "none,0.3", "--jobs", "2", "--out", str(out)])
    assert code == 0
    r = rows(out / "cf_sweep.csv")
    assert r[0]["K"] == "0" and float(r[0]["gain_percent"]) == 0.0
    gains = [float(x["gain_percent"]) for x in r if x["mu"] == "none"]
    assert gains == sorted(gains)
    report = json.loads((out / "report.json").read_text())
    C0 = report["baseline_capacity_kw"]
    for cell in report["cells"]:
        assert abs(cell["gain_percent"] - (cell["capacity_kw"] - C0) / C0 * 100) <= 1e-9
    plan = json.loads((out / "cf_plan.json").read_text())
    assert plan["k_used"] <= 20
    assert sum(int(x["count"]) for x in rows(out / "cf_depth_hist.csv")) == plan["k_used"]


def test_df_sweep_restricted_bounded_by_cf(week):
    # restricting candidates changes the event set with D, so only the CF bound is guaranteed
    out = week / "dfr"
    code = main(["df", "--loads", str(week / "loads.csv"), "--profile", str(week / "profile.csv"), "--p0-max", "1683",
                 "--k-sweep", "0,3,7", "--d", "1,4,16", "--restrict-candidates", "--out", str(out)])
    assert code in (0, 4)
    for x in rows(out / "df_sweep.csv"):
        assert float(x["capacity_kw"]) <= float(x["cf_capacity_kw"]) + 1e-9


def test_df_sweep(week):
    out = week / "df"
    code = main(["df", "--loads", str(week / "loads.csv"), "--profile", str(week / "profile.csv"), "--p0-max", "1683",
                 "--k-sweep", "0,3,7", "--d", "1,4,16", "--horizon", "clip", "--out", str(out)])
    assert code in (0, 4)
    r = rows(out / "df_sweep.csv")
    by_k = {}
    for x in r:
        assert float(x["capacity_kw"]) <= float(x["cf_capacity_kw"]) + 1e-9
        by_k.setdefault(x["K"], []).append(float(x["capacity_kw"]))
    for caps in by_k.values():
        assert all(a <= b + 1e-9 for a, b in zip(caps, caps[1:]))
    plan = json.loads((out / "df_plan.json").read_text())
    assert all(ev["d_min"] is not None for ev in plan["events"])


def test_df_requires_d(week):
    assert main(["df", "--loads", str(week / "loads.csv"), "--p0-max", "1683", "--k", "1", "--out",
                 str(week / "x")]) == 2


def test_config_file_and_override(week):
    cfg = {"loads": str(week / "loads.csv"), "profile": str(week / "profile.csv"), "p0_max": 1683,
           "k_sweep": [0, 5], "out": str(week / "cfg")}
    (week / "cfg.json").write_text(json.dumps(cfg))
    assert main(["cf", "--config", str(week / "cfg.json"), "--k-sweep", "0,2,4"]) == 0
    assert [x["K"] for x in rows(week / "cfg" / "cf_sweep.csv")] == ["0", "2", "4"]
    (week / "bad.json").write_text(json.dumps({"nope": 1}))
    assert main(["cf", "--config", str(week / "bad.json")]) == 2


def test_theory_fit_and_expected(week):
    out = week / "fit"
    assert main(["theory", "fit", "--loads", str(week / "loads.csv"), "--out", str(out)]) == 0
    fit = json.loads((out / "tail_fit.json").read_text())
    assert fit["L"] < fit["L_bar"] and fit["alpha"] > 0 and fit["kappa"] > 0
    assert len(rows(out / "tail_density.csv")) == 50
    out2 = week / "exp"
    assert main(["theory", "expected", "--tail-model", str(out / "tail_fit.json"), "--p0-max", "1683",
                 "--k-sweep", "0,5,10,20", "--n-trials", "200", "--out", str(out2)]) == 0
    r = rows(out2 / "theory_curves.csv")
    assert list(r[0]) == ["K", "E_empirical", "E_weibull", "mc_mean", "mc_ci"]
    assert [x["K"] for x in r] == ["0", "5", "10", "20"]


def test_validate_exit_and_warning(week, capsys):
    out = week / "val"
    model = {"L": 860.0, "L_bar": 1530.0, "alpha": 1.1, "T_L": 3504}
    (week / "model.json").write_text(json.dumps(model))
    assert main(["validate", "--tail-model", str(week / "model.json"), "--p0-max", "1683", "--n-trials", "2000",
                 "--seed", "3", "--out", str(out)]) == 0
    body = json.loads((out / "validate.json").read_text())
    assert body["ok"] and len(body["cells"]) == 20
    main(["validate", "--tail-model", str(week / "model.json"), "--p0-max", "1683", "--n-trials", "10",
          "--k-sweep", "0", "--out", str(week / "val10")])
    assert "below the recommended minimum" in capsys.readouterr().err


def test_scale_command(tmp_path):
    (tmp_path / "loads.csv").write_text("slot,bus_1\n0,1\n1,1\n")
    feeder = {"buses": [0, 1], "lines": [{"from": 0, "to": 1, "r": 0.005, "x": 0.0}], "eta": [0.0],
              "v_lower": [0.95], "v_upper": [1.05], "p0_max_kw": 1.0, "base_kw": 1000.0}
    (tmp_path / "feeder.json").write_text(json.dumps(feeder))
    out = tmp_path / "o"
    assert main(["scale", "--loads", str(tmp_path / "loads.csv"), "--feeder", str(tmp_path / "feeder.json"),
                 "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["scaling_gamma"] == pytest.approx(5000.0, rel=1e-8)
    assert abs(report["min_voltage_after_step_a"] - 0.95) <= 1e-6
    vals = [float(x["bus_1"]) for x in rows(out / "scaled_loads.csv")]
    np.testing.assert_allclose(vals, 4500.0, rtol=1e-8)


def test_df_strict_horizon_exit_code(tmp_path):
    (tmp_path / "loads.csv").write_text("slot,bus_1\n0,1\n1,1\n2,5\n")
    code = main(["df", "--loads", str(tmp_path / "loads.csv"), "--p0-max", "10", "--k", "1", "--d", "1",
                 "--out", str(tmp_path / "o")])
    assert code == 3
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["error"]["type"] == "EventNearHorizonEnd"


def test_outputs_deterministic(week):
    args = ["df", "--loads", str(week / "loads.csv"), "--profile", str(week / "profile.csv"), "--p0-max", "1683",
            "--k-sweep", "0,3", "--d", "2,8", "--restrict-candidates", "--jobs", "3"]
    main(args + ["--out", str(week / "d1")])
    main(args + ["--out", str(week / "d2")])
    files = sorted(p.name for p in (week / "d1").iterdir())
    assert files == sorted(p.name for p in (week / "d2").iterdir())
    for name in files:
        assert (week / "d1" / name).read_bytes() == (week / "d2" / name).read_bytes()
    assert not [p for p in (week / "d1").iterdir() if p.name.endswith(".tmp")]
