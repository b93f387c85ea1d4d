import csv
import io
import textwrap

import pytest

from loraetc.airtime import ConfigurationError
from loraetc.cli import OUTPUT_COLUMNS, main, parse_grid
from loraetc.scenario import load_scenario, scenario_from_dict

SHORT = textwrap.dedent(
    """
    radio:
      spreading_factor: 7
      payload_bytes: 10
    sim:
      horizon_s: 20
    """
)


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture
def scenario(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text(SHORT)
    return path


def test_airtime_row(capsys):
    assert main(["airtime", "--sf", "7", "--payload", "10"]) == 0
    (row,) = rows_of(capsys.readouterr().out)
    assert row["toa_ms"] == "61.696" and row["rtt_ms"] == "1123.392"
    assert row["bp_ms"] == "6107.904" and row["bp_n_ms"] == "3861.120"


def test_airtime_full_duty_has_no_blackout(capsys):
    assert main(["airtime", "--sf", "7", "--payload", "10", "--duty", "1.0"]) == 0
    (row,) = rows_of(capsys.readouterr().out)
    assert float(row["bp_ms"]) == 0.0


def test_airtime_sf12_blackout(capsys):
    assert main(["airtime", "--sf", "12", "--payload", "50", "--channels", "3"]) == 0
    (row,) = rows_of(capsys.readouterr().out)
    assert float(row["bp_n_ms"]) == pytest.approx(236_400, rel=0.15)


@pytest.mark.parametrize("argv", [["airtime", "--sf", "6", "--payload", "10"], ["airtime", "--sf", "x"], ["bogus"], []])
def test_airtime_usage_errors(argv, capsys):
    assert main(argv) == 2
    assert capsys.readouterr().err


def test_run_prints_one_row_and_trace(scenario, tmp_path, capsys):
    trace = tmp_path / "trace.csv"
    assert main(["run", str(scenario), "--trace", str(trace)]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == ",".join(OUTPUT_COLUMNS)
    (row,) = rows_of(out)
    assert row["status"] == "ok" and row["sf"] == "7" and row["max_dev_pct_tank1"] == "0.00"
    lines = trace.read_text().splitlines()
    assert lines[0] == "t_ms,kind,device,data"
    assert any(",Sample," in line for line in lines)


def test_run_is_byte_identical(scenario, tmp_path, capsys):
    outputs = []
    for name in ("a.csv", "b.csv"):
        assert main(["run", str(scenario), "--trace", str(tmp_path / name)]) == 0
        outputs.append(capsys.readouterr().out)
    assert outputs[0] == outputs[1]
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


@pytest.mark.parametrize(
    "text, key",
    [
        ("radio:\n  spreading_factr: 7\n", "radio.spreading_factr"),
        ("radio:\n  spreading_factor: 13\n", "spreading_factor"),
        ("trigger:\n  eta: -1\n", "eta"),
        ("plant:\n  weak:\n    K: [[1, 2], [3, 4]]\n", "plant.weak"),
        ("disturbance:\n  duration_s: 0\n", "disturbance"),
        ("sim:\n  horizon: 10\n", "sim.horizon"),
        ("extra: 1\n", "scenario.extra"),
        ("radio: [1, 2\n", "YAML"),
        ("- just\n- a list\n", "scenario"),
    ],
)
def test_bad_scenario_exits_2_naming_key(tmp_path, capsys, text, key):
    path = tmp_path / "bad.yaml"
    path.write_text(text)
    assert main(["run", str(path)]) == 2
    assert key in capsys.readouterr().err


def test_missing_file_exits_2(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.yaml")]) == 2


def test_scenario_cannot_run_code(tmp_path):
    path = tmp_path / "evil.yaml"
    path.write_text("radio: !!python/object/apply:os.system ['true']\n")
    with pytest.raises(ConfigurationError):
        load_scenario(path)


def test_scenario_sections_map_to_config():
    cfg = scenario_from_dict(
        {
            "radio": "ideal",
            "trigger": {"eta": 0.004, "safe_band": [0.03, 0.06]},
            "plant": {"initial_levels": [0.02, 0.03, 0.04], "initial_mode": "powerful", "powerful": {"valve_bias": [80, 80, 80]}},
            "disturbance": {"start_s": 5, "duration_s": 2, "spread_s": 10},
            "sim": {"horizon_s": 30, "dt_ms": 1},
        }
    )
    assert cfg.radio is None
    assert cfg.trigger.eta == 0.004 and cfg.trigger.safe_band == (0.03, 0.06)
    assert cfg.plant.initial_levels == (0.02, 0.03, 0.04)
    assert list(cfg.plant.powerful.valve_bias) == [80, 80, 80]
    assert cfg.disturbance.rate == pytest.approx(-1e-3)
    assert cfg.horizon_s == 30


def test_parse_grid():
    assert parse_grid("sf=7..9; payload=10,20 ;duration=1,5") == {"sf": [7, 8, 9], "payload": [10, 20], "duration": [1, 5]}
    assert parse_grid("duty=0.01,0.1") == {"duty": [0.01, 0.1]}
    assert parse_grid("") == {}
    for bad in ("bw=1", "sf=7..x", "sf=7;sf=8", "sf"):
        with pytest.raises(ConfigurationError):
            parse_grid(bad)


def test_sweep_rows_round_trip(scenario, tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(["sweep", str(scenario), "--grid", "sf=7,8;payload=10,50", "--out", str(out)]) == 0
    rows = rows_of(out.read_text())
    assert [(r["sf"], r["payload_bytes"]) for r in rows] == [("7", "10"), ("7", "50"), ("8", "10"), ("8", "50")]
    for r in rows:
        for col in ("toa_ms", "rtt_ms", "bp_ms", "bp_n_ms", "settle_time_s"):
            # printed precision survives a parse / re-print cycle
            assert f"{float(r[col]):.3f}" == r[col]
        for j in (1, 2, 3):
            assert f"{float(r[f'max_dev_pct_tank{j}']):.2f}" == r[f"max_dev_pct_tank{j}"]
        assert int(r["events_triggered"]) == int(r["delivered"]) + int(r["dropped_busy"]) + int(r["dropped_blackout"])


def test_sweep_is_byte_identical(scenario, tmp_path):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        assert main(["sweep", str(scenario), "--grid", "payload=10,20", "--out", str(p)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert b"\r" not in paths[0].read_bytes()


def test_empty_grid_gives_header_only(scenario, tmp_path):
    out = tmp_path / "empty.csv"
    assert main(["sweep", str(scenario), "--out", str(out)]) == 0
    assert out.read_text() == ",".join(OUTPUT_COLUMNS) + "\n"


def test_sweep_keeps_going_after_bad_cell(scenario, tmp_path, capsys):
    out = tmp_path / "partial.csv"
    assert main(["sweep", str(scenario), "--grid", "sf=7,13", "--out", str(out)]) == 1
    rows = rows_of(out.read_text())
    assert [(r["sf"], r["status"]) for r in rows] == [("7", "ok"), ("13", "error")]
    assert "spreading_factor" in capsys.readouterr().err
