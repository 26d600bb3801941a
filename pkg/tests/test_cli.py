import csv
import json

import pytest
from conftest import single_av_fixture

from hybridtraffic.cli import main
from hybridtraffic.core import CAR, TRUCK
from hybridtraffic.scenarios import ScenarioConfig, preset


@pytest.fixture
def small_cfg(tmp_path):
    cfg = ScenarioConfig(name="small", ring_length=300.0, n_lanes=2, counts={CAR: 12, TRUCK: 3}, horizon=5.0)
    path = tmp_path / "small.yaml"
    cfg.dump(path)
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(ln for ln in fh if not ln.startswith("#")))


def test_validate_preset_ok(capsys):
    assert main(["validate", "--preset", "paper-10pct"]) == 0
    assert "ok" in capsys.readouterr().out


def test_validate_negative_length(tmp_path, capsys):
    d = preset("paper-10pct").to_dict()
    d["classes"][CAR]["length"] = -4.5
    path = tmp_path / "bad.yaml"
    path.write_text(ScenarioConfig.dump(ScenarioConfig(**d)))
    assert main(["validate", str(path)]) == 1
    assert "classes.1.length" in capsys.readouterr().err


def test_validate_duplicate_timers(tmp_path, capsys):
    d = ScenarioConfig(name="t", ring_length=300.0, n_lanes=1, counts={CAR: 3}).to_dict()
    d["initial_timers"] = [0.2, 0.2, 0.5]
    path = tmp_path / "timers.yaml"
    path.write_text(ScenarioConfig(**d).dump())
    assert main(["validate", str(path)]) == 1
    assert "initial_timers" in capsys.readouterr().err


def test_validate_does_not_touch_input(small_cfg):
    before = small_cfg.read_bytes()
    assert main(["validate", str(small_cfg)]) == 0
    assert small_cfg.read_bytes() == before


def test_missing_config_is_io_error(tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(tmp_path / "nope.yaml"), "--out", str(out)]) == 2
    assert not out.exists()
    assert list(tmp_path.iterdir()) == []


def test_usage_error_is_validation():
    assert main(["run", "--trials", "many"]) == 1


def test_run_outputs_and_manifest(small_cfg, tmp_path):
    out = tmp_path / "r"
    assert main(["run", str(small_cfg), "--trials", "2", "--seed", "7", "--out", str(out), "--trajectory"]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["aggregate.csv", "events.json", "manifest.json", "metrics.csv", "trajectory.csv"]
    rows = read_rows(out / "metrics.csv")
    assert rows[0] == ["trial", "vehicle_id", "class", "max_var", "total_var"]
    assert len(rows) == 1 + 2 * 15
    header = [ln for ln in (out / "metrics.csv").read_text().splitlines() if ln.startswith("#")]
    assert any("horizon_s=5.0" in ln for ln in header) and any("dt_s=0.1" in ln for ln in header)
    m = json.loads((out / "manifest.json").read_text())
    assert m["seeds"] == [7, 8] and m["configs"][0]["name"] == "small" and m["failed_trials"] == []
    assert m["argv"][0] == "run"


def test_run_twice_byte_identical(small_cfg, tmp_path):
    for name in ("a", "b"):
        assert main(["run", str(small_cfg), "--trials", "1", "--seed", "7", "--out", str(tmp_path / name)]) == 0
    for f in ("metrics.csv", "aggregate.csv", "events.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_jobs_do_not_change_results(small_cfg, tmp_path):
    assert main(["run", str(small_cfg), "--trials", "3", "--jobs", "1", "--out", str(tmp_path / "j1")]) == 0
    assert main(["run", str(small_cfg), "--trials", "3", "--jobs", "2", "--out", str(tmp_path / "j2")]) == 0
    for f in ("metrics.csv", "aggregate.csv", "events.json"):
        assert (tmp_path / "j1" / f).read_bytes() == (tmp_path / "j2" / f).read_bytes()


def test_json_format(small_cfg, tmp_path):
    out = tmp_path / "js"
    assert main(["run", str(small_cfg), "--format", "json", "--out", str(out)]) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert len(metrics["rows"]) == 15 and "meta" in metrics


def test_env_var_output_root(small_cfg, tmp_path, monkeypatch):
    monkeypatch.setenv("HYBRIDTRAFFIC_OUT", str(tmp_path / "root"))
    assert main(["run", str(small_cfg), "--seed", "3"]) == 0
    assert (tmp_path / "root" / "run-small-seed3" / "metrics.csv").is_file()


def test_sweep_writes_one_directory_per_config(small_cfg, tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", str(small_cfg), "--horizon", "2", "--out", str(out)]) == 0
    assert (out / "small" / "metrics.csv").is_file() and (out / "manifest.json").is_file()


def fixture_yaml(tmp_path, cfg):
    path = tmp_path / f"{cfg.name}.yaml"
    cfg.dump(path)
    return path


def test_optimize_pure_penalty(tmp_path):
    path = fixture_yaml(tmp_path, single_av_fixture(init_velocity=2.0, horizon=5.0))
    out = tmp_path / "opt"
    assert main(["optimize", str(path), "--cost", "none", "--budget", "10", "--out", str(out)]) == 0
    sig = json.loads((out / "control.json").read_text())
    assert all(v == 0.0 for vals in sig["values"].values() for v in vals)
    rows = read_rows(out / "history.csv")
    best = [float(r[2]) for r in rows[1:]]
    assert best == sorted(best, reverse=True)


def test_optimize_tracking_beats_grid(tmp_path):
    path = fixture_yaml(tmp_path, single_av_fixture())
    out = tmp_path / "opt"
    assert main(["optimize", str(path), "--cost", "tracking", "--budget", "60", "--out", str(out)]) == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["margin_vs_constant_grid"] > 0
    best = [float(r[2]) for r in read_rows(out / "history.csv")[1:]]
    assert all(b2 <= b1 for b1, b2 in zip(best, best[1:]))


def test_optimize_without_avs(tmp_path, capsys):
    out = tmp_path / "opt"
    assert main(["optimize", "--preset", "paper-10pct", "--out", str(out)]) == 1
    assert not out.exists()
    assert "AV" in capsys.readouterr().err


def test_wasserstein_command(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    a.write_text("x,v,mass\n0,0,1\n")
    b.write_text("x,v,mass\n0.5,0.25,1\n")
    assert main(["wasserstein", str(a), str(b)]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(0.75)
    assert main(["wasserstein", str(a), str(b), "--format", "json", "--b", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["distance"] == pytest.approx(1.5)
    assert main(["wasserstein", str(a), str(tmp_path / "missing.csv")]) == 2
    b.write_text("x,v,mass\nfoo,0,1\n")
    assert main(["wasserstein", str(a), str(b)]) == 1
