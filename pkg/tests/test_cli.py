import filecmp
import json
from dataclasses import replace

import numpy as np
import pytest

from windspc.cli import main
from windspc.ingest import filter_running, parse_timestamp
from windspc.regress import RegressionModel
from windspc.simulate import FaultKind, FaultSpec, ScenarioConfig, generate_scenario

from conftest import decorrelation_scenario

NACELLE = {"response": "nacelle_temp", "candidates": ["env_temp"]}


def write_config(tmp_path, scenario, models=(NACELLE,), **sections):
    doc = {"simulate": scenario.to_dict(), "models": list(models), "output": "out"}
    doc.update(sections)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    cap = capsys.readouterr()
    return code, cap.out.strip(), cap.err


def test_baseline_finds_decorrelation_onset(tmp_path, capsys):
    cfg, onset, _ = decorrelation_scenario(seed=4)
    path = write_config(tmp_path, cfg)
    code, out, _ = run(capsys, "baseline", "--config", path)
    assert code == 0
    running = filter_running(generate_scenario(cfg))
    i, j = np.searchsorted(running.timestamps, [parse_timestamp(out), onset])
    assert abs(int(i) - int(j)) <= 5
    assert (tmp_path / "out" / "rho_profile.csv").exists()
    doc = json.loads((tmp_path / "out" / "baseline.json").read_text())
    assert doc["end"] == out


def test_identical_pair_baseline_runs_to_end(tmp_path, capsys):
    cfg = ScenarioConfig(duration_days=3, seed=1)
    path = write_config(tmp_path, cfg, baseline={"pair": ["gen1_temp", "gen1_temp"]})
    code, out, _ = run(capsys, "baseline", "--config", path)
    assert code == 0
    last = filter_running(generate_scenario(cfg)).timestamps[-1]
    assert parse_timestamp(out) == last


def test_missing_input_file_exits_2(tmp_path, capsys):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"input": {"path": "nowhere.csv"}, "models": [NACELLE]}))
    code, _, err = run(capsys, "baseline", "--config", path)
    assert code == 2
    assert "not found" in err


def test_rank_deficient_model_exits_3(tmp_path, capsys):
    # with no speed noise the generator speed is exactly gear_ratio * rotor speed
    cfg = ScenarioConfig(duration_days=3, seed=1).noiseless()
    model = {"response": "gen1_temp", "candidates": ["generator_speed", "rotor_speed"]}
    path = write_config(tmp_path, cfg, models=[model])
    code, _, err = run(capsys, "fit", "--config", path)
    assert code == 3
    assert "RankDeficient" in err


@pytest.mark.parametrize("doc", [
    "{not json",
    json.dumps({"models": [NACELLE]}),
    json.dumps({"simulate": {"duration_days": 1}, "models": [{"response": "nope", "candidates": []}]}),
    json.dumps({"simulate": {"duration_days": 1}, "report": {"decimal": ";"}}),
])
def test_config_errors_exit_4(tmp_path, capsys, doc):
    path = tmp_path / "run.json"
    path.write_text(doc)
    code, _, err = run(capsys, "report", "--config", path)
    assert code == 4
    assert err.startswith("error:")


def test_unknown_command_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate", "--config", "x.json"])
    assert exc.value.code == 2


def test_noiseless_fit_matches_ground_truth(tmp_path, capsys):
    cfg = ScenarioConfig(duration_days=20, seed=5).noiseless()
    names = ["nacelle_temp", "gen1_temp", "gen_de_vibration"]
    models = [{"response": n, "candidates": [[t.variable, t.power] for t, _ in cfg.linkage[n].terms]}
              for n in names]
    path = write_config(tmp_path, cfg, models=models)
    assert run(capsys, "simulate", "--config", path)[0] == 0
    assert run(capsys, "fit", "--config", path)[0] == 0
    truth = json.loads((tmp_path / "out" / "ground_truth.json").read_text())["linkage"]
    for n in names:
        m = RegressionModel.from_json((tmp_path / "out" / f"model_{n}.json").read_text())
        expected = [truth[n]["intercept"]] + [c for _, _, c in truth[n]["terms"]]
        np.testing.assert_allclose((m.intercept,) + m.coefficients, expected, rtol=1e-8, err_msg=n)


def test_fault_free_false_alarm_rate(tmp_path, capsys):
    cfg = ScenarioConfig(duration_days=100, seed=12)
    path = write_config(tmp_path, cfg)
    code, out, _ = run(capsys, "report", "--config", path)
    assert code == 0
    s = json.loads((tmp_path / "out" / "summary.json").read_text())["variables"]["nacelle_temp"]
    assert s["total"] > 30000
    assert 0.0015 <= s["fraction_out"] <= 0.0045
    assert "nacelle_temp:" in out


def test_three_sigma_shift_is_flagged(tmp_path, capsys):
    # nacelle residual sigma is the link noise, 1.0
    onset = "2013-07-19T00:00:00Z"
    cfg = ScenarioConfig(duration_days=60, seed=13,
                         faults=(FaultSpec(FaultKind.MEAN_SHIFT, "nacelle_temp", onset, 3.0),))
    path = write_config(tmp_path, cfg, baseline={"end": "2013-07-18T23:59:59Z"})
    assert run(capsys, "report", "--config", path)[0] == 0
    rows = (tmp_path / "out" / "alarms_nacelle_temp.csv").read_text().splitlines()[1:]
    cut = parse_timestamp(onset)
    pre = [r.split(",")[4] != "in_control" for r in rows if parse_timestamp(r.split(",")[0]) < cut]
    post = [r.split(",")[4] != "in_control" for r in rows if parse_timestamp(r.split(",")[0]) >= cut]
    assert np.mean(post) > 0.4
    assert 0.0015 <= np.mean(pre) <= 0.0045


def test_fixed_thresholds_and_comma_decimal(tmp_path, capsys):
    cfg = ScenarioConfig(duration_days=10, seed=2)
    vib = {"response": "gen_de_vibration", "candidates": ["generator_speed", "wind_speed^3"]}
    path = write_config(tmp_path, cfg, models=[vib], report={"decimal": ","},
                        thresholds={"gen_de_vibration": {"warning": 0.6, "alarm": 0.9}})
    code, out, _ = run(capsys, "report", "--config", path)
    assert code == 0
    s = json.loads((tmp_path / "out" / "summary.json").read_text())["variables"]["gen_de_vibration"]
    fixed = s["fixed_thresholds"]
    assert fixed["normal"] + fixed["warning"] + fixed["alarm"] == s["total"]
    assert "," in s["percent_out"] and "." not in s["percent_out"]
    assert "fixed thresholds" in out
    assert (tmp_path / "out" / "report.txt").read_text().strip() == out


SHIFTED = ScenarioConfig(
    duration_days=30, seed=21,
    faults=(FaultSpec(FaultKind.MEAN_SHIFT, "gen1_temp", "2013-07-05T00:00:00Z", 4.0),))
GEN1 = {"response": "gen1_temp", "select": True,
        "candidates": ["env_temp", "generator_speed", "bearing_temp", "gearbox_temp", "yaw"]}


def test_steps_compose_to_a_combined_run(tmp_path, capsys):
    path = write_config(tmp_path, SHIFTED, models=[NACELLE, GEN1])
    for cmd in ("ingest", "baseline", "fit", "monitor"):
        assert run(capsys, cmd, "--config", path, "--out", tmp_path / "steps")[0] == 0
    assert run(capsys, "report", "--config", path, "--out", tmp_path / "all")[0] == 0
    produced = sorted(p.name for p in (tmp_path / "all").iterdir() if p.name != "report.txt")
    assert "summary.json" in produced and "model_gen1_temp.json" in produced
    for name in produced:
        if (tmp_path / "steps" / name).exists():
            assert filecmp.cmp(tmp_path / "steps" / name, tmp_path / "all" / name, shallow=False), name
    missing = set(produced) - {p.name for p in (tmp_path / "steps").iterdir()}
    assert missing == set()


def test_reruns_are_byte_identical(tmp_path, capsys):
    path = write_config(tmp_path, SHIFTED, models=[NACELLE, GEN1])
    for out in ("a", "b"):
        assert run(capsys, "simulate", "--config", path, "--out", tmp_path / out)[0] == 0
        assert run(capsys, "report", "--config", path, "--out", tmp_path / out)[0] == 0
    a = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert a == sorted(p.name for p in (tmp_path / "b").iterdir())
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", a, shallow=False)
    assert mismatch == [] and errors == []


def test_seed_override_changes_the_data(tmp_path, capsys):
    path = write_config(tmp_path, replace(SHIFTED, duration_days=3, faults=()))
    run(capsys, "simulate", "--config", path, "--out", tmp_path / "a")
    run(capsys, "simulate", "--config", path, "--out", tmp_path / "b", "--seed", 99)
    a = (tmp_path / "a" / "dataset.csv").read_bytes()
    assert a != (tmp_path / "b" / "dataset.csv").read_bytes()
    assert json.loads((tmp_path / "b" / "ground_truth.json").read_text())["seed"] == 99


def test_ingest_reports_counts_from_a_csv_input(tmp_path, capsys):
    cfg = ScenarioConfig(duration_days=1, seed=3)
    sim = write_config(tmp_path, cfg)
    run(capsys, "simulate", "--config", sim, "--out", tmp_path / "sim")
    path = tmp_path / "csv.json"
    path.write_text(json.dumps({"input": {"path": "sim/dataset.csv"}, "models": [NACELLE],
                                "output": "ing"}))
    code, out, _ = run(capsys, "ingest", "--config", path)
    assert code == 0
    info = json.loads((tmp_path / "ing" / "ingest.json").read_text())
    assert info["records"] == 360 and info["rejected"] == 0
    assert out.startswith("360 records (0 rejected)")
    assert sum(info["generator_use"].values()) == info["running"]
