import json
import math

import numpy as np
import pytest

from fairsignal import cli, harness
from fairsignal.harness import cmd_compare, cmd_evaluate, cmd_train, read_csv, sha256
from fairsignal.plots import emit_plots
from fairsignal.scenario import dump_scenario, from_dict, load_scenario, preset
from fairsignal.sim_core import ConfigError, SimConfig

EVAL_FILES = {"summary.csv", "vehicles.csv", "ticks.csv", "throughput.csv", "cdf.csv",
              "aggregate.csv", "manifest.json"}


def small(name="poisson-mmpp", steps=300, episodes=2):
    sc = preset(name)
    sc.sim = SimConfig(max_episode_steps=steps)
    sc.eval.episodes = episodes
    sc.train.episodes = 2
    sc.train.max_steps = steps
    return sc


@pytest.fixture(scope="module")
def eval_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("ev")
    rep = cmd_evaluate(small(), ["sotl", "max-pressure", "fixed-time"], out)
    return out, rep


def test_evaluate_file_contract(eval_run):
    out, rep = eval_run
    assert rep.ok
    assert {p.name for p in out.iterdir()} == EVAL_FILES
    manifest = json.loads((out / "manifest.json").read_text())
    for name, digest in manifest["files"].items():
        assert sha256(out / name) == digest
    assert manifest["scenario"]["name"] == "poisson-mmpp"


def test_summary_rows_and_pairing(eval_run):
    out, _ = eval_run
    rows = read_csv(out / "summary.csv")
    assert len(rows) == 3 * 2
    by_seed = {}
    for r in rows:
        by_seed.setdefault(r["eval_seed"], set()).add(tuple(r[f"draws_{k}"] for k in "NESW"))
    # identical arrival draws for every controller on a given seed
    assert all(len(v) == 1 for v in by_seed.values())


def test_vehicle_csv_consistent_with_summary(eval_run):
    out, _ = eval_run
    veh = read_csv(out / "vehicles.csv")
    for r in read_csv(out / "summary.csv"):
        sel = [int(v["wait"]) for v in veh if v["controller"] == r["controller"]
               and v["eval_seed"] == r["eval_seed"]]
        assert len(sel) == int(r["departed"])
        assert float(r["max_all"]) == max(sel)
        for v in veh[:50]:
            assert int(v["wait"]) == int(v["depart_time"]) - int(v["join_time"])


def test_aggregate_mean_and_stderr(eval_run):
    out, _ = eval_run
    rows = read_csv(out / "summary.csv")
    agg = {a["controller"]: a for a in read_csv(out / "aggregate.csv")}
    for name in ("sotl", "max-pressure", "fixed-time"):
        x = np.array([float(r["q95_all"]) for r in rows if r["controller"] == name])
        assert float(agg[name]["q95_all_mean"]) == pytest.approx(x.mean())
        assert float(agg[name]["q95_all_stderr"]) == pytest.approx(x.std(ddof=1) / np.sqrt(x.size))


def test_evaluate_is_byte_identical(tmp_path, eval_run):
    out, _ = eval_run
    cmd_evaluate(small(), ["sotl", "max-pressure", "fixed-time"], tmp_path)
    for name in EVAL_FILES:
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes(), name


def test_plots_from_csv(tmp_path, eval_run):
    out, _ = eval_run
    files = emit_plots(out, tmp_path / "plots")
    names = {p.name for p in files}
    assert {"cdf_NS.svg", "cdf_WE.svg", "throughput_sotl.svg"} <= names
    assert all(p.stat().st_size > 0 for p in files)
    # the plotted CDF series is monotone and ends at the reported max wait
    rows = read_csv(out / "cdf.csv")
    for name in ("sotl", "max-pressure"):
        for flow in ("NS", "WE"):
            sel = [r for r in rows if r["controller"] == name and r["flow"] == flow]
            fr = [float(r["cum_frac"]) for r in sel]
            assert fr == sorted(fr) and fr[-1] == 1.0
            assert float(sel[-1]["wait"]) == float(sel[-1]["max_wait"])


def test_plot_empty_dir_writes_nothing(tmp_path, caplog):
    assert emit_plots(tmp_path) == []
    assert not (tmp_path / "plots").exists()
    assert "no plottable" in caplog.text


def test_empty_scenario_is_flagged(tmp_path):
    rep = cmd_evaluate(small("empty", steps=100, episodes=1), ["max-pressure"], tmp_path)
    row = rep.rows[0]
    assert row["departed"] == 0
    assert math.isnan(row["q95_all"]) and math.isnan(row["jain"])
    assert "no_departures_all" in row["flags"] and "jain_undefined" in row["flags"]


def test_train_outputs_and_curve_stats(tmp_path):
    sc = small()
    rep = cmd_train(sc, tmp_path, seeds=[0, 1])
    assert rep.ok
    assert (tmp_path / "network_seed0.npz").exists() and (tmp_path / "network_seed1.npz").exists()
    for metric in harness.CURVE_METRICS:
        rows = read_csv(tmp_path / f"curve_{metric}.csv")
        assert len(rows) == 2
        for r in rows:
            x = np.array([float(r["seed_0"]), float(r["seed_1"])])
            assert float(r["mean"]) == pytest.approx(x.mean())
            assert float(r["stderr"]) == pytest.approx(x.std(ddof=1) / np.sqrt(2))
    # trained networks evaluate through the same path as baselines
    ev = cmd_evaluate(sc, [f"dfc={tmp_path}", "sotl"], tmp_path / "ev")
    assert {r["run"] for r in ev.rows if r["controller"] == "dfc"} == {"0", "1"}


def test_compare_merges_runs(tmp_path, eval_run):
    out, _ = eval_run
    aggs = cmd_compare([out, out], tmp_path / "agg.csv")
    assert {a["controller"]: a["n"] for a in aggs} == {"sotl": 4, "max-pressure": 4, "fixed-time": 4}


def test_unknown_controller(tmp_path):
    with pytest.raises(ConfigError):
        cmd_evaluate(small(), ["webster"], tmp_path)
    with pytest.raises(FileNotFoundError):
        cmd_evaluate(small(), [f"x={tmp_path / 'missing.npz'}"], tmp_path)


def test_scenario_yaml_roundtrip(tmp_path):
    sc = preset("poisson-nhpp")
    p = tmp_path / "s.yaml"
    dump_scenario(sc, p)
    back = load_scenario(str(p))
    assert back.to_dict() == sc.to_dict()


def test_scenario_overrides_and_errors(tmp_path):
    sc = from_dict({"base": "poisson-nhpp", "sim": {"max_episode_steps": 500},
                    "agent": {"beta": 0.1}, "eval": {"episodes": 3}})
    assert sc.sim.max_episode_steps == 500 and sc.agent.beta == 0.1 and sc.agent.kind == "tfc"
    assert sc.eval.episode_seeds() == [10000, 10001, 10002]
    with pytest.raises(ConfigError):
        from_dict({"colour": "red"})
    with pytest.raises(ConfigError):
        load_scenario("no-such-preset")


def test_cli_end_to_end(tmp_path, capsys):
    yml = tmp_path / "tiny.yaml"
    yml.write_text("base: poisson-mmpp\nsim: {max_episode_steps: 200}\n"
                   "train: {episodes: 2, max_steps: 200}\neval: {episodes: 1}\n")
    assert cli.main(["train", "--scenario", str(yml), "--seeds", "0", "--alpha", "1",
                     "--out", str(tmp_path / "tr")]) == 0
    assert cli.main(["evaluate", "--scenario", str(yml), "--out", str(tmp_path / "ev"),
                     "--controllers", f"dfc1={tmp_path / 'tr'}", "max-pressure"]) == 0
    assert "max-pressure" in capsys.readouterr().out
    assert cli.main(["compare", str(tmp_path / "ev")]) == 0
    assert cli.main(["plot", str(tmp_path / "tr")]) == 0
    assert (tmp_path / "tr" / "plots" / "curve_quantile_95.svg").exists()
    manifest = json.loads((tmp_path / "tr" / "manifest.json").read_text())
    assert manifest["agent"] == "DFC_1" and "plots/curve_max_wait.svg" in manifest["plots"]
