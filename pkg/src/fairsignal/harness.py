"""Training and evaluation runs, CSV export and run manifests."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import fairness as fm
from .controllers import RLController
from .env import AgentSpec, IntersectionEnv, run_episode
from .rl_engine import TrainingDivergenceError, load_network, save_network, train_agent
from .scenario import Scenario
from .sim_core import APPROACHES

log = logging.getLogger(__name__)

CURVE_METRICS = ("cumulative_reward", "quantile_95", "max_wait")
BASELINES = ("sotl", "max-pressure", "fixed-time")


class InvariantError(AssertionError):
    pass


@dataclass
class RunReport:
    kind: str
    out_dir: Path
    rows: List[dict] = field(default_factory=list)
    aggregates: List[dict] = field(default_factory=list)
    files: Dict[str, str] = field(default_factory=dict)
    ok: bool = True
    errors: List[str] = field(default_factory=list)


def fmt(x) -> str:
    """Stable text form for CSV cells."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        return repr(round(x, 10))
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])


def read_csv(path: Path) -> List[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, kind: str, scenario: Scenario, extra: Optional[dict] = None,
                   ok: bool = True, errors: Sequence[str] = ()) -> Dict[str, str]:
    files = {p.name: sha256(p) for p in sorted(out_dir.iterdir())
             if p.is_file() and p.name != "manifest.json"}
    manifest = {"kind": kind, "ok": ok, "errors": list(errors), "scenario": scenario.to_dict(),
                "files": files, **(extra or {})}
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return files


def mean_se(values: Sequence[float]) -> Tuple[float, float]:
    x = np.asarray([v for v in values if not math.isnan(v)], dtype=float)
    if x.size == 0:
        return float("nan"), float("nan")
    se = float(x.std(ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0
    return float(x.mean()), se


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def cmd_train(scenario: Scenario, out_dir, seeds: Optional[Sequence[int]] = None) -> RunReport:
    """Train ``scenario.agent`` once per seed; write networks, curve CSVs and a manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = list(seeds if seeds is not None else scenario.train_seeds)
    report = RunReport("train", out_dir)
    curves: Dict[int, object] = {}
    for seed in seeds:
        cfg = scenario.train.__class__(**{**scenario.train.to_dict(), "seed": seed})
        factory = lambda: IntersectionEnv(scenario.sim, scenario.arrivals, scenario.agent)
        try:
            net, cur = train_agent(factory, cfg)
        except TrainingDivergenceError as exc:
            report.ok = False
            report.errors.append(f"seed {seed}: {exc}")
            log.error("training diverged for seed %d: %s", seed, exc)
            continue
        save_network(out_dir / f"network_seed{seed}.npz", net, scenario.agent.to_dict(),
                     {"seed": seed, "train": cfg.to_dict()})
        curves[seed] = cur
        log.info("seed %d: final reward %.1f, q95 %.1f, max %.1f", seed,
                 cur.cumulative_reward[-1] if cur.cumulative_reward else float("nan"),
                 cur.quantile_95[-1] if cur.quantile_95 else float("nan"),
                 cur.max_wait[-1] if cur.max_wait else float("nan"))

    done = sorted(curves)
    for metric in CURVE_METRICS:
        header = ["episode"] + [f"seed_{s}" for s in done] + ["mean", "stderr"]
        rows = []
        for ep in range(scenario.train.episodes):
            vals = [getattr(curves[s], metric)[ep] for s in done]
            m, se = mean_se(vals)
            rows.append([ep, *vals, m, se])
        write_csv(out_dir / f"curve_{metric}.csv", header, rows)
    report.files = write_manifest(out_dir, "train", scenario,
                                  {"agent": scenario.agent.label, "seeds": seeds},
                                  ok=report.ok, errors=report.errors)
    return report


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def check_invariants(env: IntersectionEnv) -> None:
    """Episode-level identities that must hold for any controller."""
    st = env.state
    rec = env.record
    n_trav = sum(len(st.traveling[k]) for k in APPROACHES)
    n_q = sum(len(st.queues[k]) for k in APPROACHES)
    if st.spawned_count != n_trav + n_q + len(st.departed):
        raise InvariantError("vehicle conservation violated")
    queued_waits = sum(v.wait_so_far for k in APPROACHES for v in st.queues[k])
    if sum(sum(r.q) for r in rec.ticks) != sum(v.wait for v in rec.vehicles) + queued_waits:
        raise InvariantError("sum of queue lengths != sum of waits")
    if any(r.in_yellow and (r.T_NS or r.T_WE) for r in rec.ticks):
        raise InvariantError("departure during yellow")
    gaps = np.diff(st.switch_times)
    if gaps.size and gaps.min() < st.config.delta_switch:
        raise InvariantError("phase switched before delta_switch elapsed")


def summarize(rec: fm.EpisodeRecord, window: int) -> dict:
    row = {"ticks": rec.length, "departed": len(rec.vehicles), "undeparted": rec.undeparted,
           "terminated_early": rec.terminated_early, "total_reward": rec.total_reward,
           "mean_abs_delta": float(np.mean([abs(r.delta) for r in rec.ticks])) if rec.ticks else 0.0,
           "final_delta": rec.ticks[-1].delta if rec.ticks else 0.0}
    flags = []
    for flow in ("all", "NS", "WE"):
        try:
            s = fm.wait_statistics(rec, flow)
            row.update({f"q95_{flow}": s.quantile_95, f"max_{flow}": s.max, f"mean_{flow}": s.mean})
        except fm.UndefinedMetricError:
            row.update({f"q95_{flow}": float("nan"), f"max_{flow}": float("nan"),
                        f"mean_{flow}": float("nan")})
            flags.append(f"no_departures_{flow}")
    w = rec.waits()
    if w:
        jflag: list = []
        row["jain"] = fm.jain_index(w, jflag)
        if jflag:
            flags.append("jain_all_zero")
    else:
        row["jain"] = float("nan")
        flags.append("jain_undefined")
    tr = fm.throughput_trace(rec, window)
    row["we_throughput_std"] = float(np.std(tr.T_WE)) if tr.T_WE else float("nan")
    row["ns_throughput_std"] = float(np.std(tr.T_NS)) if tr.T_NS else float("nan")
    row["flags"] = ";".join(flags)
    return row


SUMMARY_FIELDS = ["controller", "run", "eval_seed", "ticks", "departed", "undeparted",
                  "terminated_early", "total_reward", "q95_all", "max_all", "mean_all",
                  "q95_NS", "max_NS", "mean_NS", "q95_WE", "max_WE", "mean_WE", "jain",
                  "we_throughput_std", "ns_throughput_std", "mean_abs_delta", "final_delta",
                  "draws_N", "draws_E", "draws_S", "draws_W", "flags"]
AGG_METRICS = ["q95_all", "max_all", "mean_all", "q95_NS", "max_NS", "q95_WE", "max_WE",
               "jain", "we_throughput_std", "ns_throughput_std", "mean_abs_delta", "total_reward"]


def resolve_controllers(scenario: Scenario, specs: Sequence[str]) -> List[Tuple[str, str, object, AgentSpec]]:
    """Parse controller specs into (name, run label, controller, agent spec) tuples.

    A spec is a baseline name (``sotl``, ``max-pressure``, ``fixed-time``) or
    ``label=path`` where path is a network file or a training directory (every
    ``network_seed*.npz`` inside is evaluated as a separate run).
    """
    out = []
    for spec in specs:
        if "=" not in spec:
            out.append((spec, "-", scenario.baseline(spec), scenario.agent))
            continue
        label, path = spec.split("=", 1)
        p = Path(path)
        files = sorted(p.glob("network_seed*.npz")) if p.is_dir() else [p]
        if not files or not all(f.exists() for f in files):
            raise FileNotFoundError(f"no network file(s) at {path}")
        for f in files:
            net, header = load_network(f)
            agent = AgentSpec(**header["agent"])
            run = str(header.get("seed", f.stem))
            out.append((label, run, RLController(net, epsilon=0.0, name=label), agent))
    return out


def evaluate_controller(scenario: Scenario, controller, agent: AgentSpec, seed: int):
    env = IntersectionEnv(scenario.sim, scenario.arrivals, agent)
    rec = run_episode(env, controller, seed)
    check_invariants(env)
    draws = {k: env.state.arrivals[k].draws for k in APPROACHES}
    return rec, draws


def cmd_evaluate(scenario: Scenario, controllers: Sequence[str], out_dir) -> RunReport:
    """Greedy rollouts of every controller on the same arrival seeds."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = RunReport("evaluate", out_dir)
    resolved = resolve_controllers(scenario, controllers)
    seeds = scenario.eval.episode_seeds()
    window = scenario.throughput_window

    veh_rows, tick_rows, tp_rows = [], [], []
    pooled: Dict[Tuple[str, str], List[int]] = {}
    for name, run, ctrl, agent in resolved:
        for seed in seeds:
            try:
                rec, draws = evaluate_controller(scenario, ctrl, agent, seed)
            except InvariantError as exc:
                report.ok = False
                report.errors.append(f"{name}/{run}/seed {seed}: {exc}")
                continue
            row = {"controller": name, "run": run, "eval_seed": seed, **summarize(rec, window),
                   **{f"draws_{k}": draws[k] for k in APPROACHES}}
            report.rows.append(row)
            for v in rec.vehicles:
                veh_rows.append([name, run, seed, v.id, v.approach, v.flow, v.spawn_time,
                                 v.join_time, v.depart_time, v.wait])
                pooled.setdefault((name, v.flow), []).append(v.wait)
            for r in rec.ticks:
                tick_rows.append([name, run, seed, r.t, *r.q, r.T_NS, r.T_WE, r.B, r.delta,
                                  r.reward, r.phase, r.in_yellow])
            tr = fm.throughput_trace(rec, window)
            for j, t0 in enumerate(tr.window_start):
                tp_rows.append([name, run, seed, t0, tr.T_NS[j], tr.T_WE[j],
                                tr.mean_wait_NS[j], tr.mean_wait_WE[j]])

    write_csv(out_dir / "summary.csv", SUMMARY_FIELDS,
              ([r[f] for f in SUMMARY_FIELDS] for r in report.rows))
    write_csv(out_dir / "vehicles.csv", ["controller", "run", "eval_seed", "id", "approach", "flow",
                                         "spawn_time", "join_time", "depart_time", "wait"], veh_rows)
    write_csv(out_dir / "ticks.csv", ["controller", "run", "eval_seed", "t", "q_N", "q_E", "q_S",
                                      "q_W", "T_NS", "T_WE", "B", "delta", "reward", "phase",
                                      "in_yellow"], tick_rows)
    write_csv(out_dir / "throughput.csv", ["controller", "run", "eval_seed", "window_start", "T_NS",
                                           "T_WE", "mean_wait_NS", "mean_wait_WE"], tp_rows)
    cdf_rows = []
    for (name, flow), waits in pooled.items():
        for value, frac in fm.empirical_cdf(waits):
            cdf_rows.append([name, flow, value, frac, max(waits)])
    write_csv(out_dir / "cdf.csv", ["controller", "flow", "wait", "cum_frac", "max_wait"], cdf_rows)

    report.aggregates = aggregate(report.rows)
    write_csv(out_dir / "aggregate.csv", aggregate_header(),
              ([a[h] for h in aggregate_header()] for a in report.aggregates))
    report.files = write_manifest(out_dir, "evaluate", scenario,
                                  {"controllers": list(controllers), "eval_seeds": seeds},
                                  ok=report.ok, errors=report.errors)
    return report


def aggregate_header() -> List[str]:
    return ["controller", "n"] + [f"{m}_{s}" for m in AGG_METRICS for s in ("mean", "stderr")]


def aggregate(rows: Sequence[dict]) -> List[dict]:
    """Mean and standard error per controller over all (run, eval seed) rows."""
    names = list(dict.fromkeys(r["controller"] for r in rows))
    out = []
    for name in names:
        sel = [r for r in rows if r["controller"] == name]
        agg = {"controller": name, "n": len(sel)}
        for m in AGG_METRICS:
            agg[f"{m}_mean"], agg[f"{m}_stderr"] = mean_se([float(r[m]) for r in sel])
        out.append(agg)
    return out


def cmd_compare(run_dirs: Sequence, out_path=None) -> List[dict]:
    """Merge ``summary.csv`` from evaluate runs and re-aggregate per controller."""
    rows = []
    for d in run_dirs:
        rows.extend(read_csv(Path(d) / "summary.csv"))
    aggs = aggregate(rows)
    if out_path is not None:
        write_csv(Path(out_path), aggregate_header(), ([a[h] for h in aggregate_header()] for a in aggs))
    return aggs
