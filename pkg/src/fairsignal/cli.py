"""Command line: ``fairsignal {train,evaluate,compare,plot}``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from . import harness
from .env import AgentSpec
from .plots import emit_plots
from .scenario import load_scenario


def _scenario(args):
    sc = load_scenario(args.scenario)
    if getattr(args, "full_scale", False):
        sc = sc.full_scale()
    if getattr(args, "episodes", None) is not None:
        sc.train = replace(sc.train, episodes=args.episodes)
    if getattr(args, "eval_episodes", None) is not None:
        sc.eval.episodes = args.eval_episodes
    if getattr(args, "eval_seeds", None):
        sc.eval.seeds = list(args.eval_seeds)
    agent = getattr(args, "agent", None)
    if agent is not None or getattr(args, "alpha", None) is not None:
        fields = sc.agent.to_dict()
        if agent is not None and agent != fields["kind"]:
            fields["kind"] = agent
        if getattr(args, "alpha", None) is not None:
            fields["alpha"] = args.alpha
        if getattr(args, "beta", None) is not None:
            fields["beta"] = args.beta
        sc.agent = AgentSpec(**fields)
    return sc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fairsignal", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a DFC/TFC agent")
    t.add_argument("--scenario", default="poisson-mmpp", help="preset name or YAML file")
    t.add_argument("--out", required=True)
    t.add_argument("--seeds", type=int, nargs="+", help="training seeds (default: scenario)")
    t.add_argument("--agent", choices=("dfc", "tfc"))
    t.add_argument("--alpha", type=float)
    t.add_argument("--beta", type=float)
    t.add_argument("--episodes", type=int)
    t.add_argument("--full-scale", action="store_true",
                   help="400 episodes, 5 seeds, 1e6 replay buffer")

    e = sub.add_parser("evaluate", help="greedy evaluation on paired arrival seeds")
    e.add_argument("--scenario", default="poisson-mmpp")
    e.add_argument("--out", required=True)
    e.add_argument("--controllers", nargs="+", required=True,
                   help="baseline names (sotl, max-pressure, fixed-time) or LABEL=PATH "
                        "to a network file or training directory")
    e.add_argument("--eval-episodes", type=int)
    e.add_argument("--eval-seeds", "--seeds", type=int, nargs="+", dest="eval_seeds")

    c = sub.add_parser("compare", help="aggregate summary.csv of evaluate runs")
    c.add_argument("runs", nargs="+")
    c.add_argument("--out", help="write the merged aggregate CSV here")

    pl = sub.add_parser("plot", help="render SVG figures from a run directory")
    pl.add_argument("run")
    pl.add_argument("--out")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "train":
        rep = harness.cmd_train(_scenario(args), args.out, args.seeds)
    elif args.command == "evaluate":
        rep = harness.cmd_evaluate(_scenario(args), args.controllers, args.out)
        for a in rep.aggregates:
            print(f"{a['controller']:>14}  q95 {a['q95_all_mean']:.2f}  max {a['max_all_mean']:.2f}  "
                  f"jain {a['jain_mean']:.3f}  WE-thr-std {a['we_throughput_std_mean']:.3f}")
    elif args.command == "compare":
        for a in harness.cmd_compare(args.runs, args.out):
            print(f"{a['controller']:>14}  n={a['n']:<3} q95 {a['q95_all_mean']:.2f}"
                  f"±{a['q95_all_stderr']:.2f}  max {a['max_all_mean']:.2f}±{a['max_all_stderr']:.2f}"
                  f"  WE-thr-std {a['we_throughput_std_mean']:.3f}±{a['we_throughput_std_stderr']:.3f}")
        return 0
    else:
        files = emit_plots(args.run, args.out)
        for f in files:
            print(f)
        return 0
    for err in rep.errors:
        print(f"error: {err}", file=sys.stderr)
    return 0 if rep.ok else 1


if __name__ == "__main__":
    sys.exit(main())
