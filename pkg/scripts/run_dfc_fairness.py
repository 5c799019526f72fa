"""Train DFC agents for several alpha values on the bursty NS scenario and compare tails.

    python scripts/run_dfc_fairness.py --out runs/dfc [--alphas 0 1 2] [--full-scale]

Writes one training directory per alpha, a shared evaluation directory
(with SOTL and Max-pressure alongside) and SVG figures under eval/plots.
"""
import argparse
from dataclasses import replace
from pathlib import Path

from fairsignal.env import AgentSpec
from fairsignal.harness import cmd_evaluate, cmd_train
from fairsignal.plots import emit_plots
from fairsignal.scenario import load_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/dfc")
    ap.add_argument("--scenario", default="poisson-mmpp")
    ap.add_argument("--alphas", type=float, nargs="+", default=[0.0, 1.0, 2.0])
    ap.add_argument("--episodes", type=int)
    ap.add_argument("--full-scale", action="store_true")
    args = ap.parse_args()

    sc = load_scenario(args.scenario)
    if args.full_scale:
        sc = sc.full_scale()
    if args.episodes is not None:
        sc.train = replace(sc.train, episodes=args.episodes)
    out = Path(args.out)

    controllers = []
    for alpha in args.alphas:
        sc.agent = AgentSpec(kind="dfc", alpha=alpha)
        d = out / f"train_{sc.agent.label}"
        rep = cmd_train(sc, d)
        print(f"trained {sc.agent.label}: ok={rep.ok}")
        emit_plots(d)
        controllers.append(f"{sc.agent.label}={d}")

    rep = cmd_evaluate(sc, controllers + ["max-pressure", "sotl"], out / "eval")
    for a in rep.aggregates:
        print(f"{a['controller']:>14}  q95 {a['q95_all_mean']:7.2f} ± {a['q95_all_stderr']:.2f}"
              f"  max {a['max_all_mean']:7.2f} ± {a['max_all_stderr']:.2f}"
              f"  jain {a['jain_mean']:.3f}")
    emit_plots(out / "eval")


if __name__ == "__main__":
    main()
