"""Train a TFC agent on the NS-surge scenario and compare WE throughput stability.

    python scripts/run_tfc_stability.py --out runs/tfc [--phi-we 1.5] [--full-scale]
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
    ap.add_argument("--out", default="runs/tfc")
    ap.add_argument("--scenario", default="poisson-nhpp")
    ap.add_argument("--beta", type=float, default=0.01)
    ap.add_argument("--phi-we", type=float, default=1.5)
    ap.add_argument("--phi-ns", type=float, default=1.0)
    ap.add_argument("--L", type=float, default=40.0)
    ap.add_argument("--episodes", type=int)
    ap.add_argument("--full-scale", action="store_true")
    args = ap.parse_args()

    sc = load_scenario(args.scenario)
    if args.full_scale:
        sc = sc.full_scale()
    if args.episodes is not None:
        sc.train = replace(sc.train, episodes=args.episodes)
    sc.agent = AgentSpec(kind="tfc", beta=args.beta, phi_NS=args.phi_ns, phi_WE=args.phi_we,
                         L=args.L)
    out = Path(args.out)

    rep = cmd_train(sc, out / "train")
    print(f"trained TFC: ok={rep.ok}")
    emit_plots(out / "train")
    rep = cmd_evaluate(sc, [f"tfc={out / 'train'}", "max-pressure", "sotl", "fixed-time"],
                       out / "eval")
    for a in rep.aggregates:
        print(f"{a['controller']:>14}  WE throughput std {a['we_throughput_std_mean']:.3f}"
              f" ± {a['we_throughput_std_stderr']:.3f}  q95 {a['q95_all_mean']:.2f}"
              f"  |delta| {a['mean_abs_delta_mean']:.1f}")
    emit_plots(out / "eval")


if __name__ == "__main__":
    main()
