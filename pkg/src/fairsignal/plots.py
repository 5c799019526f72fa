"""SVG figures rendered from a run directory's CSV files (never from memory)."""
from __future__ import annotations

import json
import logging
from collections import defaultdict
from pathlib import Path
from typing import List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness import CURVE_METRICS, read_csv, sha256  # noqa: E402

log = logging.getLogger(__name__)

# fixed metadata keeps the SVG bytes reproducible
SVG_META = {"Date": None, "Creator": None}


def _save(fig, path: Path, written: List[Path]) -> None:
    fig.savefig(path, format="svg", metadata=SVG_META)
    plt.close(fig)
    written.append(path)


def _cdf_plots(run_dir: Path, out_dir: Path, written: List[Path]) -> None:
    rows = read_csv(run_dir / "cdf.csv")
    if not rows:
        log.warning("cdf.csv is empty; skipping CDF plots")
        return
    by_flow = defaultdict(lambda: defaultdict(list))
    for r in rows:
        by_flow[r["flow"]][r["controller"]].append((float(r["wait"]), float(r["cum_frac"])))
    for flow, series in by_flow.items():
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for name, pts in series.items():
            x, y = zip(*pts)
            line, = ax.step(x, y, where="post", label=name)
            ax.plot([x[-1]], [y[-1]], marker="o", color=line.get_color())
        ax.set_xlabel("waiting time (s)")
        ax.set_ylabel("CDF")
        ax.set_title(f"{flow} waiting times (marker: max)")
        ax.legend()
        _save(fig, out_dir / f"cdf_{flow}.svg", written)


def _throughput_plots(run_dir: Path, out_dir: Path, written: List[Path]) -> None:
    rows = read_csv(run_dir / "throughput.csv")
    if not rows:
        log.warning("throughput.csv is empty; skipping throughput plots")
        return
    # mean over runs and evaluation seeds, per window
    acc = defaultdict(lambda: defaultdict(list))
    for r in rows:
        acc[r["controller"]][int(r["window_start"])].append(r)
    for name, windows in acc.items():
        t = sorted(windows)
        fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(5, 5), sharex=True)
        for flow in ("WE", "NS"):
            ax1.plot(t, [np.mean([float(r[f"T_{flow}"]) for r in windows[w]]) for w in t], label=flow)
            ax2.plot(t, [np.nanmean([float(r[f"mean_wait_{flow}"]) for r in windows[w]])
                         if any(r[f"mean_wait_{flow}"] != "nan" for r in windows[w]) else np.nan
                         for w in t], label=flow)
        ax1.set_ylabel("throughput / window")
        ax2.set_ylabel("mean wait (s)")
        ax2.set_xlabel("time (s)")
        ax1.set_title(name)
        ax1.legend()
        _save(fig, out_dir / f"throughput_{name}.svg", written)


def _curve_plots(run_dir: Path, out_dir: Path, written: List[Path]) -> None:
    for metric in CURVE_METRICS:
        path = run_dir / f"curve_{metric}.csv"
        if not path.exists():
            log.warning("%s missing; skipping", path.name)
            continue
        rows = read_csv(path)
        if not rows:
            log.warning("%s is empty; skipping", path.name)
            continue
        ep = np.array([int(r["episode"]) for r in rows])
        m = np.array([float(r["mean"]) for r in rows])
        se = np.array([float(r["stderr"]) for r in rows])
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(ep, m)
        ax.fill_between(ep, m - se, m + se, alpha=0.3)
        ax.set_xlabel("episode")
        ax.set_ylabel(metric.replace("_", " "))
        _save(fig, out_dir / f"curve_{metric}.svg", written)


def emit_plots(run_dir, out_dir=None) -> List[Path]:
    """Render every figure the run directory has data for; returns written paths."""
    plt.rcParams["svg.hashsalt"] = "fairsignal"
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir is not None else run_dir / "plots"
    written: List[Path] = []
    has_eval = (run_dir / "cdf.csv").exists()
    has_train = any((run_dir / f"curve_{m}.csv").exists() for m in CURVE_METRICS)
    if not (has_eval or has_train):
        log.warning("no plottable series in %s", run_dir)
        return written
    out_dir.mkdir(parents=True, exist_ok=True)
    if has_eval:
        _cdf_plots(run_dir, out_dir, written)
        if (run_dir / "throughput.csv").exists():
            _throughput_plots(run_dir, out_dir, written)
        else:
            log.warning("throughput.csv missing; skipping throughput plots")
    if has_train:
        _curve_plots(run_dir, out_dir, written)
    _record_in_manifest(run_dir, written)
    return written


def _record_in_manifest(run_dir: Path, written: List[Path]) -> None:
    path = run_dir / "manifest.json"
    if not path.exists() or not written:
        return
    with open(path) as fh:
        manifest = json.load(fh)
    plots = manifest.setdefault("plots", {})
    for p in written:
        key = str(p.relative_to(run_dir)) if p.is_relative_to(run_dir) else str(p)
        plots[key] = sha256(p)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
