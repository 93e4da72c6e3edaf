"""CSV / text / SVG emission and the content-hash manifest."""
from __future__ import annotations

import csv
import hashlib
import io
import math
import os
from collections import OrderedDict

from ..metrics import aggregate

METRIC_COLUMNS = ("algorithm", "sweep_value", "seed", "episode", "objective", "delivered_safety",
                  "delivered_non_safety", "mean_prr_covered", "mean_prr_all", "mean_sojourn_pct",
                  "mean_common_reward")
SWEEP_COLUMNS = ("sweep_value", "algorithm", "count", "objective_mean", "objective_std",
                 "mean_prr_covered", "mean_prr_all", "mean_sojourn_pct")
MANIFEST = "MANIFEST.sha256"


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "" if math.isnan(x) else f"{x:.10g}"
    return str(x)


def _write(path, text: str) -> str:
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def metrics_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in rows:
        m = r.metrics
        w.writerow([_fmt(v) for v in (
            r.algorithm, r.sweep_value, r.seed, r.episode, r.objective, m.delivered_safety,
            m.delivered_non_safety, m.mean_prr_covered, m.mean_prr_all, m.mean_sojourn_pct,
            m.mean_common_reward)])
    return buf.getvalue()


def group_rows(rows) -> OrderedDict:
    groups = OrderedDict()
    for r in rows:
        groups.setdefault((r.sweep_value, r.algorithm), []).append(r)
    return groups


def summary_text(rows, header: dict | None = None) -> str:
    """Blocks of `key = value` lines, one block per (sweep value, algorithm)."""
    lines = []
    for k, v in (header or {}).items():
        lines.append(f"{k} = {_fmt(v)}")
    for (value, alg), group in group_rows(rows).items():
        agg = aggregate(r.metrics for r in group)
        lines.append("")
        lines.append(f"[{alg}]" if value is None else f"[{alg} @ {_fmt(value)}]")
        lines.append(f"count = {agg['count']}")
        for key in sorted(k for k in agg if k != "count"):
            for stat in ("mean", "std", "min", "max"):
                lines.append(f"{key}.{stat} = {_fmt(agg[key][stat])}")
    return "\n".join(lines) + "\n"


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for (value, alg), group in group_rows(rows).items():
        agg = aggregate(r.metrics for r in group)
        w.writerow([_fmt(x) for x in (
            value, alg, agg["count"], agg["delivered_total"]["mean"], agg["delivered_total"]["std"],
            agg["mean_prr_covered"]["mean"], agg["mean_prr_all"]["mean"], agg["mean_sojourn_pct"]["mean"])])
    return buf.getvalue()


def _svg(path, draw):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "vslice"
    fig, ax = plt.subplots(figsize=(6, 4))
    draw(ax)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def curves_svg(path, reward_ma, loss):
    def draw(ax):
        x = range(1, len(reward_ma) + 1)
        ax.plot(x, reward_ma, label="reward (moving average)")
        ax.set_xlabel("episode")
        ax.set_ylabel("mean common reward")
        ax2 = ax.twinx()
        pts = [(k + 1, v) for k, v in enumerate(loss) if not math.isnan(v)]
        if pts:
            ax2.plot(*zip(*pts), color="tab:red", lw=0.8, label="loss")
        ax2.set_ylabel("loss")
    return _svg(path, draw)


def sweep_svg(path, rows, xlabel: str):
    def draw(ax):
        by_alg = OrderedDict()
        for (value, alg), group in group_rows(rows).items():
            agg = aggregate(r.metrics for r in group)
            by_alg.setdefault(alg, []).append((value, agg["delivered_total"]["mean"]))
        for alg, pts in by_alg.items():
            ax.plot(*zip(*pts), marker="o", label=alg)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("delivered packets")
        ax.legend()
    return _svg(path, draw)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(directory, files) -> dict:
    """sha256sum-style listing of every output file (sorted by name)."""
    entries = {}
    for f in sorted(set(files)):
        rel = os.path.relpath(f, directory)
        entries[rel] = sha256_file(f)
    text = "".join(f"{h}  {rel}\n" for rel, h in entries.items())
    _write(os.path.join(directory, MANIFEST), text)
    return entries


def emit_outputs(rows, directory, curves: str | None = None, header: dict | None = None,
                 svg: bool = False, sweep_label: str | None = None, extra=()) -> dict:
    """Write metrics.csv, summary.txt, curves.csv (if given), plots, and the manifest."""
    rows = list(rows)
    if not rows and curves is None:
        raise ValueError("nothing to write")
    os.makedirs(directory, exist_ok=True)
    files = list(extra)
    if rows:
        files.append(_write(os.path.join(directory, "metrics.csv"), metrics_csv(rows)))
        files.append(_write(os.path.join(directory, "summary.txt"), summary_text(rows, header)))
    elif header:
        files.append(_write(os.path.join(directory, "summary.txt"), summary_text([], header)))
    if curves is not None:
        files.append(_write(os.path.join(directory, "curves.csv"), curves))
    if sweep_label is not None and rows:
        files.append(_write(os.path.join(directory, "sweep.csv"), sweep_csv(rows)))
        if svg:
            files.append(sweep_svg(os.path.join(directory, "sweep.svg"), rows, sweep_label))
    return write_manifest(directory, files)
