"""Writes a stand-alone plotting script next to sweep CSVs.

The package itself never imports a plotting library; the emitted script
needs matplotlib, which the user installs when they want figures.
"""

from __future__ import annotations

from pathlib import Path

PLOT_SCRIPT = '''"""Plot sweep CSVs written by the tscc harness.  Requires matplotlib."""
import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).parent


def load(name):
    path = here / name
    if not path.exists():
        return []
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def curves(rows, x, y):
    out = defaultdict(list)
    for r in rows:
        out[r["method"], r["seed"]].append((float(r[x]), float(r[y])))
    return {k: sorted(v) for k, v in out.items()}


def plot(rows, x, y, fname, xlabel):
    if not rows:
        return
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for (method, seed), pts in sorted(curves(rows, x, y).items()):
        xs, ys = zip(*pts)
        ax.plot(xs, ys, marker="o", label=f"{method} s{seed}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(y)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(here / fname, dpi=150)
    print("wrote", here / fname)


snr = load("snr_sweep.csv")
for metric in ("task_score", "action_mse", "psnr", "ms_ssim"):
    plot(snr, "snr_db", metric, f"snr_{metric}.png", "SNR (dB)")
ratio = load("ratio_sweep.csv")
plot(ratio, "compression_ratio", "task_score", "ratio_task_score.png", "bandwidth ratio")
if not snr and not ratio:
    sys.exit("no sweep CSVs found")
'''


def write_plot_script(out_dir) -> Path:
    path = Path(out_dir) / "plot_results.py"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(PLOT_SCRIPT)
    return path
