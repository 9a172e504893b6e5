#!/usr/bin/env python3
"""Plot per-period hit ratio for each cache capacity from a simulate CSV.

usage: plot_hit_ratio.py metrics.csv [out.png]
"""
import csv
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def main():
    src = sys.argv[1]
    out = sys.argv[2] if len(sys.argv) > 2 else "hit_ratio.png"
    series = defaultdict(list)
    covers = {}
    with open(src, newline="") as f:
        for row in csv.DictReader(f):
            period = int(row["period"])
            series[int(row["capacity"])].append((period, float(row["hit_ratio"])))
            covers[period] = int(row["cover_size"])
    fig, ax = plt.subplots(figsize=(8, 4))
    for cap in sorted(series):
        pts = sorted(series[cap])
        ax.plot([p for p, _ in pts], [h for _, h in pts], marker="o", label=f"capacity {cap}")
    ax.set_xticks(sorted(covers))
    ax.set_xticklabels([f"t{p}\n({covers[p]})" for p in sorted(covers)])
    ax.set_xlabel("period (cover size)")
    ax.set_ylabel("hit ratio")
    ax.set_ylim(0, 1)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    print(out)


if __name__ == "__main__":
    main()
