#!/usr/bin/env python3
"""Plot the solved fields written by the run command.

Reads fields.csv from the directory this script lives in. Columns:
  path_id  integer path index
  t        grid instant
  field    one of X, Y, Z, U, H
  atom     jump atom index for U rows, -1 otherwise
  value    field value

Draws a handful of sample paths per field plus the cross-path mean. Falls
back to printing the per-instant means when matplotlib is missing.
"""
import collections
import csv
import os
import sys

here = os.path.dirname(os.path.abspath(__file__))
rows = collections.defaultdict(lambda: collections.defaultdict(dict))
with open(os.path.join(here, "fields.csv")) as fh:
    for rec in csv.DictReader(fh):
        key = rec["field"] if rec["atom"] == "-1" else f'{rec["field"]}[{rec["atom"]}]'
        rows[key][int(rec["path_id"])][float(rec["t"])] = float(rec["value"])

means = {}
for key, by_path in sorted(rows.items()):
    acc = collections.defaultdict(list)
    for series in by_path.values():
        for t, v in series.items():
            acc[t].append(v)
    means[key] = sorted((t, sum(vs) / len(vs)) for t, vs in acc.items())

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    for key, series in means.items():
        print(f"# mean {key}")
        for t, v in series:
            print(f"{t:.6f} {v:.6f}")
    sys.exit(0)

fields = sorted(rows)
fig, axes = plt.subplots(len(fields), 1, figsize=(8, 2.5 * len(fields)), sharex=True)
if len(fields) == 1:
    axes = [axes]
for ax, key in zip(axes, fields):
    for pid, series in sorted(rows[key].items())[:8]:
        ts = sorted(series)
        ax.plot(ts, [series[t] for t in ts], lw=0.6, alpha=0.5)
    ts = [t for t, _ in means[key]]
    ax.plot(ts, [v for _, v in means[key]], "k-", lw=1.5, label="mean")
    ax.set_ylabel(key)
    ax.legend(loc="best", fontsize=8)
axes[-1].set_xlabel("t")
out = os.path.join(here, "fields.png")
fig.tight_layout()
fig.savefig(out, dpi=120)
print(f"wrote {out}")
