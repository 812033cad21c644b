#pragma once

// Artifact emission for experiment runs: the long-format CSV of solved
// fields, the JSON report, and a small plotting script. The CSV must come
// out byte-identical for a given config and seed no matter how many
// threads did the solving, so values are printed with snprintf and no
// timestamps or environment facts are written here.

#include "fbsde/config.hpp"
#include "fbsde/noise.hpp"
#include "fbsde/path.hpp"
#include "fbsde/solver.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace fbsde {

struct RunReport;

namespace detail {

inline std::string num17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void csv_row(std::ostream& os, std::size_t path_id, double t, const char* field, int atom,
                    double value) {
    os << path_id << ',' << num17(t) << ',' << field << ',' << atom << ',' << num17(value)
       << '\n';
}

} // namespace detail

// Long format, one value per row: path_id,t,field,atom,value. X and Y run
// over all grid instants, Z, U and H over interval left endpoints. The
// atom column is -1 except for U rows, which carry the jump atom index.
inline void write_fields_csv(std::ostream& os, std::size_t max_paths,
                             const std::vector<PathSkeleton>& paths, const NoiseBundle& bundle,
                             const BsdeSolution& sol) {
    os << "path_id,t,field,atom,value\n";
    const std::size_t n = std::min(max_paths, paths.size());
    const std::size_t N = sol.Z.size();
    for (std::size_t p = 0; p < n; ++p) {
        const PathSkeleton& sk = paths[p];
        const auto& bi = bundle.paths[p].base_index;
        for (std::size_t i = 0; i <= N; ++i)
            detail::csv_row(os, p, sol.t[i], "X", -1, sk.values[bi[i]]);
        for (std::size_t i = 0; i <= N; ++i) detail::csv_row(os, p, sol.t[i], "Y", -1, sol.Y[i][p]);
        for (std::size_t i = 0; i < N; ++i) detail::csv_row(os, p, sol.t[i], "Z", -1, sol.Z[i][p]);
        for (std::size_t j = 0; j < sol.U.size(); ++j)
            for (std::size_t i = 0; i < N; ++i)
                detail::csv_row(os, p, sol.t[i], "U", static_cast<int>(j), sol.U[j][i][p]);
        for (std::size_t i = 0; i < N; ++i) detail::csv_row(os, p, sol.t[i], "H", -1, sol.H[i][p]);
    }
}

inline void write_plot_script(std::ostream& os) {
    os << R"PY(#!/usr/bin/env python3
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
)PY";
}

inline Json report_to_json(const RunReport& rep, const ExperimentConfig& cfg);

} // namespace fbsde
