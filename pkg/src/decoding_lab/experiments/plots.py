"""CSV tables and SVG line plots for the sweep figures.

Figures 1-3 use ``T = 1`` rows and figures 4-6 use ``T = K`` rows:
1/4 are the Hamming loss (N = 1) at the largest node count, 2/5 the 0-1
loss (N = L) at the largest node count, 3/6 the full node-count by length
grid with one line per (K, N).
"""
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams["svg.hashsalt"] = "decoding-lab"

FIGURES = {
    1: ("one", "hamming"), 2: ("one", "zero_one"), 3: ("one", "grid"),
    4: ("K", "hamming"), 5: ("K", "zero_one"), 6: ("K", "grid"),
}
CSV_FIELDS = ["panel_m", "panel_L", "line", "alpha", "m", "L", "N", "K", "T",
              "mean_kl_from_uniform", "mean_optimal_fraction"]


def _family(rows, t_mode):
    if t_mode == "one":
        return [r for r in rows if r.T == 1]
    return [r for r in rows if r.T == r.K]


def figure_series(rows, fig_id):
    """``{(panel_m, panel_L): {line_label: [row, ...]}}`` for one figure."""
    t_mode, layout = FIGURES[fig_id]
    rows = _family(rows, t_mode)
    if not rows:
        return {}
    if layout != "grid":
        m_max = max(r.m for r in rows)
        rows = [r for r in rows if r.m == m_max]
        rows = [r for r in rows if (r.N == 1 if layout == "hamming" else r.N == r.L)]
    panels = defaultdict(lambda: defaultdict(list))
    for r in rows:
        label = f"K={r.K}" if layout != "grid" else f"K={r.K}, N={r.N}"
        panels[(r.m, r.L)][label].append(r)
    for lines in panels.values():
        for pts in lines.values():
            pts.sort(key=lambda r: (r.mean_kl_from_uniform, r.alpha, r.m))
    return {k: dict(v) for k, v in sorted(panels.items())}


def _write_csv(path, series):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for (pm, pL), lines in series.items():
            for label, pts in lines.items():
                for r in pts:
                    writer.writerow([pm, pL, label, repr(r.alpha), r.m, r.L, r.N, r.K, r.T,
                                     repr(r.mean_kl_from_uniform), repr(r.mean_optimal_fraction)])


def _write_svg(path, series, fig_id):
    ms = sorted({k[0] for k in series})
    Ls = sorted({k[1] for k in series})
    fig, axes = plt.subplots(len(ms), len(Ls), figsize=(3.2 * len(Ls), 2.6 * len(ms)),
                             squeeze=False, sharey=True)
    for (pm, pL), lines in series.items():
        ax = axes[ms.index(pm)][Ls.index(pL)]
        for label, pts in lines.items():
            ax.plot([r.mean_kl_from_uniform for r in pts], [r.mean_optimal_fraction for r in pts],
                    marker="o", markersize=3, label=label)
        ax.set_title(f"m={pm}, L={pL}", fontsize=8)
        ax.set_ylim(-0.02, 1.02)
        ax.tick_params(labelsize=7)
        ax.legend(fontsize=6)
    for ax in axes[-1]:
        ax.set_xlabel("mean KL from uniform", fontsize=8)
    for row in axes:
        row[0].set_ylabel("optimal fraction", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_plots(result, out_dir, figures=tuple(FIGURES)):
    """Write ``fig_<id>.csv`` and ``fig_<id>.svg`` for every figure with data.

    Returns the written paths; an empty result writes nothing.
    """
    out_dir = Path(out_dir)
    written = []
    for fig_id in figures:
        series = figure_series(result.rows, fig_id)
        if not series:
            continue
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / f"fig_{fig_id}.csv"
        svg_path = out_dir / f"fig_{fig_id}.svg"
        try:
            _write_csv(csv_path, series)
            _write_svg(svg_path, series, fig_id)
        except OSError as exc:
            raise OSError(f"could not write figure {fig_id} under {out_dir}: {exc}") from exc
        written += [csv_path, svg_path]
    return written
