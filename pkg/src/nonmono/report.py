"""Figure rendering for trace CSVs produced by the solver.

Kept separate from the CLI so matplotlib is only imported when a report
is actually requested.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


def read_trace(path) -> dict[str, np.ndarray]:
    """Read a trace CSV back into named float columns."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["k"]:
        raise ValueError(f"{path} does not look like a trace CSV")
    header = rows[0]
    data = np.array([[float(v) for v in row] for row in rows[1:]], dtype=float)
    if data.ndim != 2 or (len(rows) > 1 and data.shape[1] != len(header)):
        raise ValueError(f"{path} has ragged rows")
    if len(rows) == 1:
        data = np.zeros((0, len(header)))
    return {name: data[:, j] for j, name in enumerate(header)}


def render_report(trace_path, out_dir=None) -> list[str]:
    """Render diagnostic PNGs next to the trace (or into out_dir).

    Always draws the residual panel (res_norm, projdiff_norm, shadow_norm
    on a log scale); draws the iterate fan when the trace kept iterate
    columns. Returns the list of written figure paths.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    trace_path = Path(trace_path)
    cols = read_trace(trace_path)
    out_dir = Path(out_dir) if out_dir is not None else trace_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = trace_path.stem
    written: list[str] = []

    k = cols["k"]
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for name, label in [("res_norm", "residual"),
                        ("projdiff_norm", "projected difference"),
                        ("shadow_norm", "shadow")]:
        vals = cols[name]
        mask = vals > 0.0
        if mask.any():
            ax.semilogy(k[mask], vals[mask], label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel("norm")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    res_png = out_dir / f"{stem}_residuals.png"
    fig.savefig(res_png, dpi=120)
    plt.close(fig)
    written.append(str(res_png))

    iter_names = [c for c in cols if c.startswith("x_") or c.startswith("y_")]
    if iter_names:
        fig, ax = plt.subplots(figsize=(7.0, 4.5))
        for name in iter_names:
            ax.plot(k, cols[name], label=name, linewidth=0.9)
        ax.set_xlabel("iteration")
        ax.set_ylabel("coordinate value")
        if len(iter_names) <= 12:
            ax.legend(ncols=2, fontsize="small")
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        it_png = out_dir / f"{stem}_iterates.png"
        fig.savefig(it_png, dpi=120)
        plt.close(fig)
        written.append(str(it_png))
    return written
