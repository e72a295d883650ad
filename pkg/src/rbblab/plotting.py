"""Deterministic SVG rendering of experiment result rows.

One figure per experiment kind, one series per n, x = m/n where that is the
natural axis.  Byte determinism for fixed input is achieved by pinning the
SVG hash salt and stripping the creation date from the metadata.
"""

from __future__ import annotations

import io
from typing import Iterable, List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_AXES = {
    # experiment -> (x expression, y column, y label, title)
    "max_load": (lambda r: r["m"] / r["n"], "max_load", "max load", "Max load vs average load"),
    "empty_fraction": (lambda r: r["m"] / r["n"], "mean_f", "mean empty fraction",
                       "Empty-bin fraction vs average load"),
    "convergence": (lambda r: r["m"] / r["n"], "rounds_to_converge", "rounds to converge",
                    "Rounds to reach the max-load threshold"),
    "traversal": (lambda r: r["m"], "max_cover", "max cover round", "Cover rounds"),
}


def emit_plot(rows: Iterable[dict], experiment: str, kind: str = "line") -> bytes:
    """Self-contained SVG for one experiment's rows; deterministic bytes."""
    rows = [r for r in rows]
    if not rows:
        raise ValueError("no rows to plot")
    if experiment not in _AXES:
        raise ValueError(f"no plot layout for experiment {experiment!r}")
    if kind not in ("line", "scatter"):
        raise ValueError(f"unknown plot kind {kind!r}")
    x_of, y_col, y_label, title = _AXES[experiment]

    with plt.rc_context({"svg.hashsalt": "rbblab", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        try:
            for n in sorted({r["n"] for r in rows}):
                pts = sorted(
                    (x_of(r), float(r[y_col]))
                    for r in rows
                    if r["n"] == n and r[y_col] != "" and str(r.get("rep", "")) != "mean"
                )
                if not pts:
                    continue
                xs = [p[0] for p in pts]
                ys = [p[1] for p in pts]
                if kind == "line":
                    ax.plot(xs, ys, marker="o", markersize=3, linewidth=1, label=f"n={n}")
                else:
                    ax.scatter(xs, ys, s=12, label=f"n={n}")
            ax.set_xlabel("m / n" if experiment != "traversal" else "m")
            ax.set_ylabel(y_label)
            ax.set_title(title)
            ax.legend()
            buf = io.BytesIO()
            fig.savefig(buf, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    return buf.getvalue()
