"""Figure rendering.

Statistics are never recomputed here; reference lines come straight from
the file's reference column.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .reader import read_scan_csv, read_soup_jsonl  # noqa: E402


@dataclass
class FigureSpec:
    input_path: str
    kind: str                    # "scaling" | "soup"
    output_path: str
    options: dict = field(default_factory=dict)


def plot_scaling(spec: FigureSpec) -> dict:
    """Log-log scan points with error bars and the theory reference line.

    Returns a summary with the slope of the reference column, handy for
    smoke checks (the one-arm reference decays like n^(2-d)).
    """
    scan = read_scan_csv(spec.input_path)
    c = scan.columns
    x, y, err, ref = c["param"], c["estimate"], c["std_error"], c["reference"]

    fig, ax = plt.subplots(figsize=(6, 4.5))
    pos = y > 0
    ax.errorbar(x[pos], y[pos], yerr=err[pos], fmt="o", capsize=3,
                label="estimate", zorder=3)
    if (~pos).any():
        # zero cells: show the Clopper-Pearson-style band top via the error
        ax.plot(x[~pos], np.full((~pos).sum(), np.nan), "x")
    ax.plot(x, ref, "--", color="gray", label="first-order reference")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(spec.options.get("xlabel", "scale parameter"))
    ax.set_ylabel(spec.options.get("ylabel", "probability / mass"))
    ax.set_title(f"{scan.kind} scan (d={scan.meta.get('d', '?')}, "
                 f"alpha={scan.meta.get('alpha', '?')})")
    ax.legend()
    ax.grid(True, which="both", alpha=0.25)
    fig.tight_layout()
    fig.savefig(spec.output_path, dpi=150)
    plt.close(fig)

    if len(x) >= 2 and (ref > 0).all():
        slope = float(np.polyfit(np.log(x), np.log(ref), 1)[0])
    else:
        slope = float("nan")
    return {"points": int(len(x)), "reference_slope": slope,
            "output": spec.output_path}


def plot_soup(spec: FigureSpec) -> dict:
    """Open edges of a soup dump projected onto the first two coordinates.

    Each loop gets its own color unless options['monochrome'] is set; an
    empty soup yields blank axes.
    """
    soup = read_soup_jsonl(spec.input_path)
    fig, ax = plt.subplots(figsize=(6, 6))
    mono = spec.options.get("monochrome", False)
    cmap = plt.get_cmap("turbo")
    n = max(len(soup.traces), 1)
    for i, tr in enumerate(soup.traces):
        xy = tr[:, :2]
        color = "black" if mono else cmap((i + 0.5) / n)
        ax.plot(xy[:, 0], xy[:, 1], "-", color=color, linewidth=1.2,
                solid_capstyle="round", alpha=0.9)
    r = soup.meta.get("window", {}).get("radius")
    if r:
        pad = 1 + int(soup.meta.get("L_max", 0)) // 2
        ax.set_xlim(-r - pad, r + pad)
        ax.set_ylim(-r - pad, r + pad)
    ax.set_aspect("equal")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_title(f"loop soup, d={soup.meta.get('d', '?')}, "
                 f"alpha={soup.meta.get('alpha', '?')} "
                 f"({len(soup.traces)} loops)")
    fig.tight_layout()
    fig.savefig(spec.output_path, dpi=150)
    plt.close(fig)
    return {"loops": len(soup.traces), "output": spec.output_path}
