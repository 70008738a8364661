"""Figure rendering for the report path: CDF and sum-rate sweep plots.

Figures are rendered headless from the same data that lands in the delimited
output files, one PNG next to each CSV. Metadata is pinned so repeated runs
produce identical bytes.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_PNG_META = {"Software": "cranopt"}


def _style(ax):
    ax.grid(True, alpha=0.4)
    ax.tick_params(labelsize=9)


def render_cdf(curves, path, title=None):
    """CDF figure from {label: (rates, percentiles)} curves."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    markers = ["o", "s", "^", "d", "v", "x"]
    for i, (label, (rates, pct)) in enumerate(sorted(curves.items())):
        step = max(1, len(rates) // 12)
        ax.plot(rates, pct, marker=markers[i % len(markers)],
                markevery=step, lw=1.5, ms=4, label=label)
    ax.set_xlabel("User rate (Mbps)")
    ax.set_ylabel("Cumulative distribution")
    ax.set_ylim(0, 1)
    if title:
        ax.set_title(title, fontsize=10)
    _style(ax)
    if len(curves) > 1 or any(k for k in curves):
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_PNG_META)
    plt.close(fig)
    return path


def render_sweep(budgets, sum_rates, path, label=None, title=None):
    """Per-cell sum rate against the fronthaul budget."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(budgets, sum_rates, marker="o", lw=1.5, ms=5, label=label)
    ax.set_xlabel("Fronthaul capacity (Mbps)")
    ax.set_ylabel("Per-cell sum rate (Mbps)")
    if title:
        ax.set_title(title, fontsize=10)
    _style(ax)
    if label:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_PNG_META)
    plt.close(fig)
    return path
