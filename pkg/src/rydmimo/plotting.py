"""Figure rendering for the CLI report paths (written next to the CSV data)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_map_figures", "render_trajectory_figure", "render_campaign_figures"]


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def render_map_figures(grid, t_p, g_q1, g_q2, out_dir):
    """Heatmaps of probe transmission and both transconductances [mV/m axes]."""
    written = []
    axes_mv = np.asarray(grid) * 1e3
    for name, values, label in (
            ("map_transmission.png", t_p, "probe transmission"),
            ("map_gq1.png", g_q1, "transconductance band 1 [S]"),
            ("map_gq2.png", g_q2, "transconductance band 2 [S]")):
        fig, ax = plt.subplots(figsize=(5.2, 4.2))
        mesh = ax.pcolormesh(axes_mv, axes_mv, np.asarray(values).T, shading="auto")
        fig.colorbar(mesh, ax=ax, label=label)
        ax.set_xlabel("LO field 1 [mV/m]")
        ax.set_ylabel("LO field 2 [mV/m]")
        written.append(_save(fig, out_dir / name))
    return written


def render_trajectory_figure(iterations, wse, f_q, out_dir):
    """Weighted SE and auxiliary objective versus iteration."""
    fig, ax1 = plt.subplots(figsize=(5.6, 4.0))
    ax1.plot(iterations, wse, color="tab:blue", label="weighted SE")
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("weighted SE [bits/s/Hz]", color="tab:blue")
    ax2 = ax1.twinx()
    ax2.plot(iterations, f_q, color="tab:red", alpha=0.7, label="objective")
    ax2.set_ylabel("auxiliary objective", color="tab:red")
    return [_save(fig, out_dir / "trajectory.png")]


def render_campaign_figures(aggregates, out_dir):
    """Mean WSE and sum rate versus transmit power, one line per scheme."""
    written = []
    schemes = sorted({a["scheme"] for a in aggregates})
    for metric, std_key, fname, ylabel in (
            ("wse_mean", "wse_std", "campaign_wse.png", "weighted SE [bits/s/Hz]"),
            ("sum_rate_mean", "sum_rate_std", "campaign_sum_rate.png",
             "sum rate [bits/s]")):
        fig, ax = plt.subplots(figsize=(5.6, 4.0))
        for scheme in schemes:
            rows = sorted((a for a in aggregates if a["scheme"] == scheme),
                          key=lambda a: a["power_w"])
            power_dbm = [10 * np.log10(r["power_w"] * 1e3) for r in rows]
            mean = [r[metric] for r in rows]
            std = [r[std_key] for r in rows]
            ax.errorbar(power_dbm, mean, yerr=std, marker="o", capsize=3,
                        label=scheme)
        ax.set_xlabel("transmit power [dBm]")
        ax.set_ylabel(ylabel)
        ax.legend(fontsize=8)
        written.append(_save(fig, out_dir / fname))
    return written
