"""Plot exported results with matplotlib (not a package dependency).

    python3 scripts/plot_results.py results

Looks for ``fig2.csv``, ``fig3_array.csv``, ``fig3_distance.csv`` and
``fig4_map.csv`` (with ``fig4_contours.txt``) in the given directory and
writes a PNG next to each one it finds.
"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from nfmismatch.export import read_contours, read_records  # noqa: E402

KINDS = ("tm", "tm_sns", "tm_swm", "tm_bse")


def _col(rows, key):
    return np.array([r[key] for r in rows], dtype=float)


def plot_power(rows, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    p = _col(rows, "P_dbm")
    for key, label in (("crb_tm_peb_m", "CRB-TM"), ("crb_mm_peb_m", "CRB-MM"), ("lb_peb_m", "LB")):
        ax.semilogy(p, _col(rows, key), label=label)
    for key, label in (("rmse_mle_m", "MLE-TM"), ("rmse_mmle_m", "MMLE")):
        if key in rows[0]:
            ax.semilogy(p, _col(rows, key), "o", mfc="none", label=label)
    ax.set(xlabel="transmit power [dBm]", ylabel="PEB / RMSE [m]")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)


def plot_sweep(rows, axis, path, log_x):
    fig, ax = plt.subplots(figsize=(6, 4))
    x = _col(rows, axis)
    for k in KINDS:
        ax.plot(x, _col(rows, f"mme_peb_db_{k}"), label=k.upper().replace("_", "-"))
    if log_x:
        ax.set_xscale("log")
    ax.set(xlabel=axis, ylabel="MME-PEB [dB]")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)


def plot_map(rows, contours, path):
    xs = np.unique(_col(rows, "px"))
    ys = np.unique(_col(rows, "py"))
    fig, axes = plt.subplots(1, 3, figsize=(13, 4), sharey=True)
    for ax, metric in zip(axes, ("peb", "aeb", "deb")):
        field = _col(rows, f"mme_{metric}_db").reshape(len(xs), len(ys))
        im = ax.pcolormesh(xs, ys, field.T, shading="nearest", vmin=-40, vmax=0)
        for line in contours.get(metric, []):
            ax.plot(line.vertices[:, 0], line.vertices[:, 1], "w-", lw=1.2)
        ax.set(title=f"MME-{metric.upper()}", xlabel="x [m]")
    axes[0].set_ylabel("y [m]")
    fig.colorbar(im, ax=axes, label="dB")
    fig.savefig(path, dpi=150)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    root = Path(argv[0] if argv else "results")
    made = []
    if (root / "fig2.csv").exists():
        plot_power(read_records(root / "fig2.csv"), root / "fig2.png")
        made.append("fig2.png")
    for name, axis, log_x in (("fig3_array", "n_antennas", False), ("fig3_distance", "distance_m", True)):
        if (root / f"{name}.csv").exists():
            plot_sweep(read_records(root / f"{name}.csv"), axis, root / f"{name}.png", log_x)
            made.append(f"{name}.png")
    if (root / "fig4_map.csv").exists():
        contours = read_contours(root / "fig4_contours.txt") if (root / "fig4_contours.txt").exists() else {}
        plot_map(read_records(root / "fig4_map.csv"), contours, root / "fig4_map.png")
        made.append("fig4_map.png")
    print("wrote " + (", ".join(made) if made else f"nothing (no results found in {root})"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
