"""Plot/CSV export of finished runs (reads the run directory, not memory)."""

from __future__ import annotations

import glob
import os
import re

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .engine import RUN_CSV_HEADER  # noqa: E402

WHAT_CHOICES = ("tracking", "observer", "weights", "estimation", "trajectory2d")


def load_run_csv(path):
    """Return (t, agent, columns dict of (K+1, n) arrays) from a run log CSV."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
    if header != RUN_CSV_HEADER:
        raise ValueError(f"{path}: unexpected run-log header")
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    names = header.split(",")
    agents = np.unique(raw[:, 1]).astype(int)
    n = agents.size
    k1 = raw.shape[0] // n
    by_name = {}
    for ci, name in enumerate(names):
        by_name[name] = raw[:, ci].reshape(k1, n)
    return by_name["t"][:, 0], n, by_name


def _save_slice(path, header, columns):
    data = np.column_stack(columns)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        np.savetxt(fh, data, fmt="%.9g", delimiter=",")


def export_run(run_dir, what: str, out_dir=None) -> list[str]:
    """Render one figure family plus its underlying CSV slice.

    Returns the list of files written.
    """
    if what not in WHAT_CHOICES:
        raise ValueError(f"unknown export kind '{what}' (choose from {', '.join(WHAT_CHOICES)})")
    out_dir = run_dir if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    log_path = os.path.join(run_dir, "run_log.csv")
    if what != "weights" and not os.path.exists(log_path):
        raise FileNotFoundError(f"no run_log.csv in {run_dir}")

    written = []
    svg = os.path.join(out_dir, f"export_{what}.svg")
    csv = os.path.join(out_dir, f"export_{what}.csv")

    if what == "weights":
        pattern = os.path.join(run_dir, "weights_agent*_t*.csv")
        files = glob.glob(pattern)
        if not files:
            raise FileNotFoundError(f"no weight snapshots matching {pattern}")
        rx = re.compile(r"weights_agent(\d+)_t(\d+)\.csv$")
        series: dict[int, list[tuple[float, float, float]]] = {}
        for f in files:
            mo = rx.search(os.path.basename(f))
            if not mo:
                continue
            agent, millis = int(mo.group(1)), int(mo.group(2))
            w = np.loadtxt(f, delimiter=",", skiprows=1, ndmin=2)[:, 3:5]
            series.setdefault(agent, []).append(
                (millis / 1000.0, np.abs(w[:, 0]).sum(), np.abs(w[:, 1]).sum())
            )
        fig, ax = plt.subplots(figsize=(7, 4.5))
        rows = []
        for agent in sorted(series):
            pts = np.array(sorted(series[agent]))
            ax.plot(pts[:, 0], pts[:, 1], label=f"agent {agent} |W_v|_1")
            ax.plot(pts[:, 0], pts[:, 2], "--", label=f"agent {agent} |W_w|_1")
            rows.append(np.column_stack([pts[:, 0], np.full(len(pts), agent), pts[:, 1:3]]))
        ax.set_xlabel("t [s]")
        ax.set_ylabel("weight 1-norm")
        ax.legend(fontsize=7, ncol=2)
        fig.tight_layout()
        fig.savefig(svg)
        plt.close(fig)
        _save_slice(csv, "t,agent,w_v_norm1,w_omega_norm1", [np.vstack(rows)])
        return [svg, csv]

    t, n, cols = load_run_csv(log_path)

    if what == "trajectory2d":
        fig, ax = plt.subplots(figsize=(6, 6))
        for i in range(n):
            ax.plot(cols["x_r"][:, i], cols["y_r"][:, i], "r--", lw=0.8)
            ax.plot(cols["x"][:, i], cols["y"][:, i], lw=1.0, label=f"agent {i}")
        ax.set_aspect("equal")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(svg)
        plt.close(fig)
        slices = []
        for i in range(n):
            slices.append(np.column_stack([
                t, np.full_like(t, i), cols["x"][:, i], cols["y"][:, i],
                cols["x_r"][:, i], cols["y_r"][:, i],
            ]))
        _save_slice(csv, "t,agent,x,y,x_r,y_r", [np.vstack(slices)])
        return [svg, csv]

    panels = {
        "tracking": (("ex", "ey", "etheta"), "tracking error"),
        "observer": (None, "observer error"),
        "estimation": (("est_err_v", "est_err_w"), "estimation error"),
    }[what]

    fig, axes = plt.subplots(n, 1, figsize=(7, 2.2 * n), sharex=True, squeeze=False)
    slices = []
    for i in range(n):
        ax = axes[i, 0]
        if what == "observer":
            ev = cols["v"][:, i] - cols["v_hat"][:, i]
            ew = cols["omega"][:, i] - cols["omega_hat"][:, i]
            ax.plot(t, ev, label="v - v_hat")
            ax.plot(t, ew, label="omega - omega_hat")
            slices.append(np.column_stack([t, np.full_like(t, i), ev, ew]))
        else:
            for name in panels[0]:
                ax.plot(t, cols[name][:, i], label=name)
            slices.append(np.column_stack(
                [t, np.full_like(t, i)] + [cols[name][:, i] for name in panels[0]]
            ))
        ax.set_ylabel(f"agent {i}")
        if i == 0:
            ax.legend(fontsize=7, ncol=3)
    axes[-1, 0].set_xlabel("t [s]")
    fig.suptitle(panels[1])
    fig.tight_layout()
    fig.savefig(svg)
    plt.close(fig)
    if what == "observer":
        _save_slice(csv, "t,agent,err_v,err_omega", [np.vstack(slices)])
    else:
        _save_slice(csv, "t,agent," + ",".join(panels[0]), [np.vstack(slices)])
    return [svg, csv]
