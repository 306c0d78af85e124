"""Fleet orchestration: closed-loop runs, metrics, and run artifacts.

`run_learning` integrates the coupled pose / body-velocity / observer /
weight ODE for the whole fleet with fixed-step RK4 (weights are part of the
RK4 state: the adaptation law is continuous-time).  `run_experience` re-runs
the loop with frozen consolidated weights, no adaptation and no
communication.  Both produce a RunLog: per-step per-agent records, periodic
weight snapshots, and enough ground truth (the simulator's privilege) to
evaluate estimation-error metrics the real controller could never compute.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels, rbf
from .config import FleetConfig
from .control import consolidate_weights
from .kernels import LOG_COLUMNS, N_BASE, N_LOG
from .references import eval_table

RUN_CSV_HEADER = "t,agent," + ",".join(LOG_COLUMNS)


class DivergenceError(RuntimeError):
    """Simulation left the sane-state envelope (non-finite or |state| > 1e6)."""

    def __init__(self, kind: str, step: int, t: float):
        super().__init__(f"simulation diverged ({kind}) at step {step}, t = {t:.6g} s")
        self.kind = kind
        self.step = step
        self.t = t


@dataclass
class RunLog:
    """Dense closed-loop record of one run."""

    mode: str                 # "learning" or "experience"
    dt: float
    t: np.ndarray             # (K+1,)
    data: np.ndarray          # (K+1, n, N_LOG), columns LOG_COLUMNS
    snap_times: np.ndarray    # (S,)
    snapshots: np.ndarray     # (S, n, N, 2)
    final_state: np.ndarray   # (n, 9 + 2N)
    runtime_s: float
    backend: str
    assignment: tuple[int, ...] = field(default=())

    @property
    def n_agents(self) -> int:
        return self.data.shape[1]

    def col(self, name: str) -> np.ndarray:
        """Column time series, shape (K+1, n)."""
        return self.data[:, :, LOG_COLUMNS.index(name)]

    def trailing_mask(self, window_s: float | None = None) -> np.ndarray:
        """Steady-state sample mask; None means the last 40% of the run."""
        if window_s is None:
            window_s = 0.4 * (self.t[-1] - self.t[0])
        return self.t >= self.t[-1] - window_s - 1e-12


def rk4_step(rate_fn, y: np.ndarray, t: float, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step of y' = rate_fn(t, y)."""
    k1 = rate_fn(t, y)
    k2 = rate_fn(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = rate_fn(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = rate_fn(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def build_ref_table(cfg: FleetConfig, n_steps: int, assignment=None) -> np.ndarray:
    """Tabulate reference channels for every agent on the half-step grid."""
    refs = cfg.references
    if assignment is not None:
        refs = tuple(cfg.references[j] for j in assignment)
    times = 0.5 * cfg.sim.dt * np.arange(2 * n_steps + 1)
    table = np.empty((len(refs), times.size, 7))
    for i, spec in enumerate(refs):
        table[i] = eval_table(spec, times)
    return table


def initial_state(cfg: FleetConfig, weights: np.ndarray | None = None) -> np.ndarray:
    """All vehicles at the origin at rest; observer starts with zero innovation.

    With the origin start every observer channel is zero too, but the state
    is assembled through the documented init rule so non-default initial
    poses stay correct.
    """
    from .observer import init_state

    n = cfg.n_agents
    nnod = cfg.lattice().size
    y0 = np.zeros((n, N_BASE + 2 * nnod))
    for i in range(n):
        obs = init_state(y0[i, 0:3])
        y0[i, 5:9] = obs.as_array()
        if weights is not None:
            y0[i, N_BASE:] = np.asarray(weights[i], dtype=float).reshape(-1)
    return y0


def kernel_inputs(cfg: FleetConfig) -> kernels.KernelInputs:
    lat = cfg.lattice()
    return kernels.KernelInputs(
        par=kernels.pack_params(cfg.vehicle, cfg.observer, cfg.gains),
        centers=np.ascontiguousarray(lat.centers),
        inv_sig2=1.0 / lat.width**2,
        adjacency=np.ascontiguousarray(cfg.graph.adjacency, dtype=np.float64),
    )


def _run(cfg: FleetConfig, mode: str, weights=None, assignment=None,
         backend: str | None = None) -> RunLog:
    dt = cfg.sim.dt
    n_steps = int(round(cfg.sim.t_end / dt)) if cfg.sim.t_end > 0 else 0
    snap_every = max(int(round(cfg.sim.snapshot_interval / dt)), 1)
    ref_table = build_ref_table(cfg, n_steps, assignment)
    y0 = initial_state(cfg, weights)
    ki = kernel_inputs(cfg)
    used_backend = kernels.active_backend() if backend is None else backend
    t0 = time.perf_counter()
    status, bad, y_final, log, snaps = kernels.simulate(
        y0, ref_table, dt, n_steps, ki, learn=(mode == "learning"),
        snap_every=snap_every, backend=used_backend,
    )
    runtime = time.perf_counter() - t0
    if status == kernels.STATUS_NONFINITE:
        raise DivergenceError("non-finite state", bad, bad * dt)
    if status == kernels.STATUS_BLOWUP:
        raise DivergenceError(f"|state| > {kernels.DIVERGENCE_LIMIT:g}", bad, bad * dt)
    return RunLog(
        mode=mode,
        dt=dt,
        t=dt * np.arange(n_steps + 1),
        data=log,
        snap_times=dt * snap_every * np.arange(snaps.shape[0]),
        snapshots=snaps,
        final_state=y_final,
        runtime_s=runtime,
        backend=used_backend,
        assignment=tuple(assignment) if assignment is not None else tuple(range(cfg.n_agents)),
    )


def run_learning(cfg: FleetConfig, backend: str | None = None) -> RunLog:
    """Cooperative learning phase: adaptive torque + consensus weight law."""
    return _run(cfg, "learning", backend=backend)


def run_experience(cfg: FleetConfig, consolidated: np.ndarray, assignment,
                   backend: str | None = None) -> RunLog:
    """Experience phase: frozen weights, permuted reference assignment.

    consolidated has shape (n, N, 2); assignment[i] is the index of the
    reference agent i must follow and must be a permutation.
    """
    assignment = tuple(int(a) for a in assignment)
    n = cfg.n_agents
    if sorted(assignment) != list(range(n)):
        raise ValueError(f"assignment {assignment} is not a permutation of 0..{n - 1}")
    consolidated = np.asarray(consolidated, dtype=float)
    nnod = cfg.lattice().size
    if consolidated.shape != (n, nnod, 2):
        raise ValueError(
            f"consolidated weights shape {consolidated.shape} != {(n, nnod, 2)}"
        )
    return _run(cfg, "experience", weights=consolidated, assignment=assignment,
                backend=backend)


def consolidate_run(log: RunLog, t_a: float, t_b: float) -> np.ndarray:
    """Per-agent consolidated weights over [t_a, t_b], shape (n, N, 2)."""
    return np.stack(
        [
            consolidate_weights(log.snap_times, log.snapshots[:, i], t_a, t_b)
            for i in range(log.n_agents)
        ]
    )


# ---------------------------------------------------------------------------
# metrics


def metric_tracking(log: RunLog, window_s: float | None = None) -> dict[str, np.ndarray]:
    """Trailing max of planar error norm and |heading error| per agent."""
    mask = log.trailing_mask(window_s)
    pos = np.sqrt(log.col("ex")[mask] ** 2 + log.col("ey")[mask] ** 2)
    return {
        "pos_max": pos.max(axis=0),
        "theta_max": np.abs(log.col("etheta")[mask]).max(axis=0),
    }


def metric_observer(log: RunLog, settle_s: float) -> dict[str, np.ndarray]:
    """Max velocity-estimation errors after the settle time (NaN if the run
    never reaches it)."""
    mask = log.t > settle_s
    if not mask.any():
        nan = np.full(log.n_agents, np.nan)
        return {"v_max": nan, "omega_max": nan.copy()}
    ev = np.abs(log.col("v") - log.col("v_hat"))[mask]
    ew = np.abs(log.col("omega") - log.col("omega_hat"))[mask]
    return {"v_max": ev.max(axis=0), "omega_max": ew.max(axis=0)}


def metric_consensus(log: RunLog) -> float:
    """Max pairwise Frobenius distance between final weight matrices."""
    wfin = log.snapshots[-1]
    n = wfin.shape[0]
    diam = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            diam = max(diam, float(np.linalg.norm(wfin[i] - wfin[j])))
    return diam


def metric_estimation_error(log: RunLog, window_s: float | None = None) -> dict[str, np.ndarray]:
    """Trailing RMS of H(X) - W^T S(X) per channel.

    The est_err_* log columns already hold the residual evaluated at the
    ground-truth X (a simulation-only privilege).
    """
    mask = log.trailing_mask(window_s)
    est_v = log.col("est_err_v")[mask]
    est_w = log.col("est_err_w")[mask]
    return {
        "rms_v": np.sqrt(np.mean(est_v**2, axis=0)),
        "rms_w": np.sqrt(np.mean(est_w**2, axis=0)),
    }


def unknown_dynamics_series(log: RunLog, vehicle) -> tuple[np.ndarray, np.ndarray]:
    """Ground-truth H(X(t)) per channel from the logged body velocities."""
    v = log.col("v")
    om = log.col("omega")
    m, ic, d = vehicle.m, vehicle.inertia_c, vehicle.com_offset
    c = vehicle.friction
    hv = -m * d * om**2 + m * (c.cv1 * v + c.cv2 * v**2)
    hw = m * d * om * v + ic * (c.cw1 * om + c.cw2 * om**2)
    return hv, hw


def metric_estimation_ratio(log: RunLog, vehicle, window_s: float | None = None) -> dict[str, np.ndarray]:
    """Estimation RMS relative to RMS(H) over the same trailing window."""
    mask = log.trailing_mask(window_s)
    hv, hw = unknown_dynamics_series(log, vehicle)
    est = metric_estimation_error(log, window_s)
    rms_hv = np.sqrt(np.mean(hv[mask] ** 2, axis=0))
    rms_hw = np.sqrt(np.mean(hw[mask] ** 2, axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):  # H == 0 at rest
        return {
            "ratio_v": est["rms_v"] / rms_hv,
            "ratio_w": est["rms_w"] / rms_hw,
            "rms_h_v": rms_hv,
            "rms_h_w": rms_hw,
        }


def cross_estimation_rms(log: RunLog, vehicle, lattice, W: np.ndarray,
                         traj_agent: int, window_s: float) -> dict[str, float]:
    """RMS of H - W^T S along another agent's realized velocity trajectory."""
    mask = log.trailing_mask(window_s)
    x_traj = np.stack([log.col("v")[mask, traj_agent], log.col("omega")[mask, traj_agent]], axis=1)
    diff = x_traj[:, None, :] - lattice.centers[None, :, :]
    s = np.exp(-np.sum(diff**2, axis=2) / lattice.width**2)
    pred = s @ W  # (T, 2)
    hv, hw = unknown_dynamics_series(log, vehicle)
    err_v = hv[mask, traj_agent] - pred[:, 0]
    err_w = hw[mask, traj_agent] - pred[:, 1]
    return {
        "rms_v": float(np.sqrt(np.mean(err_v**2))),
        "rms_w": float(np.sqrt(np.mean(err_w**2))),
        "rms_h_v": float(np.sqrt(np.mean(hv[mask, traj_agent] ** 2))),
        "rms_h_w": float(np.sqrt(np.mean(hw[mask, traj_agent] ** 2))),
    }


def pe_levels(log: RunLog, lattice, threshold: float, period_s: float) -> np.ndarray:
    """Empirical PE level of each agent's realized X over the last period."""
    mask = log.trailing_mask(period_s)
    out = np.empty(log.n_agents)
    for i in range(log.n_agents):
        traj = np.stack([log.col("v")[mask, i], log.col("omega")[mask, i]], axis=1)
        out[i], _ = rbf.pe_level(lattice, traj, log.dt, threshold)
    return out


def fleet_lyapunov(log: RunLog) -> np.ndarray:
    """Fleet-summed Lyapunov diagnostic time series (weight term omitted)."""
    return log.col("V_diag").sum(axis=1)


def lyapunov_at(log: RunLog, t_query: float) -> float:
    idx = int(np.argmin(np.abs(log.t - t_query)))
    return float(fleet_lyapunov(log)[idx])


def summary_metrics(cfg: FleetConfig, log: RunLog) -> dict[str, float]:
    """The flat name=value metric set written to metrics.txt."""
    out: dict[str, float] = {}
    obs = metric_observer(log, settle_s=0.5)
    track5 = metric_tracking(log, window_s=5.0)
    est10 = metric_estimation_ratio(log, cfg.vehicle, window_s=10.0)
    for i in range(log.n_agents):
        out[f"observer_err_v_max_agent{i}"] = obs["v_max"][i]
        out[f"observer_err_omega_max_agent{i}"] = obs["omega_max"][i]
        out[f"tracking_pos_trail5s_max_agent{i}"] = track5["pos_max"][i]
        out[f"tracking_theta_trail5s_max_agent{i}"] = track5["theta_max"][i]
        out[f"estimation_rms_ratio_v_trail10s_agent{i}"] = est10["ratio_v"][i]
        out[f"estimation_rms_ratio_omega_trail10s_agent{i}"] = est10["ratio_w"][i]
    if log.mode == "learning":
        lat = cfg.lattice()
        wbar = consolidate_run(log, *cfg.sim.consolidation_window())
        out["consensus_diameter"] = metric_consensus(log)
        out["wbar_fro_norm_mean"] = float(np.mean([np.linalg.norm(w) for w in wbar]))
        pes = pe_levels(log, lat, cfg.rbf.activation_threshold, period_s=2.0 * np.pi)
        for i in range(log.n_agents):
            out[f"pe_level_agent{i}"] = pes[i]
    out["lyapunov_fleet_at_1s"] = lyapunov_at(log, 1.0)
    out["lyapunov_fleet_at_end"] = lyapunov_at(log, log.t[-1])
    out["saturation_fraction"] = float(np.mean(log.col("sat_flag")))
    return out


# ---------------------------------------------------------------------------
# artifact writers


def write_run_csv(log: RunLog, path) -> None:
    """Dense per-step per-agent CSV, 9 significant digits."""
    k1, n, _ = log.data.shape
    rows = np.empty((k1 * n, 2 + N_LOG))
    rows[:, 0] = np.repeat(log.t, n)
    rows[:, 1] = np.tile(np.arange(n), k1)
    rows[:, 2:] = log.data.reshape(k1 * n, N_LOG)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(RUN_CSV_HEADER + "\n")
        np.savetxt(fh, rows, fmt="%.9g", delimiter=",")


def write_metrics(metrics: dict[str, float], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for name, value in metrics.items():
            fh.write(f"{name}={value:.9g}\n")


def write_snapshots(log: RunLog, lattice, out_dir) -> list[str]:
    """One CSV per agent per snapshot: weights_agent<i>_t<millis>.csv."""
    import os

    paths = []
    for si, ts in enumerate(log.snap_times):
        millis = int(round(ts * 1000.0))
        for i in range(log.n_agents):
            p = os.path.join(out_dir, f"weights_agent{i}_t{millis}.csv")
            rbf.save_weights_csv(p, lattice, log.snapshots[si, i])
            paths.append(p)
    return paths


def write_consolidated(wbar: np.ndarray, lattice, out_dir) -> list[str]:
    import os

    paths = []
    for i in range(wbar.shape[0]):
        p = os.path.join(out_dir, f"wbar_agent{i}.csv")
        rbf.save_weights_csv(p, lattice, wbar[i])
        paths.append(p)
    return paths


def load_consolidated(weights_dir, lattice, n_agents: int) -> np.ndarray:
    import os

    out = np.empty((n_agents, lattice.size, 2))
    for i in range(n_agents):
        p = os.path.join(weights_dir, f"wbar_agent{i}.csv")
        if not os.path.exists(p):
            raise FileNotFoundError(f"missing consolidated weights for agent {i}: {p}")
        out[i] = rbf.load_weights_csv(p, lattice)
    return out
