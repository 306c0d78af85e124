"""Backstepping tracking controller with cooperative RBF weight adaptation.

Pipeline per agent and step: project the pose error into the body frame,
form the virtual velocity command u_c, differentiate it analytically, and
assemble the transformed torque

    tau_bar = Mbar u_c' + W^T S(X) + K_u (u_c - u_hat) + (ex, sin(eth)/K_y),

clamped to +-tau_max.  In the learning phase W is the online estimate
updated by a consensus-coupled law; in the experience phase W is a frozen
consolidated matrix and no update runs.

By contract this module never sees the friction coefficients or the
Coriolis coupling: the unknown dynamics enter only through the weight
matrix it is handed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ControllerGains:
    """Backstepping gains, adaptation constants, and the torque clamp."""

    kx: float = 1.0
    ky: float = 1.0
    ktheta: float = 1.0
    ku: float = 2.0
    gamma_big: float = 10.0    # adaptation rate (Gamma)
    gamma_small: float = 0.001  # leakage
    beta: float = 10.0         # consensus coupling
    tau_max: float = 50.0

    def validate(self) -> list[str]:
        errs = []
        for name in ("kx", "ky", "ktheta", "ku", "gamma_big", "tau_max"):
            if not getattr(self, name) > 0:
                errs.append(f"controller gain {name} must be positive, got {getattr(self, name)}")
        for name in ("gamma_small", "beta"):
            if getattr(self, name) < 0:
                errs.append(f"controller gain {name} must be nonnegative, got {getattr(self, name)}")
        return errs


@dataclass(frozen=True)
class ReferenceSample:
    """Reference pose, feedforward velocities, and their rates at one instant."""

    x_r: float
    y_r: float
    theta_r: float
    v_r: float
    omega_r: float
    vdot_r: float
    omegadot_r: float


def wrap_angle(a: float) -> float:
    """Wrap into (-pi, pi]; the -pi tie maps to +pi on every platform."""
    w = a - TWO_PI * np.floor((a + np.pi) / TWO_PI)
    if w <= -np.pi:
        w = np.pi
    return w


def tracking_error(q: np.ndarray, ref: ReferenceSample) -> np.ndarray:
    """Pose error (ex, ey, etheta) of the reference in the body frame."""
    c, s = np.cos(q[2]), np.sin(q[2])
    dx, dy = ref.x_r - q[0], ref.y_r - q[1]
    return np.array([
        c * dx + s * dy,
        -s * dx + c * dy,
        wrap_angle(ref.theta_r - q[2]),
    ])


def virtual_velocity(e: np.ndarray, ref: ReferenceSample, g: ControllerGains) -> np.ndarray:
    """Kinematic virtual command u_c = (v_c, omega_c)."""
    ex, ey, eth = e
    return np.array([
        ref.v_r * np.cos(eth) + g.kx * ex,
        ref.omega_r + ref.v_r * g.ky * ey + g.ktheta * np.sin(eth),
    ])


def virtual_velocity_rate(
    e: np.ndarray, ref: ReferenceSample, u_hat: np.ndarray, g: ControllerGains
) -> np.ndarray:
    """Analytic d/dt of u_c along the tracking-error dynamics.

    The error rates use the observer estimates in place of the true body
    velocity, so the result is computable online:
        eth' = omega_r - omega_hat
        ex'  = v_r cos(eth) + omega_hat*ey - v_hat
        ey'  = v_r sin(eth) - omega_hat*ex
    """
    ex, ey, eth = e
    v_hat, om_hat = u_hat
    deth = ref.omega_r - om_hat
    dex = ref.v_r * np.cos(eth) + om_hat * ey - v_hat
    dey = ref.v_r * np.sin(eth) - om_hat * ex
    dvc = ref.vdot_r * np.cos(eth) - ref.v_r * np.sin(eth) * deth + g.kx * dex
    domc = (
        ref.omegadot_r
        + ref.vdot_r * g.ky * ey
        + ref.v_r * g.ky * dey
        + g.ktheta * np.cos(eth) * deth
    )
    return np.array([dvc, domc])


def _torque(e, u_hat, uc, duc, W, S, g: ControllerGains, mbar_diag) -> tuple[np.ndarray, bool]:
    raw = np.array([
        mbar_diag[0] * duc[0] + W[:, 0] @ S + g.ku * (uc[0] - u_hat[0]) + e[0],
        mbar_diag[1] * duc[1] + W[:, 1] @ S + g.ku * (uc[1] - u_hat[1]) + np.sin(e[2]) / g.ky,
    ])
    clamped = np.clip(raw, -g.tau_max, g.tau_max)
    return clamped, bool(np.any(clamped != raw))


def adaptive_torque(
    e: np.ndarray,
    ref: ReferenceSample,
    u_hat: np.ndarray,
    duc: np.ndarray,
    W_hat: np.ndarray,
    S: np.ndarray,
    g: ControllerGains,
    mbar_diag: np.ndarray,
) -> tuple[np.ndarray, bool]:
    """Learning-phase torque; returns (tau_bar, saturation_flag)."""
    uc = virtual_velocity(e, ref, g)
    return _torque(e, u_hat, uc, duc, W_hat, S, g, mbar_diag)


def experience_torque(
    e: np.ndarray,
    ref: ReferenceSample,
    u_hat: np.ndarray,
    duc: np.ndarray,
    W_bar: np.ndarray,
    S: np.ndarray,
    g: ControllerGains,
    mbar_diag: np.ndarray,
) -> tuple[np.ndarray, bool]:
    """Experience-phase torque: same law with the frozen consolidated weights."""
    uc = virtual_velocity(e, ref, g)
    return _torque(e, u_hat, uc, duc, W_bar, S, g, mbar_diag)


def weight_update_rate(
    S: np.ndarray,
    u_tilde_hat: np.ndarray,
    W_i: np.ndarray,
    neighbor_weights: list[tuple[float, np.ndarray]],
    g: ControllerGains,
) -> np.ndarray:
    """Consensus-coupled adaptation law

        W_i' = Gamma * S * u~^T - gamma * W_i - beta * sum_j a_ij (W_i - W_j)

    where u~ is the implementable surrogate u_c - u_hat and neighbor weights
    come from the shared fleet snapshot of the current step.
    """
    rate = g.gamma_big * np.outer(S, u_tilde_hat) - g.gamma_small * W_i
    for a_ij, W_j in neighbor_weights:
        rate -= g.beta * a_ij * (W_i - W_j)
    return rate


def consolidate_weights(
    snapshot_times: np.ndarray, snapshots: np.ndarray, t_a: float, t_b: float
) -> np.ndarray:
    """Entry-wise trapezoidal time average of the weight history over [t_a, t_b].

    snapshots has shape (T, N, 2) aligned with snapshot_times.  The window
    must lie inside the logged range; a single-snapshot window returns that
    snapshot.
    """
    snapshot_times = np.asarray(snapshot_times, dtype=float)
    if not t_b > t_a:
        if t_b == t_a:
            idx = np.flatnonzero(np.isclose(snapshot_times, t_a))
            if idx.size:
                return snapshots[idx[0]].copy()
        raise ValueError(f"consolidation window [{t_a}, {t_b}] is empty")
    if t_a < snapshot_times[0] - 1e-12 or t_b > snapshot_times[-1] + 1e-12:
        raise ValueError(
            f"consolidation window [{t_a}, {t_b}] outside logged range "
            f"[{snapshot_times[0]}, {snapshot_times[-1]}]"
        )
    mask = (snapshot_times >= t_a - 1e-12) & (snapshot_times <= t_b + 1e-12)
    ts = snapshot_times[mask]
    ws = snapshots[mask]
    if ts.size == 1:
        return ws[0].copy()
    avg = np.trapezoid(ws, x=ts, axis=0) / (ts[-1] - ts[0])
    return avg


def lyapunov_value(
    e: np.ndarray,
    u_tilde: np.ndarray,
    W_tilde_norm_sq: float,
    g: ControllerGains,
    mbar_diag: np.ndarray,
) -> float:
    """Diagnostic energy  ex^2/2 + ey^2/2 + (1-cos(eth))/K_y + u~^T Mbar u~/2
    (+ ||W~||_F^2 / (2 Gamma) when the caller can supply it)."""
    ex, ey, eth = e
    return (
        0.5 * ex**2
        + 0.5 * ey**2
        + (1.0 - np.cos(eth)) / g.ky
        + 0.5 * (mbar_diag[0] * u_tilde[0] ** 2 + mbar_diag[1] * u_tilde[1] ** 2)
        + W_tilde_norm_sq / (2.0 * g.gamma_big)
    )
