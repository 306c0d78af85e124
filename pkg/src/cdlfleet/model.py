"""Unicycle vehicle model: kinematics, reduced dynamics, friction, torque maps.

The vehicle is a two-wheel differential-drive platform with a no-side-slip
constraint.  Working coordinates are the pose q = (x, y, theta) and the body
velocity u = (v, omega).  The full 3-DOF Lagrangian quantities (inertia in
pose coordinates, kinetic energy) are kept as cross-check oracles; the
runtime dynamics live entirely in the reduced 2-DOF form

    Mbar u_dot + Cbar(u) u + Fbar(u) = tau_bar,   Gbar = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class FrictionCoeffs:
    """Friction law coefficients, unknown to the controller by contract.

    Friction is quadratic in each channel:
        Fbar_v = cv1*m*v + cv2*m*v^2
        Fbar_w = cw1*I*omega + cw2*I*omega^2
    Note the v^2 term is signed (assistive for v < 0); the law is kept
    verbatim rather than symmetrized to v*|v|.
    """

    cv1: float = 0.1
    cv2: float = 0.05
    cw1: float = 0.2
    cw2: float = 0.1


@dataclass(frozen=True)
class VehicleParams:
    """Physical parameters of one vehicle (all agents are identical).

    m          mass [kg]
    inertia_c  moment of inertia about the center of mass [kg m^2]
    half_track half wheel separation R [m] (wheel distance D = 2R)
    wheel_radius r [m]
    com_offset d [m], axle midpoint to center of mass
    """

    m: float = 2.0
    inertia_c: float = 0.2
    half_track: float = 0.15
    wheel_radius: float = 0.05
    com_offset: float = 0.1
    friction: FrictionCoeffs = field(default_factory=FrictionCoeffs)

    def validate(self) -> list[str]:
        errs = []
        if not self.m > 0:
            errs.append(f"vehicle mass must be positive, got {self.m}")
        if not self.inertia_c > 0:
            errs.append(f"vehicle inertia must be positive, got {self.inertia_c}")
        if not self.half_track > 0:
            errs.append(f"half_track must be positive (torque map singular), got {self.half_track}")
        if not self.wheel_radius > 0:
            errs.append(f"wheel_radius must be positive (torque map singular), got {self.wheel_radius}")
        if self.com_offset < 0:
            errs.append(f"com_offset must be nonnegative, got {self.com_offset}")
        for name in ("cv1", "cv2", "cw1", "cw2"):
            if not np.isfinite(getattr(self.friction, name)):
                errs.append(f"friction coefficient {name} is not finite")
        return errs


def motion_jacobian(theta: float) -> np.ndarray:
    """3x2 map J(q) from body velocity u to pose rate q_dot."""
    return np.array([
        [np.cos(theta), 0.0],
        [np.sin(theta), 0.0],
        [0.0, 1.0],
    ])


def constraint_direction(theta: float) -> np.ndarray:
    """Lateral no-slip direction A(q); A^T q_dot = 0 along admissible motion."""
    return np.array([np.sin(theta), -np.cos(theta), 0.0])


def kinematics(q: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Pose rate (x_dot, y_dot, theta_dot) of the no-slip unicycle."""
    v, omega = u[0], u[1]
    theta = q[2]
    return np.array([v * np.cos(theta), v * np.sin(theta), omega])


def constraint_residual(q: np.ndarray, pose_rate: np.ndarray) -> float:
    """Lateral slip rate x_dot*sin(theta) - y_dot*cos(theta); zero iff admissible."""
    theta = q[2]
    return pose_rate[0] * np.sin(theta) - pose_rate[1] * np.cos(theta)


def reduced_inertia(p: VehicleParams) -> np.ndarray:
    """Constant 2x2 body-frame inertia diag(m, m*d^2 + I)."""
    return np.diag([p.m, p.m * p.com_offset**2 + p.inertia_c])


def coriolis(p: VehicleParams, omega: float) -> np.ndarray:
    """Skew-symmetric body-frame Coriolis matrix [[0, -m*d*w], [m*d*w, 0]]."""
    mdw = p.m * p.com_offset * omega
    return np.array([[0.0, -mdw], [mdw, 0.0]])


def friction(p: VehicleParams, u: np.ndarray) -> np.ndarray:
    """Body-frame friction vector Fbar(u)."""
    v, omega = u[0], u[1]
    c = p.friction
    return np.array([
        c.cv1 * p.m * v + c.cv2 * p.m * v**2,
        c.cw1 * p.inertia_c * omega + c.cw2 * p.inertia_c * omega**2,
    ])


def unknown_dynamics(p: VehicleParams, u: np.ndarray) -> np.ndarray:
    """H(X) = Cbar(u)u + Fbar(u), the term the RBF network has to learn.

    Lives here (not in control) so the controller never sees the friction
    coefficients or the com_offset-dependent Coriolis coupling.
    """
    return coriolis(p, u[1]) @ u + friction(p, u)


def body_accel(p: VehicleParams, u: np.ndarray, tau_bar: np.ndarray) -> np.ndarray:
    """u_dot = Mbar^-1 (tau_bar - Cbar u - Fbar); Mbar is diagonal."""
    rhs = tau_bar - coriolis(p, u[1]) @ u - friction(p, u)
    mbar = reduced_inertia(p)
    return np.array([rhs[0] / mbar[0, 0], rhs[1] / mbar[1, 1]])


def torque_map(p: VehicleParams) -> np.ndarray:
    """2x2 map from wheel torques (right, left) to (tau_v, tau_w)."""
    r, R = p.wheel_radius, p.half_track
    return np.array([[1.0 / r, 1.0 / r], [R / r, -R / r]])


def wheel_torques(p: VehicleParams, tau_bar: np.ndarray) -> np.ndarray:
    """Invert the torque map: the unique (tau_right, tau_left) realizing tau_bar."""
    r, R = p.wheel_radius, p.half_track
    # closed-form inverse of [[1/r, 1/r], [R/r, -R/r]]
    return np.array([
        0.5 * r * tau_bar[0] + 0.5 * r / R * tau_bar[1],
        0.5 * r * tau_bar[0] - 0.5 * r / R * tau_bar[1],
    ])


def full_inertia(p: VehicleParams, theta: float) -> np.ndarray:
    """3x3 pose-coordinate inertia matrix (test oracle for reduced_inertia)."""
    m, d, inertia = p.m, p.com_offset, p.inertia_c
    ms, mc = m * d * np.sin(theta), m * d * np.cos(theta)
    return np.array([
        [m, 0.0, -ms],
        [0.0, m, mc],
        [-ms, mc, m * d**2 + inertia],
    ])


def kinetic_energy(p: VehicleParams, q: np.ndarray, pose_rate: np.ndarray) -> float:
    """Kinetic energy from center-of-mass motion (oracle for full_inertia).

    Uses the offset relations x_c = x + d cos(theta), y_c = y + d sin(theta).
    """
    theta = q[2]
    xd, yd, thd = pose_rate
    xcd = xd - p.com_offset * thd * np.sin(theta)
    ycd = yd + p.com_offset * thd * np.cos(theta)
    return 0.5 * p.m * (xcd**2 + ycd**2) + 0.5 * p.inertia_c * thd**2
