"""High-gain observer recovering body velocities from pose measurements.

Two identical second-order observers per vehicle: one on the heading channel
(theta -> omega_hat) and one on the rotating-frame forward coordinate
(p_x -> v_hat).  Correction gains scale as l1/delta and l2/delta^2, so the
estimation error collapses on the fast time scale delta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ObserverGains:
    """l1, l2 place the fast poles ([[-l1, 1], [-l2, 0]] must be Hurwitz);
    delta is the time-scale parameter."""

    l1: float = 1.0
    l2: float = 1.0
    delta: float = 0.01

    def validate(self) -> list[str]:
        errs = []
        if not self.l1 > 0:
            errs.append(f"observer gain l1 must be positive, got {self.l1}")
        if not self.l2 > 0:
            errs.append(f"observer gain l2 must be positive, got {self.l2}")
        if not self.delta > 0:
            errs.append(f"observer delta must be positive, got {self.delta}")
        return errs


@dataclass
class ObserverState:
    """Internal observer state (theta_hat, omega_hat, px_hat, v_hat)."""

    theta_hat: float = 0.0
    omega_hat: float = 0.0
    px_hat: float = 0.0
    v_hat: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.theta_hat, self.omega_hat, self.px_hat, self.v_hat])


def rotating_frame(q: np.ndarray) -> tuple[float, float]:
    """Project the position onto the frame co-rotating with the body axes.

    p_x = x cos(theta) + y sin(theta), p_y = y cos(theta) - x sin(theta);
    an isometry, and d/dt p_x = v + p_y * omega.
    """
    x, y, theta = q[0], q[1], q[2]
    c, s = np.cos(theta), np.sin(theta)
    return x * c + y * s, y * c - x * s


def init_state(q: np.ndarray) -> ObserverState:
    """Start with zero innovation: position channels copied from the first
    measurement, velocity estimates at zero (mitigates peaking)."""
    px, _ = rotating_frame(q)
    return ObserverState(theta_hat=float(q[2]), omega_hat=0.0, px_hat=px, v_hat=0.0)


def observer_rates(
    s: ObserverState,
    g: ObserverGains,
    theta_meas: float,
    p_meas: tuple[float, float],
) -> np.ndarray:
    """Time derivatives (theta_hat', omega_hat', px_hat', v_hat')."""
    k1 = g.l1 / g.delta
    k2 = g.l2 / g.delta**2
    e_theta = theta_meas - s.theta_hat
    e_px = p_meas[0] - s.px_hat
    return np.array([
        s.omega_hat + k1 * e_theta,
        k2 * e_theta,
        s.v_hat + p_meas[1] * s.omega_hat + k1 * e_px,
        k2 * e_px,
    ])


def estimate(s: ObserverState) -> np.ndarray:
    """Body-velocity estimate (v_hat, omega_hat)."""
    return np.array([s.v_hat, s.omega_hat])
