"""Recurrent reference trajectories and their feedforward signals.

A reference supplies, at any time t, the pose (x_r, y_r, theta_r), the body
velocities (v_r, omega_r), and their rates (vdot_r, omegadot_r), all derived
from the planar curve (x_r(t), y_r(t)):

    theta_r = atan2(y', x'),  v_r = sqrt(x'^2 + y'^2),
    omega_r = (x' y'' - x'' y') / (x'^2 + y'^2).

Two kinds are supported: the closed-form elliptical Lissajous family used by
the shipped fleet configs, and tabulated custom samples (one period on a
uniform grid, differentiated by centered differences).  Specs whose speed
touches zero are rejected: theta_r and omega_r are singular there.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LISSAJOUS = "lissajous-ellipse"
CUSTOM = "custom-samples"


@dataclass(frozen=True)
class ReferenceSpec:
    kind: str = LISSAJOUS
    amp_x: float = 1.0
    amp_y: float = 1.0
    phase: str = "sin-first"  # x leads with sin; "cos-first" swaps the pair
    # custom-samples only: positions on a uniform grid covering one period
    sample_t: np.ndarray | None = field(default=None, repr=False)
    sample_x: np.ndarray | None = field(default=None, repr=False)
    sample_y: np.ndarray | None = field(default=None, repr=False)

    @property
    def period(self) -> float:
        if self.kind == LISSAJOUS:
            return 2.0 * np.pi
        dt = self.sample_t[1] - self.sample_t[0]
        return float(self.sample_t[-1] + dt)


def _lissajous_derivs(spec: ReferenceSpec, t: np.ndarray):
    """Curve derivatives (x', y', x'', y'', x''', y''') for the ellipse family."""
    s, c = np.sin(t), np.cos(t)
    ax, ay = spec.amp_x, spec.amp_y
    if spec.phase == "sin-first":  # x = ax sin t, y = ay cos t
        dx, dy = ax * c, -ay * s
        ddx, ddy = -ax * s, -ay * c
        dddx, dddy = -ax * c, ay * s
    elif spec.phase == "cos-first":  # x = ax cos t, y = ay sin t
        dx, dy = -ax * s, ay * c
        ddx, ddy = -ax * c, -ay * s
        dddx, dddy = ax * s, -ay * c
    else:
        raise ValueError(f"unknown phase '{spec.phase}' (use sin-first or cos-first)")
    return dx, dy, ddx, ddy, dddx, dddy


def _lissajous_pos(spec: ReferenceSpec, t: np.ndarray):
    s, c = np.sin(t), np.cos(t)
    if spec.phase == "sin-first":
        return spec.amp_x * s, spec.amp_y * c
    return spec.amp_x * c, spec.amp_y * s


def _periodic_diff(vals: np.ndarray, dt: float) -> np.ndarray:
    """Centered first difference on a periodic uniform grid."""
    return (np.roll(vals, -1) - np.roll(vals, 1)) / (2.0 * dt)


def _custom_tables(spec: ReferenceSpec):
    t = np.asarray(spec.sample_t, dtype=float)
    x = np.asarray(spec.sample_x, dtype=float)
    y = np.asarray(spec.sample_y, dtype=float)
    if t.ndim != 1 or t.size < 8 or x.shape != t.shape or y.shape != t.shape:
        raise ValueError("custom-samples reference needs matching 1-D arrays of length >= 8")
    dt = t[1] - t[0]
    if not np.allclose(np.diff(t), dt):
        raise ValueError("custom-samples grid must be uniform")
    dx, dy = _periodic_diff(x, dt), _periodic_diff(y, dt)
    ddx, ddy = _periodic_diff(dx, dt), _periodic_diff(dy, dt)
    dddx, dddy = _periodic_diff(ddx, dt), _periodic_diff(ddy, dt)
    return t, np.column_stack([x, y, dx, dy, ddx, ddy, dddx, dddy])


def _interp_periodic(grid_t: np.ndarray, table: np.ndarray, period: float, t: np.ndarray):
    tau = np.mod(t, period)
    cols = [
        np.interp(tau, grid_t, table[:, k], period=period) for k in range(table.shape[1])
    ]
    return tuple(cols)


def _assemble(x, y, dx, dy, ddx, ddy, dddx, dddy) -> np.ndarray:
    """Stack the seven reference channels from curve derivatives."""
    sq = dx * dx + dy * dy
    v = np.sqrt(sq)
    theta = np.arctan2(dy, dx)
    # ties at -pi map to +pi, matching the tracking-error wrap convention
    theta = np.where(theta <= -np.pi, np.pi, theta)
    num = dx * ddy - ddx * dy
    omega = num / sq
    vdot = (dx * ddx + dy * ddy) / v
    dnum = dx * dddy - dddx * dy
    dsq = 2.0 * (dx * ddx + dy * ddy)
    omegadot = (dnum * sq - num * dsq) / (sq * sq)
    return np.stack(
        [np.asarray(c, dtype=float) for c in (x, y, theta, v, omega, vdot, omegadot)],
        axis=-1,
    )


def eval_table(spec: ReferenceSpec, t: np.ndarray) -> np.ndarray:
    """Reference channels (..., 7) = (x, y, theta, v, omega, vdot, omegadot)."""
    t = np.asarray(t, dtype=float)
    if spec.kind == LISSAJOUS:
        x, y = _lissajous_pos(spec, t)
        return _assemble(x, y, *_lissajous_derivs(spec, t))
    if spec.kind == CUSTOM:
        grid_t, table = _custom_tables(spec)
        cols = _interp_periodic(grid_t, table, spec.period, t)
        return _assemble(*cols)
    raise ValueError(f"unknown reference kind '{spec.kind}'")


def reference_eval(spec: ReferenceSpec, t: float):
    """Single ReferenceSample at time t."""
    from .control import ReferenceSample

    row = eval_table(spec, np.asarray([t]))[0]
    return ReferenceSample(*row)


def validate_reference(spec: ReferenceSpec, n_check: int = 4096) -> list[str]:
    """Reject degenerate amplitudes and speed profiles that touch zero."""
    errs = []
    if spec.kind == LISSAJOUS:
        if spec.amp_x == 0 or spec.amp_y == 0:
            errs.append(f"reference amplitudes must be nonzero, got ({spec.amp_x}, {spec.amp_y})")
            return errs
        if spec.phase not in ("sin-first", "cos-first"):
            errs.append(f"unknown reference phase '{spec.phase}'")
            return errs
    elif spec.kind == CUSTOM:
        try:
            _custom_tables(spec)
        except ValueError as exc:
            return [str(exc)]
    else:
        return [f"unknown reference kind '{spec.kind}'"]
    ts = np.linspace(0.0, spec.period, n_check, endpoint=False)
    with np.errstate(divide="ignore", invalid="ignore"):
        table = eval_table(spec, ts)
    vmin = table[:, 3].min()
    if not vmin > 1e-9:
        errs.append(f"reference speed reaches {vmin:.3g}; v_r must stay positive over the period")
    return errs


def velocity_ranges(spec: ReferenceSpec, n_check: int = 4096):
    """(v_min, v_max, omega_min, omega_max) over one period."""
    ts = np.linspace(0.0, spec.period, n_check, endpoint=False)
    table = eval_table(spec, ts)
    return (
        float(table[:, 3].min()),
        float(table[:, 3].max()),
        float(table[:, 4].min()),
        float(table[:, 4].max()),
    )
