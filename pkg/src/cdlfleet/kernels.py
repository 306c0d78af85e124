"""Hot simulation kernels: closed-loop fleet integration with RK4.

Two interchangeable implementations of the same math:

* a numba ``@njit`` kernel with explicit per-agent scalar loops (default),
* a vectorized pure-numpy fallback.

Selection is per-process via the ``CDLFLEET_BACKEND`` environment variable:
``auto`` (numba when importable, else numpy), ``numba``, or ``numpy``.
``benchmarks/bench_backends.py`` times the two side by side.

State layout, one row per agent (D = 9 + 2N columns):

    0:x  1:y  2:theta  3:v  4:omega
    5:theta_hat  6:omega_hat  7:px_hat  8:v_hat
    9:...  RBF weights, row-major (N, 2)

The coupled fleet ODE (pose, body velocity, observer, weights) is integrated
as one state vector, so every RK4 stage sees a single consistent fleet
snapshot; the consensus sum is accumulated separately per agent in ascending
neighbor order, which keeps results independent of agent processing order.

Reference signals depend on time only, so the engine pre-tabulates them on
the half-step grid (index 2k = t_k, 2k+1 = t_k + dt/2, 2k+2 = t_{k+1}) and
the kernels just index into the table.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

BACKEND_ENV = "CDLFLEET_BACKEND"

# packed scalar-parameter vector indices
(
    P_M, P_IC, P_DCOM, P_CV1, P_CV2, P_CW1, P_CW2,
    P_MBV, P_MBW, P_L1, P_L2, P_DELTA,
    P_KX, P_KY, P_KTH, P_KU, P_GAMBIG, P_GAMSMALL, P_BETA, P_TAUMAX,
) = range(20)

N_PAR = 20
N_BASE = 9  # non-weight states per agent

LOG_COLUMNS = (
    "x", "y", "theta", "v", "omega", "v_hat", "omega_hat",
    "x_r", "y_r", "theta_r", "ex", "ey", "etheta",
    "tau_v", "tau_w", "sat_flag", "est_err_v", "est_err_w", "V_diag",
)
N_LOG = len(LOG_COLUMNS)

STATUS_OK = 0
STATUS_NONFINITE = 1
STATUS_BLOWUP = 2

DIVERGENCE_LIMIT = 1e6


def available_backends() -> list[str]:
    out = ["numpy"]
    try:
        import numba  # noqa: F401

        out.insert(0, "numba")
    except ImportError:
        pass
    return out


def active_backend() -> str:
    """Resolve the backend from CDLFLEET_BACKEND (auto | numba | numpy)."""
    choice = os.environ.get(BACKEND_ENV, "auto").strip().lower()
    if choice in ("", "auto"):
        return available_backends()[0]
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        import numba  # noqa: F401  (raise if unavailable)

        return "numba"
    raise ValueError(f"{BACKEND_ENV}={choice!r}: expected auto, numba, or numpy")


@dataclass(frozen=True)
class KernelInputs:
    """Everything the inner loop needs, in kernel-ready form."""

    par: np.ndarray        # (N_PAR,) packed scalars
    centers: np.ndarray    # (N, 2) RBF centers
    inv_sig2: float        # 1 / sigma^2
    adjacency: np.ndarray  # (n, n)

    @property
    def n_nodes(self) -> int:
        return self.centers.shape[0]


def pack_params(vehicle, observer, gains) -> np.ndarray:
    """Flatten the configuration scalars into the kernel parameter vector."""
    par = np.empty(N_PAR)
    par[P_M] = vehicle.m
    par[P_IC] = vehicle.inertia_c
    par[P_DCOM] = vehicle.com_offset
    par[P_CV1] = vehicle.friction.cv1
    par[P_CV2] = vehicle.friction.cv2
    par[P_CW1] = vehicle.friction.cw1
    par[P_CW2] = vehicle.friction.cw2
    par[P_MBV] = vehicle.m
    par[P_MBW] = vehicle.m * vehicle.com_offset**2 + vehicle.inertia_c
    par[P_L1] = observer.l1
    par[P_L2] = observer.l2
    par[P_DELTA] = observer.delta
    par[P_KX] = gains.kx
    par[P_KY] = gains.ky
    par[P_KTH] = gains.ktheta
    par[P_KU] = gains.ku
    par[P_GAMBIG] = gains.gamma_big
    par[P_GAMSMALL] = gains.gamma_small
    par[P_BETA] = gains.beta
    par[P_TAUMAX] = gains.tau_max
    return par


# ---------------------------------------------------------------------------
# pure-numpy implementation (vectorized across agents)


def rates_numpy(y, ref, par, centers, inv_sig2, adj, learn, do_log):
    """Fleet state rates; ref is the (n, 7) reference slab for this instant.

    Returns (dy, logrow) with logrow None unless do_log.
    """
    n = y.shape[0]
    nnod = centers.shape[0]
    x, yy, th, v, om = y[:, 0], y[:, 1], y[:, 2], y[:, 3], y[:, 4]
    thh, omh, pxh, vh = y[:, 5], y[:, 6], y[:, 7], y[:, 8]
    W = y[:, N_BASE:].reshape(n, nnod, 2)
    xr, yr, thr = ref[:, 0], ref[:, 1], ref[:, 2]
    vr, omr, vdr, omdr = ref[:, 3], ref[:, 4], ref[:, 5], ref[:, 6]

    mbv, mbw = par[P_MBV], par[P_MBW]
    ky = par[P_KY]

    cth, sth = np.cos(th), np.sin(th)
    px = x * cth + yy * sth
    py = yy * cth - x * sth

    dxw, dyw = xr - x, yr - yy
    ex = cth * dxw + sth * dyw
    ey = -sth * dxw + cth * dyw
    eth = thr - th
    eth = eth - TWO_PI * np.floor((eth + np.pi) / TWO_PI)
    eth = np.where(eth <= -np.pi, np.pi, eth)
    ceth, seth = np.cos(eth), np.sin(eth)

    vc = vr * ceth + par[P_KX] * ex
    omc = omr + vr * ky * ey + par[P_KTH] * seth
    deth = omr - omh
    dex = vr * ceth + omh * ey - vh
    dey = vr * seth - omh * ex
    dvc = vdr * ceth - vr * seth * deth + par[P_KX] * dex
    domc = omdr + vdr * ky * ey + vr * ky * dey + par[P_KTH] * ceth * deth

    # basis at the observer estimate (the controller never sees true u)
    xhat = np.stack([vh, omh], axis=1)
    diff = xhat[:, None, :] - centers[None, :, :]
    S = np.exp(-np.sum(diff * diff, axis=2) * inv_sig2)
    pred = np.einsum("nk,nkc->nc", S, W)

    tau_raw = np.stack(
        [
            mbv * dvc + pred[:, 0] + par[P_KU] * (vc - vh) + ex,
            mbw * domc + pred[:, 1] + par[P_KU] * (omc - omh) + seth / ky,
        ],
        axis=1,
    )
    tau = np.clip(tau_raw, -par[P_TAUMAX], par[P_TAUMAX])
    sat = np.any(tau != tau_raw, axis=1).astype(np.float64)

    m, ic, dcom = par[P_M], par[P_IC], par[P_DCOM]
    hv = -m * dcom * om * om + m * (par[P_CV1] * v + par[P_CV2] * v * v)
    hw = m * dcom * om * v + ic * (par[P_CW1] * om + par[P_CW2] * om * om)

    k1g = par[P_L1] / par[P_DELTA]
    k2g = par[P_L2] / par[P_DELTA] ** 2
    e_th_o = th - thh
    e_px = px - pxh

    dy = np.empty_like(y)
    dy[:, 0] = v * cth
    dy[:, 1] = v * sth
    dy[:, 2] = om
    dy[:, 3] = (tau[:, 0] - hv) / mbv
    dy[:, 4] = (tau[:, 1] - hw) / mbw
    dy[:, 5] = omh + k1g * e_th_o
    dy[:, 6] = k2g * e_th_o
    dy[:, 7] = vh + py * omh + k1g * e_px
    dy[:, 8] = k2g * e_px

    if learn:
        ut = np.stack([vc - vh, omc - omh], axis=1)
        deg = adj.sum(axis=1)
        cons = deg[:, None, None] * W - np.tensordot(adj, W, axes=(1, 0))
        dW = (
            par[P_GAMBIG] * S[:, :, None] * ut[:, None, :]
            - par[P_GAMSMALL] * W
            - par[P_BETA] * cons
        )
        dy[:, N_BASE:] = dW.reshape(n, 2 * nnod)
    else:
        dy[:, N_BASE:] = 0.0

    logrow = None
    if do_log:
        xtrue = np.stack([v, om], axis=1)
        difft = xtrue[:, None, :] - centers[None, :, :]
        St = np.exp(-np.sum(difft * difft, axis=2) * inv_sig2)
        predt = np.einsum("nk,nkc->nc", St, W)
        utv, utw = vc - v, omc - om
        vdiag = (
            0.5 * ex * ex
            + 0.5 * ey * ey
            + (1.0 - ceth) / ky
            + 0.5 * (mbv * utv * utv + mbw * utw * utw)
        )
        logrow = np.stack(
            [
                x, yy, th, v, om, vh, omh, xr, yr, thr, ex, ey, eth,
                tau[:, 0], tau[:, 1], sat,
                hv - predt[:, 0], hw - predt[:, 1], vdiag,
            ],
            axis=1,
        )
    return dy, logrow


def _simulate_numpy(y, ref_table, dt, n_steps, par, centers, inv_sig2, adj,
                    learn, snap_every, log, snaps):
    n = y.shape[0]
    nnod = centers.shape[0]
    for k in range(n_steps + 1):
        k1, logrow = rates_numpy(y, ref_table[:, 2 * k], par, centers, inv_sig2,
                                 adj, learn, True)
        log[k] = logrow
        if k % snap_every == 0:
            si = k // snap_every
            if si < snaps.shape[0]:
                snaps[si] = y[:, N_BASE:].reshape(n, nnod, 2)
        if k == n_steps:
            break
        half = 0.5 * dt
        k2, _ = rates_numpy(y + half * k1, ref_table[:, 2 * k + 1], par, centers,
                            inv_sig2, adj, learn, False)
        k3, _ = rates_numpy(y + half * k2, ref_table[:, 2 * k + 1], par, centers,
                            inv_sig2, adj, learn, False)
        k4, _ = rates_numpy(y + dt * k3, ref_table[:, 2 * k + 2], par, centers,
                            inv_sig2, adj, learn, False)
        y += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            return STATUS_NONFINITE, k + 1
        if np.max(np.abs(y)) > DIVERGENCE_LIMIT:
            return STATUS_BLOWUP, k + 1
    return STATUS_OK, -1


# ---------------------------------------------------------------------------
# numba implementation (scalar loops per agent)

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via CDLFLEET_BACKEND=numpy
    HAVE_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore[misc]
        def deco(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return deco


@njit(cache=True)
def _rates_nb(y, ref, tidx, par, centers, inv_sig2, adj, learn, dy, logrow, do_log):
    n = y.shape[0]
    nnod = centers.shape[0]
    m = par[P_M]
    ic = par[P_IC]
    dcom = par[P_DCOM]
    mbv = par[P_MBV]
    mbw = par[P_MBW]
    ky = par[P_KY]
    k1g = par[P_L1] / par[P_DELTA]
    k2g = par[P_L2] / (par[P_DELTA] * par[P_DELTA])
    tau_max = par[P_TAUMAX]
    sbuf = np.empty(nnod)
    for i in range(n):
        x = y[i, 0]
        yy = y[i, 1]
        th = y[i, 2]
        v = y[i, 3]
        om = y[i, 4]
        thh = y[i, 5]
        omh = y[i, 6]
        pxh = y[i, 7]
        vh = y[i, 8]
        xr = ref[i, tidx, 0]
        yr = ref[i, tidx, 1]
        thr = ref[i, tidx, 2]
        vr = ref[i, tidx, 3]
        omr = ref[i, tidx, 4]
        vdr = ref[i, tidx, 5]
        omdr = ref[i, tidx, 6]

        cth = math.cos(th)
        sth = math.sin(th)
        px = x * cth + yy * sth
        py = yy * cth - x * sth

        dxw = xr - x
        dyw = yr - yy
        ex = cth * dxw + sth * dyw
        ey = -sth * dxw + cth * dyw
        eth = thr - th
        eth = eth - TWO_PI * math.floor((eth + math.pi) / TWO_PI)
        if eth <= -math.pi:
            eth = math.pi
        ceth = math.cos(eth)
        seth = math.sin(eth)

        vc = vr * ceth + par[P_KX] * ex
        omc = omr + vr * ky * ey + par[P_KTH] * seth
        deth = omr - omh
        dex = vr * ceth + omh * ey - vh
        dey = vr * seth - omh * ex
        dvc = vdr * ceth - vr * seth * deth + par[P_KX] * dex
        domc = omdr + vdr * ky * ey + vr * ky * dey + par[P_KTH] * ceth * deth

        pv = 0.0
        pw = 0.0
        for kk in range(nnod):
            d0 = vh - centers[kk, 0]
            d1 = omh - centers[kk, 1]
            s = math.exp(-(d0 * d0 + d1 * d1) * inv_sig2)
            sbuf[kk] = s
            pv += y[i, N_BASE + 2 * kk] * s
            pw += y[i, N_BASE + 2 * kk + 1] * s

        tv = mbv * dvc + pv + par[P_KU] * (vc - vh) + ex
        tw = mbw * domc + pw + par[P_KU] * (omc - omh) + seth / ky
        sat = 0.0
        if tv > tau_max:
            tv = tau_max
            sat = 1.0
        elif tv < -tau_max:
            tv = -tau_max
            sat = 1.0
        if tw > tau_max:
            tw = tau_max
            sat = 1.0
        elif tw < -tau_max:
            tw = -tau_max
            sat = 1.0

        hv = -m * dcom * om * om + m * (par[P_CV1] * v + par[P_CV2] * v * v)
        hw = m * dcom * om * v + ic * (par[P_CW1] * om + par[P_CW2] * om * om)

        dy[i, 0] = v * cth
        dy[i, 1] = v * sth
        dy[i, 2] = om
        dy[i, 3] = (tv - hv) / mbv
        dy[i, 4] = (tw - hw) / mbw
        dy[i, 5] = omh + k1g * (th - thh)
        dy[i, 6] = k2g * (th - thh)
        dy[i, 7] = vh + py * omh + k1g * (px - pxh)
        dy[i, 8] = k2g * (px - pxh)

        if learn:
            utv = vc - vh
            utw = omc - omh
            for kk in range(nnod):
                wv = y[i, N_BASE + 2 * kk]
                ww = y[i, N_BASE + 2 * kk + 1]
                consv = 0.0
                consw = 0.0
                for j in range(n):
                    a = adj[i, j]
                    consv += a * (wv - y[j, N_BASE + 2 * kk])
                    consw += a * (ww - y[j, N_BASE + 2 * kk + 1])
                dy[i, N_BASE + 2 * kk] = (
                    par[P_GAMBIG] * sbuf[kk] * utv - par[P_GAMSMALL] * wv
                    - par[P_BETA] * consv
                )
                dy[i, N_BASE + 2 * kk + 1] = (
                    par[P_GAMBIG] * sbuf[kk] * utw - par[P_GAMSMALL] * ww
                    - par[P_BETA] * consw
                )
        else:
            for kk in range(2 * nnod):
                dy[i, N_BASE + kk] = 0.0

        if do_log:
            ev = 0.0
            ew = 0.0
            for kk in range(nnod):
                d0 = v - centers[kk, 0]
                d1 = om - centers[kk, 1]
                st = math.exp(-(d0 * d0 + d1 * d1) * inv_sig2)
                ev += y[i, N_BASE + 2 * kk] * st
                ew += y[i, N_BASE + 2 * kk + 1] * st
            utv_t = vc - v
            utw_t = omc - om
            vdiag = (
                0.5 * ex * ex
                + 0.5 * ey * ey
                + (1.0 - ceth) / ky
                + 0.5 * (mbv * utv_t * utv_t + mbw * utw_t * utw_t)
            )
            logrow[i, 0] = x
            logrow[i, 1] = yy
            logrow[i, 2] = th
            logrow[i, 3] = v
            logrow[i, 4] = om
            logrow[i, 5] = vh
            logrow[i, 6] = omh
            logrow[i, 7] = xr
            logrow[i, 8] = yr
            logrow[i, 9] = thr
            logrow[i, 10] = ex
            logrow[i, 11] = ey
            logrow[i, 12] = eth
            logrow[i, 13] = tv
            logrow[i, 14] = tw
            logrow[i, 15] = sat
            logrow[i, 16] = hv - ev
            logrow[i, 17] = hw - ew
            logrow[i, 18] = vdiag


@njit(cache=True)
def _simulate_nb(y, ref_table, dt, n_steps, par, centers, inv_sig2, adj,
                 learn, snap_every, log, snaps):
    n, d = y.shape
    nnod = centers.shape[0]
    dy1 = np.empty((n, d))
    dy2 = np.empty((n, d))
    dy3 = np.empty((n, d))
    dy4 = np.empty((n, d))
    yt = np.empty((n, d))
    dummy = np.empty((n, N_LOG))
    for k in range(n_steps + 1):
        _rates_nb(y, ref_table, 2 * k, par, centers, inv_sig2, adj, learn,
                  dy1, log[k], True)
        if k % snap_every == 0:
            si = k // snap_every
            if si < snaps.shape[0]:
                for i in range(n):
                    for kk in range(nnod):
                        snaps[si, i, kk, 0] = y[i, N_BASE + 2 * kk]
                        snaps[si, i, kk, 1] = y[i, N_BASE + 2 * kk + 1]
        if k == n_steps:
            break
        half = 0.5 * dt
        for i in range(n):
            for c in range(d):
                yt[i, c] = y[i, c] + half * dy1[i, c]
        _rates_nb(yt, ref_table, 2 * k + 1, par, centers, inv_sig2, adj, learn,
                  dy2, dummy, False)
        for i in range(n):
            for c in range(d):
                yt[i, c] = y[i, c] + half * dy2[i, c]
        _rates_nb(yt, ref_table, 2 * k + 1, par, centers, inv_sig2, adj, learn,
                  dy3, dummy, False)
        for i in range(n):
            for c in range(d):
                yt[i, c] = y[i, c] + dt * dy3[i, c]
        _rates_nb(yt, ref_table, 2 * k + 2, par, centers, inv_sig2, adj, learn,
                  dy4, dummy, False)
        sixth = dt / 6.0
        for i in range(n):
            for c in range(d):
                y[i, c] = y[i, c] + sixth * (
                    dy1[i, c] + 2.0 * dy2[i, c] + 2.0 * dy3[i, c] + dy4[i, c]
                )
        for i in range(n):
            for c in range(d):
                val = y[i, c]
                if not np.isfinite(val):
                    return STATUS_NONFINITE, k + 1
                if abs(val) > DIVERGENCE_LIMIT:
                    return STATUS_BLOWUP, k + 1
    return STATUS_OK, -1


def rates_numba(y, ref_slab, par, centers, inv_sig2, adj, learn, do_log):
    """Single rate evaluation through the numba kernel (test/bench helper)."""
    n = y.shape[0]
    dy = np.empty_like(y)
    logrow = np.empty((n, N_LOG))
    ref3 = np.ascontiguousarray(ref_slab)[:, None, :]
    _rates_nb(y, ref3, 0, par, centers, inv_sig2, adj, learn, dy, logrow, do_log)
    return dy, (logrow if do_log else None)


# ---------------------------------------------------------------------------
# dispatcher


def simulate(y0, ref_table, dt, n_steps, ki: KernelInputs, learn: bool,
             snap_every: int, backend: str | None = None):
    """Integrate the fleet for n_steps of size dt from y0.

    Returns (status, bad_step, y_final, log, snaps): log is
    (n_steps+1, n, N_LOG) sampled at every step boundary, snaps the weight
    history every snap_every steps starting at t=0.
    """
    backend = active_backend() if backend is None else backend
    y = np.array(y0, dtype=np.float64)
    n = y.shape[0]
    nnod = ki.n_nodes
    if ref_table.shape != (n, 2 * n_steps + 1, 7):
        raise ValueError(f"reference table shape {ref_table.shape} does not match "
                         f"{n} agents / {n_steps} steps")
    snap_every = max(int(snap_every), 1)
    n_snap = n_steps // snap_every + 1
    log = np.empty((n_steps + 1, n, N_LOG))
    snaps = np.empty((n_snap, n, nnod, 2))
    args = (y, np.ascontiguousarray(ref_table), float(dt), int(n_steps), ki.par,
            ki.centers, float(ki.inv_sig2), ki.adjacency, bool(learn),
            snap_every, log, snaps)
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is not importable")
        status, bad = _simulate_nb(*args)
    elif backend == "numpy":
        status, bad = _simulate_numpy(*args)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return int(status), int(bad), y, log, snaps
