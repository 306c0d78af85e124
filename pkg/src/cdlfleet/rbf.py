"""Gaussian radial-basis-function network on a regular 2-D lattice.

Basis entries are s_i(X) = exp(-||X - mu_i||^2 / sigma^2) with centers mu_i
on a tensor grid over the input box.  Weights are an N x 2 matrix (column 0
drives the linear-speed channel, column 1 the angular-rate channel); the
prediction is W^T S(X).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RbfLattice:
    """Regular grid of Gaussian centers with a shared width."""

    centers: np.ndarray  # (N, 2)
    width: float

    @property
    def size(self) -> int:
        return self.centers.shape[0]


def build_lattice(box_min, box_max, nodes_per_dim, width: float) -> RbfLattice:
    """Tensor grid of centers over [box_min, box_max], endpoints included."""
    box_min = np.asarray(box_min, dtype=float)
    box_max = np.asarray(box_max, dtype=float)
    nodes = tuple(int(n) for n in nodes_per_dim)
    if width <= 0:
        raise ValueError(f"RBF width must be positive, got {width}")
    if np.any(box_max <= box_min):
        raise ValueError(f"degenerate RBF box: min={box_min}, max={box_max}")
    if any(n < 2 for n in nodes):
        raise ValueError(f"need at least 2 nodes per dimension, got {nodes}")
    g0 = np.linspace(box_min[0], box_max[0], nodes[0])
    g1 = np.linspace(box_min[1], box_max[1], nodes[1])
    vv, ww = np.meshgrid(g0, g1, indexing="ij")
    centers = np.column_stack([vv.ravel(), ww.ravel()])
    return RbfLattice(centers=centers, width=float(width))


def eval_basis(lat: RbfLattice, X) -> np.ndarray:
    """Gaussian activation vector S(X), entries in (0, 1]."""
    d2 = np.sum((lat.centers - np.asarray(X, dtype=float)) ** 2, axis=1)
    return np.exp(-d2 / lat.width**2)


def predict(W: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Network output W^T S for an N x 2 weight matrix."""
    assert W.shape[0] == S.shape[0], f"weight rows {W.shape[0]} != basis size {S.shape[0]}"
    return W.T @ S


def pe_level(lat: RbfLattice, trajectory: np.ndarray, dt: float, threshold: float = 0.1):
    """Empirical persistency-of-excitation level of a trajectory.

    Selects the active node set zeta = {i : max_t s_i(X(t)) > threshold} and
    returns lambda_min of the time-averaged Gram matrix
    (1/T) * integral S_zeta S_zeta^T dt, discretized at step dt.  A strictly
    positive value certifies PE of the active regressor subvector.

    Returns (level, active_index_array).  An empty active set yields (0.0, []).
    """
    trajectory = np.atleast_2d(np.asarray(trajectory, dtype=float))
    if trajectory.shape[0] == 0:
        raise ValueError("pe_level needs a nonempty trajectory")
    # (T, N) activations
    diff = trajectory[:, None, :] - lat.centers[None, :, :]
    S = np.exp(-np.sum(diff**2, axis=2) / lat.width**2)
    active = np.flatnonzero(S.max(axis=0) > threshold)
    if active.size == 0:
        import warnings

        warnings.warn("pe_level: no RBF node exceeds the activation threshold")
        return 0.0, active
    Sz = S[:, active]
    # uniform sampling: (1/T) * sum S S^T dt collapses to the sample mean
    gram = (Sz.T @ Sz) / S.shape[0]
    return float(np.linalg.eigvalsh(gram)[0]), active


WEIGHT_CSV_HEADER = "node_index,center_v,center_w,w_v,w_omega"


def save_weights_csv(path, lat: RbfLattice, W: np.ndarray) -> None:
    """Write one weight snapshot in the canonical CSV schema."""
    if W.shape != (lat.size, 2):
        raise ValueError(f"weight matrix shape {W.shape} does not match lattice size {lat.size}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(WEIGHT_CSV_HEADER + "\n")
        for i in range(lat.size):
            fh.write(
                f"{i},{lat.centers[i, 0]:.9g},{lat.centers[i, 1]:.9g},"
                f"{W[i, 0]:.9g},{W[i, 1]:.9g}\n"
            )


def load_weights_csv(path, lat: RbfLattice | None = None) -> np.ndarray:
    """Read a weight snapshot; validates header, shape and (optionally) centers."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        expected = WEIGHT_CSV_HEADER.split(",")
        got = header.split(",")
        for col in expected:
            if col not in got:
                raise ValueError(f"weights file {path}: missing column '{col}'")
        if got != expected:
            raise ValueError(f"weights file {path}: bad column order {got}, expected {expected}")
        rows = np.loadtxt(fh, delimiter=",", ndmin=2)
    if rows.shape[1] != 5:
        raise ValueError(f"weights file {path}: expected 5 columns, got {rows.shape[1]}")
    if lat is not None:
        if rows.shape[0] != lat.size:
            raise ValueError(
                f"weights file {path}: {rows.shape[0]} rows but lattice has {lat.size} nodes"
            )
        if not np.allclose(rows[:, 1:3], lat.centers, atol=1e-6):
            raise ValueError(f"weights file {path}: centers do not match the configured lattice")
    return rows[:, 3:5].copy()
