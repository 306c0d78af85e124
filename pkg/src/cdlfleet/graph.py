"""Undirected weighted communication topology for the fleet."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FleetGraph:
    """Symmetric nonnegative adjacency with zero diagonal."""

    adjacency: np.ndarray

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]


def preset(name: str, n: int, weight: float = 1.0) -> FleetGraph:
    """Named topologies: 'cycle', 'complete', or 'path' on n agents."""
    a = np.zeros((n, n))
    if name == "cycle":
        for i in range(n):
            j = (i + 1) % n
            if i != j:
                a[i, j] = a[j, i] = weight
    elif name == "complete":
        a[:] = weight
        np.fill_diagonal(a, 0.0)
    elif name == "path":
        for i in range(n - 1):
            a[i, i + 1] = a[i + 1, i] = weight
    else:
        raise ValueError(f"unknown graph preset '{name}' (use cycle, complete, or path)")
    return FleetGraph(adjacency=a)


def laplacian(g: FleetGraph) -> np.ndarray:
    """L = D - A; rows sum to zero, positive semi-definite for valid graphs."""
    a = g.adjacency
    return np.diag(a.sum(axis=1)) - a


def is_connected(g: FleetGraph) -> bool:
    """Breadth-first reachability over nonzero edges."""
    n = g.n
    if n <= 1:
        return True
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(g.adjacency[i] > 0):
            if not seen[j]:
                seen[j] = True
                stack.append(int(j))
    return bool(seen.all())


def validate(g: FleetGraph) -> list[str]:
    """Collect every violated topology invariant (empty list when clean)."""
    errs = []
    a = g.adjacency
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return [f"adjacency must be square, got shape {a.shape}"]
    asym = np.argwhere(a != a.T)
    for i, j in asym[: len(asym) // 2 + 1]:
        if i < j:
            errs.append(f"adjacency not symmetric at ({i}, {j}): {a[i, j]} vs {a[j, i]}")
    neg = np.argwhere(a < 0)
    for i, j in neg:
        errs.append(f"negative weight at ({i}, {j}): {a[i, j]}")
    diag = np.flatnonzero(np.diag(a) != 0)
    for i in diag:
        errs.append(f"nonzero diagonal at ({i}, {i}): {a[i, i]}")
    if not errs and not is_connected(g):
        errs.append("graph is not connected")
    return errs
