"""Linear time-invariant test systems ``x' = A x + b`` and their exact solution."""

from __future__ import annotations

from typing import Sequence

import numba
import numpy as np
from scipy.linalg import expm, solve

from .qss_core import DependencyGraph, QssModel

__all__ = ["linear_model", "linear_solution", "STIFF_A", "STIFF_B", "STIFF_X0"]

#: Stiff 2-state test system with eigenvalues -1 and -1000 (time constants
#: 1 s and 1 ms) and equilibrium (1, 0).
STIFF_A = np.array([[0.0, 1.0], [-1000.0, -1001.0]])
STIFF_B = np.array([0.0, 1000.0])
STIFF_X0 = np.array([0.0, 0.0])


@numba.njit(cache=True)
def _linear_deriv(i, q, t, p):
    n = int(p[0])
    s = p[1 + n * n + i]
    row = 1 + i * n
    for j in range(n):
        s += p[row + j] * q[j]
    return s


def linear_model(A, b=None, names: Sequence[str] | None = None) -> QssModel:
    """Wrap ``x' = A x + b`` as a `QssModel` with the sparsity of `A`."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("A must be square")
    b = np.zeros(n) if b is None else np.asarray(b, dtype=np.float64).reshape(n)
    params = np.concatenate(([float(n)], A.ravel(), b))
    reads = [tuple(int(j) for j in np.flatnonzero(A[i])) for i in range(n)]
    if names is None:
        names = tuple(f"x{i}" for i in range(n))
    return QssModel(tuple(names), _linear_deriv, params, DependencyGraph.from_reads(reads))


def linear_solution(A, b, x0, t) -> np.ndarray:
    """Exact solution sampled at times `t`, shape ``(len(t), n)``.

    Uses the matrix exponential about the equilibrium ``-A^{-1} b``
    (`A` must be non-singular when `b` is non-zero).
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    b = np.asarray(b, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    xeq = -solve(A, b) if np.any(b) else np.zeros_like(x0)
    out = np.empty((t.size, x0.size))
    for k, tk in enumerate(t):
        out[k] = xeq + expm(A * tk) @ (x0 - xeq)
    return out
