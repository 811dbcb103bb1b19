"""Shared reference evaluators for the test suite.

Everything here is written independently of the library internals: plain
loops over matrices and edge lists, no shared helpers, so a test comparing
the two implementations really compares two separate derivations of the
same number.
"""

from __future__ import annotations

import numpy as np

from pbitpt import DenseIsingModel


def dense_energy_loops(j, h, s) -> float:
    """Triple-loop dense Ising energy, the slow reference for energy_eval."""
    n = len(h)
    e = 0.0
    for i in range(n):
        e -= h[i] * s[i]
        for k in range(i + 1, n):
            e -= j[i][k] * s[i] * s[k]
    return e


def sparse_energy_loops(sm, penalty, s) -> float:
    """Edge-list walk over a sparsified model, the slow reference for
    sparse_energy_eval."""
    e = 0.0
    for (u, v), w in zip(sm.problem_edges, sm.problem_weights):
        e -= w * s[u] * s[v]
    for u, v in sm.copy_edges:
        e -= penalty * s[u] * s[v]
    for i in range(sm.n_phys):
        e -= sm.h_phys[i] * s[i]
    return float(e)


def all_spin_states(n: int) -> np.ndarray:
    """All 2^n spin vectors, row b holding spin i = +1 iff bit (n-1-i) of b
    is set; rows are therefore in ascending code order, matching the
    lexicographic tie-break used by the exhaustive solvers."""
    codes = np.arange(1 << n, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1
    return (2 * bits - 1).astype(np.int8)


def random_dense(n: int, stream, with_bias: bool = True) -> DenseIsingModel:
    """Random symmetric zero-diagonal model for oracle comparisons."""
    a = stream.normal(size=(n, n))
    j = 0.5 * (a + a.T)
    np.fill_diagonal(j, 0.0)
    h = stream.normal(size=n) if with_bias else np.zeros(n)
    return DenseIsingModel(j, h)
