"""p-bit Gibbs sampling over sparsified models with graph-colored sweeps.

The update rule per node is m_i = sgn(tanh(beta * I_i) - r_i) with r_i
uniform on [-1, 1), so P(m_i = +1) = (1 + tanh(beta * I_i)) / 2.  A sweep
visits colors in ascending order and nodes in ascending index within a
color; same-color nodes are non-adjacent, which makes the sequential pass
equal to the hardware's simultaneous per-color update.

Uniform draws are consumed one per node per sweep, in update order.  All
batch entry points share one compiled kernel, so a replica evolved inside a
grid is bit-identical to the same replica evolved alone on its own stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .models import SparsifiedModel, as_spin_vector


@dataclass(frozen=True)
class SamplerConfig:
    """Fixed sampling parameters for a single replica."""

    beta: float
    penalty: float = 0.0
    sweeps_per_call: int = 1

    def __post_init__(self):
        if not (self.beta > 0.0 and math.isfinite(self.beta)):
            raise ValueError("beta must be positive and finite")
        if self.penalty < 0.0:
            raise ValueError("penalty must be nonnegative")
        if self.sweeps_per_call < 1:
            raise ValueError("sweeps_per_call must be >= 1")


def local_field(sm: SparsifiedModel, penalty: float, s, i: int) -> float:
    """I_i = sum_j w_ij s_j + penalty * sum_{copy partners} s_j + h_i."""
    sv = as_spin_vector(s, sm.n_phys)
    if not 0 <= i < sm.n_phys:
        raise IndexError(f"node index {i} out of range")
    lo, hi = sm.adj_indptr[i], sm.adj_indptr[i + 1]
    acc = float(sm.h_phys[i])
    acc += float(sm.adj_weights[lo:hi] @ sv[sm.adj_indices[lo:hi]].astype(np.float64))
    clo, chi = sm.copy_indptr[i], sm.copy_indptr[i + 1]
    acc += penalty * float(sv[sm.copy_indices[clo:chi]].sum())
    return acc


def pbit_update(field: float, beta: float, r: float) -> int:
    """One stochastic bit decision: +1 iff tanh(beta * field) > r."""
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    return 1 if math.tanh(beta * field) > r else -1


@numba.njit(cache=True, parallel=True)
def _sweep_kernel(states, order, indptr, indices, weights,
                  cindptr, cindices, h, betas, penalties, draws):
    """Gibbs sweeps for a batch of replicas; draws[r, t, pos] feeds node order[pos].

    Rows are independent, so the replica loop parallelizes without changing
    any result bit.
    """
    n_rep, n_phys = states.shape
    n_sweeps = draws.shape[1]
    for r in numba.prange(n_rep):
        beta = betas[r]
        pen = penalties[r]
        for t in range(n_sweeps):
            for pos in range(n_phys):
                i = order[pos]
                acc = h[i]
                for e in range(indptr[i], indptr[i + 1]):
                    acc += weights[e] * states[r, indices[e]]
                for e in range(cindptr[i], cindptr[i + 1]):
                    acc += pen * states[r, cindices[e]]
                states[r, i] = 1 if math.tanh(beta * acc) > draws[r, t, pos] else -1


def batch_sweep(sm: SparsifiedModel, states: np.ndarray, betas, penalties, draws) -> None:
    """Run len(draws[0]) sweeps on every replica row of `states`, in place."""
    _sweep_kernel(states, sm.update_order, sm.adj_indptr, sm.adj_indices,
                  sm.adj_weights, sm.copy_indptr, sm.copy_indices, sm.h_phys,
                  np.asarray(betas, dtype=np.float64),
                  np.asarray(penalties, dtype=np.float64),
                  draws)


def chromatic_sweep(sm: SparsifiedModel, penalty: float, beta: float, s, stream,
                    sweeps: int = 1) -> np.ndarray:
    """Update every node once per sweep, colors ascending; mutates and returns s.

    One uniform is drawn per node per sweep from `stream`, in update order.
    """
    sv = as_spin_vector(s, sm.n_phys)
    draws = np.ascontiguousarray(stream.uniform(size=(1, sweeps, sm.n_phys)))
    batch_sweep(sm, sv.reshape(1, -1), [beta], [penalty], draws)
    if sv is not s and isinstance(s, np.ndarray):
        s[:] = sv
    return sv


@numba.njit(cache=True, parallel=True)
def _probe_kernel(states, order, indptr, indices, weights, cindptr, cindices, h,
                  beta, penalty, draws, edges_u, edges_v, edges_w,
                  cedges_u, cedges_v, e_out, g_out, best_e, best_s):
    """Sweep a batch of probe chains, recording total energy and broken-pair counts.

    Also tracks, per chain, the lowest total energy visited (the seed state
    included) and the state that attained it.  Energy and broken count are
    maintained incrementally per accepted flip; the float error this
    accumulates over a window is orders of magnitude below any fluctuation
    scale the probes exist to measure.
    """
    n_rep, n_phys = states.shape
    n_sweeps = draws.shape[1]
    n_copy = cedges_u.shape[0]
    for r in numba.prange(n_rep):
        e_prob = 0.0
        for e in range(edges_u.shape[0]):
            e_prob -= edges_w[e] * states[r, edges_u[e]] * states[r, edges_v[e]]
        for pos in range(n_phys):
            e_prob -= h[pos] * states[r, pos]
        g = 0
        for e in range(n_copy):
            if states[r, cedges_u[e]] != states[r, cedges_v[e]]:
                g += 1
        best_e[r] = e_prob + penalty * (2.0 * g - n_copy)
        best_s[r] = states[r]
        for t in range(n_sweeps):
            for pos in range(n_phys):
                i = order[pos]
                acc = h[i]
                for e in range(indptr[i], indptr[i + 1]):
                    acc += weights[e] * states[r, indices[e]]
                cop = 0
                for e in range(cindptr[i], cindptr[i + 1]):
                    cop += states[r, cindices[e]]
                old = states[r, i]
                new = 1 if math.tanh(beta * (acc + penalty * cop)) > draws[r, t, pos] else -1
                if new != old:
                    states[r, i] = new
                    e_prob -= 2.0 * new * acc
                    for e in range(cindptr[i], cindptr[i + 1]):
                        g += 1 if new != states[r, cindices[e]] else -1
            e_tot = e_prob + penalty * (2.0 * g - n_copy)
            e_out[r, t] = e_tot
            g_out[r, t] = g
            if e_tot < best_e[r]:
                best_e[r] = e_tot
                best_s[r] = states[r]


def probe_chains(sm: SparsifiedModel, beta: float, penalty: float, chains: int,
                 sweeps: int, stream,
                 states: np.ndarray | None = None, return_best: bool = False):
    """Evolve independent chains, returning per-sweep (E, g) traces.

    E is the total sparse energy at the given penalty.  Each chain draws its
    sweep uniforms from its own child stream.  Fresh random initial states
    are drawn unless ``states`` is given, in which case the chains continue
    from it and it is updated in place (annealed populations carry over
    between probe points this way).  With ``return_best`` the lowest-energy
    state visited by any chain (seed states included) is returned as well.
    """
    n_phys = sm.n_phys
    if states is None:
        states = np.empty((chains, n_phys), dtype=np.int8)
        fresh = True
    else:
        if states.shape != (chains, n_phys) or states.dtype != np.int8:
            raise ValueError("carried states must be int8 with shape (chains, n_phys)")
        fresh = False
    draws = np.empty((chains, sweeps, n_phys), dtype=np.float64)
    for c in range(chains):
        sub = stream.child("probe", c)
        if fresh:
            init = np.asarray(sub.uniform(size=n_phys))
            states[c] = np.where(init >= 0.0, 1, -1)
        draws[c] = sub.uniform(size=(sweeps, n_phys))
    e_out = np.empty((chains, sweeps), dtype=np.float64)
    g_out = np.empty((chains, sweeps), dtype=np.int64)
    best_e = np.empty(chains, dtype=np.float64)
    best_s = np.empty((chains, n_phys), dtype=np.int8)
    _probe_kernel(states, sm.update_order, sm.adj_indptr, sm.adj_indices,
                  sm.adj_weights, sm.copy_indptr, sm.copy_indices, sm.h_phys,
                  float(beta), float(penalty), draws,
                  sm.problem_edges[:, 0], sm.problem_edges[:, 1], sm.problem_weights,
                  sm.copy_edges[:, 0], sm.copy_edges[:, 1], e_out, g_out,
                  best_e, best_s)
    if return_best:
        return e_out, g_out, best_s[int(np.argmin(best_e))].copy()
    return e_out, g_out
