"""Replica exchange over p-bit Gibbs sweeps: 1D (temperature) and 2D
(temperature x copy penalty) variants.

Replicas form an R x C grid, rows indexed by inverse temperature (non-
decreasing, last row coldest) and columns by copy penalty.  A round is
``sweeps_per_swap`` Gibbs sweeps on every replica, an energy refresh, and one
exchange phase.  1D alternates pair parity each round; 2D alternates the swap
axis each round and the parity every other round.  Exchanges move states (and
their cached energies) between cells; temperatures, penalties and random
streams stay with the cells.

Stream discipline: each cell consumes its own child stream, the swap
controller draws exactly one uniform per candidate pair in row-major pair
order whether or not the swap is accepted, and readout ties use a separate
stream.  Runs with equal seeds are therefore bit-identical end to end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hwmodel import (HwCounters, HwProfile, approx_exp, hw_batch_sweep,
                      hw_beta_energies, instance_time, premultiply_model,
                      swap_delta_hw)
from .models import (SparsifiedModel, constraint_report, problem_energy_parts,
                     project_majority_batch, random_spins)
from .rng import RandomStream
from .sampler import batch_sweep

# cap on prefetched sweep uniforms per grid (see ReplicaGrid._draw_sweeps)
_DRAW_BUFFER_BYTES = 32 * 1024 * 1024


@dataclass(frozen=True)
class PtConfig:
    """Round structure and termination for a tempering run."""

    sweeps_per_swap: int = 10
    n_swaps: int = 100
    seed: object = 0
    best_row_only: bool = True
    target_energy: float | None = None
    record_trace: bool = True
    hw: HwProfile | None = None

    def __post_init__(self):
        if self.sweeps_per_swap < 1:
            raise ValueError("sweeps_per_swap must be >= 1")
        if self.n_swaps < 1:
            raise ValueError("n_swaps must be >= 1")


def beta_swap_delta(beta_a: float, beta_b: float, e_a: float, e_b: float) -> float:
    """Log-acceptance for exchanging states between temperatures:
    (beta_b - beta_a) * (E_b - E_a)."""
    return (beta_b - beta_a) * (e_b - e_a)


def p_swap_delta(beta: float, p_a: float, p_b: float,
                 ecopy_a: float, ecopy_b: float) -> float:
    """Log-acceptance for exchanging states between copy penalties at one
    temperature: beta * (P_b - P_a) * (Ecopy_b - Ecopy_a).

    The problem-energy parts cancel because both cells share beta, so only
    the copy-chain terms enter.
    """
    return beta * (p_b - p_a) * (ecopy_b - ecopy_a)


def _logical_arrays(sm: SparsifiedModel):
    """Dense-problem view recovered from the sparsified layout.

    Each logical edge appears exactly once in problem_edges and the logical
    bias is the sum of its copies' physical biases, so projected states can
    be scored against the original dense energy without the dense matrix.
    """
    le0 = sm.problem_edges[:, 0] // sm.copies
    le1 = sm.problem_edges[:, 1] // sm.copies
    h_log = sm.h_phys.reshape(sm.n_logical, sm.copies).sum(axis=1)
    return le0, le1, sm.problem_weights, h_log


def logical_energy(sm: SparsifiedModel, s_logical) -> float:
    """Dense energy of a logical configuration, computed from the sparse model."""
    le0, le1, w, h_log = _logical_arrays(sm)
    f = np.asarray(s_logical, dtype=np.float64)
    return float(-(h_log @ f) - (f[le0] * f[le1]) @ w)


def _logical_energy_batch(arrays, states_logical: np.ndarray) -> np.ndarray:
    le0, le1, w, h_log = arrays
    f = states_logical.astype(np.float64)
    return -(f @ h_log) - (f[:, le0] * f[:, le1]) @ w


class ReplicaGrid:
    """State, caches and swap statistics for an R x C tempering grid."""

    def __init__(self, sm: SparsifiedModel, betas, penalties, stream: RandomStream,
                 hw: HwProfile | None = None):
        betas = np.asarray(betas, dtype=np.float64)
        penalties = np.asarray(penalties, dtype=np.float64)
        if betas.ndim != 1 or betas.size == 0 or np.any(betas <= 0.0):
            raise ValueError("betas must be a nonempty 1-d array of positives")
        if np.any(np.diff(betas) <= 0.0):
            raise ValueError("betas must be strictly increasing (last row coldest)")
        if penalties.ndim != 1 or penalties.size == 0 or np.any(penalties < 0.0):
            raise ValueError("penalties must be a nonempty 1-d array of nonnegatives")
        if np.any(np.diff(penalties) <= 0.0):
            raise ValueError("penalties must be strictly increasing")
        self.sm = sm
        self.betas = betas
        self.penalties = penalties
        self.hw = hw
        r, c = len(betas), len(penalties)
        n_rep = r * c
        self.beta_of = np.repeat(betas, c)
        self.penalty_of = np.tile(penalties, r)

        rep_kind = "lfsr" if hw is not None else None
        taps = hw.lfsr_taps if hw is not None else None
        # the hardware randomness can be pinned independently of the run seed
        hw_base = stream
        if hw is not None and hw.lfsr_seed is not None:
            hw_base = RandomStream(hw.lfsr_seed, kind="lfsr", lfsr_taps=taps)
        self.states = np.empty((n_rep, sm.n_phys), dtype=np.int8)
        self.rep_streams = []
        self.regs = np.zeros(n_rep, dtype=np.uint64) if hw is not None else None
        for k in range(n_rep):
            sub = hw_base.child("replica", k, kind=rep_kind, lfsr_taps=taps)
            self.states[k] = random_spins(sm.n_phys, sub)
            self.rep_streams.append(sub)
            if hw is not None:
                self.regs[k] = sub.lfsr_register()
        self.swap_stream = hw_base.child("swap", kind=rep_kind, lfsr_taps=taps)
        self.readout_stream = stream.child("readout", kind="standard")

        self.counters = HwCounters()
        if hw is not None:
            self.wq, self.hq, self.pq = premultiply_model(
                sm, self.beta_of, float(penalties[0]), hw.fmt, self.counters)
            self.beta_e = np.zeros(n_rep, dtype=np.float64)
        self.e_prob = np.zeros(n_rep, dtype=np.float64)   # includes bias term
        self.e_copy = np.zeros(n_rep, dtype=np.float64)
        self.refresh_energies()

        self.beta_attempts = np.zeros((r - 1, c), dtype=np.int64)
        self.beta_accepts = np.zeros((r - 1, c), dtype=np.int64)
        self.p_attempts = np.zeros((r, c - 1), dtype=np.int64)
        self.p_accepts = np.zeros((r, c - 1), dtype=np.int64)
        self.overflow_counts = np.zeros(n_rep, dtype=np.int64)
        self._buf = None
        self._buf_pos = 0
        self._rounds_hint = 1

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.betas), len(self.penalties)

    def cell(self, i: int, j: int) -> int:
        return i * len(self.penalties) + j

    def _draw_sweeps(self, n_sweeps: int) -> np.ndarray:
        """Per-replica uniforms for n_sweeps sweeps, served from a block buffer.

        Each replica consumes its own stream strictly in order, so blocked
        prefetching hands out exactly the values per-round draws would; the
        buffer is a speed knob, never a semantics knob.
        """
        n_rep, n_phys = self.states.shape
        out = np.empty((n_rep, n_sweeps, n_phys), dtype=np.float64)
        filled = 0
        while filled < n_sweeps:
            if self._buf is None or self._buf_pos >= self._buf.shape[1]:
                cap = max(1, _DRAW_BUFFER_BYTES // (8 * n_rep * n_phys))
                block = max(n_sweeps - filled,
                            min(self._rounds_hint * n_sweeps, cap))
                buf = np.empty((n_rep, block, n_phys), dtype=np.float64)
                for k in range(n_rep):
                    buf[k] = self.rep_streams[k].uniform(size=(block, n_phys))
                self._buf = buf
                self._buf_pos = 0
            take = min(self._buf.shape[1] - self._buf_pos, n_sweeps - filled)
            out[:, filled:filled + take] = \
                self._buf[:, self._buf_pos:self._buf_pos + take]
            self._buf_pos += take
            filled += take
        return out

    def sweep(self, n_sweeps: int) -> None:
        """Advance every replica by n_sweeps Gibbs sweeps on its own stream."""
        if self.hw is not None:
            hw_batch_sweep(self.sm, self.states, self.wq, self.hq, self.pq,
                           self.regs, self.hw, n_sweeps, self.overflow_counts)
            return
        draws = self._draw_sweeps(n_sweeps)
        batch_sweep(self.sm, self.states, self.beta_of, self.penalty_of, draws)

    def refresh_energies(self) -> None:
        """Recompute energy caches from states (exact, not incremental)."""
        self.e_prob, self.e_copy = problem_energy_parts(self.sm, self.states)
        if self.hw is not None:
            self.beta_e = hw_beta_energies(self.sm, self.states, self.wq,
                                           self.hq, self.pq, self.hw.stride)

    def total_energies(self) -> np.ndarray:
        """Per-cell sparse energies at the cell's own penalty."""
        return self.e_prob + self.penalty_of * self.e_copy

    def exchange(self, a: int, b: int) -> None:
        """Swap states and their cached energies between two cells.

        The float caches are temperature-free so they stay valid; the
        premultiplied hw cache changes scale with the row and must be
        refreshed before its next use.
        """
        self.states[[a, b]] = self.states[[b, a]]
        self.e_prob[[a, b]] = self.e_prob[[b, a]]
        self.e_copy[[a, b]] = self.e_copy[[b, a]]
        if self.hw is not None:
            self.beta_e[[a, b]] = self.beta_e[[b, a]]

    def swap_statistics(self) -> dict:
        """Acceptance rates per adjacent pair.

        "beta"/"penalty" average each pair over the orthogonal axis;
        the *_matrix entries keep the full per-cell-pair resolution.
        Pairs never attempted come back nan, never 0.
        """
        def rate(accepts, attempts, axis):
            with np.errstate(invalid="ignore", divide="ignore"):
                full = np.where(attempts > 0, accepts / np.maximum(attempts, 1), np.nan)
                tot_att = attempts.sum(axis=axis)
                tot_acc = accepts.sum(axis=axis)
                mean = np.where(tot_att > 0, tot_acc / np.maximum(tot_att, 1), np.nan)
            return full, mean

        beta_full, beta_mean = rate(self.beta_accepts, self.beta_attempts, axis=1)
        p_full, p_mean = rate(self.p_accepts, self.p_attempts, axis=0)
        return {"beta": beta_mean, "penalty": p_mean,
                "beta_matrix": beta_full, "penalty_matrix": p_full}


def swap_round(grid: ReplicaGrid, axis: str, parity: int, stream: RandomStream) -> None:
    """One exchange phase over non-overlapping neighbor pairs of the given axis.

    Exactly one uniform is drawn per candidate pair, in row-major pair order,
    regardless of the outcome; acceptance is min(1, exp(delta)).
    """
    r, c = grid.shape
    if parity not in (0, 1):
        raise ValueError("parity must be 0 or 1")
    if axis == "beta":
        for i in range(parity, r - 1, 2):
            beta_a, beta_b = grid.betas[i], grid.betas[i + 1]
            for j in range(c):
                u = float(stream.uniform01())
                a, b = grid.cell(i, j), grid.cell(i + 1, j)
                if grid.hw is not None:
                    delta = swap_delta_hw(beta_a, beta_b, grid.beta_e[a],
                                          grid.beta_e[b], fmt=grid.hw.fmt,
                                          counters=grid.counters)
                    accept = delta >= 0.0 or u < approx_exp(delta)
                else:
                    p = grid.penalties[j]
                    e_a = grid.e_prob[a] + p * grid.e_copy[a]
                    e_b = grid.e_prob[b] + p * grid.e_copy[b]
                    delta = beta_swap_delta(beta_a, beta_b, e_a, e_b)
                    accept = delta >= 0.0 or u < math.exp(delta)
                grid.beta_attempts[i, j] += 1
                if accept:
                    grid.exchange(a, b)
                    grid.beta_accepts[i, j] += 1
    elif axis == "penalty":
        if grid.hw is not None:
            raise ValueError("hardware emulation supports only the beta axis")
        for i in range(r):
            beta = grid.betas[i]
            for j in range(parity, c - 1, 2):
                u = float(stream.uniform01())
                a, b = grid.cell(i, j), grid.cell(i, j + 1)
                delta = p_swap_delta(beta, grid.penalties[j], grid.penalties[j + 1],
                                     grid.e_copy[a], grid.e_copy[b])
                accept = delta >= 0.0 or u < math.exp(delta)
                grid.p_attempts[i, j] += 1
                if accept:
                    grid.exchange(a, b)
                    grid.p_accepts[i, j] += 1
    else:
        raise ValueError(f"unknown swap axis {axis!r}")


def swap_statistics(grid: ReplicaGrid) -> dict:
    return grid.swap_statistics()


@dataclass
class RunResult:
    """Outcome of a tempering run.

    best_state/best_energy refer to majority-projected logical configurations
    scored at the dense energy; best_sparse_energy is the physical energy of
    the cell that produced the best projection, at its own penalty.
    """

    best_state: np.ndarray
    best_energy: float
    best_sparse_energy: float
    best_agreement_pct: float
    best_round: int
    n_swaps: int
    sweeps_per_swap: int
    found_target: bool
    betas: np.ndarray
    penalties: np.ndarray
    swap_acceptance: dict
    best_trace: np.ndarray | None = None
    energy_trace: np.ndarray | None = None
    g_trace: np.ndarray | None = None
    hw_counters: HwCounters | None = None
    modeled_seconds: float | None = None


class _BestTracker:
    def __init__(self, sm: SparsifiedModel):
        self.sm = sm
        self.arrays = _logical_arrays(sm)
        self.best_energy = math.inf
        self.best_state = None
        self.best_sparse = math.inf
        self.best_agreement = 0.0
        self.best_round = -1

    def offer(self, states_phys: np.ndarray, sparse_totals: np.ndarray,
              rng, round_idx: int) -> None:
        """Project candidate cells and fold them into the running best."""
        proj = project_majority_batch(self.sm, states_phys, rng)
        dense = _logical_energy_batch(self.arrays, proj)
        k = int(np.argmin(dense))
        if dense[k] < self.best_energy:
            self.best_energy = float(dense[k])
            self.best_state = proj[k].copy()
            self.best_sparse = float(sparse_totals[k])
            self.best_agreement = constraint_report(self.sm, states_phys[k]).agreement_pct
            self.best_round = round_idx


def _finalize(grid: ReplicaGrid, tracker: _BestTracker, cfg: PtConfig,
              rounds_run: int, found: bool, traces) -> RunResult:
    best_trace, energy_trace, g_trace = traces
    modeled = None
    if cfg.hw is not None and cfg.hw.timing is not None:
        modeled = instance_time(cfg.hw.timing, rounds_run, grid.sm.n_phys)
    return RunResult(
        best_state=tracker.best_state,
        best_energy=tracker.best_energy,
        best_sparse_energy=tracker.best_sparse,
        best_agreement_pct=tracker.best_agreement,
        best_round=tracker.best_round,
        n_swaps=rounds_run,
        sweeps_per_swap=cfg.sweeps_per_swap,
        found_target=found,
        betas=grid.betas.copy(),
        penalties=grid.penalties.copy(),
        swap_acceptance=grid.swap_statistics(),
        best_trace=np.asarray(best_trace) if best_trace is not None else None,
        energy_trace=np.asarray(energy_trace) if energy_trace is not None else None,
        g_trace=np.asarray(g_trace) if g_trace is not None else None,
        hw_counters=grid.counters if cfg.hw is not None else None,
        modeled_seconds=modeled,
    )


def _broken_pairs(grid: ReplicaGrid) -> np.ndarray:
    # e_copy = 2g - k  =>  g = (e_copy + k) / 2
    k = len(grid.sm.copy_edges)
    return ((grid.e_copy + k) / 2.0).astype(np.int64)


def run_1dpt(sm: SparsifiedModel, betas, penalty: float, cfg: PtConfig,
             stream: RandomStream | None = None) -> RunResult:
    """Temperature-only replica exchange at a fixed copy penalty.

    Tracks the minimum sparse energy ever seen across all replicas; each
    improvement is majority-projected and re-scored densely, and the
    reported dense best is monotone.  Stops early once target_energy is
    reached.
    """
    stream = stream if stream is not None else RandomStream(cfg.seed)
    grid = ReplicaGrid(sm, betas, np.array([float(penalty)]), stream, hw=cfg.hw)
    grid._rounds_hint = cfg.n_swaps
    tracker = _BestTracker(sm)
    best_trace = [] if cfg.record_trace else None
    energy_trace = [] if cfg.record_trace else None
    g_trace = [] if cfg.record_trace else None
    best_sparse_seen = math.inf
    found = False
    rounds_run = 0
    for k in range(cfg.n_swaps):
        grid.sweep(cfg.sweeps_per_swap)
        grid.refresh_energies()
        swap_round(grid, "beta", k % 2, grid.swap_stream)
        if grid.hw is not None:
            grid.refresh_energies()   # premultiplied caches change scale on exchange
        totals = grid.total_energies()
        rounds_run = k + 1
        low = int(np.argmin(totals))
        if totals[low] < best_sparse_seen:
            best_sparse_seen = float(totals[low])
            tracker.offer(grid.states[low:low + 1], totals[low:low + 1],
                          grid.readout_stream, k)
        if cfg.record_trace:
            best_trace.append(tracker.best_energy)
            energy_trace.append(totals.copy())
            g_trace.append(_broken_pairs(grid))
        if cfg.target_energy is not None and tracker.best_energy <= cfg.target_energy + 1e-9:
            found = True
            break
    return _finalize(grid, tracker, cfg, rounds_run, found,
                     (best_trace, energy_trace, g_trace))


def run_2dpt(sm: SparsifiedModel, betas, penalties, cfg: PtConfig,
             stream: RandomStream | None = None) -> RunResult:
    """Replica exchange over the full temperature x penalty grid.

    Rounds alternate the swap axis (beta on even rounds, penalty on odd) and
    the pair parity every other round.  Candidate solutions come from the
    coldest row (or every cell when best_row_only is off), projected each
    round.  A single-penalty grid reduces to the 1D driver, trace for trace.
    """
    penalties = np.asarray(penalties, dtype=np.float64)
    if penalties.ndim != 1 or penalties.size == 0:
        raise ValueError("penalties must be a nonempty 1-d array")
    if len(penalties) == 1:
        return run_1dpt(sm, betas, float(penalties[0]), cfg, stream)
    if cfg.hw is not None:
        raise ValueError("hardware emulation supports one-dimensional tempering only")
    stream = stream if stream is not None else RandomStream(cfg.seed)
    grid = ReplicaGrid(sm, betas, penalties, stream)
    grid._rounds_hint = cfg.n_swaps
    tracker = _BestTracker(sm)
    r, c = grid.shape
    if cfg.best_row_only:
        watched = [grid.cell(r - 1, j) for j in range(c)]
    else:
        watched = list(range(r * c))
    best_trace = [] if cfg.record_trace else None
    energy_trace = [] if cfg.record_trace else None
    g_trace = [] if cfg.record_trace else None
    found = False
    rounds_run = 0
    for k in range(cfg.n_swaps):
        grid.sweep(cfg.sweeps_per_swap)
        grid.refresh_energies()
        axis = "beta" if k % 2 == 0 else "penalty"
        swap_round(grid, axis, (k // 2) % 2, grid.swap_stream)
        totals = grid.total_energies()
        rounds_run = k + 1
        tracker.offer(grid.states[watched], totals[watched],
                      grid.readout_stream, k)
        if cfg.record_trace:
            best_trace.append(tracker.best_energy)
            energy_trace.append(totals.copy())
            g_trace.append(_broken_pairs(grid))
        if cfg.target_energy is not None and tracker.best_energy <= cfg.target_energy + 1e-9:
            found = True
            break
    return _finalize(grid, tracker, cfg, rounds_run, found,
                     (best_trace, energy_trace, g_trace))
