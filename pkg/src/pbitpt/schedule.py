"""Adaptive construction of temperature ladders and copy-penalty sequences.

The grid is built cell by cell from short probe runs.  A probe at cell
(i, j) evolves independent chains at fixed (beta, penalty) and measures the
standard deviations of the total energy (sigma_E) and of the broken-pair
count (sigma_g), pooled over all post-burn samples of all chains.  Steps
follow

    beta(i+1, j) = beta(i, j) + alpha_beta / sigma_E(i, j)
    P(i, j+1)    = P(i, j)    + alpha_p / (beta(i, j) * sigma_g(i, j))

so neighboring cells overlap in energy (respectively constraint) histograms
and exchanges stay productive.  Within a column the probe population is
annealed: after each cell the chains are reseeded at the lowest-energy
state any chain visited there, so colder probes measure the spread around
the deepest basin found so far rather than the scatter of whichever basins
individual chains froze into.  Column 0 fixes the row count: rows grow
until sigma_E falls below the stop threshold (by default one tenth of the
mean |problem weight|).  Columns stop once the coldest cell of the newest
column never breaks a copy pair.  The returned ladder is the row-wise
median over columns, the penalty sequence the column-wise median over rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import SparsifiedModel
from .rng import RandomStream
from .sampler import probe_chains

HARD_CAP = 64

# A probe whose broken-pair count never moves carries no constraint
# information, and one that moves in only a handful of samples barely more:
# below this sigma_g (roughly a 1%-of-samples event rate) the P step formula
# would amplify estimator noise into arbitrarily large jumps, so such rows
# inherit the step of the nearest hotter row that still fluctuates.
SIGMA_G_RESOLUTION = 0.1


class ScheduleError(RuntimeError):
    """Adaptive grid failed to converge within the hard row/column cap."""


@dataclass(frozen=True)
class ScheduleParams:
    """Step sizes, probe effort and termination for adaptive_schedule.

    sigma_e_stop None means one tenth of the mean |problem weight| of the
    model being scheduled.  max_rows/max_cols below the hard cap truncate
    the grid deliberately; hitting the hard cap itself is an error.
    """

    alpha_beta: float
    alpha_p: float
    beta0: float = 0.5
    p0: float = 0.5
    probe_chains: int = 20
    probe_sweeps: int = 1000
    burn_frac: float = 0.25
    sigma_e_stop: float | None = None
    instances_to_average: int = 1
    max_rows: int = HARD_CAP
    max_cols: int = HARD_CAP

    def __post_init__(self):
        if self.alpha_beta <= 0.0 or self.alpha_p < 0.0:
            raise ValueError("alpha_beta must be positive, alpha_p nonnegative")
        if self.beta0 <= 0.0 or self.p0 < 0.0:
            raise ValueError("beta0 must be positive, p0 nonnegative")
        if self.probe_chains < 2 or self.probe_sweeps < 10:
            raise ValueError("probes need at least 2 chains and 10 sweeps")
        if not 0.0 <= self.burn_frac < 1.0:
            raise ValueError("burn_frac must lie in [0, 1)")
        if self.sigma_e_stop is not None and self.sigma_e_stop <= 0.0:
            raise ValueError("sigma_e_stop must be positive")
        if self.instances_to_average < 1:
            raise ValueError("instances_to_average must be >= 1")
        if not 1 <= self.max_rows <= HARD_CAP or not 1 <= self.max_cols <= HARD_CAP:
            raise ValueError(f"grid limits must lie in [1, {HARD_CAP}]")


def _new_population(sm, params, stream):
    u = np.asarray(stream.uniform(size=(params.probe_chains, sm.n_phys)))
    return np.where(u >= 0.0, 1, -1).astype(np.int8)


def _probe_sigmas(sm, beta, penalty, params, stream, states):
    """(sigma_E, sigma_g) from one probe point.

    The chains in ``states`` continue in place and are reseeded afterwards
    at the lowest-energy state any of them visited, so successive probe
    points anneal one population toward the deepest basin found so far.
    Without this culling step, chains frozen in separate basins keep the
    pooled spread pinned at the basin-energy gap and the ladder can never
    terminate.  Both sigmas pool all post-burn samples across chains: the
    between-chain spread keeps the estimate honest while chains still
    disagree, and the row stop then fires only once the population has
    collapsed onto one energy.
    """
    e, g, best = probe_chains(sm, beta, penalty, params.probe_chains,
                              params.probe_sweeps, stream, states=states,
                              return_best=True)
    states[:] = best
    burn = int(params.burn_frac * params.probe_sweeps)
    sigma_e = float(np.std(e[:, burn:]))
    sigma_g = float(np.std(g[:, burn:]))
    return sigma_e, sigma_g


def _fresh_agreement(sm, beta, penalty, params, stream):
    """True when fresh chains quenched at (beta, penalty) keep every pair agreeing.

    The annealed population underestimates the penalty needed by a working
    grid: its chains sit in the deepest basin found, which satisfies the
    constraints long before arbitrary states do.  Cold replicas in 2D-PT
    keep receiving uncommitted states via swaps, so column growth stops
    only once a from-scratch quench at the coldest cell is constraint-clean
    in every post-burn sample.
    """
    states = _new_population(sm, params, stream.child("agree_init"))
    _, g = probe_chains(sm, beta, penalty, params.probe_chains,
                        params.probe_sweeps, stream.child("agree"),
                        states=states)
    burn = int(params.burn_frac * params.probe_sweeps)
    return bool(np.all(g[:, burn:] == 0))


def _schedule_one(sm: SparsifiedModel, params: ScheduleParams,
                  stream: RandomStream, return_grids: bool):
    if len(sm.problem_weights) == 0:
        raise ValueError("model has no problem edges to schedule against")
    thr = params.sigma_e_stop
    if thr is None:
        thr = 0.1 * float(np.mean(np.abs(sm.problem_weights)))
    if thr <= 0.0:
        raise ValueError("stop threshold is zero; weights cannot all vanish")

    # column 0: fixed penalty p0; one population anneals down the rows,
    # which grow until it collapses (sigma_E < thr).  The population as it
    # leaves each cell is kept: cells of later columns continue from their
    # left neighbor, so a cell at medium beta keeps medium-beta fluctuation
    # statistics at every penalty instead of re-quenching from scratch.
    col_betas, col_sigg = [], []
    row_states = []
    beta = params.beta0
    rows_converged = False
    states = _new_population(sm, params, stream.child("init"))
    while True:
        i = len(col_betas)
        se, sg = _probe_sigmas(sm, beta, params.p0, params,
                               stream.child("cell", i, 0), states)
        col_betas.append(beta)
        col_sigg.append(sg)
        row_states.append(states.copy())
        if se < thr:
            rows_converged = True
            break
        if len(col_betas) >= params.max_rows:
            break
        beta += params.alpha_beta / se
    n_rows = len(col_betas)
    if not rows_converged and params.max_rows >= HARD_CAP:
        raise ScheduleError(f"beta ladder did not converge within {HARD_CAP} rows")

    beta_grid = [col_betas]          # beta_grid[j][i]
    p_grid = [[params.p0] * n_rows]  # p_grid[j][i]
    sigg_grid = [col_sigg]
    agree_cold = _fresh_agreement(sm, col_betas[-1], params.p0, params,
                                  stream.child("agreecheck", 0))

    while not agree_cold and len(p_grid) < params.max_cols:
        j = len(p_grid)
        prev_b, prev_p, prev_g = beta_grid[j - 1], p_grid[j - 1], sigg_grid[j - 1]
        p_col = []
        step = params.alpha_p / (prev_b[-1] * SIGMA_G_RESOLUTION)
        for i in range(n_rows):
            if prev_g[i] >= SIGMA_G_RESOLUTION:
                step = params.alpha_p / (prev_b[i] * prev_g[i])
            p_col.append(prev_p[i] + step)
        col_betas, col_sigg = [], []
        beta = params.beta0
        for i in range(n_rows):
            se, sg = _probe_sigmas(sm, beta, p_col[i], params,
                                   stream.child("cell", i, j), row_states[i])
            col_betas.append(beta)
            col_sigg.append(sg)
            if i < n_rows - 1:
                # sigma_E can collapse below the stop point mid-column here;
                # clamping keeps the step finite without changing where
                # column 0 stopped
                beta += params.alpha_beta / max(se, thr)
        beta_grid.append(col_betas)
        p_grid.append(p_col)
        sigg_grid.append(col_sigg)
        agree_cold = _fresh_agreement(sm, col_betas[-1], p_col[-1], params,
                                      stream.child("agreecheck", j))
    if not agree_cold and params.max_cols >= HARD_CAP:
        raise ScheduleError(f"penalty axis did not converge within {HARD_CAP} columns")

    bmat = np.asarray(beta_grid, dtype=np.float64).T   # (rows, cols)
    pmat = np.asarray(p_grid, dtype=np.float64).T
    betas = np.median(bmat, axis=1)
    penalties = np.median(pmat, axis=0)
    if return_grids:
        return betas, penalties, {"beta_grid": bmat, "p_grid": pmat,
                                  "sigma_g_grid": np.asarray(sigg_grid).T,
                                  "sigma_e_stop": thr}
    return betas, penalties


def adaptive_schedule(sm, params: ScheduleParams, stream: RandomStream,
                      return_grids: bool = False):
    """Build (betas, penalties) for a tempering grid from probe statistics.

    ``sm`` may be a single sparsified model or a sequence of them; with a
    sequence the per-instance schedules are averaged elementwise after
    truncating each to the smallest row and column counts seen.
    """
    if isinstance(sm, SparsifiedModel):
        return _schedule_one(sm, params, stream, return_grids)
    schedules = [_schedule_one(m, params, stream.child("instance", idx), False)
                 for idx, m in enumerate(sm)]
    merged = average_schedules(schedules)
    if return_grids:
        return merged[0], merged[1], {"n_instances": len(schedules)}
    return merged


def average_schedules(schedules):
    """Elementwise mean of (betas, penalties) pairs over their common head.

    Instances produce slightly different grid sizes; every instance
    contributes, truncated to the smallest row and column counts seen, so
    the result is defined exactly where all instances have values.
    """
    if not schedules:
        raise ValueError("no schedules to average")
    n_rows = min(len(b) for b, _ in schedules)
    n_cols = min(len(p) for _, p in schedules)
    betas = np.mean([b[:n_rows] for b, _ in schedules], axis=0)
    penalties = np.mean([p[:n_cols] for _, p in schedules], axis=0)
    return betas, penalties


def geometric_ladder(beta_min: float, beta_max: float, n: int) -> np.ndarray:
    """Geometric inverse-temperature ladder with n rungs (ratio must exceed 1)."""
    if n < 2:
        raise ValueError("a ladder needs at least 2 rungs")
    if not 0.0 < beta_min < beta_max:
        raise ValueError("require 0 < beta_min < beta_max")
    return np.geomspace(beta_min, beta_max, n)
