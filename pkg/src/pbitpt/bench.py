"""Experiment harness: SK instances, exhaustive ground states, residual-energy
and BER sweeps, bootstrap intervals, and schema-checked experiment configs.

Determinism contract: every random draw is keyed to (seed, instance id,
trial id), never to worker identity, and aggregation is single-threaded, so
a config + seed pair produces identical tables at any worker count.
"""

from __future__ import annotations

import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .hwmodel import HwProfile, TimingParams
from .mimo import ber, gen_instance, ml_bruteforce, mmse_detect
from .models import (DenseIsingModel, OracleGuardError, energy_eval,
                     map_mimo_to_ising, normalize_weights, sparsify)
from .rng import RandomStream
from .schedule import ScheduleParams, adaptive_schedule, geometric_ladder
from .tempering import PtConfig, run_1dpt, run_2dpt

GROUND_GUARD_BITS = 24
SOLVERS = ("pt1d", "pt2d", "mmse", "ml")


class ConfigError(ValueError):
    """Experiment config rejected by schema validation."""


def gen_sk(n: int, stream: RandomStream) -> DenseIsingModel:
    """All-to-all spin glass: J_ij ~ N(0, 1/n) for i<j symmetrized, no biases."""
    if n < 2:
        raise ValueError("spin-glass size must be >= 2")
    iu, ju = np.triu_indices(n, k=1)
    w = stream.normal(size=len(iu)) / math.sqrt(n)
    j = np.zeros((n, n))
    j[iu, ju] = w
    j = j + j.T
    return DenseIsingModel(j, np.zeros(n))


@numba.njit(cache=True)
def _gray_scan(j, h, offset):
    """Exhaustive minimum via Gray-code walk with O(n) incremental updates.

    Returns (best_code, best_e) where bit (n-1-i) of the code is 1 iff
    s_i == +1; exact ties keep the smallest code.  offset=1 skips flips of
    spin 0 (valid when h == 0 by global flip symmetry).
    """
    n = j.shape[0]
    n_eff = n - offset
    s = np.ones(n, dtype=np.int8)
    f = np.zeros(n, dtype=np.float64)
    for a in range(n):
        acc = 0.0
        for b in range(n):
            acc += j[a, b] * s[b]
        f[a] = acc
    e = 0.0
    for a in range(n):
        e += -h[a] * s[a] - 0.5 * s[a] * f[a]
    code = (1 << n) - 1
    best_e = e
    best_code = code
    total = 1 << n_eff
    for t in range(1, total):
        tt = t
        tz = 0
        while tt & 1 == 0:
            tz += 1
            tt >>= 1
        k = tz + offset
        e += 2.0 * s[k] * (h[k] + f[k])
        old = s[k]
        s[k] = -old
        code ^= 1 << (n - 1 - k)
        delta = -2.0 * old
        for a in range(n):
            f[a] += delta * j[a, k]
        if e < best_e or (e == best_e and code < best_code):
            best_e = e
            best_code = code
    return best_code, best_e


def ground_state_exhaustive(model: DenseIsingModel) -> tuple[np.ndarray, float]:
    """Exact minimum by enumeration; lexicographic tie-break (-1 before +1).

    When h == 0 the search is halved by global flip symmetry and the
    returned representative has s_0 = +1.  The energy is recomputed from
    scratch at the winner, so incremental drift cannot leak out.
    """
    n = model.n
    if n > GROUND_GUARD_BITS:
        raise OracleGuardError(f"exhaustive ground state capped at "
                               f"{GROUND_GUARD_BITS} spins, got {n}")
    offset = 1 if (n > 1 and not np.any(model.h)) else 0
    best_code, _ = _gray_scan(model.j, model.h, offset)
    bits = (best_code >> np.arange(n - 1, -1, -1)) & 1
    s = np.where(bits == 1, 1, -1).astype(np.int8)
    return s, energy_eval(model, s)


def bootstrap_ci(values, stream: RandomStream, n_boot: int = 10_000,
                 stat=np.mean, level: float = 0.95) -> tuple[float, float]:
    """Percentile bootstrap interval for stat over the sample."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return math.nan, math.nan
    stats = np.empty(n_boot, dtype=np.float64)
    done = 0
    block = max(1, min(n_boot, 2_000_000 // max(v.size, 1)))
    while done < n_boot:
        take = min(block, n_boot - done)
        idx = stream.integers(0, v.size, size=(take, v.size))
        stats[done:done + take] = stat(v[idx], axis=1)
        done += take
    tail = 100.0 * (1.0 - level) / 2.0
    return (float(np.percentile(stats, tail)),
            float(np.percentile(stats, 100.0 - tail)))


# --- experiment configuration -------------------------------------------------

_SCHEDULE_FIELDS = {
    "geometric": {"source", "beta_min", "beta_max", "count", "penalties"},
    "explicit": {"source", "betas", "penalties"},
    "adaptive": {"source", "alpha_beta", "alpha_p", "beta0", "p0",
                 "probe_chains", "probe_sweeps", "burn_frac", "sigma_e_stop",
                 "instances_to_average", "max_rows", "max_cols"},
}

_HW_FIELDS = {"int_bits", "frac_bits", "lfsr_taps", "lfsr_seed",
              "tanh_lut_size", "tanh_half_range", "timing"}
_TIMING_FIELDS = {"f_sys", "n_color", "n_sweep", "d", "f_pcie",
                  "t_load_ns", "t_read_ns", "t_verify_ns"}


def _check_keys(given: dict, allowed, where: str) -> None:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown {where} fields: {', '.join(unknown)}")


def validate_schedule(sched: dict) -> dict:
    if not isinstance(sched, dict) or "source" not in sched:
        raise ConfigError("schedule must be a mapping with a 'source' field")
    source = sched["source"]
    if source not in _SCHEDULE_FIELDS:
        raise ConfigError(f"unknown schedule source {source!r}")
    _check_keys(sched, _SCHEDULE_FIELDS[source], f"schedule[{source}]")
    if source == "explicit":
        if "betas" not in sched:
            raise ConfigError("explicit schedule requires betas")
    if source == "geometric":
        for k in ("beta_min", "beta_max", "count"):
            if k not in sched:
                raise ConfigError(f"geometric schedule requires {k}")
    if source == "adaptive":
        for k in ("alpha_beta", "alpha_p"):
            if k not in sched:
                raise ConfigError(f"adaptive schedule requires {k}")
    return dict(sched)


def build_hw_profile(hw: dict | None) -> HwProfile | None:
    if hw is None:
        return None
    _check_keys(hw, _HW_FIELDS, "hw")
    timing = None
    if hw.get("timing") is not None:
        _check_keys(hw["timing"], _TIMING_FIELDS, "hw.timing")
        timing = TimingParams(**hw["timing"])
    kwargs = {k: v for k, v in hw.items() if k != "timing"}
    if "lfsr_taps" in kwargs:
        kwargs["lfsr_taps"] = tuple(kwargs["lfsr_taps"])
    return HwProfile(timing=timing, **kwargs)


@dataclass
class ExperimentConfig:
    """Validated experiment description; build with from_dict."""

    problem: str
    n: int
    n_swaps: list
    copies: int = 2
    seed: int = 0
    solvers: list = field(default_factory=lambda: ["pt2d"])
    sweeps_per_swap: int = 10
    penalty: float = 1.0
    schedule: dict = field(default_factory=lambda: {
        "source": "geometric", "beta_min": 0.5, "beta_max": 10.0, "count": 8})
    split_bias: bool = True
    hw: dict | None = None
    workers: int = 1
    output: str | None = None
    # spin-glass residual sweeps
    instances: int = 1
    trials: int = 1
    proxy_ok: bool = False
    # detection sweeps
    snr_db: list = field(default_factory=list)
    channels: int = 0
    symbols_per_channel: int = 10
    normalize: bool = True
    mmse_lambda: float | None = None

    _ALLOWED = None   # filled after class creation

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        _check_keys(raw, cls._ALLOWED, "config")
        for key in ("problem", "n"):
            if key not in raw:
                raise ConfigError(f"config requires {key!r}")
        cfg = dict(raw)
        if cfg["problem"] not in ("sk", "mimo"):
            raise ConfigError("problem must be 'sk' or 'mimo'")
        budgets = cfg.get("n_swaps", 100)
        if isinstance(budgets, (int, np.integer)):
            budgets = [int(budgets)]
        budgets = [int(b) for b in budgets]
        if not budgets or any(b < 1 for b in budgets) or budgets != sorted(budgets):
            raise ConfigError("n_swaps must be positive and ascending")
        cfg["n_swaps"] = budgets
        solvers = cfg.get("solvers", ["pt2d"])
        if isinstance(solvers, str):
            solvers = [solvers]
        bad = [s for s in solvers if s not in SOLVERS]
        if bad:
            raise ConfigError(f"unknown solvers: {', '.join(bad)}")
        cfg["solvers"] = list(solvers)
        default_sched = {"source": "geometric", "beta_min": 0.5,
                         "beta_max": 10.0, "count": 8}
        cfg["schedule"] = validate_schedule(cfg.get("schedule", default_sched))
        obj = cls(**cfg)
        if obj.n < 2:
            raise ConfigError("n must be >= 2")
        if obj.copies < 1:
            raise ConfigError("copies must be >= 1")
        if obj.sweeps_per_swap < 1:
            raise ConfigError("sweeps_per_swap must be >= 1")
        if obj.workers < 1:
            raise ConfigError("workers must be >= 1")
        if obj.problem == "sk":
            if obj.instances < 1 or obj.trials < 1:
                raise ConfigError("sk sweeps need instances >= 1 and trials >= 1")
            if any(s in ("mmse", "ml") for s in obj.solvers):
                raise ConfigError("detectors mmse/ml apply only to mimo configs")
        else:
            if not obj.snr_db:
                raise ConfigError("mimo sweeps need a nonempty snr_db list")
            if obj.channels < 1 or obj.symbols_per_channel < 1:
                raise ConfigError("mimo sweeps need channels and symbols >= 1")
        build_hw_profile(obj.hw)   # validate eagerly
        return obj

    def to_dict(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            if name.startswith("_"):
                continue
            out[name] = getattr(self, name)
        return out


ExperimentConfig._ALLOWED = frozenset(
    k for k in ExperimentConfig.__dataclass_fields__ if not k.startswith("_"))


def _map_jobs(fn, jobs: list, workers: int) -> list:
    """Run jobs in submission order, optionally on a process pool.

    Spawned (not forked) workers: the compiled kernels use OpenMP threads and
    forking after a parallel region is unsafe.  Results depend only on the
    job payloads, so the worker count cannot change any output.
    """
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs)),
                             mp_context=ctx) as pool:
        return list(pool.map(fn, jobs))


# --- solving helpers ----------------------------------------------------------

def _resolve_schedule(sm_or_list, sched: dict, penalty: float, stream):
    """(betas, penalties) for a run; adaptive schedules consume probe streams."""
    source = sched["source"]
    if source == "explicit":
        betas = np.asarray(sched["betas"], dtype=np.float64)
        penalties = np.asarray(sched.get("penalties", [penalty]), dtype=np.float64)
        return betas, penalties
    if source == "geometric":
        betas = geometric_ladder(sched["beta_min"], sched["beta_max"],
                                 int(sched["count"]))
        penalties = np.asarray(sched.get("penalties", [penalty]), dtype=np.float64)
        return betas, penalties
    params = ScheduleParams(**{k: v for k, v in sched.items() if k != "source"})
    return adaptive_schedule(sm_or_list, params, stream)


def _pt_result(sm, solver, betas, penalties, penalty, ptcfg, stream):
    if solver == "pt1d":
        return run_1dpt(sm, betas, penalty, ptcfg, stream)
    if solver == "pt2d":
        return run_2dpt(sm, betas, penalties, ptcfg, stream)
    raise ConfigError(f"solver {solver!r} is not a tempering solver")


def _padded_best_trace(result, budget: int) -> np.ndarray:
    """Best-energy trace extended to `budget` rounds.

    The tracked best is monotone and early stopping only happens at the
    target, so repeating the final value is exact.
    """
    trace = result.best_trace
    if trace is None:
        raise ValueError("run was executed without trace recording")
    if len(trace) < budget:
        pad = np.full(budget - len(trace), trace[-1] if len(trace) else math.inf)
        trace = np.concatenate([trace, pad])
    return trace[:budget]


def _swaps_to(trace: np.ndarray, target: float, tol: float = 1e-9):
    hits = np.flatnonzero(trace <= target + tol)
    return int(hits[0]) + 1 if len(hits) else None


# --- residual-energy sweep (spin glasses) ------------------------------------

def _sk_instance_rows(cfg: ExperimentConfig, idx: int,
                      shared_schedule) -> list[dict]:
    """All records for one SK instance: trials x budgets for each solver."""
    master = RandomStream(cfg.seed)
    inst_stream = master.child("instance", idx)
    model = gen_sk(cfg.n, inst_stream.child("gen"))
    sm = sparsify(model, cfg.copies, split_bias=cfg.split_bias)

    exact = cfg.n <= GROUND_GUARD_BITS
    e_ground = None
    if exact:
        _, e_ground = ground_state_exhaustive(model)

    if shared_schedule is not None:
        betas, penalties = shared_schedule
    else:
        betas, penalties = _resolve_schedule(sm, cfg.schedule, cfg.penalty,
                                             inst_stream.child("schedule"))
    hw = build_hw_profile(cfg.hw)
    max_budget = cfg.n_swaps[-1]
    rows = []
    for solver in cfg.solvers:
        for trial in range(cfg.trials):
            ptcfg = PtConfig(sweeps_per_swap=cfg.sweeps_per_swap,
                             n_swaps=max_budget,
                             target_energy=e_ground if exact else None,
                             record_trace=True, hw=hw)
            res = _pt_result(sm, solver, betas, penalties, cfg.penalty, ptcfg,
                             inst_stream.child("trial", trial, solver))
            trace = _padded_best_trace(res, max_budget)
            for budget in cfg.n_swaps:
                e_best = float(trace[budget - 1])
                row = {"problem": "sk", "n": cfg.n, "copies": cfg.copies,
                       "solver": solver, "instance": idx, "trial": trial,
                       "n_swaps": budget, "e_best": e_best,
                       "agreement_pct": res.best_agreement_pct,
                       "modeled_seconds": res.modeled_seconds}
                rows.append(row)
    return rows


def residual_sweep(cfg: ExperimentConfig) -> dict:
    """Residual energies rho = (E_best - E_ground) / n over budgets.

    With an exhaustive oracle the ground energy is exact; beyond the guard
    the per-instance best found across every run in this sweep stands in,
    labeled oracle="proxy" (requires proxy_ok).
    """
    if cfg.problem != "sk":
        raise ConfigError("residual_sweep requires a spin-glass config")
    exact = cfg.n <= GROUND_GUARD_BITS
    if not exact and not cfg.proxy_ok:
        raise OracleGuardError(
            f"no exhaustive oracle beyond n={GROUND_GUARD_BITS}; "
            "set proxy_ok to accept best-found ground energies")

    shared_schedule = None
    if (cfg.schedule["source"] == "adaptive"
            and int(cfg.schedule.get("instances_to_average", 1)) > 1):
        count = min(int(cfg.schedule["instances_to_average"]), cfg.instances)
        master = RandomStream(cfg.seed)
        models = [sparsify(gen_sk(cfg.n, master.child("instance", i).child("gen")),
                           cfg.copies, split_bias=cfg.split_bias)
                  for i in range(count)]
        shared_schedule = _resolve_schedule(models, cfg.schedule, cfg.penalty,
                                            master.child("schedule"))

    jobs = [(cfg, idx, shared_schedule) for idx in range(cfg.instances)]
    per_instance = _map_jobs(_sk_rows_star, jobs, cfg.workers)

    master = RandomStream(cfg.seed)
    records = []
    for idx, rows in enumerate(per_instance):
        if exact:
            model = gen_sk(cfg.n, master.child("instance", idx).child("gen"))
            _, e_ground = ground_state_exhaustive(model)
            oracle = "exact"
        else:
            e_ground = min(r["e_best"] for r in rows)
            oracle = "proxy"
        for r in rows:
            r = dict(r)
            r["e_ground"] = float(e_ground)
            r["oracle"] = oracle
            gap = r["e_best"] - e_ground
            if gap < -1e-6 * max(1.0, abs(e_ground)):
                raise RuntimeError(
                    f"instance {idx}: solver energy {r['e_best']} beats the "
                    f"oracle ground energy {e_ground}")
            # summation-order float noise can leave a ~1e-16 negative gap
            r["residual"] = max(0.0, gap) / cfg.n
            records.append(r)

    summary = []
    boot = master.child("bootstrap")
    for solver in cfg.solvers:
        for budget in cfg.n_swaps:
            vals = np.array([r["residual"] for r in records
                             if r["solver"] == solver and r["n_swaps"] == budget])
            lo, hi = bootstrap_ci(vals, boot.child(solver, budget))
            summary.append({"problem": "sk", "n": cfg.n, "solver": solver,
                            "n_swaps": budget, "n_runs": int(vals.size),
                            "mean_residual": float(np.mean(vals)),
                            "median_residual": float(np.median(vals)),
                            "ci_low": lo, "ci_high": hi,
                            "seed": cfg.seed,
                            "schedule_source": cfg.schedule["source"],
                            "hw_profile": "on" if cfg.hw else "off",
                            "oracle": "exact" if exact else "proxy"})
    return {"kind": "sk_residual", "records": records, "summary": summary}


def _sk_rows_star(args):
    return _sk_instance_rows(*args)


# --- BER sweep (detection) ----------------------------------------------------

def _mimo_channel_rows(cfg: ExperimentConfig, snr_db: float, chan: int) -> list[dict]:
    """Records for one channel: symbols_per_channel uses of a fixed H."""
    master = RandomStream(cfg.seed)
    chan_stream = master.child("snr", round(snr_db * 1000), "channel", chan)
    hw = build_hw_profile(cfg.hw)
    budget = cfg.n_swaps[-1]
    rows = []
    channel = None
    for sym in range(cfg.symbols_per_channel):
        inst = gen_instance(cfg.n, cfg.n, snr_db, chan_stream, channel=channel)
        channel = inst.h
        prep = None
        for solver in cfg.solvers:
            if solver == "mmse":
                x_hat = mmse_detect(inst, cfg.mmse_lambda)
            elif solver == "ml":
                x_hat, _ = ml_bruteforce(inst)
            else:
                if prep is None:
                    dense = map_mimo_to_ising(inst.h, inst.y)
                    if cfg.normalize:
                        dense = normalize_weights(dense)
                    sm = sparsify(dense, cfg.copies, split_bias=cfg.split_bias)
                    betas, penalties = _resolve_schedule(
                        sm, cfg.schedule, cfg.penalty,
                        chan_stream.child("schedule", sym))
                    prep = (sm, betas, penalties)
                sm, betas, penalties = prep
                ptcfg = PtConfig(sweeps_per_swap=cfg.sweeps_per_swap,
                                 n_swaps=budget, record_trace=False, hw=hw)
                res = _pt_result(sm, solver, betas, penalties, cfg.penalty,
                                 ptcfg, chan_stream.child("pt", sym, solver))
                x_hat = res.best_state
            rows.append({"problem": "mimo", "n": cfg.n, "snr_db": snr_db,
                         "detector": solver, "channel": chan, "symbol": sym,
                         "errors": int(np.count_nonzero(x_hat != inst.x_true)),
                         "bits": cfg.n})
    return rows


def _mimo_rows_star(args):
    return _mimo_channel_rows(*args)


def ber_sweep(cfg: ExperimentConfig) -> dict:
    """Bit error rates per (SNR, detector) with bootstrap CIs over instances."""
    if cfg.problem != "mimo":
        raise ConfigError("ber_sweep requires a mimo config")
    if "ml" in cfg.solvers and cfg.n > 24:
        raise OracleGuardError("exhaustive detection capped at 24 transmitters")

    jobs = [(cfg, snr, chan) for snr in cfg.snr_db for chan in range(cfg.channels)]
    chunks = _map_jobs(_mimo_rows_star, jobs, cfg.workers)
    records = [r for chunk in chunks for r in chunk]

    summary = []
    boot = RandomStream(cfg.seed).child("bootstrap")
    for snr in cfg.snr_db:
        for solver in cfg.solvers:
            sel = [r for r in records
                   if r["snr_db"] == snr and r["detector"] == solver]
            per_inst = np.array([r["errors"] / r["bits"] for r in sel])
            total_ber = float(np.sum([r["errors"] for r in sel])
                              / np.sum([r["bits"] for r in sel]))
            lo, hi = bootstrap_ci(per_inst, boot.child(solver, round(snr * 1000)))
            summary.append({"problem": "mimo", "n": cfg.n, "snr_db": snr,
                            "detector": solver, "n_instances": len(sel),
                            "ber": total_ber, "ci_low": lo, "ci_high": hi,
                            "seed": cfg.seed,
                            "schedule_source": cfg.schedule["source"],
                            "hw_profile": "on" if cfg.hw else "off",
                            "oracle": "exact" if "ml" in cfg.solvers else "none"})
    return {"kind": "mimo_ber", "records": records, "summary": summary}


def run_experiment(cfg: ExperimentConfig) -> dict:
    if cfg.problem == "sk":
        return residual_sweep(cfg)
    return ber_sweep(cfg)
