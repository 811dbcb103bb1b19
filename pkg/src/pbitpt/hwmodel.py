"""Fixed-point hardware emulation: quantized weights, base-2 exponential
approximation, LFSR-driven sampling kernels, and the deterministic timing model.

Weight arithmetic follows the premultiplied convention: every replica r
stores beta_r * J, beta_r * h and beta_r * P rounded to the weight format, so
the chip never multiplies by beta.  Products with spins are sign flips and
sums of quantized values are exact in float64, which lets the emulation carry
fixed-point semantics in ordinary arrays.

All quantized values are multiples of the format quantum; energies live in a
wider register (extra integer bits for the fan-in, one extra fraction bit for
the half in the local-energy form), mirroring an adder tree that never wraps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numba
import numpy as np

from .models import SparsifiedModel, as_spin_vector
from .sampler import local_field


@dataclass(frozen=True)
class FixedPointFormat:
    """Two's-complement fixed point: 1 sign bit, int_bits, frac_bits."""

    int_bits: int = 6
    frac_bits: int = 3
    sign_bits: int = 1

    def __post_init__(self):
        if self.sign_bits != 1 or self.int_bits < 0 or self.frac_bits < 0:
            raise ValueError("format requires 1 sign bit and nonnegative widths")

    @property
    def total_bits(self) -> int:
        return self.sign_bits + self.int_bits + self.frac_bits

    @property
    def quantum(self) -> float:
        return 2.0 ** (-self.frac_bits)

    @property
    def max_value(self) -> float:
        return 2.0 ** self.int_bits - self.quantum

    @property
    def min_value(self) -> float:
        return -(2.0 ** self.int_bits)

    @property
    def max_code(self) -> int:
        return (1 << (self.int_bits + self.frac_bits)) - 1

    @property
    def min_code(self) -> int:
        return -(1 << (self.int_bits + self.frac_bits))


@dataclass
class HwCounters:
    """Saturation/overflow tallies accumulated over a run and merged at barriers."""

    weight_saturations: int = 0
    field_overflows: int = 0
    delta_saturations: int = 0

    def merge(self, other: "HwCounters") -> None:
        self.weight_saturations += other.weight_saturations
        self.field_overflows += other.field_overflows
        self.delta_saturations += other.delta_saturations


def quantize(x, fmt: FixedPointFormat | None, counters: HwCounters | None = None):
    """Round-to-nearest-even at the format quantum, saturating at the bounds.

    Accepts scalars or arrays; fmt None is the identity (float mode).
    Saturation is silent but counted when a counter object is supplied.
    """
    if fmt is None:
        return x
    arr = np.asarray(x, dtype=np.float64)
    codes = np.rint(arr * 2.0 ** fmt.frac_bits)   # rint rounds halves to even
    clipped = np.clip(codes, fmt.min_code, fmt.max_code)
    if counters is not None:
        counters.weight_saturations += int(np.count_nonzero(codes != clipped))
    out = clipped * fmt.quantum
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def quantize_code(x: float, fmt: FixedPointFormat) -> tuple[float, int, bool]:
    """Scalar quantization returning (representable value, raw code, saturated)."""
    code = int(np.rint(x * 2.0 ** fmt.frac_bits))
    saturated = code < fmt.min_code or code > fmt.max_code
    code = min(max(code, fmt.min_code), fmt.max_code)
    return code * fmt.quantum, code, saturated


def accumulator_format(fmt: FixedPointFormat, fan_in: int) -> FixedPointFormat:
    """Field accumulator: weight format widened by ceil(log2(fan_in)) guard bits."""
    guard = max(1, math.ceil(math.log2(max(fan_in, 1) + 1)))
    return FixedPointFormat(fmt.int_bits + guard, fmt.frac_bits)


def energy_format(fmt: FixedPointFormat, n_terms: int) -> FixedPointFormat:
    """Energy register: room for n_terms accumulands plus the half-quantum step."""
    guard = max(1, math.ceil(math.log2(max(n_terms, 1) + 1))) + 1
    return FixedPointFormat(fmt.int_bits + guard, fmt.frac_bits + 1)


def premultiplied_field(sm: SparsifiedModel, beta_r: float, penalty: float, s,
                        i: int, fmt: FixedPointFormat | None,
                        counters: HwCounters | None = None) -> float:
    """beta_r * I_i accumulated from per-replica quantized weights.

    Each term is a signed quantized weight, so the sum is exact; the
    accumulator is checked against its widened format and overflow counted.
    """
    sv = as_spin_vector(s, sm.n_phys)
    lo, hi = sm.adj_indptr[i], sm.adj_indptr[i + 1]
    wq = quantize(beta_r * sm.adj_weights[lo:hi], fmt, counters)
    hq = quantize(beta_r * sm.h_phys[i], fmt, counters)
    pq = quantize(beta_r * penalty, fmt, counters)
    acc = float(hq)
    acc += float(np.dot(np.atleast_1d(wq), sv[sm.adj_indices[lo:hi]].astype(np.float64)))
    clo, chi = sm.copy_indptr[i], sm.copy_indptr[i + 1]
    acc += pq * float(sv[sm.copy_indices[clo:chi]].sum())
    if fmt is not None and counters is not None:
        limit = accumulator_format(fmt, hi - lo + (chi - clo) + 1)
        if not (limit.min_value <= acc <= limit.max_value):
            counters.field_overflows += 1
    return acc


def local_energy_terms(sm: SparsifiedModel, beta_r: float, penalty: float, s,
                       fmt: FixedPointFormat | None = None, stride: int = 8,
                       counters: HwCounters | None = None):
    """Per-node energy contributions -m_i (beta I_i + beta h_i)/2 and their total.

    The total is accumulated over stride-sized index chunks, the order a
    shift-register adder tree would produce.  In float mode it equals
    beta_r times the sparse energy.
    """
    sv = as_spin_vector(s, sm.n_phys).astype(np.float64)
    hq = quantize(beta_r * sm.h_phys, fmt, counters)
    terms = np.empty(sm.n_phys, dtype=np.float64)
    for i in range(sm.n_phys):
        bi = premultiplied_field(sm, beta_r, penalty, s, i, fmt, counters)
        terms[i] = -0.5 * sv[i] * (bi + hq[i])
    total = 0.0
    for start in range(0, sm.n_phys, stride):
        total += float(terms[start:start + stride].sum())
    return terms, total


def approx_exp(x: float, fmt: FixedPointFormat | None = None) -> float:
    """Base-2 exponential approximation 2^floor(z) * (1 + frac(z)), z = 23x/16.

    The 23/16 factor is the shift sum x + x/4 + x/8 + x/16.  With a format
    supplied, x is quantized and the shifts are arithmetic right-shifts of
    the raw code (truncating, as hardware would); fmt None evaluates the
    shifts exactly.
    """
    if fmt is None:
        z = x + x / 4.0 + x / 8.0 + x / 16.0
    else:
        _, code, _ = quantize_code(x, fmt)
        zc = code + (code >> 2) + (code >> 3) + (code >> 4)
        z = zc * fmt.quantum
    fl = math.floor(z)
    frac = z - fl
    try:
        return math.ldexp(1.0 + frac, int(fl))
    except OverflowError:
        return math.inf if fl > 0 else 0.0


def swap_delta_hw(beta_a: float, beta_b: float, beta_e_a: float, beta_e_b: float,
                  fmt: FixedPointFormat | None = None,
                  delta_fmt: FixedPointFormat | None = None,
                  counters: HwCounters | None = None) -> float:
    """Exchange log-acceptance from premultiplied energies:

        delta = (1 - beta_a/beta_b) * (beta_b E_b) + (1 - beta_b/beta_a) * (beta_a E_a)

    The scale factors are precomputed and quantized to the weight format;
    the two products and the add run in a wide register (full product
    precision), saturating only at delta_fmt bounds when supplied.
    """
    f_b = 1.0 - beta_a / beta_b
    f_a = 1.0 - beta_b / beta_a
    if fmt is not None:
        f_b = quantize(f_b, fmt, counters)
        f_a = quantize(f_a, fmt, counters)
    delta = f_b * beta_e_b + f_a * beta_e_a
    if delta_fmt is not None:
        sat = not (delta_fmt.min_value <= delta <= delta_fmt.max_value)
        if sat:
            delta = min(max(delta, delta_fmt.min_value), delta_fmt.max_value)
            if counters is not None:
                counters.delta_saturations += 1
    return delta


def make_tanh_lut(size: int = 256, half_range: float = 4.0) -> np.ndarray:
    """tanh lookup table over [-half_range, half_range), sampled at bin centers."""
    if size < 2:
        raise ValueError("lut size must be at least 2")
    step = 2.0 * half_range / size
    centers = -half_range + step * (np.arange(size) + 0.5)
    return np.tanh(centers)


@dataclass(frozen=True)
class TimingParams:
    """Step/instance timing inputs; times in ns, frequencies in Hz (exact ints)."""

    f_sys: int
    n_color: int
    n_sweep: int
    d: int = 8
    f_pcie: int = 125_000_000
    t_load_ns: int = 160
    t_read_ns: int = 80
    t_verify_ns: int = 40

    def __post_init__(self):
        for name in ("f_sys", "n_color", "n_sweep", "d", "f_pcie",
                     "t_load_ns", "t_read_ns", "t_verify_ns"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def step_cycles(tp: TimingParams, n_phys: int) -> int:
    """System-clock cycles per swap step: N_color*N_sweep + ceil(N/d) + 7."""
    return tp.n_color * tp.n_sweep + math.ceil(n_phys / tp.d) + 7


def step_time(tp: TimingParams, n_phys: int) -> Fraction:
    """Per-step wall time in seconds, exact: ceil(C * f_pcie / f_sys) / f_pcie."""
    cycles = step_cycles(tp, n_phys)
    pcie_ticks = -((-cycles * tp.f_pcie) // tp.f_sys)   # exact ceiling
    return Fraction(pcie_ticks, tp.f_pcie)


def instance_time(tp: TimingParams, n_steps: int, n_phys: int) -> float:
    """End-to-end modeled seconds: t_load + n_steps * t_step + t_read + t_verify."""
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    fixed = Fraction(tp.t_load_ns + tp.t_read_ns + tp.t_verify_ns, 10 ** 9)
    return float(fixed + n_steps * step_time(tp, n_phys))


@dataclass(frozen=True)
class HwProfile:
    """Hardware-emulation configuration attached to a PT run."""

    int_bits: int = 6
    frac_bits: int = 3
    lfsr_taps: tuple = (32, 22, 2, 1)
    lfsr_seed: int | None = None   # None: registers derive from the run seed
    tanh_lut_size: int = 256
    tanh_half_range: float = 4.0
    timing: TimingParams | None = None

    @property
    def fmt(self) -> FixedPointFormat:
        return FixedPointFormat(self.int_bits, self.frac_bits)

    @property
    def stride(self) -> int:
        return self.timing.d if self.timing is not None else 8

    def tap_shifts(self) -> np.ndarray:
        # uint64 so every shift in the kernel stays in unsigned arithmetic
        width = self.lfsr_taps[0]
        return np.array([width - t for t in self.lfsr_taps], dtype=np.uint64)


def premultiply_model(sm: SparsifiedModel, betas, penalty: float,
                      fmt: FixedPointFormat, counters: HwCounters | None = None):
    """Quantized per-replica weight arrays (wq, hq, pq) for the hw kernels."""
    betas = np.asarray(betas, dtype=np.float64)
    wq = quantize(betas[:, None] * sm.adj_weights[None, :], fmt, counters)
    hq = quantize(betas[:, None] * sm.h_phys[None, :], fmt, counters)
    pq = quantize(betas * penalty, fmt, counters)
    return np.atleast_2d(wq), np.atleast_2d(hq), np.atleast_1d(pq)


@numba.njit(cache=True, parallel=True)
def _hw_sweep_kernel(states, order, indptr, indices, wq, cindptr, cindices,
                     pq, hq, lut, lut_lo, lut_inv_step, regs, shifts,
                     n_sweeps, acc_limit, overflow_counts):
    """LFSR-driven sweeps with quantized weights and a tanh lookup table.

    Each replica owns its row, register, and overflow slot, so the replica
    loop parallelizes without changing any result bit.
    """
    n_rep, n_phys = states.shape
    n_lut = lut.shape[0]
    s0, s1, s2, s3 = shifts[0], shifts[1], shifts[2], shifts[3]
    for r in numba.prange(n_rep):
        reg = regs[r]
        for t in range(n_sweeps):
            for pos in range(n_phys):
                i = order[pos]
                acc = hq[r, i]
                for e in range(indptr[i], indptr[i + 1]):
                    acc += wq[r, e] * states[r, indices[e]]
                for e in range(cindptr[i], cindptr[i + 1]):
                    acc += pq[r] * states[r, cindices[e]]
                if acc > acc_limit or acc < -acc_limit:
                    overflow_counts[r] += 1
                    acc = acc_limit if acc > 0 else -acc_limit
                idx = int((acc - lut_lo) * lut_inv_step)
                if idx < 0:
                    idx = 0
                elif idx >= n_lut:
                    idx = n_lut - 1
                bit = ((reg >> s0) ^ (reg >> s1) ^ (reg >> s2) ^ (reg >> s3)) & np.uint64(1)
                reg = ((reg >> np.uint64(1)) | (bit << np.uint64(31))) & np.uint64(0xFFFFFFFF)
                u = reg * (2.0 ** -31) - 1.0
                states[r, i] = 1 if lut[idx] > u else -1
        regs[r] = reg


@numba.njit(cache=True)
def _hw_energy_kernel(states, indptr, indices, wq, cindptr, cindices, pq, hq,
                      stride, out):
    """Premultiplied energies beta_r E = sum_i -m_i (beta I_i + beta h_i)/2,
    accumulated in stride-sized index chunks."""
    n_rep, n_phys = states.shape
    for r in range(n_rep):
        total = 0.0
        start = 0
        while start < n_phys:
            stop = min(start + stride, n_phys)
            chunk = 0.0
            for i in range(start, stop):
                acc = hq[r, i]
                for e in range(indptr[i], indptr[i + 1]):
                    acc += wq[r, e] * states[r, indices[e]]
                for e in range(cindptr[i], cindptr[i + 1]):
                    acc += pq[r] * states[r, cindices[e]]
                chunk += -0.5 * states[r, i] * (acc + hq[r, i])
            total += chunk
            start = stop
        out[r] = total


def hw_batch_sweep(sm: SparsifiedModel, states, wq, hq, pq, regs, profile: HwProfile,
                   n_sweeps: int, overflow_counts) -> None:
    """Run n_sweeps LFSR-driven quantized sweeps on every replica row, in place."""
    fmt = profile.fmt
    max_fan = int(np.max(np.diff(sm.adj_indptr) + np.diff(sm.copy_indptr))) + 1
    acc_limit = accumulator_format(fmt, max_fan).max_value
    lut = make_tanh_lut(profile.tanh_lut_size, profile.tanh_half_range)
    lut_inv_step = profile.tanh_lut_size / (2.0 * profile.tanh_half_range)
    _hw_sweep_kernel(states, sm.update_order, sm.adj_indptr, sm.adj_indices, wq,
                     sm.copy_indptr, sm.copy_indices, pq, hq, lut,
                     -profile.tanh_half_range, lut_inv_step, regs,
                     profile.tap_shifts(), n_sweeps, acc_limit, overflow_counts)


def hw_beta_energies(sm: SparsifiedModel, states, wq, hq, pq, stride: int) -> np.ndarray:
    """Premultiplied per-replica energies for swap decisions and readout."""
    out = np.empty(states.shape[0], dtype=np.float64)
    _hw_energy_kernel(states, sm.adj_indptr, sm.adj_indices, wq,
                      sm.copy_indptr, sm.copy_indices, pq, hq, stride, out)
    return out
