"""Hardware-emulation tests: fixed-point rounding, widened accumulators, the
base-2 exponential, LFSR-driven sweeps, and the timing model.

The sweep-kernel test replays every bit decision in pure Python from the raw
edge lists, its own round-half-even quantizer, its own tanh table, and the
already-verified 32-bit LFSR stepper.
"""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pbitpt import (
    DenseIsingModel,
    FixedPointFormat,
    HwCounters,
    HwProfile,
    RandomStream,
    TimingParams,
    accumulator_format,
    approx_exp,
    beta_swap_delta,
    energy_format,
    instance_time,
    lfsr_next,
    local_energy_terms,
    local_field,
    make_tanh_lut,
    premultiplied_field,
    quantize,
    quantize_code,
    random_spins,
    sparse_energy_eval,
    sparsify,
    step_cycles,
    step_time,
    swap_delta_hw,
)
from pbitpt.hwmodel import hw_batch_sweep, hw_beta_energies, premultiply_model
from conftest import random_dense

FMT = FixedPointFormat(6, 3)


def q_oracle(x, fmt):
    """Independent round-half-even quantizer built on Python's round()."""
    code = round(float(x) * 2 ** fmt.frac_bits)
    code = min(max(code, fmt.min_code), fmt.max_code)
    return code * fmt.quantum


# ------------------------------------------------------------- fixed point

def test_format_properties():
    assert FMT.total_bits == 10
    assert FMT.quantum == 0.125
    assert FMT.max_value == 63.875
    assert FMT.min_value == -64.0
    assert FMT.max_code == 511
    assert FMT.min_code == -512
    with pytest.raises(ValueError):
        FixedPointFormat(6, 3, sign_bits=0)
    with pytest.raises(ValueError):
        FixedPointFormat(-1, 3)


def test_quantize_hand_values():
    assert quantize(1.0625, FMT) == 1.0      # 8.5 rounds to the even code 8
    assert quantize(1.1875, FMT) == 1.25     # 9.5 rounds to the even code 10
    assert quantize(0.0625, FMT) == 0.0      # 0.5 rounds to the even code 0
    assert quantize(0.07, FMT) == 0.125
    assert quantize(100.0, FMT) == 63.875
    assert quantize(-100.0, FMT) == -64.0
    assert quantize(0.3, None) == 0.3


def test_quantize_counts_saturations():
    counters = HwCounters()
    quantize(np.array([100.0, -100.0, 1.0]), FMT, counters)
    assert counters.weight_saturations == 2
    quantize(1000.0, FMT, counters)
    assert counters.weight_saturations == 3


def test_quantize_code_reports_saturation():
    assert quantize_code(1.0625, FMT) == (1.0, 8, False)
    assert quantize_code(100.0, FMT) == (63.875, 511, True)
    assert quantize_code(-100.0, FMT) == (-64.0, -512, True)


@given(st.floats(min_value=-80.0, max_value=80.0, allow_nan=False))
def test_quantize_matches_round_half_even_and_is_idempotent(x):
    q = quantize(x, FMT)
    assert q == q_oracle(x, FMT)
    assert quantize(q, FMT) == q
    assert FMT.min_value <= q <= FMT.max_value
    assert (q / FMT.quantum) == int(q / FMT.quantum)


def test_widened_formats():
    assert accumulator_format(FMT, 1).int_bits == 7
    assert accumulator_format(FMT, 63).int_bits == 12
    assert accumulator_format(FMT, 64).int_bits == 13
    assert accumulator_format(FMT, 5).frac_bits == FMT.frac_bits
    assert energy_format(FMT, 1) == FixedPointFormat(8, 4)
    assert energy_format(FMT, 100).int_bits == 6 + 7 + 1


# ------------------------------------------------------------ field terms

def test_premultiplied_field_float_mode_scales_local_field():
    sm = sparsify(random_dense(5, RandomStream(900)), 2)
    s = random_spins(sm.n_phys, RandomStream(901))
    for i in range(sm.n_phys):
        assert premultiplied_field(sm, 0.7, 0.9, s, i, None) == pytest.approx(
            0.7 * local_field(sm, 0.9, s, i), abs=1e-9)


def test_premultiplied_field_matches_quantized_edge_walk():
    sm = sparsify(random_dense(5, RandomStream(902)), 2)
    s = random_spins(sm.n_phys, RandomStream(903))
    beta, penalty = 1.3, 0.8
    pq = q_oracle(beta * penalty, FMT)
    for i in range(sm.n_phys):
        acc = q_oracle(beta * sm.h_phys[i], FMT)
        for (u, v), w in zip(sm.problem_edges, sm.problem_weights):
            if u == i:
                acc += q_oracle(beta * w, FMT) * s[v]
            elif v == i:
                acc += q_oracle(beta * w, FMT) * s[u]
        for u, v in sm.copy_edges:
            if u == i:
                acc += pq * s[v]
            elif v == i:
                acc += pq * s[u]
        assert premultiplied_field(sm, beta, penalty, s, i, FMT) == pytest.approx(
            acc, abs=1e-12)


def test_accumulator_never_overflows_by_construction():
    counters = HwCounters()
    sm = sparsify(random_dense(8, RandomStream(904)), 2)
    s = random_spins(sm.n_phys, RandomStream(905))
    for beta in (0.5, 4.0, 40.0):       # drive weights deep into saturation
        for i in range(sm.n_phys):
            premultiplied_field(sm, beta, 2.0, s, i, FixedPointFormat(1, 1),
                                counters)
    assert counters.field_overflows == 0
    assert counters.weight_saturations > 0


def test_local_energy_terms_float_mode():
    sm = sparsify(random_dense(5, RandomStream(906)), 2)
    s = random_spins(sm.n_phys, RandomStream(907))
    beta, penalty = 0.9, 0.7
    terms, total = local_energy_terms(sm, beta, penalty, s)
    e, _ = sparse_energy_eval(sm, penalty, s)
    assert total == pytest.approx(beta * e, abs=1e-9)
    assert len(terms) == sm.n_phys

    single = sparsify(DenseIsingModel(np.zeros((1, 1)), np.array([0.5])), 1)
    terms, total = local_energy_terms(single, 2.0, 0.0, [1])
    assert terms[0] == pytest.approx(-1.0)   # -0.5 * 1 * (2*0.5 + 2*0.5)
    assert total == pytest.approx(-1.0)


def test_local_energy_terms_quantized_error_bound():
    sm = sparsify(random_dense(6, RandomStream(908)), 2)
    s = random_spins(sm.n_phys, RandomStream(909))
    beta, penalty = 1.1, 0.6
    _, total = local_energy_terms(sm, beta, penalty, s, fmt=FMT)
    e, _ = sparse_energy_eval(sm, penalty, s)
    m = len(sm.problem_edges)
    k = len(sm.copy_edges)
    bound = 0.5 * FMT.quantum * (m + k + sm.n_phys) + 1e-9
    assert abs(total - beta * e) <= bound


def test_energy_total_is_stride_chunked():
    sm = sparsify(random_dense(6, RandomStream(910)), 2)
    s = random_spins(sm.n_phys, RandomStream(911))
    terms, total = local_energy_terms(sm, 1.0, 0.5, s, stride=4)
    manual = sum(float(terms[a:a + 4].sum()) for a in range(0, sm.n_phys, 4))
    assert total == manual


# -------------------------------------------------------------- exponential

def test_approx_exp_exact_points():
    assert approx_exp(0.0) == 1.0
    assert approx_exp(-1.0) == 0.390625     # 2^-2 * (1 + 0.5625)
    assert approx_exp(1.0) == 2.875         # 2^1  * (1 + 0.4375)
    assert approx_exp(800.0) == math.inf
    assert approx_exp(-800.0) == 0.0


def test_approx_exp_truncating_shifts_under_format():
    # code(-1.0) = -8; -8 + (-8>>2) + (-8>>3) + (-8>>4) = -8 - 2 - 1 - 1 = -12
    # z = -12/8 = -1.5  ->  2^-2 * (1 + 0.5) = 0.375
    assert approx_exp(-1.0, FMT) == 0.375
    assert approx_exp(0.0, FMT) == 1.0


def test_approx_exp_tracks_exp_within_regression_band():
    xs = np.arange(-8.0, 0.0 + 1e-12, FMT.quantum)
    rel = np.array([abs(approx_exp(float(x)) - math.exp(x)) / math.exp(x)
                    for x in xs])
    assert rel.max() <= 0.092
    assert rel.max() >= 0.08                 # the approximation is this coarse
    vals = [approx_exp(float(x)) for x in xs]
    assert all(v > 0 for v in vals)
    assert all(b >= a for a, b in zip(vals, vals[1:]))


# -------------------------------------------------------------- swap deltas

def test_swap_delta_hw_hand_values():
    # f_b = 1 - 1/2 = 0.5, f_a = 1 - 2 = -1; exact in the weight format
    assert swap_delta_hw(1.0, 2.0, 3.0, 4.0, fmt=FMT) == pytest.approx(
        0.5 * 4.0 - 1.0 * 3.0)
    # integer-only weights crush f_b to zero
    assert swap_delta_hw(1.0, 2.0, 3.0, 4.0,
                         fmt=FixedPointFormat(6, 0)) == pytest.approx(-3.0)


def test_swap_delta_hw_float_identity():
    vals = RandomStream(920)
    for _ in range(200):
        beta_a, beta_b = sorted(vals.uniform01(size=2) * 3 + 0.2)
        e_a, e_b = (vals.uniform(size=2) * 12).tolist()
        assert swap_delta_hw(beta_a, beta_b, beta_a * e_a, beta_b * e_b) == \
            pytest.approx(beta_swap_delta(beta_a, beta_b, e_a, e_b), abs=1e-9)


def test_swap_delta_hw_saturates_at_delta_format():
    counters = HwCounters()
    tight = FixedPointFormat(2, 3)
    out = swap_delta_hw(1.0, 2.0, 0.0, 100.0, delta_fmt=tight, counters=counters)
    assert out == tight.max_value
    assert counters.delta_saturations == 1
    out = swap_delta_hw(1.0, 2.0, 100.0, 0.0, delta_fmt=tight, counters=counters)
    assert out == tight.min_value
    assert counters.delta_saturations == 2


# ------------------------------------------------------------------- LUT

def test_make_tanh_lut():
    lut = make_tanh_lut(4, 4.0)
    assert np.allclose(lut, np.tanh([-3.0, -1.0, 1.0, 3.0]))
    big = make_tanh_lut(256, 4.0)
    assert np.allclose(big, -big[::-1])
    with pytest.raises(ValueError):
        make_tanh_lut(1, 4.0)


# ---------------------------------------------------------------- timing

def test_step_cycles_and_time_hand_values():
    tp = TimingParams(f_sys=125_000_000, n_color=5, n_sweep=100, d=8)
    assert step_cycles(tp, 128) == 5 * 100 + 16 + 7 == 523
    assert step_time(tp, 128) == Fraction(4184, 10 ** 9)
    assert instance_time(tp, 0, 128) == pytest.approx(280e-9)
    assert instance_time(tp, 1000, 128) == pytest.approx(280e-9 + 1000 * 4.184e-6)


def test_step_time_rounds_up_to_pcie_ticks():
    tp = TimingParams(f_sys=100_000_000, n_color=3, n_sweep=10, d=8)
    cycles = step_cycles(tp, 20)            # 3*10 + 3 + 7 = 40
    assert cycles == 40
    # 40 cycles at 100 MHz = 50 PCIe ticks at 125 MHz, exactly
    assert step_time(tp, 20) == Fraction(50, 125_000_000)
    odd = TimingParams(f_sys=120_000_000, n_color=3, n_sweep=10, d=8)
    # 40/120e6 s = 41.67 ticks -> rounds up to 42
    assert step_time(odd, 20) == Fraction(42, 125_000_000)


def test_instance_time_monotone_and_validated():
    tp = TimingParams(f_sys=125_000_000, n_color=5, n_sweep=100)
    times = [instance_time(tp, k, 128) for k in range(0, 50, 7)]
    assert all(b > a for a, b in zip(times, times[1:]))
    with pytest.raises(ValueError):
        instance_time(tp, -1, 128)
    with pytest.raises(ValueError):
        TimingParams(f_sys=0, n_color=5, n_sweep=100)
    with pytest.raises(ValueError):
        TimingParams(f_sys=1, n_color=5, n_sweep=100, d=0)


def test_clock_scan_brackets_millisecond_scale_runs():
    times = []
    for n_color in range(3, 9):
        for f_mhz in (50, 100, 150, 200, 250):
            tp = TimingParams(f_sys=f_mhz * 10 ** 6, n_color=n_color,
                              n_sweep=100, d=8)
            times.append(instance_time(tp, 1000, 128))
    assert min(times) < 4.7e-3 < max(times)
    # fastest: 323 cycles at 250 MHz -> 162 PCIe ticks; slowest: 823 at 50 MHz
    assert min(times) == pytest.approx(1000 * 162 / 125e6 + 280e-9, rel=1e-9)
    assert max(times) == pytest.approx(1000 * 2058 / 125e6 + 280e-9, rel=1e-9)


# ---------------------------------------------------------------- profile

def test_hw_profile_accessors():
    hw = HwProfile()
    assert hw.fmt == FixedPointFormat(6, 3)
    assert hw.stride == 8
    assert np.array_equal(hw.tap_shifts(), [0, 10, 30, 31])
    timed = HwProfile(timing=TimingParams(f_sys=10 ** 8, n_color=4,
                                          n_sweep=50, d=16))
    assert timed.stride == 16


# ------------------------------------------------------------ sweep kernel

def replay_hw_sweeps(model, sm, hw, beta, penalty, states, reg, n_sweeps):
    """Bit-exact replay from raw edge lists and the verified LFSR stepper."""
    fmt = hw.fmt
    lut = np.tanh(-hw.tanh_half_range + (2 * hw.tanh_half_range / hw.tanh_lut_size)
                  * (np.arange(hw.tanh_lut_size) + 0.5))
    inv_step = hw.tanh_lut_size / (2.0 * hw.tanh_half_range)
    pq = q_oracle(beta * penalty, fmt)
    degree = np.zeros(sm.n_phys, dtype=int)
    for u, v in np.vstack([sm.problem_edges, sm.copy_edges]):
        degree[u] += 1
        degree[v] += 1
    limit = accumulator_format(fmt, int(degree.max()) + 1).max_value

    s = states[0].astype(np.int64).copy()
    for _ in range(n_sweeps):
        for i in sm.update_order:
            acc = q_oracle(beta * sm.h_phys[i], fmt)
            for (u, v), w in zip(sm.problem_edges, sm.problem_weights):
                if u == i:
                    acc += q_oracle(beta * w, fmt) * s[v]
                elif v == i:
                    acc += q_oracle(beta * w, fmt) * s[u]
            for u, v in sm.copy_edges:
                if u == i:
                    acc += pq * s[v]
                elif v == i:
                    acc += pq * s[u]
            if acc > limit:
                acc = limit
            elif acc < -limit:
                acc = -limit
            idx = int((acc + hw.tanh_half_range) * inv_step)
            idx = min(max(idx, 0), hw.tanh_lut_size - 1)
            reg = lfsr_next(reg, hw.lfsr_taps)
            u01 = reg * 2.0 ** -31 - 1.0
            s[i] = 1 if lut[idx] > u01 else -1
    return s.astype(np.int8), reg


def test_hw_sweep_kernel_matches_bit_replay():
    model = random_dense(3, RandomStream(930))
    sm = sparsify(model, 2)
    hw = HwProfile()
    beta, penalty = 1.2, 0.7

    wq, hq, pq = premultiply_model(sm, np.array([beta]), penalty, hw.fmt)
    states = random_spins(sm.n_phys, RandomStream(931)).reshape(1, -1).copy()
    seeds = states.copy()
    regs = np.array([12345], dtype=np.uint64)
    overflow = np.zeros(1, dtype=np.int64)
    hw_batch_sweep(sm, states, wq, hq, pq, regs, hw, 5, overflow)

    expected, expected_reg = replay_hw_sweeps(model, sm, hw, beta, penalty,
                                              seeds, 12345, 5)
    assert np.array_equal(states[0], expected)
    assert regs[0] == expected_reg
    assert overflow[0] == 0


def test_hw_energies_match_local_energy_totals():
    sm = sparsify(random_dense(4, RandomStream(932)), 2)
    hw = HwProfile()
    betas = np.array([0.6, 1.4])
    penalty = 0.9
    wq, hq, pq = premultiply_model(sm, betas, penalty, hw.fmt)
    spins = RandomStream(933)
    states = np.stack([random_spins(sm.n_phys, spins) for _ in range(2)])
    out = hw_beta_energies(sm, states, wq, hq, pq, hw.stride)
    for r, beta in enumerate(betas):
        _, total = local_energy_terms(sm, beta, penalty, states[r],
                                      fmt=hw.fmt, stride=hw.stride)
        assert out[r] == pytest.approx(total, abs=1e-12)
