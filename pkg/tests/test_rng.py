"""Random stream tests: seeding, key normalization, child derivation, and
hand-checked LFSR steps.

The LFSR expectations below are worked out on paper from the shift-and-
feedback rule: with taps (32, 22, 2, 1) the feedback bit is the XOR of the
register bits at offsets (0, 10, 30, 31), it shifts in at bit 31, and the
register shifts right by one.
"""

import hashlib

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pbitpt import Lfsr, RandomStream, lfsr_next


def test_same_key_same_sequence():
    a = RandomStream(42).uniform(size=1000)
    b = RandomStream(42).uniform(size=1000)
    assert np.array_equal(a, b)


def test_uniform_ranges():
    u = RandomStream(7).uniform(size=10_000)
    assert u.min() >= -1.0 and u.max() < 1.0
    v = RandomStream(7).uniform01(size=10_000)
    assert v.min() >= 0.0 and v.max() < 1.0


def test_child_extends_key():
    parent = RandomStream((3, 4))
    direct = RandomStream((3, 4, 5, "x"))
    derived = parent.child(5, "x")
    assert derived.key == direct.key
    assert np.array_equal(derived.uniform(size=16), direct.uniform(size=16))


def test_string_keys_hash_stably():
    digest = hashlib.sha256(b"readout").digest()
    expected = int.from_bytes(digest[:8], "little")
    assert RandomStream("readout").key == (expected,)


@given(st.lists(st.one_of(st.integers(min_value=0, max_value=2**63 - 1),
                          st.text(max_size=8)),
                min_size=1, max_size=4))
def test_key_flattening_matches_child_chain(parts):
    whole = RandomStream(tuple(parts))
    stepwise = RandomStream(parts[0])
    for part in parts[1:]:
        stepwise = stepwise.child(part)
    assert whole.key == stepwise.key


def test_distinct_children_are_independent():
    base = RandomStream(0)
    a = base.child("replica", 0).uniform(size=100)
    b = base.child("replica", 1).uniform(size=100)
    c = base.child("swap").uniform(size=100)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(b, c)


def test_child_derivation_does_not_consume_parent_draws():
    base = RandomStream(11)
    base.child("x")
    base.child("y", 3)
    assert np.array_equal(base.uniform(size=8), RandomStream(11).uniform(size=8))


def test_lfsr_hand_steps():
    # state 1: only offset-0 tap is set, feedback 1 -> 0x80000000
    # state 0x80000000: only offset-31 tap is set, feedback 1 -> 0xC0000000
    # state 0xC0000000: offsets 30 and 31 both set, feedback 0 -> 0x60000000
    reg = Lfsr((32, 22, 2, 1), state=1)
    assert reg.step() == 0x80000000
    assert reg.step() == 0xC0000000
    assert reg.step() == 0x60000000
    assert lfsr_next(1) == 0x80000000
    assert lfsr_next(0x80000000) == 0xC0000000
    assert lfsr_next(0xC0000000) == 0x60000000


def test_lfsr_16bit_variant_has_full_period():
    taps = (16, 15, 13, 4)
    state = 1
    steps = 0
    for steps in range(1, 1 << 16):
        state = lfsr_next(state, taps)
        if state == 1:
            break
    assert steps == (1 << 16) - 1


def test_lfsr_uniform_mappings():
    reg = Lfsr(state=1)
    assert reg.uniform() == 0x80000000 / 2.0**31 - 1.0   # exactly 0.0
    assert reg.uniform01() == 0xC0000000 / 2.0**32       # exactly 0.75


def test_lfsr_rejects_zero_state_and_bad_taps():
    with pytest.raises(ValueError):
        Lfsr(state=0)
    with pytest.raises(ValueError):
        lfsr_next(0)
    with pytest.raises(ValueError):
        Lfsr(taps=(8, 9))


def test_lfsr_stream_kind():
    s = RandomStream(5, kind="lfsr")
    r0 = s.lfsr_register()
    assert r0 != 0
    s.uniform()
    assert s.lfsr_register() == lfsr_next(r0)
    with pytest.raises(ValueError):
        s.normal()
    with pytest.raises(ValueError):
        s.integers(0, 2)
    with pytest.raises(ValueError):
        RandomStream(5).lfsr_register()


def test_lfsr_streams_reproduce():
    a = RandomStream((9, "hw"), kind="lfsr").uniform(size=64)
    b = RandomStream((9, "hw"), kind="lfsr").uniform(size=64)
    assert np.array_equal(a, b)
    assert a.min() >= -1.0 and a.max() < 1.0


def test_bad_key_and_kind_rejected():
    with pytest.raises(TypeError):
        RandomStream(1.5)
    with pytest.raises(ValueError):
        RandomStream(1, kind="xorshift")
