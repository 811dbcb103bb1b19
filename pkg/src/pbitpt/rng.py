"""Random streams for samplers: a standard PRNG and a hardware-style LFSR.

Both kinds expose uniforms on [-1, 1) (the comparator range of the p-bit
update) and on [0, 1) (swap acceptance).  A stream is fully determined by
(kind, key); child streams are derived by extending the key, so replicas,
swap controllers and readout never share a stream.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_to_ints(key) -> tuple:
    """Normalize a seed key to a tuple of non-negative ints for SeedSequence."""
    if isinstance(key, (int, np.integer)):
        return (int(key),)
    if isinstance(key, str):
        digest = hashlib.sha256(key.encode()).digest()
        return (int.from_bytes(digest[:8], "little"),)
    if isinstance(key, (tuple, list)):
        out = ()
        for part in key:
            out += _key_to_ints(part)
        return out
    raise TypeError(f"unsupported seed key component: {key!r}")


class Lfsr:
    """Fibonacci linear-feedback shift register.

    ``taps`` lists stage numbers in the usual 1-indexed convention with the
    register width first, e.g. (32, 22, 2, 1) or (16, 15, 13, 4), both
    maximal-length polynomials.  The feedback bit is the XOR of the tapped
    stages and shifts in at the top; the all-zero state is invalid.
    """

    def __init__(self, taps=(32, 22, 2, 1), state=1):
        self.width = int(taps[0])
        self.taps = tuple(int(t) for t in taps)
        if any(t < 1 or t > self.width for t in self.taps):
            raise ValueError("tap positions must lie in [1, width]")
        self.shifts = tuple(self.width - t for t in self.taps)
        self.mask = (1 << self.width) - 1
        state = int(state) & self.mask
        if state == 0:
            raise ValueError("LFSR state must be nonzero")
        self.state = state

    def step(self) -> int:
        """Advance one shift and return the new register value."""
        s = self.state
        bit = 0
        for sh in self.shifts:
            bit ^= (s >> sh) & 1
        self.state = (s >> 1) | (bit << (self.width - 1))
        return self.state

    def uniform(self, size=None):
        """Uniform draws on (-1, 1): register / 2^(width-1) - 1 after each step."""
        scale = 2.0 ** (self.width - 1)
        if size is None:
            return self.step() / scale - 1.0
        flat = np.empty(int(np.prod(size)), dtype=np.float64)
        for i in range(flat.size):
            flat[i] = self.step() / scale - 1.0
        return flat.reshape(size)

    def uniform01(self, size=None):
        """Uniform draws on (0, 1): register / 2^width after each step."""
        scale = 2.0 ** self.width
        if size is None:
            return self.step() / scale
        flat = np.empty(int(np.prod(size)), dtype=np.float64)
        for i in range(flat.size):
            flat[i] = self.step() / scale
        return flat.reshape(size)


class RandomStream:
    """Seedable uniform source, kind "standard" (PCG64) or "lfsr" (32-bit).

    Identical (kind, key) pairs produce identical sequences.  ``child``
    derives an independent stream by key extension.
    """

    KINDS = ("standard", "lfsr")

    def __init__(self, key, kind: str = "standard", lfsr_taps=(32, 22, 2, 1)):
        if kind not in self.KINDS:
            raise ValueError(f"unknown stream kind {kind!r}")
        self.kind = kind
        self.key = _key_to_ints(key)
        self.lfsr_taps = tuple(lfsr_taps)
        ss = np.random.SeedSequence(list(self.key))
        if kind == "standard":
            self._gen = np.random.Generator(np.random.PCG64(ss))
            self._lfsr = None
        else:
            width = int(lfsr_taps[0])
            state = int(ss.generate_state(1, np.uint64)[0]) & ((1 << width) - 1)
            self._lfsr = Lfsr(lfsr_taps, state if state else 1)
            self._gen = None

    def child(self, *key, kind: str | None = None, lfsr_taps=None) -> "RandomStream":
        return RandomStream(self.key + _key_to_ints(key), kind or self.kind,
                            lfsr_taps or self.lfsr_taps)

    def uniform(self, size=None):
        """Uniform on [-1, 1)."""
        if self.kind == "standard":
            return self._gen.random(size) * 2.0 - 1.0
        return self._lfsr.uniform(size)

    def uniform01(self, size=None):
        """Uniform on [0, 1)."""
        if self.kind == "standard":
            return self._gen.random(size)
        return self._lfsr.uniform01(size)

    def normal(self, size=None):
        if self.kind != "standard":
            raise ValueError("gaussian draws require a standard stream")
        return self._gen.standard_normal(size)

    def integers(self, low, high, size=None):
        if self.kind != "standard":
            raise ValueError("integer draws require a standard stream")
        return self._gen.integers(low, high, size=size)

    def lfsr_register(self) -> int:
        """Current LFSR register (lfsr kind only), for handing off to kernels."""
        if self._lfsr is None:
            raise ValueError("not an lfsr stream")
        return self._lfsr.state


def lfsr_next(state: int, taps=(32, 22, 2, 1)) -> int:
    """One shift-and-feedback step of a Fibonacci LFSR, as a pure function."""
    width = int(taps[0])
    if state == 0:
        raise ValueError("LFSR state must be nonzero")
    bit = 0
    for t in taps:
        bit ^= (state >> (width - t)) & 1
    return (state >> 1) | (bit << (width - 1))
