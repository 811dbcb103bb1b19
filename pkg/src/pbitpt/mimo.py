"""BPSK MIMO detection instances and reference detectors.

Real-valued model: N_t transmitters each send one BPSK symbol through a
Rayleigh channel H (i.i.d. standard normal entries) with additive white
Gaussian noise, y = H x + n.  The SNR convention fixes the per-receive-
dimension signal power at N_t (unit-variance entries, unit-energy symbols),
so sigma2 = N_t * 10^(-snr_db / 10); it is recorded in every output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import OracleGuardError, as_spin_vector

ML_GUARD_BITS = 24

# enumeration block kept small enough that the residual matrix stays cache-friendly
_CHUNK = 1 << 14


@dataclass(frozen=True)
class MimoInstance:
    """One channel use: y = h @ x_true + noise, noise ~ N(0, sigma2 I)."""

    h: np.ndarray
    x_true: np.ndarray
    y: np.ndarray
    sigma2: float
    snr_db: float

    def __post_init__(self):
        h = np.asarray(self.h, dtype=np.float64)
        if h.ndim != 2:
            raise ValueError("channel matrix must be 2-d")
        x = as_spin_vector(self.x_true, h.shape[1])
        y = np.asarray(self.y, dtype=np.float64)
        if y.shape != (h.shape[0],):
            raise ValueError("observation length must match channel rows")
        if self.sigma2 < 0.0:
            raise ValueError("noise variance must be nonnegative")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "x_true", x)
        object.__setattr__(self, "y", y)

    @property
    def n_t(self) -> int:
        return self.h.shape[1]

    @property
    def n_r(self) -> int:
        return self.h.shape[0]


def gen_instance(n_t: int, n_r: int, snr_db: float, stream,
                 channel: np.ndarray | None = None) -> MimoInstance:
    """Draw (H, x, y) at the given SNR; pass ``channel`` to reuse an H across
    several transmitted symbol vectors.

    Draw order is fixed (H, then x, then noise), so seeded instances are
    reproducible regardless of the caller.
    """
    if n_t < 1 or n_r < 1:
        raise ValueError("antenna counts must be >= 1")
    if channel is None:
        h = stream.normal(size=(n_r, n_t))
    else:
        h = np.asarray(channel, dtype=np.float64)
        if h.shape != (n_r, n_t):
            raise ValueError("channel shape does not match antenna counts")
    u = np.asarray(stream.uniform(size=n_t))
    x = np.where(u >= 0.0, 1, -1).astype(np.int8)
    sigma2 = n_t * 10.0 ** (-snr_db / 10.0)
    noise = np.sqrt(sigma2) * stream.normal(size=n_r)
    return MimoInstance(h=h, x_true=x, y=h @ x + noise,
                        sigma2=float(sigma2), snr_db=float(snr_db))


def mmse_detect(inst: MimoInstance, lam: float | None = None) -> np.ndarray:
    """Linear detector sign((H^T H + lam I)^{-1} H^T y), sign(0) -> +1.

    lam defaults to the instance noise variance.  lam=0 is the zero-forcing
    limit and fails loudly on a singular Gram matrix.
    """
    if lam is None:
        lam = inst.sigma2
    if lam < 0.0:
        raise ValueError("regularizer must be nonnegative")
    gram = inst.h.T @ inst.h + lam * np.eye(inst.n_t)
    soft = np.linalg.solve(gram, inst.h.T @ inst.y)
    return np.where(soft >= 0.0, 1, -1).astype(np.int8)


def ml_bruteforce(inst: MimoInstance) -> tuple[np.ndarray, float]:
    """Exhaustive argmin of ||y - H x||^2 over {-1,+1}^{N_t}.

    Candidates are enumerated as integers b = 0 .. 2^{N_t}-1 with spin i
    read from bit (N_t-1-i), a 0 bit meaning -1; ties keep the smallest b,
    which is the lexicographic tie-break over spin vectors with -1 < +1.
    """
    n_t = inst.n_t
    if n_t > ML_GUARD_BITS:
        raise OracleGuardError(f"exhaustive detection capped at {ML_GUARD_BITS} "
                               f"transmitters, got {n_t}")
    shifts = np.arange(n_t - 1, -1, -1, dtype=np.uint64)
    best_obj = np.inf
    best_code = -1
    total = 1 << n_t
    for start in range(0, total, _CHUNK):
        codes = np.arange(start, min(start + _CHUNK, total), dtype=np.uint64)
        bits = ((codes[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.int64)
        spins = (bits * 2 - 1).astype(np.float64)
        resid = inst.y[None, :] - spins @ inst.h.T
        obj = np.einsum("ij,ij->i", resid, resid)
        k = int(np.argmin(obj))
        if obj[k] < best_obj:
            best_obj = float(obj[k])
            best_code = start + k
    bits = (np.uint64(best_code) >> shifts) & np.uint64(1)
    x = (bits.astype(np.int64) * 2 - 1).astype(np.int8)
    return x, best_obj


def ber(x_hat, x_true) -> float:
    """Fraction of mismatched symbols."""
    a = np.asarray(x_hat)
    b = np.asarray(x_true)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("detector output and reference must be equal-length vectors")
    return float(np.count_nonzero(a != b)) / a.shape[0]
