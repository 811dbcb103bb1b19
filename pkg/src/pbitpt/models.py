"""Ising problem containers: dense all-to-all models and sparsified copy-chain models.

Energy convention throughout:

    E(s) = -sum_i h_i s_i - sum_{i<j} J_ij s_i s_j,   s_i in {-1, +1}

A dense model with n spins is sparsified by replicating each logical spin
into `copies` physical spins, splitting the logical edges across the copies
and tying the copies together with ferromagnetic links of unit weight.  The
tie strength is a runtime penalty factor, so one sparsified model serves any
penalty value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class OracleGuardError(ValueError):
    """Exhaustive oracle invoked beyond its size guard."""


def as_spin_vector(s, n: int) -> np.ndarray:
    """Validate and convert a spin configuration to an int8 vector of +/-1."""
    out = np.asarray(s)
    if out.shape != (n,):
        raise ValueError(f"expected spin vector of shape ({n},), got {out.shape}")
    out = out.astype(np.int8, copy=False)
    if not np.all(np.abs(out) == 1):
        raise ValueError("spin entries must be -1 or +1")
    return out


def random_spins(n: int, rng) -> np.ndarray:
    """Uniform random +/-1 vector; rng must draw uniforms on [-1, 1) (RandomStream)."""
    u = np.asarray(rng.uniform(size=n))
    return np.where(u >= 0.0, 1, -1).astype(np.int8)


@dataclass(frozen=True)
class DenseIsingModel:
    """All-to-all Ising model with symmetric zero-diagonal couplings.

    Attributes
    ----------
    j : (n, n) float64 array, exactly symmetric, zero diagonal.
    h : (n,) float64 array of local biases.
    """

    j: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        j = np.asarray(self.j, dtype=np.float64)
        h = np.asarray(self.h, dtype=np.float64)
        if j.ndim != 2 or j.shape[0] != j.shape[1]:
            raise ValueError("coupling matrix must be square")
        if h.shape != (j.shape[0],):
            raise ValueError("bias vector length must match coupling matrix")
        if not (np.isfinite(j).all() and np.isfinite(h).all()):
            raise ValueError("couplings and biases must be finite")
        if np.any(np.diag(j) != 0.0):
            raise ValueError("coupling diagonal must be zero")
        if not np.array_equal(j, j.T):
            raise ValueError("coupling matrix must be symmetric")
        object.__setattr__(self, "j", j)
        object.__setattr__(self, "h", h)

    @property
    def n(self) -> int:
        return self.j.shape[0]

    @staticmethod
    def from_couplings(j, h=None) -> "DenseIsingModel":
        """Build a model from a possibly asymmetric matrix: symmetrize, zero the diagonal."""
        j = np.asarray(j, dtype=np.float64)
        j = 0.5 * (j + j.T)
        np.fill_diagonal(j, 0.0)
        if h is None:
            h = np.zeros(j.shape[0])
        return DenseIsingModel(j, np.asarray(h, dtype=np.float64))


def energy_eval(model: DenseIsingModel, s) -> float:
    """Exact dense energy -h.s - sum_{i<j} J_ij s_i s_j."""
    sv = as_spin_vector(s, model.n).astype(np.float64)
    return float(-model.h @ sv - 0.5 * sv @ (model.j @ sv))


def map_mimo_to_ising(h_matrix, y) -> DenseIsingModel:
    """Map maximum-likelihood BPSK detection argmin ||y - Hx||^2 to an Ising model.

    With J = -H^T H (diagonal zeroed) and h = H^T y, the residual satisfies
    ||y - Hx||^2 = const + 2 E(x), so energy minimization and ML detection
    share the same argmin set.
    """
    h_matrix = np.asarray(h_matrix, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if h_matrix.ndim != 2:
        raise ValueError("channel matrix must be 2-d")
    if y.shape != (h_matrix.shape[0],):
        raise ValueError("observation length must match channel rows")
    gram = h_matrix.T @ h_matrix
    j = -0.5 * (gram + gram.T)   # symmetrize away BLAS rounding asymmetry
    np.fill_diagonal(j, 0.0)
    return DenseIsingModel(j, h_matrix.T @ y)


def normalize_weights(model: DenseIsingModel) -> DenseIsingModel:
    """Divide J and h by the standard deviation of the off-diagonal couplings.

    Rescaling the weights only rescales the temperature axis; it keeps
    fixed-format weight ranges and schedule seeds comparable across problem
    families.  Solvers do not apply this implicitly.
    """
    n = model.n
    off = model.j[~np.eye(n, dtype=bool)]
    scale = float(np.std(off))
    if scale == 0.0:
        raise ValueError("cannot normalize a model with constant couplings")
    return DenseIsingModel(model.j / scale, model.h / scale)


@dataclass(frozen=True)
class ConstraintReport:
    """Copy-chain agreement summary for one physical configuration."""

    broken_pairs: int
    copy_energy: float     # -(satisfied - broken) = -n_copy_edges + 2*broken
    agreement_pct: float


@dataclass(frozen=True)
class SparsifiedModel:
    """Sparse physical model produced by copy-node replication.

    Physical index layout: copy k of logical spin i sits at ``i * copies + k``.
    A logical edge (i, j) with i < j is carried by physical nodes
    (copy ``j mod copies`` of i, copy ``i mod copies`` of j), which balances
    the physical degrees.  Copies of one logical spin form a chain of
    unit-weight ferromagnetic links scaled by the runtime penalty.
    """

    n_logical: int
    copies: int
    problem_edges: np.ndarray    # (m, 2) int64 physical endpoints
    problem_weights: np.ndarray  # (m,) float64
    copy_edges: np.ndarray       # (k, 2) int64
    h_phys: np.ndarray           # (n_phys,) float64
    copy_of: np.ndarray          # (n_phys, 2) int64 rows (logical, copy)
    color_of: np.ndarray = field(default=None)   # filled in __post_init__
    # derived adjacency, computed once
    adj_indptr: np.ndarray = field(default=None, repr=False, compare=False)
    adj_indices: np.ndarray = field(default=None, repr=False, compare=False)
    adj_weights: np.ndarray = field(default=None, repr=False, compare=False)
    copy_indptr: np.ndarray = field(default=None, repr=False, compare=False)
    copy_indices: np.ndarray = field(default=None, repr=False, compare=False)
    update_order: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        n_phys = self.n_logical * self.copies
        edges = np.asarray(self.problem_edges, dtype=np.int64).reshape(-1, 2)
        weights = np.asarray(self.problem_weights, dtype=np.float64)
        cedges = np.asarray(self.copy_edges, dtype=np.int64).reshape(-1, 2)
        if weights.shape != (edges.shape[0],):
            raise ValueError("one weight per problem edge required")
        for arr in (edges, cedges):
            if arr.size and (arr.min() < 0 or arr.max() >= n_phys):
                raise ValueError("edge endpoint out of range")
        if edges.size and np.any(edges[:, 0] == edges[:, 1]):
            raise ValueError("self edges are not allowed")
        object.__setattr__(self, "problem_edges", edges)
        object.__setattr__(self, "problem_weights", weights)
        object.__setattr__(self, "copy_edges", cedges)
        object.__setattr__(self, "h_phys", np.asarray(self.h_phys, dtype=np.float64))
        object.__setattr__(self, "copy_of", np.asarray(self.copy_of, dtype=np.int64))
        if self.h_phys.shape != (n_phys,) or self.copy_of.shape != (n_phys, 2):
            raise ValueError("physical bias/copy maps must cover all physical nodes")

        indptr, indices, adj_w = _build_csr(n_phys, edges, weights)
        cindptr, cindices, _ = _build_csr(n_phys, cedges, np.ones(len(cedges)))
        object.__setattr__(self, "adj_indptr", indptr)
        object.__setattr__(self, "adj_indices", indices)
        object.__setattr__(self, "adj_weights", adj_w)
        object.__setattr__(self, "copy_indptr", cindptr)
        object.__setattr__(self, "copy_indices", cindices)

        if self.color_of is None:
            both = np.vstack([edges, cedges]) if cedges.size else edges
            object.__setattr__(self, "color_of", greedy_coloring(n_phys, both))
        else:
            object.__setattr__(self, "color_of", np.asarray(self.color_of, dtype=np.int64))
        # fixed update order: colors ascending, node index ascending within a color
        order = np.lexsort((np.arange(n_phys), self.color_of))
        object.__setattr__(self, "update_order", order.astype(np.int64))

    @property
    def n_phys(self) -> int:
        return self.n_logical * self.copies

    @property
    def n_colors(self) -> int:
        return int(self.color_of.max()) + 1 if self.n_phys else 0

    def phys_index(self, logical: int, copy: int) -> int:
        return logical * self.copies + copy


def _build_csr(n: int, edges: np.ndarray, weights: np.ndarray):
    """Symmetric CSR adjacency from an undirected edge list."""
    if len(edges) == 0:
        return (np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64),
                np.zeros(0, dtype=np.float64))
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    w = np.concatenate([weights, weights])
    order = np.lexsort((dst, src))
    src, dst, w = src[order], dst[order], w[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, dst.astype(np.int64), w.astype(np.float64)


def greedy_coloring(n: int, edges: np.ndarray) -> np.ndarray:
    """Greedy proper coloring, visiting nodes by descending degree (index tie-break)."""
    neighbors = [[] for _ in range(n)]
    for u, v in np.asarray(edges, dtype=np.int64).reshape(-1, 2):
        neighbors[u].append(v)
        neighbors[v].append(u)
    degree = np.array([len(a) for a in neighbors])
    visit = np.lexsort((np.arange(n), -degree))
    colors = np.full(n, -1, dtype=np.int64)
    for node in visit:
        taken = {colors[v] for v in neighbors[node] if colors[v] >= 0}
        c = 0
        while c in taken:
            c += 1
        colors[node] = c
    return colors


def sparsify(model: DenseIsingModel, copies: int, split_bias: bool = True) -> SparsifiedModel:
    """Replicate each logical spin into `copies` physical nodes.

    With ``split_bias`` each copy receives h_i / copies; otherwise copy 0
    carries the full bias.  ``copies=1`` returns a model isomorphic to the
    source with no copy edges.
    """
    if copies < 1:
        raise ValueError("copies must be >= 1")
    n = model.n
    iu, ju = np.triu_indices(n, k=1)
    w = model.j[iu, ju]
    nz = w != 0.0
    iu, ju, w = iu[nz], ju[nz], w[nz]
    pu = iu * copies + (ju % copies)
    pv = ju * copies + (iu % copies)
    problem_edges = np.stack([pu, pv], axis=1).astype(np.int64)

    logical = np.repeat(np.arange(n), copies)
    copy_idx = np.tile(np.arange(copies), n)
    copy_of = np.stack([logical, copy_idx], axis=1)

    if copies > 1:
        base = np.arange(n) * copies
        links = [np.stack([base + k, base + k + 1], axis=1) for k in range(copies - 1)]
        copy_edges = np.vstack(links)
    else:
        copy_edges = np.zeros((0, 2), dtype=np.int64)

    if split_bias:
        h_phys = np.repeat(model.h / copies, copies)
    else:
        h_phys = np.zeros(n * copies)
        h_phys[::copies] = model.h

    return SparsifiedModel(
        n_logical=n, copies=copies,
        problem_edges=problem_edges, problem_weights=w.astype(np.float64),
        copy_edges=copy_edges, h_phys=h_phys, copy_of=copy_of,
    )


def constraint_report(sm: SparsifiedModel, s) -> ConstraintReport:
    """Count broken copy pairs and report the copy-chain agreement."""
    sv = as_spin_vector(s, sm.n_phys)
    k = len(sm.copy_edges)
    if k == 0:
        return ConstraintReport(0, 0.0, 100.0)
    prod = sv[sm.copy_edges[:, 0]].astype(np.int64) * sv[sm.copy_edges[:, 1]]
    broken = int(np.count_nonzero(prod < 0))
    return ConstraintReport(broken, float(-(k - broken) + broken),
                            100.0 * (k - broken) / k)


def sparse_energy_eval(sm: SparsifiedModel, penalty: float, s):
    """Sparse energy at the given copy penalty, with a constraint report.

    E = -sum_e w_e s_u s_v - penalty * sum_c s_u s_v - h_phys . s
    """
    sv = as_spin_vector(s, sm.n_phys)
    f = sv.astype(np.float64)
    e_prob = 0.0
    if len(sm.problem_edges):
        e_prob = -float(sm.problem_weights @ (f[sm.problem_edges[:, 0]] * f[sm.problem_edges[:, 1]]))
    report = constraint_report(sm, sv)
    e = e_prob + penalty * report.copy_energy - float(sm.h_phys @ f)
    return e, report


def problem_energy_parts(sm: SparsifiedModel, states: np.ndarray):
    """Vectorized (e_prob_with_bias, e_copy) for a (n_rep, n_phys) stack of states.

    Total sparse energy of row r at penalty P is ``e_prob[r] + P * e_copy[r]``.
    """
    f = states.astype(np.float64)
    if len(sm.problem_edges):
        pe = -(f[:, sm.problem_edges[:, 0]] * f[:, sm.problem_edges[:, 1]]) @ sm.problem_weights
    else:
        pe = np.zeros(f.shape[0])
    pe = pe - f @ sm.h_phys
    if len(sm.copy_edges):
        ce = -np.sum(f[:, sm.copy_edges[:, 0]] * f[:, sm.copy_edges[:, 1]], axis=1)
    else:
        ce = np.zeros(f.shape[0])
    return pe, ce


def project_majority(sm: SparsifiedModel, s, rng) -> np.ndarray:
    """Collapse copies to logical spins by majority vote, coin-flipping ties."""
    sv = as_spin_vector(s, sm.n_phys)
    sums = sv.reshape(sm.n_logical, sm.copies).sum(axis=1, dtype=np.int64)
    out = np.sign(sums).astype(np.int8)
    ties = np.flatnonzero(out == 0)
    if len(ties):
        u = np.asarray(rng.uniform(size=len(ties)))
        out[ties] = np.where(u >= 0.0, 1, -1)
    return out


def project_majority_batch(sm: SparsifiedModel, states: np.ndarray, rng) -> np.ndarray:
    """Majority-project a (n_rep, n_phys) stack; tie draws follow row-major order."""
    sums = states.reshape(states.shape[0], sm.n_logical, sm.copies).sum(axis=2, dtype=np.int64)
    out = np.sign(sums).astype(np.int8)
    ties = np.flatnonzero(out.ravel() == 0)
    if len(ties):
        u = np.asarray(rng.uniform(size=len(ties)))
        out.ravel()[ties] = np.where(u >= 0.0, 1, -1)
    return out
