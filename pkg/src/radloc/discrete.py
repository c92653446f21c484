"""Discrete radial trees, their reduction to half-line Jacobi matrices, and band spectra.

Generation ``n`` vertices have ``b_n`` children and are joined to them by
edges of weight ``p_n``.  The root branching defaults to ``b_0`` from the word.
Two operators are provided:

* adjacency: ``(A f)(u) = -sum_{v ~ u} p(u, v) f(v)``
* schroedinger: ``(S f)(u) = sum_{v ~ u} p(u, v) (q(u) f(u) - f(v))``

Truncating to depth ``D`` keeps the full weighted degree on the last
generation, so the dense matrix is the compression of the infinite operator
to the ball.  Both reduce to direct sums of tridiagonal blocks with
diagonal ``beta`` and off-diagonal ``-alpha``.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, optimize, sparse

from .cocycle import continuum_steps, discrete_steps, lyapunov_mc
from .furstenberg import exceptional_set_discrete
from .model import EnvironmentWord, SingleGenDistribution, SiteParams, _as_site, sample_word, substream

__all__ = [
    "FiniteTree",
    "build_finite_tree",
    "dense_operator",
    "BreuerBasis",
    "breuer_basis",
    "JacobiMatrix",
    "jacobi_from_word",
    "chain_counts",
    "EquivalenceReport",
    "decomposition_equivalence",
    "fit_vector_decay",
    "LocalizationReport",
    "discrete_localization_suite",
    "BandSet",
    "almost_sure_spectrum_discrete",
    "periodic_spectrum_continuum",
]

MAX_VERTICES = 10 ** 7
MAX_DENSE = 10 ** 4
_REGIMES = ("adjacency", "schroedinger", "general")


def _regime(regime: str) -> str:
    if regime not in _REGIMES:
        raise ValueError(f"unknown regime {regime!r}; expected one of {_REGIMES}")
    return "schroedinger" if regime == "general" else regime


# Finite trees --------------------------------------------------------------------


@dataclass
class FiniteTree:
    """Radial tree of generations ``0..depth`` stored generation by generation.

    Vertices of each generation are contiguous in breadth-first order, so the
    children of the ``i``-th vertex of generation ``g`` are the block
    ``offsets[g+1] + i*b_g + (0..b_g-1)``.
    """

    depth: int
    branchings: np.ndarray
    counts: np.ndarray
    offsets: np.ndarray
    parent: np.ndarray = field(repr=False)
    generation: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return int(self.offsets[-1])

    def children(self, v: int) -> range:
        g = int(self.generation[v])
        if g >= self.depth:
            return range(0)
        b = int(self.branchings[g])
        start = int(self.offsets[g + 1]) + (v - int(self.offsets[g])) * b
        return range(start, start + b)

    def adjacency_lists(self) -> list[list[int]]:
        adj = [[] for _ in range(self.size)]
        for v in range(1, self.size):
            u = int(self.parent[v])
            adj[u].append(v)
            adj[v].append(u)
        return adj

    def address(self, v: int) -> tuple:
        """Path of 1-based child indices from the root."""
        path = []
        while v != 0:
            u = int(self.parent[v])
            path.append(v - self.children(u).start + 1)
            v = u
        return tuple(reversed(path))

    def index(self, path: Sequence[int]) -> int:
        v = 0
        for i in path:
            ch = self.children(v)
            if not 1 <= i <= len(ch):
                raise ValueError(f"invalid address {tuple(path)}")
            v = ch[i - 1]
        return v

    def descendants(self, v: int, g: int) -> range:
        """Index range of the generation-``g`` descendants of ``v``."""
        h = int(self.generation[v])
        lo, hi = v, v + 1
        for k in range(h, g):
            b = int(self.branchings[k])
            base_k, base_k1 = int(self.offsets[k]), int(self.offsets[k + 1])
            lo = base_k1 + (lo - base_k) * b
            hi = base_k1 + (hi - base_k) * b
        return range(lo, hi)


def build_finite_tree(word: EnvironmentWord, depth: int, root_branching: int | None = None) -> FiniteTree:
    if depth < 1:
        raise ValueError("depth must be at least 1")
    if len(word) < depth:
        raise ValueError("word does not cover the requested depth")
    b = np.array([int(word[g].b) for g in range(depth)], dtype=np.int64)
    if root_branching is not None:
        b[0] = int(root_branching)
    counts = np.concatenate([[1], np.cumprod(b)])
    if counts.sum() > MAX_VERTICES:
        raise ValueError(f"tree has {counts.sum()} vertices, above the {MAX_VERTICES} guard")
    offsets = np.concatenate([[0], np.cumsum(counts)])
    gen = np.repeat(np.arange(depth + 1), counts)
    parent = np.full(offsets[-1], -1, dtype=np.int64)
    for g in range(depth):
        kids = np.arange(offsets[g + 1], offsets[g + 2])
        parent[kids] = offsets[g] + (kids - offsets[g + 1]) // b[g]
    return FiniteTree(depth, b, counts, offsets, parent, gen)


def _coefficients(tree: FiniteTree, word: EnvironmentWord, regime: str):
    """Per-generation ``(p_g, q_g)`` with the tree's own branchings."""
    D = tree.depth
    if len(word) < D + 1:
        raise ValueError("word must cover generations 0..depth")
    p = word.p[: D + 1].astype(float)
    q = word.q[: D + 1].astype(float) if regime == "schroedinger" else np.zeros(D + 1)
    return p, q


def dense_operator(tree: FiniteTree, word: EnvironmentWord, regime: str = "adjacency") -> np.ndarray:
    """Dense symmetric matrix of the tree operator compressed to the ball of depth ``tree.depth``."""
    regime = _regime(regime)
    if tree.size > MAX_DENSE:
        raise ValueError(f"dense operator limited to {MAX_DENSE} vertices")
    p, q = _coefficients(tree, word, regime)
    D = tree.depth
    # the last generation keeps the weight of its (cut) children edges
    b_full = np.array([int(word[g].b) for g in range(D + 1)], dtype=float)
    b_full[:D] = tree.branchings
    H = np.zeros((tree.size, tree.size))
    v = np.arange(1, tree.size)
    u = tree.parent[1:]
    w = p[tree.generation[u]]
    H[u, v] = -w
    H[v, u] = -w
    if regime == "schroedinger":
        g = tree.generation
        prev = np.where(g > 0, p[np.maximum(g - 1, 0)], 0.0)
        H[np.arange(tree.size), np.arange(tree.size)] = (b_full[g] * p[g] + prev) * q[g]
    return H


# Jacobi blocks -------------------------------------------------------------------


@dataclass(frozen=True)
class JacobiMatrix:
    """Tridiagonal block: ``diag`` = beta, ``offdiag`` = alpha > 0."""

    diag: np.ndarray
    offdiag: np.ndarray

    @property
    def size(self) -> int:
        return len(self.diag)

    def matrix(self, sign: float = 1.0) -> np.ndarray:
        """Dense form with off-diagonals ``sign * alpha``."""
        return np.diag(self.diag) + np.diag(sign * self.offdiag, 1) + np.diag(sign * self.offdiag, -1)

    def operator_block(self) -> np.ndarray:
        """The block the tree operator is conjugate to (off-diagonals ``-alpha``)."""
        return self.matrix(-1.0)

    def eigvalsh(self) -> np.ndarray:
        if self.size == 1:
            return self.diag.copy()
        return linalg.eigh_tridiagonal(self.diag, self.offdiag, eigvals_only=True)

    def eigh(self, window=None):
        """Eigenpairs of the operator block, optionally restricted to ``window``."""
        if self.size == 1:
            w, V = self.diag.copy(), np.ones((1, 1))
        elif window is None:
            w, V = linalg.eigh_tridiagonal(self.diag, -self.offdiag)
        else:
            w, V = linalg.eigh_tridiagonal(self.diag, -self.offdiag, select="v", select_range=window)
        return w, V


def jacobi_from_word(word: EnvironmentWord, n: int, size: int, regime: str = "schroedinger",
                     branchings: Sequence[int] | None = None) -> JacobiMatrix:
    """Jacobi block of the chain starting at generation ``n``.

    ``alpha_j = sqrt(b_{n+j}) p_{n+j}`` and
    ``beta_j = (b_{n+j} p_{n+j} + p_{n+j-1}) q_{n+j}`` with ``p_{-1} = 0``.
    ``branchings`` overrides the word's branching numbers (used for a custom
    root).
    """
    regime = _regime(regime)
    if size < 1:
        raise ValueError("size must be positive")
    if len(word) < n + size:
        raise ValueError("word does not cover the block")
    idx = np.arange(n, n + size)
    b = np.asarray(branchings, dtype=float)[idx] if branchings is not None else word.b[idx].astype(float)
    p = word.p[idx]
    alpha = np.sqrt(b[:-1]) * p[:-1]
    if regime == "adjacency":
        beta = np.zeros(size)
    else:
        prev = np.concatenate([[word.p[n - 1] if n > 0 else 0.0], p[:-1]])
        beta = (b * p + prev) * word.q[idx]
    return JacobiMatrix(beta, alpha)


def chain_counts(branchings: Sequence[int], depth: int) -> np.ndarray:
    """Number of Jacobi chains starting at each generation ``0..depth``.

    One chain at the root; ``w(n-1) (b_{n-1} - 1)`` at generation ``n >= 1``,
    with ``w`` the vertex count of a generation.
    """
    b = np.asarray(branchings[:depth], dtype=float)
    w = np.concatenate([[1.0], np.cumprod(b)])
    out = np.empty(depth + 1)
    out[0] = 1.0
    out[1:] = w[:-1] * (b - 1.0)
    return out


# Breuer basis --------------------------------------------------------------------


@dataclass
class BreuerBasis:
    """Orthonormal basis adapted to the radial structure.

    ``matrix`` is sparse with one column per vector; ``labels[i] = (n, s, j)``
    names the chain start ``n``, the seed ``s`` within that generation and the
    position ``j`` along the chain (support in generation ``n + j``).
    """

    matrix: sparse.csc_matrix
    labels: list
    tree: FiniteTree = field(repr=False)

    def __len__(self):
        return self.matrix.shape[1]

    def gram_error(self) -> float:
        G = self.matrix.conj().T @ self.matrix
        D = (G - sparse.identity(G.shape[0], format="csc")).tocsc()
        return float(np.max(np.abs(D.data))) if D.nnz else 0.0

    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.matrix.toarray()))

    def per_generation(self) -> np.ndarray:
        """Number of chains starting at each generation."""
        out = np.zeros(self.tree.depth + 1, dtype=int)
        for n, s, j in self.labels:
            if j == 0:
                out[n] += 1
        return out

    def recursion_error(self) -> float:
        """Largest deviation of ``phi_{j+1}`` from the forward image of ``phi_j``."""
        t = self.tree
        col = {lab: i for i, lab in enumerate(self.labels)}
        M = self.matrix.tocsc()
        err = 0.0
        for (n, s, j), i in col.items():
            nxt = col.get((n, s, j + 1))
            if nxt is None:
                continue
            a = M[:, i].toarray().ravel()
            img = np.zeros_like(a)
            g = n + j
            kids = np.arange(t.offsets[g + 1], t.offsets[g + 2])
            img[kids] = a[t.parent[kids]] / math.sqrt(t.branchings[g])
            err = max(err, float(np.max(np.abs(img - M[:, nxt].toarray().ravel()))))
        return err


def breuer_basis(tree: FiniteTree, word: EnvironmentWord | None = None) -> BreuerBasis:
    """Seed with sibling Fourier modes and extend forward by ``phi(v) = phi(parent v)/sqrt(b)``."""
    D = tree.depth
    rows, cols, vals, labels = [], [], [], []

    def extend(n, s, seed_idx, seed_val):
        idx, val = seed_idx, seed_val
        for j in range(D - n + 1):
            c = len(labels)
            rows.append(idx)
            cols.append(np.full(len(idx), c))
            vals.append(val)
            labels.append((n, s, j))
            g = n + j
            if g == D:
                break
            b = int(tree.branchings[g])
            base, base1 = tree.offsets[g], tree.offsets[g + 1]
            idx = (base1 + (idx[:, None] - base) * b + np.arange(b)[None, :]).ravel()
            val = np.repeat(val, b) / math.sqrt(b)

    extend(0, 0, np.array([0]), np.array([1.0 + 0j]))
    for n in range(1, D + 1):
        b = int(tree.branchings[n - 1])
        if b < 2:
            continue
        s = 0
        jj = np.arange(1, b + 1)
        for u in range(tree.offsets[n - 1], tree.offsets[n]):
            kids = np.asarray(tree.children(u))
            for k in range(1, b):
                seed = np.exp(2j * np.pi * jj * k / b) / math.sqrt(b)
                extend(n, s, kids, seed)
                s += 1
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    M = sparse.csc_matrix((v, (r, c)), shape=(tree.size, len(labels)))
    basis = BreuerBasis(M, labels, tree)
    if len(labels) != tree.size:
        raise RuntimeError(f"basis has {len(labels)} vectors for {tree.size} vertices; convention mismatch")
    return basis


# Equivalence oracle --------------------------------------------------------------


@dataclass
class EquivalenceReport:
    passed: bool
    max_eig_gap: float
    conjugation_residual: float | None
    gram_error: float | None
    dense_size: int
    blocks: list
    worst_block: int | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["maxEigGap"] = d.pop("max_eig_gap")
        d["pass"] = d.pop("passed")
        return d


def decomposition_equivalence(tree: FiniteTree, word: EnvironmentWord, regime: str = "adjacency",
                              tol: float = 1e-8, conj_tol: float = 1e-9,
                              check_conjugation: bool = True) -> EquivalenceReport:
    """Compare the dense spectrum with the union of Jacobi block spectra.

    Also conjugates the dense matrix by the Breuer basis and compares with the
    block-diagonal operator (off-diagonals ``-alpha``).
    """
    regime = _regime(regime)
    H = dense_operator(tree, word, regime)
    dense = np.linalg.eigvalsh(H)
    D = tree.depth
    bfull = np.array([int(word[g].b) for g in range(D + 1)])
    bfull[:D] = tree.branchings
    mult = chain_counts(tree.branchings, D)
    blocks, pooled, owner = [], [], []
    jac = {}
    for n in range(D + 1):
        m = int(round(mult[n]))
        if m == 0:
            continue
        J = jacobi_from_word(word, n, D - n + 1, regime, branchings=bfull)
        jac[n] = J
        ev = np.linalg.eigvalsh(J.operator_block())
        blocks.append({"start": n, "multiplicity": m, "size": J.size})
        for _ in range(m):
            pooled.append(ev)
            owner.append(np.full(ev.size, n))
    pooled = np.concatenate(pooled)
    owner = np.concatenate(owner)
    if pooled.size != dense.size:
        return EquivalenceReport(False, math.inf, None, None, int(dense.size), blocks, None)
    order = np.argsort(pooled)
    gaps = np.abs(dense - pooled[order])
    worst = int(np.argmax(gaps))
    gap = float(gaps[worst])
    conj = gram = None
    if check_conjugation:
        B = breuer_basis(tree, word)
        gram = B.gram_error()
        Phi = B.matrix
        C = (Phi.conj().T @ sparse.csr_matrix(H) @ Phi).tocsr()
        start = {}
        for i, (n, s, j) in enumerate(B.labels):
            start.setdefault((n, s), i)
        rows, cols, vals = [], [], []
        for (n, s), i0 in start.items():
            J = jac[n]
            k = np.arange(J.size)
            rows += [i0 + k, i0 + k[:-1], i0 + k[1:]]
            cols += [i0 + k, i0 + k[1:], i0 + k[:-1]]
            vals += [J.diag, -J.offdiag, -J.offdiag]
        T = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=C.shape)
        diff = C - T
        conj = float(np.max(np.abs(diff.data))) if diff.nnz else 0.0
    passed = gap < tol and (conj is None or conj < conj_tol)
    return EquivalenceReport(bool(passed), gap, conj, gram, int(dense.size), blocks,
                             int(owner[order][worst]))


# Localization --------------------------------------------------------------------


def fit_vector_decay(v, min_distance: int = 3, floor_rel: float = 1e-12, min_points: int = 10):
    """Exponential decay rate of a vector away from its peak.

    The envelope is the maximum of ``|v|`` over three consecutive sites.
    Points on both sides of the peak above ``floor_rel`` times the peak enter a
    least-squares fit of ``log envelope`` against distance.  Returns
    ``(rate, r_squared, peak)``; ``rate`` is ``nan`` without enough points.
    """
    a = np.abs(np.asarray(v))
    pad = np.concatenate([[0.0], a, [0.0]])
    env = np.maximum(np.maximum(pad[:-2], pad[1:-1]), pad[2:])
    c = int(np.argmax(a))
    d = np.abs(np.arange(a.size) - c)
    keep = (d >= min_distance) & (env > floor_rel * env[c])
    if keep.sum() < min_points:
        return math.nan, 0.0, c
    X, Y = d[keep].astype(float), np.log(env[keep])
    slope, icpt = np.polyfit(X, Y, 1)
    resid = Y - slope * X - icpt
    ss = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss if ss > 0 else 0.0
    return float(-slope), r2, c


@dataclass
class LocalizationReport:
    window: tuple
    regime: str
    n: int
    rates: list
    median_rate: float
    lyapunov_center: float
    lyapunov_min: float
    rate_rel_error: float
    kernel_rate: float
    kernel_decays: bool
    tree_tail_slope: float
    tree_tail_decays: bool

    @property
    def kernel_below_lyapunov(self) -> bool:
        return self.kernel_rate < self.lyapunov_min

    def to_dict(self) -> dict:
        return asdict(self)


def _kernel_rate(K, floor_rel=1e-12):
    x = np.arange(K.size)
    keep = (K > floor_rel * K.max()) & (x >= 2)
    if keep.sum() < 5:
        return math.nan
    return float(-np.polyfit(x[keep], np.log(K[keep]), 1)[0])


def discrete_localization_suite(dist: SingleGenDistribution, window, n: int = 1000, trials: int = 5,
                                seed: int = 0, regime: str = "adjacency", margin: float = 0.1,
                                lyapunov_n: int = 10000, lyapunov_trials: int = 50) -> LocalizationReport:
    """Eigenvector decay, off-diagonal kernel decay and its lift to the tree, for sampled words.

    (a) Decay rates of eigenvectors of the root Jacobi block with energies in
    the window, against the discrete Lyapunov exponent at the centre.
    (b) ``K(x) = sum_k |phi_k(x) phi_k(0)|`` bounds the time-uniform kernel
    between the root and generation ``x``; its decay rate is fitted.
    (c) On the tree the bound at a vertex of generation ``r`` is
    ``K(r) / sqrt(w(r))``; the squared tail ``sum_{|x| >= R}`` equals
    ``sum_{r >= R} K(r)^2`` and must decay in ``R``.
    """
    regime = _regime(regime)
    lo, hi = float(window[0]), float(window[1])
    exc = exceptional_set_discrete(dist, regime=regime)
    for e in exc.energies:
        if lo - margin < e < hi + margin:
            raise ValueError(f"window lies within {margin} of the exceptional energy {e}")
    rates, Ks, tails = [], [], []
    for t in range(trials):
        word = sample_word(dist, n + 1, seed=int(substream(seed, t).integers(2 ** 63)))
        J = jacobi_from_word(word, 0, n, regime)
        w, V = J.eigh((lo, hi))
        for k in range(w.size):
            r, r2, _ = fit_vector_decay(V[:, k])
            if math.isfinite(r):
                rates.append(r)
        K = np.sum(np.abs(V * V[0:1, :]), axis=1)
        Ks.append(K)
        tail2 = np.cumsum((K ** 2)[::-1])[::-1]
        tails.append(_kernel_rate(tail2))
    Kmean = np.mean(Ks, axis=0)
    kernel_rate = _kernel_rate(Kmean)
    centers = np.linspace(lo, hi, 5)
    Ls = [lyapunov_mc(E, dist, kind="discrete", n=lyapunov_n, trials=lyapunov_trials, seed=seed).value
          for E in centers]
    Lc = Ls[2]
    med = float(np.median(rates)) if rates else math.nan
    tail_slope = float(np.nanmedian(tails))
    return LocalizationReport((lo, hi), regime, n, [float(r) for r in rates], med, float(Lc), float(min(Ls)),
                              abs(med - Lc) / Lc, kernel_rate, bool(kernel_rate > 0), -tail_slope,
                              bool(tail_slope > 0))


# Band spectra --------------------------------------------------------------------


@dataclass
class BandSet:
    """Finite union of closed intervals, kept sorted and merged."""

    intervals: list

    def __post_init__(self):
        iv = sorted((float(a), float(b)) for a, b in self.intervals)
        merged = []
        for a, b in iv:
            if merged and a <= merged[-1][1] + 1e-12:
                merged[-1] = (merged[-1][0], max(merged[-1][1], b))
            else:
                merged.append((a, b))
        self.intervals = merged

    def __iter__(self):
        return iter(self.intervals)

    def __len__(self):
        return len(self.intervals)

    def union(self, other: "BandSet") -> "BandSet":
        return BandSet(self.intervals + list(other.intervals))

    @property
    def measure(self) -> float:
        return float(sum(b - a for a, b in self.intervals))

    def contains_point(self, x: float, tol: float = 0.0) -> bool:
        return any(a - tol <= x <= b + tol for a, b in self.intervals)

    def issubset(self, other: "BandSet", tol: float = 1e-9) -> bool:
        return all(any(c - tol <= a and b <= d + tol for c, d in other.intervals) for a, b in self.intervals)

    def _dist_to(self, x: float) -> float:
        return min(0.0 if a <= x <= b else min(abs(x - a), abs(x - b)) for a, b in self.intervals)

    def hausdorff(self, other: "BandSet") -> float:
        """Hausdorff distance; the extremes are attained at interval endpoints."""
        if not self.intervals or not other.intervals:
            return math.inf

        def one_sided(A, B):
            worst = 0.0
            for a, b in A.intervals:
                worst = max(worst, B._dist_to(a), B._dist_to(b))
            # points of A inside gaps of B: the gap midpoints are the worst
            for (c0, d0), (c1, d1) in zip(B.intervals, B.intervals[1:]):
                mid = 0.5 * (d0 + c1)
                if A.contains_point(mid):
                    worst = max(worst, B._dist_to(mid))
                for a, b in A.intervals:
                    lo, hi = max(a, d0), min(b, c1)
                    if lo <= hi:
                        x = min(max(mid, lo), hi)
                        worst = max(worst, B._dist_to(x))
            return worst

        return max(one_sided(self, other), one_sided(other, self))

    def to_rows(self):
        return [(a, b) for a, b in self.intervals]


def _bands_from_trace(trace, window, step: float, xtol: float = 1e-13) -> BandSet:
    lo, hi = float(window[0]), float(window[1])
    m = max(2, int(math.ceil((hi - lo) / step)) + 1)
    E = np.linspace(lo, hi, m)
    tr = trace(E)
    inside = np.abs(tr) <= 2.0 + 1e-12
    intervals = []

    def edge(a, b):
        ta = float(trace(np.array([a]))[0])
        tb = float(trace(np.array([b]))[0])
        s = 2.0 if max(ta, tb) > 2.0 else -2.0
        if abs(ta) <= 2:
            s = math.copysign(2.0, tb)
        f = lambda e: float(trace(np.array([e]))[0]) - s
        if f(a) * f(b) > 0:
            return a if abs(ta) <= 2 else b
        return optimize.brentq(f, a, b, xtol=xtol, rtol=4 * np.finfo(float).eps)

    i = 0
    while i < m:
        if not inside[i]:
            i += 1
            continue
        j = i
        while j + 1 < m and inside[j + 1]:
            j += 1
        a = E[i] if i == 0 else edge(E[i - 1], E[i])
        b = E[j] if j == m - 1 else edge(E[j], E[j + 1])
        intervals.append((a, b))
        i = j + 1
    return BandSet(intervals)


def _discrete_trace(cell: Sequence[SiteParams], regime: str):
    b = np.array([s.b for s in cell], dtype=float)
    p = np.array([s.p for s in cell])
    q = np.array([s.q for s in cell]) if regime == "schroedinger" else np.zeros(len(cell))
    prev = np.roll(p, 1)

    def trace(E):
        E = np.asarray(E, dtype=float)
        P = np.broadcast_to(np.eye(2), E.shape + (2, 2)).copy()
        for j in range(len(cell)):
            P = discrete_steps(E, b[j], p[j], q[j], prev[j]) @ P
        return P[..., 0, 0] + P[..., 1, 1]

    return trace


def almost_sure_spectrum_discrete(dist: SingleGenDistribution, period_limit: int, window=None,
                                  regime: str = "adjacency", step: float = 1e-3) -> BandSet:
    """Union of band spectra of all periodic words with cell length ``<= period_limit``.

    Cells cycle through every word over the atoms, with the coupling of each
    vertex using the weight of the preceding edge cyclically.  Only the band
    (essential) part is captured.
    """
    regime = _regime(regime)
    if regime != "adjacency":
        warnings.warn("the deterministic-spectrum formula is established for the adjacency regime only",
                      RuntimeWarning)
    atoms = list(dist.atoms)
    if window is None:
        amax = max(math.sqrt(s.b) * s.p for s in atoms)
        qmax = max(abs((s.b * s.p + max(t.p for t in atoms)) * s.q) for s in atoms) if regime != "adjacency" else 0.0
        R = 2 * amax + qmax + 0.5
        window = (-R, R)
    out = BandSet([])
    seen = set()
    for L in range(1, period_limit + 1):
        for cell in itertools.product(range(len(atoms)), repeat=L):
            key = min(cell[i:] + cell[:i] for i in range(L))
            if key in seen:
                continue
            seen.add(key)
            out = out.union(_bands_from_trace(_discrete_trace([atoms[i] for i in cell], regime), window, step))
    return out


def periodic_spectrum_continuum(cell: Sequence, window, points_per_phase: int = 40) -> BandSet:
    """Bands ``{E in window : |trace of the cell transfer product| <= 2}``.

    The scan step keeps the phase ``sqrt|E| * sum(ell)`` change per step
    below ``1 / points_per_phase``; edges are refined by bisection.
    """
    cell = [_as_site(s) for s in cell]
    if not cell:
        raise ValueError("cell must be nonempty")
    b = np.array([s.b for s in cell], dtype=float)
    ell = np.array([s.ell for s in cell])
    q = np.array([s.q for s in cell])

    def trace(E):
        E = np.asarray(E, dtype=float)
        P = np.broadcast_to(np.eye(2), E.shape + (2, 2)).copy()
        for j in range(len(cell)):
            P = continuum_steps(E, b[j], ell[j], q[j]) @ P
        return P[..., 0, 0] + P[..., 1, 1]

    lo, hi = float(window[0]), float(window[1])
    total = float(ell.sum())
    kmax = math.sqrt(max(abs(lo), abs(hi), 1.0))
    # d(sqrt E) = dE / (2 sqrt E); bound the phase change per step
    step = 2 * kmax / (total * points_per_phase) * min(1.0, kmax) / kmax
    step = min(step, (hi - lo) / 50)
    return _bands_from_trace(trace, (lo, hi), step)
