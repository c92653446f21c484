"""SL(2, R) transfer cocycles over i.i.d. words.

Two one-step maps are provided.  The continuum map propagates boundary data
``(f, f')`` across an edge of length ``ell`` and through a Kirchhoff vertex::

    M = D(b) S(q) R(E, ell),   D(b) = diag(sqrt b, 1/sqrt b),   S(q) = [[1, 0], [q, 1]]

The discrete map acts on ``(u_{j+1}, alpha_j u_j)`` for the Jacobi recursion
with ``alpha_j = sqrt(b_j) p_j`` and ``beta_j = (b_j p_j + p_{j-1}) q_j``.

Norms are operator 2-norms throughout.
"""
from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .model import EnvironmentWord, SingleGenDistribution, SiteParams, substream

__all__ = [
    "StepKind",
    "rotation_block",
    "cs_functions",
    "continuum_step",
    "discrete_step",
    "continuum_steps",
    "discrete_steps",
    "word_matrices",
    "norm2",
    "ScaledMat2",
    "transfer_product",
    "LyapunovEstimate",
    "lyapunov_mc",
    "lyapunov_curve",
    "continuum_rate",
    "LipschitzProbe",
    "lipschitz_probe",
    "LDTResult",
    "ldt_empirical",
    "AvalancheResult",
    "avalanche_check",
    "holder_fit",
]

_SERIES_CUTOFF = 1e-8


class StepKind(str, enum.Enum):
    CONTINUUM = "continuum"
    DISCRETE = "discrete"


def _kind(kind) -> StepKind:
    if isinstance(kind, StepKind):
        return kind
    k = str(kind).lower()
    if k.startswith("cont"):
        return StepKind.CONTINUUM
    if k.startswith("disc"):
        return StepKind.DISCRETE
    raise ValueError(f"unknown step map {kind!r}")


def cs_functions(E, x):
    """Fundamental solutions ``c = cos(sqrt(E) x)`` and ``s = sin(sqrt(E) x)/sqrt(E)``.

    Hyperbolic forms for ``E < 0``, a four-term series when ``|E| x^2 < 1e-8``.
    Complex ``E`` is supported (both functions are entire in ``E``).
    """
    E = np.asarray(E)
    x = np.asarray(x, dtype=float)
    E, x = np.broadcast_arrays(E, x)
    z = E * x * x
    small = np.abs(z) < _SERIES_CUTOFF
    c_ser = 1 - z / 2 + z * z / 24 - z * z * z / 720
    s_ser = x * (1 - z / 6 + z * z / 120 - z * z * z / 5040)
    if np.iscomplexobj(E):
        k = np.sqrt(np.where(small, 1.0, E).astype(complex))
        c = np.cos(k * x)
        s = np.sin(k * x) / k
    else:
        E = E.astype(float)
        pos = E > 0
        kp = np.sqrt(np.where(pos, E, 1.0))
        kn = np.sqrt(np.where(pos, 1.0, np.where(small, 1.0, -E)))
        with np.errstate(over="ignore"):
            c = np.where(pos, np.cos(kp * x), np.cosh(kn * x))
            s = np.where(pos, np.sin(kp * x) / kp, np.sinh(kn * x) / kn)
    c = np.where(small, c_ser, c)
    s = np.where(small, s_ser, s)
    return c, s


def _stack(a11, a12, a21, a22):
    a11, a12, a21, a22 = np.broadcast_arrays(a11, a12, a21, a22)
    return np.stack([np.stack([a11, a12], -1), np.stack([a21, a22], -1)], -2)


def rotation_block(E, ell):
    """Free propagation ``[[c, s], [-E s, c]]`` across length ``ell``; shape ``(..., 2, 2)``."""
    c, s = cs_functions(E, ell)
    E = np.asarray(E)
    return _stack(c, s, -E * s, c)


def continuum_steps(E, b, ell, q):
    """Broadcast version of :func:`continuum_step` over arrays of energies and parameters."""
    c, s = cs_functions(E, ell)
    E = np.asarray(E)
    rb = np.sqrt(np.asarray(b, dtype=float))
    q = np.asarray(q, dtype=float)
    return _stack(rb * c, rb * s, (q * c - E * s) / rb, (q * s + c) / rb)


def continuum_step(E, site) -> np.ndarray:
    """One continuum step ``D(b) S(q) R(E, ell)``."""
    b, ell, q = _triple(site)
    return continuum_steps(E, b, ell, q)


def discrete_steps(E, b, p, q, prev_p):
    b = np.asarray(b, dtype=float)
    p = np.asarray(p, dtype=float)
    alpha = np.sqrt(b) * p
    if np.any(alpha == 0):
        raise ValueError("alpha = sqrt(b) p must be nonzero")
    beta = (b * p + np.asarray(prev_p, dtype=float)) * np.asarray(q, dtype=float)
    E = np.asarray(E)
    return _stack((E - beta) / alpha, -1.0 / alpha, alpha, np.zeros_like(alpha))


def discrete_step(E, site, prev_p: float) -> np.ndarray:
    """One Jacobi step ``(1/alpha) [[E - beta, -1], [alpha^2, 0]]``."""
    b, p, q = _triple(site)
    return discrete_steps(E, b, p, q, prev_p)


def _triple(site):
    if isinstance(site, SiteParams):
        return site.b, site.ell, site.q
    b, ell, q = site
    return b, ell, q


def word_matrices(E, word: EnvironmentWord, kind="continuum") -> np.ndarray:
    """All one-step matrices of a word, shape ``(N,) + shape(E) + (2, 2)``."""
    kind = _kind(kind)
    E = np.asarray(E)
    extra = (slice(None),) + (None,) * E.ndim
    b, ell, q = word.b[extra], word.ell[extra], word.q[extra]
    if kind is StepKind.CONTINUUM:
        return continuum_steps(E[None], b, ell, q)
    prev = np.concatenate([[0.0], word.p[:-1]])[extra]
    return discrete_steps(E[None], b, ell, q, prev)


def norm2(A) -> np.ndarray:
    """Operator 2-norm of (a stack of) 2x2 matrices via the closed-form singular values."""
    A = np.asarray(A)
    a, b, c, d = A[..., 0, 0], A[..., 0, 1], A[..., 1, 0], A[..., 1, 1]
    return 0.5 * (np.hypot(a + d, c - b) + np.hypot(a - d, b + c))


def _norm2_scalar(a, b, c, d) -> float:
    return 0.5 * (math.hypot(a + d, c - b) + math.hypot(a - d, b + c))


@dataclass(frozen=True)
class ScaledMat2:
    """Product ``P = exp(m) Q U`` with ``Q`` a rotation and ``U = [[u11, u12], [0, u22]]``.

    ``U`` is kept normalized (largest entry of modulus one) and ``log|det P|``
    is accumulated separately from the per-step QR factors, so norms and
    determinants of long hyperbolic products are available without overflow
    or cancellation.
    """

    cos: float = 1.0
    sin: float = 0.0
    u11: float = 1.0
    u12: float = 0.0
    u22: float = 1.0
    m: float = 0.0
    log_det: float = 0.0
    sign_det: float = 1.0

    def _unit(self) -> tuple[float, float, float, float]:
        c, s = self.cos, self.sin
        return (c * self.u11, c * self.u12 - s * self.u22, s * self.u11, s * self.u12 + c * self.u22)

    @property
    def log_scale(self) -> float:
        """``log ||P||``."""
        return self.m + math.log(_norm2_scalar(*self._unit()))

    log_norm = log_scale

    @property
    def direction(self) -> np.ndarray:
        """``P / ||P||``."""
        u = np.array(self._unit()).reshape(2, 2)
        return u / norm2(u)

    def det(self) -> float:
        return self.sign_det * math.exp(self.log_det)

    def matrix(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.array(self._unit()).reshape(2, 2) * math.exp(self.m)

    def __array__(self, dtype=None, copy=None):
        m = self.matrix()
        return m.astype(dtype) if dtype is not None else m

    def apply(self, v) -> np.ndarray:
        return self.matrix() @ np.asarray(v, dtype=float)

    def times(self, mats, track_det: bool = True) -> "ScaledMat2":
        """Left-multiply by the matrices in ``mats`` (first element applied first)."""
        c, s = self.cos, self.sin
        u11, u12, u22, m = self.u11, self.u12, self.u22, self.m
        ldet, sdet = self.log_det, self.sign_det
        for m11, m12, m21, m22 in mats:
            # M Q = Q' [[r, x], [0, dd]]
            n11 = m11 * c + m12 * s
            n21 = m21 * c + m22 * s
            n12 = m12 * c - m11 * s
            n22 = m22 * c - m21 * s
            r = math.hypot(n11, n21)
            c, s = n11 / r, n21 / r
            x = c * n12 + s * n22
            dd = c * n22 - s * n12
            u11, u12, u22 = r * u11, r * u12 + x * u22, dd * u22
            if track_det:
                ldet += math.log(r * abs(dd))
                if dd < 0:
                    sdet = -sdet
            top = max(abs(u11), abs(u12), abs(u22))
            if top > 1e100 or top < 1e-100:
                u11, u12, u22 = u11 / top, u12 / top, u22 / top
                m += math.log(top)
        top = max(abs(u11), abs(u12), abs(u22))
        return ScaledMat2(c, s, u11 / top, u12 / top, u22 / top, m + math.log(top), ldet, sdet)

    def then(self, other: "ScaledMat2") -> "ScaledMat2":
        """The product ``other @ self``."""
        res = self.times([other._unit()], track_det=False)
        return replace(res, m=res.m + other.m, log_det=self.log_det + other.log_det,
                       sign_det=self.sign_det * other.sign_det)


def transfer_product(E: float, word: EnvironmentWord, kind="continuum") -> ScaledMat2:
    """Ordered product ``M_N ... M_1`` of the one-step matrices of ``word`` at energy ``E``.

    The result converts to a dense array with ``np.asarray`` and exposes
    ``log_scale`` (log of the norm) and ``direction`` for products that
    would overflow.
    """
    if len(word) == 0:
        return ScaledMat2()
    mats = word_matrices(float(E), word, kind).reshape(-1, 4).tolist()
    return ScaledMat2().times(mats)


# Monte-Carlo Lyapunov exponents -------------------------------------------------


@dataclass(frozen=True)
class LyapunovEstimate:
    energy: float
    value: float
    stderr: float
    n: int
    trials: int
    seed: int | None
    kind: str = "continuum"

    def as_row(self) -> tuple:
        return (self.energy, self.value, self.stderr, self.n, self.trials, self.seed)


def _atom_tables(energies, dist: SingleGenDistribution, kind: StepKind):
    """One-step matrices per atom (and per previous atom for the discrete map).

    Returns ``(first, table, pair)``: ``first[a]`` is the first-step matrix,
    ``table[key]`` later steps, and ``pair`` tells whether ``key`` combines the
    current and previous atom indices.
    """
    E = np.asarray(energies, dtype=float)[None, :]
    b = np.array([a.b for a in dist.atoms], float)[:, None]
    ell = np.array([a.ell for a in dist.atoms], float)[:, None]
    q = np.array([a.q for a in dist.atoms], float)[:, None]
    if kind is StepKind.CONTINUUM:
        t = continuum_steps(E, b, ell, q)
        return t, t, False
    first = discrete_steps(E, b, ell, q, 0.0)
    A = len(dist.atoms)
    if np.all(ell == ell[0]) or np.all(q == 0):
        prev = np.broadcast_to(ell[0], ell.shape)
        return first, discrete_steps(E, b, ell, q, prev), False
    # key = current * A + previous
    bb = np.repeat(b, A, axis=0)
    ee = np.repeat(ell, A, axis=0)
    qq = np.repeat(q, A, axis=0)
    pp = np.tile(ell, (A, 1))
    return first, discrete_steps(E, bb, ee, qq, pp), True


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("RADLOC_THREADS", "1")))
    except ValueError:
        return 1


def _run_batch(first, table, pair, cdf, gens, n, checkpoints, block=1024):
    """Log-norms of products for one batch of trials.

    ``first``/``table`` have shape ``(K, nE, 2, 2)``; ``gens[e][t]`` is the
    generator of energy ``e`` and trial ``t``.  Returns an array of shape
    ``(len(checkpoints), nE, trials)``.
    """
    nE = first.shape[1]
    T = len(gens[0])
    A = len(cdf)
    e_off = np.arange(nE)[:, None]
    tab = [np.ascontiguousarray(table[..., i, j]).ravel() for i in range(2) for j in range(2)]
    fst = [np.ascontiguousarray(first[..., i, j]).ravel() for i in range(2) for j in range(2)]
    out = np.empty((len(checkpoints), nE, T))
    a = np.ones((nE, T)); b = np.zeros((nE, T)); c = np.zeros((nE, T)); d = np.ones((nE, T))
    acc = np.zeros((nE, T))
    ck = {m: i for i, m in enumerate(checkpoints)}
    prev = None
    step = 0
    while step < n:
        m = min(block, n - step)
        idx = np.stack([np.stack([draw_atoms(g, cdf, m) for g in row]) for row in gens])
        for k in range(m):
            cur = idx[:, :, k]
            if step == 0:
                M, key = fst, cur
            else:
                M = tab
                key = cur * A + prev if pair else cur
            prev = cur
            flat = key * nE + e_off
            m11 = M[0].take(flat); m12 = M[1].take(flat)
            m21 = M[2].take(flat); m22 = M[3].take(flat)
            a, b, c, d = m11 * a + m12 * c, m11 * b + m12 * d, m21 * a + m22 * c, m21 * b + m22 * d
            step += 1
            if step % 16 == 0 or step in ck:
                s = np.maximum(np.maximum(np.abs(a), np.abs(b)), np.maximum(np.abs(c), np.abs(d)))
                a /= s; b /= s; c /= s; d /= s
                acc += np.log(s)
                if step in ck:
                    out[ck[step]] = acc + np.log(0.5 * (np.hypot(a + d, c - b) + np.hypot(a - d, b + c)))
    return out


def draw_atoms(rng: np.random.Generator, cdf: np.ndarray, m: int) -> np.ndarray:
    """Atom indices by inverse-CDF sampling of uniforms (block-size independent)."""
    return np.minimum(np.searchsorted(cdf, rng.random(m), side="right"), len(cdf) - 1)


def product_log_norms(energies, dist: SingleGenDistribution, kind, n: int, trials: int, seed,
                      checkpoints: Sequence[int] | None = None, stream: tuple = ()) -> np.ndarray:
    """``log ||M_m^E(omega_t)||`` for checkpoints ``m``, energies and trials.

    Trial ``t`` at energy index ``i`` uses the substream keyed ``stream + (i, t)``.
    Result shape is ``(len(checkpoints), len(energies), trials)``.
    """
    kind = _kind(kind)
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    checkpoints = sorted(set(checkpoints or [n]))
    if checkpoints[0] < 1 or checkpoints[-1] > n:
        raise ValueError("checkpoints must lie in 1..n")
    first, table, pair = _atom_tables(energies, dist, kind)
    cdf = np.cumsum(dist.probabilities)
    cdf[-1] = 1.0
    gens = [[substream(seed, *stream, i, t) for t in range(trials)] for i in range(len(energies))]
    workers = min(_threads(), trials)
    if workers <= 1:
        return _run_batch(first, table, pair, cdf, gens, n, checkpoints)
    chunks = np.array_split(np.arange(trials), workers)
    with ThreadPoolExecutor(workers) as ex:
        parts = list(ex.map(lambda ch: _run_batch(first, table, pair, cdf, [[row[t] for t in ch] for row in gens], n, checkpoints), chunks))
    return np.concatenate(parts, axis=2)


def lyapunov_curve(energies, dist: SingleGenDistribution, kind="continuum", n: int = 10_000,
                   trials: int = 50, seed: int | None = 0) -> list[LyapunovEstimate]:
    """Monte-Carlo Lyapunov exponents ``(1/n) E log ||M_n^E||`` on a grid of energies."""
    if n < 1 or trials < 2:
        raise ValueError("need n >= 1 and trials >= 2")
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    if energies.size == 0:
        raise ValueError("empty energy grid")
    F = product_log_norms(energies, dist, kind, n, trials, seed)[0] / n
    vals = F.mean(axis=1)
    errs = F.std(axis=1, ddof=1) / math.sqrt(trials)
    k = _kind(kind).value
    return [LyapunovEstimate(float(E), float(v), float(e), n, trials, seed, k) for E, v, e in zip(energies, vals, errs)]


def lyapunov_mc(E: float, dist: SingleGenDistribution, kind="continuum", n: int = 10_000,
                trials: int = 50, seed: int | None = 0) -> LyapunovEstimate:
    return lyapunov_curve([E], dist, kind, n, trials, seed)[0]


def continuum_rate(L: float, dist: SingleGenDistribution) -> float:
    """Per-unit-length rate ``L / <ell>``."""
    return L / dist.mean("ell")


def holder_fit(estimates: Sequence[LyapunovEstimate]) -> tuple[float, float]:
    """Fit ``|L(E) - L(E')| <= C |E - E'|^beta`` on adjacent grid values.

    Returns ``(C, beta)`` from a log-log least-squares fit of adjacent
    differences, with ``C`` raised so that every pair complies.
    """
    E = np.array([e.energy for e in estimates])
    L = np.array([e.value for e in estimates])
    h = np.abs(np.diff(E))
    dL = np.abs(np.diff(L))
    keep = (h > 0) & (dL > 0)
    if keep.sum() < 2:
        return (0.0, 1.0)
    lh = np.log(h[keep])
    if np.ptp(lh) < 1e-9:
        # a uniform grid carries no information on the exponent
        beta = 1.0
    else:
        beta = float(np.clip(np.polyfit(lh, np.log(dL[keep]), 1)[0], 1e-3, 1.0))
    C = float(np.max(dL[keep] / h[keep] ** beta))
    return C, beta


# Lipschitz, large deviations, avalanche principle --------------------------------


@dataclass(frozen=True)
class LipschitzProbe:
    lhs: float
    bound: float
    rho: float
    C: float
    n: int

    @property
    def holds(self) -> bool:
        return self.lhs <= self.bound

    def __iter__(self):
        return iter((self.lhs, self.bound))


def _dense_product(E, word, kind) -> np.ndarray:
    P = np.eye(2)
    for M in word_matrices(E, word, kind):
        P = M @ P
    return P


def _box_samples(words, E1, E2, kind, k=9):
    sites = [s for w in words for s in w]
    b = [s.b for s in sites]
    ell = [s.ell for s in sites]
    q = [s.q for s in sites]
    bs = np.arange(min(b), max(b) + 1, dtype=float)
    ls = np.linspace(min(ell), max(ell), k)
    qs = np.linspace(min(q), max(q), k)
    Es = np.linspace(min(E1, E2), max(E1, E2), 2 * k - 1)
    G = np.meshgrid(Es, bs, ls, qs, indexing="ij")
    return [g.ravel() for g in G]


def lipschitz_probe(E1: float, E2: float, word1: EnvironmentWord, word2: EnvironmentWord,
                    kind="continuum", margin: float = 1.1) -> LipschitzProbe:
    """Compare ``||M_n^{E1}(w1) - M_n^{E2}(w2)||`` with ``C n rho^(n-1) (|E1-E2| + ||w1-w2||_inf)``.

    ``rho`` (the largest one-step norm) and ``C`` (the one-step Lipschitz
    constant, summed over the coordinates ``E, b, ell, q``) are suprema over
    the parameter box spanned by both words and the energy interval.  They
    are evaluated on a grid with central differences and inflated by
    ``margin``.  For the discrete map the previous weight is taken in the box too.
    """
    kind = _kind(kind)
    n = len(word1)
    if len(word2) != n:
        raise ValueError("words must have equal length")
    if n == 0:
        return LipschitzProbe(0.0, 0.0, 1.0, 0.0, 0)
    lhs = float(norm2(_dense_product(E1, word1, kind) - _dense_product(E2, word2, kind)))
    E, b, ell, q = _box_samples([word1, word2], E1, E2, kind)

    def step(E, b, ell, q):
        if kind is StepKind.CONTINUUM:
            return continuum_steps(E, b, ell, q)
        return discrete_steps(E, b, ell, q, ell)

    rho = margin * float(norm2(step(E, b, ell, q)).max())
    h = 1e-6
    grads = []
    for i in range(4):
        args_p = [E, b, ell, q]
        args_m = [E, b, ell, q]
        args_p[i] = args_p[i] + h
        args_m[i] = args_m[i] - h
        grads.append(norm2(step(*args_p) - step(*args_m)) / (2 * h))
    C = margin * float(sum(g.max() for g in grads))
    if kind is StepKind.DISCRETE:
        # dependence on the previous weight through beta
        C += margin * float(np.max(np.abs(q) / (np.sqrt(b) * ell)))
    dw = max(max(abs(s1.b - s2.b), abs(s1.ell - s2.ell), abs(s1.q - s2.q)) for s1, s2 in zip(word1, word2))
    bound = C * n * max(rho, 1.0) ** (n - 1) * (abs(E1 - E2) + dw)
    return LipschitzProbe(lhs, bound, rho, C, n)


@dataclass(frozen=True)
class LDTResult:
    n_grid: tuple
    probabilities: tuple
    reference: float
    eps: float
    slope: float
    intercept: float
    r_squared: float

    @property
    def eta(self) -> float:
        return -self.slope

    def rows(self):
        return list(zip(self.n_grid, self.probabilities))


def _linfit(x, y):
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if len(x) < 2:
        return float("nan"), float("nan"), float("nan")
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss if ss > 0 else 1.0
    return float(slope), float(icpt), r2


def ldt_empirical(E: float, dist: SingleGenDistribution, kind="continuum", eps: float = 0.1,
                  n_grid: Sequence[int] = (50, 100, 200, 400), trials: int = 2000, seed: int | None = 0,
                  reference: float | None = None, ref_factor: int = 10, ref_trials_factor: int = 4) -> LDTResult:
    """Empirical probabilities ``P(|F_n - L| >= eps)`` with a log-linear decay fit.

    ``L`` is a reference estimate at ``ref_factor * max(n_grid)`` steps with
    ``ref_trials_factor * trials`` trials unless given.  The fit of
    ``log P`` against ``n`` uses the points with nonzero probability.
    """
    if eps <= 0 or trials < 100:
        raise ValueError("need eps > 0 and trials >= 100")
    n_grid = tuple(sorted(int(m) for m in n_grid))
    if reference is None:
        nref = ref_factor * n_grid[-1]
        F = product_log_norms([E], dist, kind, nref, ref_trials_factor * trials, seed, stream=(1,))[0, 0] / nref
        reference = float(F.mean())
    logs = product_log_norms([E], dist, kind, n_grid[-1], trials, seed, checkpoints=n_grid, stream=(0,))[:, 0, :]
    F = logs / np.array(n_grid)[:, None]
    probs = tuple(float(np.mean(np.abs(F[i] - reference) >= eps)) for i in range(len(n_grid)))
    pos = [i for i, p in enumerate(probs) if p > 0]
    slope, icpt, r2 = _linfit([n_grid[i] for i in pos], [math.log(probs[i]) for i in pos])
    return LDTResult(n_grid, probs, reference, eps, slope, icpt, r2)


@dataclass(frozen=True)
class AvalancheResult:
    hypotheses_hold: bool
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        """The conclusion (only claimed when the hypotheses hold)."""
        return (not self.hypotheses_hold) or self.lhs <= self.rhs

    def __iter__(self):
        return iter((self.hypotheses_hold, self.lhs, self.rhs))


def avalanche_check(blocks: Sequence, lam: float, C: float = 10.0) -> AvalancheResult:
    """Check the avalanche principle for blocks ``A_1, ..., A_n`` (applied in that order).

    Blocks may be dense arrays or :class:`ScaledMat2` products.
    """
    n = len(blocks)
    if n < 3:
        raise ValueError("need at least three blocks")
    blocks = [b if isinstance(b, ScaledMat2) else ScaledMat2().times([np.asarray(b, float).ravel().tolist()]) for b in blocks]
    logn = [b.log_norm for b in blocks]

    def pair(i):
        # log ||A_{i+1} A_i||
        return blocks[i].then(blocks[i + 1]).log_norm

    lp = [pair(i) for i in range(n - 1)]
    hyp = min(logn) >= math.log(lam) and lam > n
    if hyp:
        hyp = all(abs(logn[i + 1] + logn[i] - lp[i]) < 0.5 * math.log(lam) for i in range(n - 1))
    total = blocks[0]
    for b in blocks[1:]:
        total = total.then(b)
    lhs = abs(total.log_norm + sum(logn[1:-1]) - sum(lp))
    return AvalancheResult(bool(hyp), float(lhs), C * n / lam)
