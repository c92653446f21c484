"""Half-line problems on ``[t_0, t_n]`` with Kirchhoff vertices.

The truncated operator has a Dirichlet condition at ``t_0^+`` and a Neumann
condition at ``t_n^-`` (imposed before the vertex maps at ``t_n``).

Eigenvalues are located by counting: a Pruefer angle ``phi`` of the Dirichlet
solution is tracked across edges and vertices, and the number of
eigenvalues below ``E`` equals the number of points ``pi/2 + m pi`` passed by
``phi(t_n^-)``.  Counting never misses closely spaced pairs, which are
common for localized states.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .cocycle import continuum_step, cs_functions
from .model import EnvironmentWord, TreeGeometry

__all__ = [
    "HalfLineProfile",
    "ShootValue",
    "TruncatedSpectrum",
    "DecayFit",
    "shoot",
    "neumann_shooting_function",
    "eigenvalue_count",
    "truncated_eigenvalues",
    "greens_function",
    "wronskian_pair",
    "eigenfunction_profile",
    "eigenpairs",
    "decay_rate_fit",
    "dynamical_moment",
    "quadratic_psi",
]

EPS_FLOOR = 1e-300
TAIL_FLOOR = 1e-250
_GL_X, _GL_W = np.polynomial.legendre.leggauss(5)


# Profiles -------------------------------------------------------------------------


@dataclass
class HalfLineProfile:
    """Boundary data ``(u(t_j^+), u'(t_j^+))``, ``j = 0..n``, stored as mantissa times ``exp(log_scale)``.

    ``origin`` is the radius of the left endpoint (nonzero for shifted
    problems on a tree).  ``residual`` is the eigen-residual when the profile
    comes from :func:`eigenfunction_profile`.
    """

    energy: float
    data: np.ndarray
    log_scale: np.ndarray
    word: EnvironmentWord = field(repr=False)
    normalization: str = "none"
    origin: float = 0.0
    residual: float | None = None
    stitch: int | None = None

    @property
    def n(self) -> int:
        return len(self.data) - 1

    @property
    def positions(self) -> np.ndarray:
        return self.origin + np.concatenate([[0.0], np.cumsum(self.word.ell[: self.n])])

    @property
    def boundary_data(self) -> np.ndarray:
        """Plain ``(n + 1, 2)`` array (entries may under- or overflow for long words)."""
        with np.errstate(over="ignore", under="ignore"):
            return self.data * np.exp(self.log_scale)[:, None]

    def log_abs(self, component: int = 0) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.data[:, component])) + self.log_scale

    def log_amplitude(self) -> np.ndarray:
        """``log sqrt(u^2 + u'^2 / E)`` (plain ``|(u, u')|`` for ``E <= 1``)."""
        k2 = max(self.energy, 1.0)
        with np.errstate(divide="ignore"):
            return 0.5 * np.log(self.data[:, 0] ** 2 + self.data[:, 1] ** 2 / k2) + self.log_scale

    def left_limits(self) -> np.ndarray:
        """``(u(t_j^-), u'(t_j^-))`` for ``j = 1..n`` from the edge propagation of ``j - 1``."""
        bd = self.boundary_data
        out = np.empty((self.n, 2))
        c, s = cs_functions(self.energy, self.word.ell[: self.n])
        out[:, 0] = c * bd[:-1, 0] + s * bd[:-1, 1]
        out[:, 1] = -self.energy * s * bd[:-1, 0] + c * bd[:-1, 1]
        return out

    def scaled(self, factor_log: float, sign: float = 1.0, normalization: str | None = None) -> "HalfLineProfile":
        return replace(self, data=sign * self.data, log_scale=self.log_scale + factor_log,
                       normalization=normalization or self.normalization)

    def __mul__(self, c: float) -> "HalfLineProfile":
        if c == 0:
            return replace(self, data=np.zeros_like(self.data))
        return self.scaled(math.log(abs(c)), math.copysign(1.0, c))

    __rmul__ = __mul__

    def boundary_l2_log(self) -> float:
        v = np.log(np.sum(self.data ** 2, axis=1)) + 2 * self.log_scale
        return 0.5 * _logsumexp(v)

    def evaluate(self, x, derivative: bool = False) -> np.ndarray:
        """Values (or derivatives) at radii ``x`` via the edge interpolation."""
        x = np.asarray(x, dtype=float)
        t = self.positions
        j = np.clip(np.searchsorted(t, x, side="left"), 1, self.n)
        loc = x - t[j - 1]
        c, s = cs_functions(self.energy, loc)
        u, v = self.data[j - 1, 0], self.data[j - 1, 1]
        with np.errstate(over="ignore", under="ignore"):
            sc = np.exp(self.log_scale[j - 1])
        if derivative:
            return (-self.energy * s * u + c * v) * sc
        return (c * u + s * v) * sc

    def quadrature(self, max_phase: float = 0.25):
        """Gauss-Legendre nodes, weights and values of the profile on every edge.

        Edges are split so that ``sqrt|E| h <= max_phase``; returns
        ``(x, w, f)`` with ``f`` scaled by ``exp(-ref)`` and ``ref`` the largest
        log scale, to avoid overflow.  Returns ``(x, w, f, ref)``.
        """
        ell = self.word.ell[: self.n]
        k = math.sqrt(abs(self.energy))
        m = np.maximum(1, np.ceil(k * ell / max_phase)).astype(int)
        edge = np.repeat(np.arange(self.n), m)
        sub = np.concatenate([np.arange(mm) for mm in m])
        h = ell[edge] / m[edge]
        loc = (sub[:, None] + 0.5 + 0.5 * _GL_X[None, :]) * h[:, None]
        w = 0.5 * h[:, None] * _GL_W[None, :]
        c, s = cs_functions(self.energy, loc)
        ref = float(np.max(self.log_scale))
        with np.errstate(under="ignore"):
            sc = np.exp(self.log_scale[edge] - ref)[:, None]
        f = (c * self.data[edge, 0][:, None] + s * self.data[edge, 1][:, None]) * sc
        x = self.positions[edge][:, None] + loc
        return x.ravel(), w.ravel(), f.ravel(), ref

    def function_norm_log(self) -> float:
        """``log ||f||_{L^2(t_0, t_n)}``."""
        _, w, f, ref = self.quadrature()
        return 0.5 * math.log(float(np.sum(w * f * f))) + ref

    def normalized(self, kind: str = "function") -> "HalfLineProfile":
        """Rescale to unit L^2 norm (``kind='function'``) or unit l^2 of boundary data (``'l2'``)."""
        if kind == "function":
            return self.scaled(-self.function_norm_log(), normalization="function")
        if kind == "l2":
            return self.scaled(-self.boundary_l2_log(), normalization="l2")
        if kind == "sup":
            return self.scaled(-float(np.max(self.log_abs(0))), normalization="sup")
        raise ValueError(kind)

    def to_rows(self):
        """CSV rows ``(index, t, u, du)``."""
        bd = self.boundary_data
        return [(j, float(t), float(u), float(du)) for j, (t, (u, du)) in enumerate(zip(self.positions, bd))]


def _logsumexp(v):
    v = np.asarray(v, dtype=float)
    m = np.max(v)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.sum(np.exp(v - m))))


# Vectorized shooting ----------------------------------------------------------------


def _renorm(u, v, ls):
    s = np.maximum(np.abs(u), np.abs(v))
    s = np.where(s > 0, s, 1.0)
    return u / s, v / s, ls + np.log(s)


def _shoot_forward(E, word: EnvironmentWord, n: int, init):
    """Forward shots for energies ``E`` (shape ``(K,)``).

    Returns ``post (n+1, K, 2)``, ``post_ls (n+1, K)``, ``pre (n, K, 2)``,
    ``pre_ls (n, K)``, where ``pre[j-1]`` is the left limit at ``t_j``.
    """
    E = np.asarray(E, dtype=float)
    K = E.size
    b, ell, q = word.b[:n], word.ell[:n], word.q[:n]
    init = np.broadcast_to(np.asarray(init, dtype=float), (K, 2))
    u, v = init[:, 0].copy(), init[:, 1].copy()
    ls = np.zeros(K)
    u, v, ls = _renorm(u, v, ls)
    post = np.empty((n + 1, K, 2)); post_ls = np.empty((n + 1, K))
    pre = np.empty((n, K, 2)); pre_ls = np.empty((n, K))
    post[0, :, 0], post[0, :, 1], post_ls[0] = u, v, ls
    c_all, s_all = cs_functions(E[None, :], ell[:, None])
    rb = np.sqrt(b)
    for j in range(n):
        c, s = c_all[j], s_all[j]
        u, v = c * u + s * v, -E * s * u + c * v
        u, v, ls = _renorm(u, v, ls)
        pre[j, :, 0], pre[j, :, 1], pre_ls[j] = u, v, ls
        u, v = rb[j] * u, (v + q[j] * u) / rb[j]
        post[j + 1, :, 0], post[j + 1, :, 1], post_ls[j + 1] = u, v, ls
    return post, post_ls, pre, pre_ls


def _shoot_backward(E, word: EnvironmentWord, n: int):
    """Backward shots from ``(u, u')(t_n^-) = (1, 0)``; same layout as :func:`_shoot_forward`."""
    E = np.asarray(E, dtype=float)
    K = E.size
    b, ell, q = word.b[:n], word.ell[:n], word.q[:n]
    rb = np.sqrt(b)
    post = np.empty((n + 1, K, 2)); post_ls = np.zeros((n + 1, K))
    pre = np.empty((n, K, 2)); pre_ls = np.zeros((n, K))
    u, v, ls = np.ones(K), np.zeros(K), np.zeros(K)
    pre[n - 1, :, 0], pre[n - 1, :, 1] = u, v
    post[n, :, 0], post[n, :, 1] = rb[n - 1] * u, (v + q[n - 1] * u) / rb[n - 1]
    c_all, s_all = cs_functions(E[None, :], ell[:, None])
    for j in range(n - 1, -1, -1):
        # inverse of the edge j + 1 propagation: R(E, -ell)
        c, s = c_all[j], s_all[j]
        u, v = c * u - s * v, E * s * u + c * v
        u, v, ls = _renorm(u, v, ls)
        post[j, :, 0], post[j, :, 1], post_ls[j] = u, v, ls
        if j > 0:
            # undo vertex j: (u-, u'-) = (u+/sqrt b, sqrt b u'+ - q u-)
            um = u / rb[j - 1]
            u, v = um, rb[j - 1] * v - q[j - 1] * um
            pre[j - 1, :, 0], pre[j - 1, :, 1], pre_ls[j - 1] = u, v, ls
    return post, post_ls, pre, pre_ls


def _check_n(word, n):
    if not 1 <= n <= len(word):
        raise ValueError(f"truncation depth {n} out of range 1..{len(word)}")


def shoot(E: float, word: EnvironmentWord, init=(0.0, 1.0), n: int | None = None) -> HalfLineProfile:
    """Propagate boundary data ``init`` at ``t_0^+`` through ``n`` edges and vertices."""
    n = len(word) if n is None else n
    _check_n(word, n)
    if init[0] == 0 and init[1] == 0:
        raise ValueError("initial data must be nonzero")
    post, post_ls, _, _ = _shoot_forward([E], word, n, init)
    return HalfLineProfile(float(E), post[:, 0, :].copy(), post_ls[:, 0].copy(), word[:n])


class ShootValue(NamedTuple):
    """Signed value ``mantissa * exp(log_scale)``."""

    mantissa: float
    log_scale: float

    def __float__(self):
        return self.mantissa * math.exp(self.log_scale) if self.log_scale < 700 else math.copysign(math.inf, self.mantissa)

    @property
    def sign(self) -> float:
        return math.copysign(1.0, self.mantissa) if self.mantissa != 0 else 0.0


def neumann_shooting_function(E: float, word: EnvironmentWord, n: int) -> ShootValue:
    """``u'(t_n^-)`` of the solution with ``u(t_0^+) = 0``, ``u'(t_0^+) = 1``."""
    _check_n(word, n)
    _, _, pre, pre_ls = _shoot_forward([E], word, n, (0.0, 1.0))
    return ShootValue(float(pre[n - 1, 0, 1]), float(pre_ls[n - 1, 0]))


# Pruefer counting --------------------------------------------------------------------


def _prufer(E, word: EnvironmentWord, n: int):
    """Pruefer angle at ``t_n^-`` as ``(K, r)`` with ``phi = K pi + r``, ``0 <= r < pi``.

    For ``E > 0`` the angle is taken in the coordinates ``(u, u'/sqrt E)``,
    where it advances by exactly ``sqrt(E) ell`` along an edge.
    """
    E = np.atleast_1d(np.asarray(E, dtype=float))
    Kc = np.zeros(E.shape, dtype=np.int64)
    r = np.zeros(E.shape)
    b, ell, q = word.b[:n], word.ell[:n], word.q[:n]
    rb = np.sqrt(b)
    pos = E > 0
    if pos.any():
        k = np.sqrt(E[pos])
        kk, rr = Kc[pos], r[pos]
        for j in range(n):
            rr = rr + k * ell[j]
            t = np.floor(rr / np.pi)
            kk += t.astype(np.int64)
            rr = rr - t * np.pi
            if j < n - 1:
                sn, cn = np.sin(rr), np.cos(rr)
                rr = np.arctan2(rb[j] * sn, (cn + (q[j] / k) * sn) / rb[j])
                kk, rr = _fold(kk, rr)
        Kc[pos], r[pos] = kk, rr
    neg = ~pos
    if neg.any():
        En = E[neg]
        kk, rr = Kc[neg], r[neg]
        speed = max(1.0, float(np.max(-En)))
        for j in range(n):
            # |d phi/dx| <= max(1, -E): keep each substep below pi/4
            m = int(math.ceil(ell[j] * speed / (0.25 * math.pi)))
            c, s = cs_functions(En, ell[j] / m)
            for _ in range(m):
                sn, cn = np.sin(rr), np.cos(rr)
                u, v = c * sn + s * cn, -En * s * sn + c * cn
                new = np.mod(np.arctan2(u, v), np.pi)
                rr = rr + (np.mod(new - rr + 0.5 * np.pi, np.pi) - 0.5 * np.pi)
                kk, rr = _fold(kk, rr)
            if j < n - 1:
                sn, cn = np.sin(rr), np.cos(rr)
                rr = np.arctan2(rb[j] * sn, (cn + q[j] * sn) / rb[j])
                kk, rr = _fold(kk, rr)
        Kc[neg], r[neg] = kk, rr
    return Kc, r


def _fold(kk, rr):
    t = np.floor(rr / np.pi)
    return kk + t.astype(np.int64), rr - t * np.pi


def eigenvalue_count(E, word: EnvironmentWord, n: int) -> np.ndarray:
    """Number of truncated eigenvalues strictly below each ``E``."""
    _check_n(word, n)
    K, r = _prufer(E, word, n)
    return K + (r > 0.5 * np.pi)


def _bisect_indices(word, n, idx, lo, hi, tol_rel=4e-16, max_iter=200):
    """Vectorized bisection for the eigenvalues with (1-based) indices ``idx``."""
    lo = lo.astype(float).copy()
    hi = hi.astype(float).copy()
    for _ in range(max_iter):
        width = hi - lo
        act = width > tol_rel * np.maximum(1.0, np.abs(hi)) * 4
        if not act.any():
            break
        mid = 0.5 * (lo[act] + hi[act])
        cnt = eigenvalue_count(mid, word, n)
        above = cnt >= idx[act]
        la, ha = lo[act], hi[act]
        ha = np.where(above, mid, ha)
        la = np.where(above, la, mid)
        lo[act], hi[act] = la, ha
    return 0.5 * (lo + hi)


@dataclass
class TruncatedSpectrum:
    word: EnvironmentWord = field(repr=False)
    n: int
    window: tuple
    eigenvalues: np.ndarray
    residuals: np.ndarray
    flags: list = field(default_factory=list)

    def __len__(self):
        return len(self.eigenvalues)

    def __iter__(self):
        return iter(self.eigenvalues)


def truncated_eigenvalues(word: EnvironmentWord, n: int, window, grid_step: float | None = None,
                          with_residuals: bool = True) -> TruncatedSpectrum:
    """All eigenvalues of the Dirichlet-Neumann truncation in ``window``.

    A scan on a grid (``grid_step``; by default about two cells per
    eigenvalue) brackets each eigenvalue index, and count bisection refines
    to machine precision.  Residuals are normalized eigen-residuals from
    :func:`eigenpairs`.
    """
    _check_n(word, n)
    a, b = map(float, window)
    if not a < b:
        raise ValueError("empty window")
    Na, Nb = eigenvalue_count([a, b], word, n)
    total = int(Nb - Na)
    if grid_step is None:
        cells = max(16, 2 * total)
    else:
        if grid_step <= 0:
            raise ValueError("grid_step must be positive")
        cells = max(1, int(math.ceil((b - a) / grid_step)))
    grid = np.linspace(a, b, cells + 1)
    counts = eigenvalue_count(grid, word, n)
    idx = np.arange(Na + 1, Nb + 1)
    if total == 0:
        ev = np.empty(0)
    else:
        # bracket index k between the last grid point with count < k and the next one
        pos = np.searchsorted(counts, idx, side="left")
        lo = grid[np.maximum(pos - 1, 0)]
        hi = grid[np.minimum(pos, cells)]
        ev = _bisect_indices(word, n, idx, lo, hi)
    flags = []
    if len(ev) > 1:
        close = np.nonzero(np.diff(ev) < 1e-8)[0]
        for i in close:
            flags.append({"flag": "suspected double root", "indices": [int(i), int(i + 1)],
                          "energies": [float(ev[i]), float(ev[i + 1])]})
    res = eigenpairs(word, n, ev, residuals_only=True) if (with_residuals and len(ev)) else np.zeros(len(ev))
    return TruncatedSpectrum(word, n, (a, b), ev, res, flags)


# Eigenfunctions ------------------------------------------------------------------------


def eigenpairs(word: EnvironmentWord, n: int, energies, residuals_only: bool = False):
    """Stitched eigenfunction profiles at (approximate) eigenvalues.

    The forward Dirichlet shot is accurate up to the localization centre and
    the backward Neumann shot beyond it.  The two are joined at the vertex
    maximizing the product of their norms, and the residual is the
    normalized Wronskian there (zero exactly at an eigenvalue).
    """
    E = np.atleast_1d(np.asarray(energies, dtype=float))
    fpost, fls, _, _ = _shoot_forward(E, word, n, (0.0, 1.0))
    bpost, bls, _, _ = _shoot_backward(E, word, n)
    with np.errstate(divide="ignore"):
        A = 0.5 * np.log(np.sum(fpost ** 2, axis=2)) + fls
        B = 0.5 * np.log(np.sum(bpost ** 2, axis=2)) + bls
    # the Wronskian is constant, so its normalized value is smallest where
    # the product of the two norms is largest
    m = np.argmax(A + B, axis=0)
    cols = np.arange(E.size)
    pf = fpost[m, cols]
    pb = bpost[m, cols]
    nf = np.linalg.norm(pf, axis=1)
    nb = np.linalg.norm(pb, axis=1)
    res = np.abs(pf[:, 0] * pb[:, 1] - pf[:, 1] * pb[:, 0]) / (nf * nb)
    if residuals_only:
        return res
    out = []
    wtrunc = word[:n]
    for i in range(E.size):
        mi = int(m[i])
        coef = float(pf[i] @ pb[i]) / float(pb[i] @ pb[i])
        data = np.empty((n + 1, 2))
        ls = np.empty(n + 1)
        data[: mi + 1] = fpost[: mi + 1, i]
        ls[: mi + 1] = fls[: mi + 1, i]
        data[mi + 1:] = math.copysign(1.0, coef) * bpost[mi + 1:, i]
        ls[mi + 1:] = bls[mi + 1:, i] + math.log(abs(coef)) + fls[mi, i] - bls[mi, i]
        prof = HalfLineProfile(float(E[i]), data, ls, wtrunc, "none", 0.0, float(res[i]), mi)
        out.append(prof.normalized("l2"))
    return out


def eigenfunction_profile(word: EnvironmentWord, n: int, E_k: float, tol: float = 1e-8,
                          normalization: str = "l2") -> HalfLineProfile:
    """Eigenfunction at a truncated eigenvalue ``E_k``; unit l^2 boundary data by default.

    Raises ``ValueError`` when the eigen-residual exceeds ``tol`` (for
    instance when ``E_k`` belongs to a different word).
    """
    _check_n(word, n)
    prof = eigenpairs(word, n, [E_k])[0]
    if not prof.residual < tol:
        raise ValueError(f"E = {E_k!r} is not an eigenvalue of this truncation (residual {prof.residual:.3g})")
    return prof.normalized(normalization) if normalization != "l2" else prof


# Green's function --------------------------------------------------------------------


def wronskian_pair(word: EnvironmentWord, n: int, E: float) -> tuple[ShootValue, ShootValue]:
    """``(u_-'(t_n^-), u_+(t_0^+))``: the Wronskian evaluated at both ends."""
    _check_n(word, n)
    _, _, fpre, fpre_ls = _shoot_forward([E], word, n, (0.0, 1.0))
    bpost, bls, _, _ = _shoot_backward([E], word, n)
    return (ShootValue(float(fpre[n - 1, 0, 1]), float(fpre_ls[n - 1, 0])),
            ShootValue(float(bpost[0, 0, 0]), float(bls[0, 0])))


def _eval_log(post, ls, positions, E, x):
    """Sign and log-modulus of a solution at radius ``x``."""
    n = len(positions) - 1
    j = int(np.clip(np.searchsorted(positions, x, side="left"), 1, n))
    c, s = cs_functions(E, x - positions[j - 1])
    val = float(c * post[j - 1, 0] + s * post[j - 1, 1])
    if val == 0:
        return 0.0, -math.inf
    return math.copysign(1.0, val), math.log(abs(val)) + float(ls[j - 1])


def greens_function(word: EnvironmentWord, n: int, E: float, x: float, y: float) -> float:
    """Green function ``u_+(max) u_-(min) / W`` of the truncated problem."""
    _check_n(word, n)
    pos = word.positions()[: n + 1]
    for z in (x, y):
        if not pos[0] <= z <= pos[-1]:
            raise ValueError("points must lie in [t_0, t_n]")
    lo_c, hi_c = eigenvalue_count([E - 1e-8, E + 1e-8], word, n)
    if hi_c != lo_c:
        raise ValueError(f"E = {E} lies within 1e-8 of a truncated eigenvalue")
    fpost, fls, fpre, fpre_ls = _shoot_forward([E], word, n, (0.0, 1.0))
    bpost, bls, _, _ = _shoot_backward([E], word, n)
    W = float(fpre[n - 1, 0, 1]); Wls = float(fpre_ls[n - 1, 0])
    a, b = min(x, y), max(x, y)
    sa, la = _eval_log(fpost[:, 0], fls[:, 0], pos, E, a)
    sb, lb = _eval_log(bpost[:, 0], bls[:, 0], pos, E, b)
    if sa == 0 or sb == 0:
        return 0.0
    return sa * sb * math.copysign(1.0, W) * math.exp(la + lb - math.log(abs(W)) - Wls)


# Decay fits --------------------------------------------------------------------------


class DecayFit(NamedTuple):
    zeta: float
    lam: float
    r_squared: float
    localized: bool


def decay_rate_fit(profile: HalfLineProfile, geometry: TreeGeometry | None = None, use: str = "amplitude",
                   exclude: float = 0.1, min_points: int = 50) -> DecayFit:
    """Fit ``log |u| ~ c - lambda |t - zeta|`` on the tail of a profile.

    ``zeta`` is the radius of the largest value; vertices closer to it than
    ``exclude`` times the largest distance are skipped, as are values below
    ``1e-250``.  ``use='amplitude'`` fits the local oscillation amplitude
    ``sqrt(u^2 + u'^2/E)`` which avoids spurious dips at nodes; ``use='value'``
    fits ``|u(t_j^+)|``.  ``localized`` requires a decay by at least ``e^5``
    over the tail and ``r_squared >= 0.5``.
    """
    t = geometry.positions[: profile.n + 1] + profile.origin if geometry is not None else profile.positions
    logv = profile.log_amplitude() if use == "amplitude" else profile.log_abs(0)
    top = np.max(logv)
    if not np.isfinite(top):
        raise ValueError("profile vanishes identically")
    logv = logv - top
    j0 = int(np.argmax(logv))
    zeta = float(t[j0])
    dist = np.abs(t - zeta)
    keep = (dist >= exclude * dist.max()) & (logv > math.log(TAIL_FLOOR))
    if keep.sum() < min_points:
        raise ValueError(f"only {int(keep.sum())} tail points beyond the peak; need {min_points}")
    y = np.logaddexp(logv[keep], math.log(EPS_FLOOR))
    X = dist[keep]
    slope, icpt = np.polyfit(X, y, 1)
    resid = y - (slope * X + icpt)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss if ss > 0 else 0.0
    lam = float(-slope)
    localized = lam * float(X.max() - X.min()) > 5.0 and r2 >= 0.5
    return DecayFit(zeta, lam, r2, bool(localized))


# Dynamical moments -------------------------------------------------------------------


def quadratic_psi(coeffs: np.ndarray, word: EnvironmentWord) -> Callable:
    """Callable for per-edge quadratics ``c0 + c1 s + c2 s^2`` with ``s`` the offset from the edge start."""
    coeffs = np.asarray(coeffs, dtype=float)
    t = word.positions()

    def psi(x):
        x = np.asarray(x, dtype=float)
        j = np.clip(np.searchsorted(t, x, side="left"), 1, len(t) - 1)
        inside = j - 1 < len(coeffs)
        jj = np.minimum(j - 1, len(coeffs) - 1)
        s = x - t[j - 1]
        val = coeffs[jj, 0] + coeffs[jj, 1] * s + coeffs[jj, 2] * s * s
        return np.where(inside, val, 0.0)

    return psi


def _moment_terms(prof: HalfLineProfile, p: float, psi, absolute: bool):
    x, w, f, ref = prof.quadrature()
    # profile is function-normalized, so ref is moderate; fold it back in
    with np.errstate(under="ignore"):
        f = f * math.exp(ref)
    ps = psi(x)
    overlap = float(np.sum(w * np.abs(f) * np.abs(ps))) if absolute else abs(float(np.sum(w * f * ps)))
    mom = math.sqrt(float(np.sum(w * x ** (2 * p) * f * f)))
    return overlap, mom


def dynamical_moment(word: EnvironmentWord, n: int, window, p: float, psi, absolute: bool = False,
                     return_terms: bool = False, edge_tol: float = 1e-6):
    """Time-uniform bound ``sum_k |<phi_k, psi>| || |X|^p phi_k ||`` over truncated eigenpairs in ``window``.

    ``psi`` is a callable of the radius or an ``(m, 3)`` array of per-edge
    quadratic coefficients on the first ``m`` edges.  With ``absolute=True``
    the overlaps are replaced by ``int |phi_k| |psi|``.
    """
    if p <= 0:
        raise ValueError("p must be positive")
    if not callable(psi):
        psi = quadratic_psi(psi, word)
    spec = truncated_eigenvalues(word, n, window, with_residuals=False)
    lo, hi = spec.window
    if len(spec.eigenvalues) and (
        np.min(spec.eigenvalues - lo) < edge_tol * (hi - lo) or np.min(hi - spec.eigenvalues) < edge_tol * (hi - lo)
    ):
        warnings.warn("an eigenvalue sits at the window edge; the bound is sensitive to the truncation", RuntimeWarning)
    profiles = eigenpairs(word, n, spec.eigenvalues) if len(spec.eigenvalues) else []
    terms = []
    for prof in profiles:
        prof = prof.normalized("function")
        terms.append(_moment_terms(prof, p, psi, absolute))
    total = float(sum(o * m for o, m in terms))
    if return_terms:
        return total, spec.eigenvalues, terms
    return total
