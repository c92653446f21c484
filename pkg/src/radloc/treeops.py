"""Radial metric trees: lifting half-line functions and checking them on the tree.

A vertex at generation ``g`` is addressed by its path of child indices
(1-based) from the root.  A point on the tree is an edge, named by its far
vertex, plus an offset from the near end.  The continuum root has one child
(``b_0 = 1``); a vertex at generation ``g >= 1`` has ``b_g`` children.

The lift of a half-line function ``f`` on ``[t_g, inf)`` at vertex ``v`` with
Fourier index ``k`` equals ``omega^(j k) f(|x|) / sqrt(w_v(|x|))`` on the
subtree through the ``j``-th child of ``v``, with ``omega = exp(2 pi i / b_g)``.
"""
from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .halfline import (
    HalfLineProfile,
    _GL_W,
    _GL_X,
    eigenpairs,
    truncated_eigenvalues,
)
from .model import EnvironmentWord, TreeGeometry, tree_geometry

__all__ = [
    "VertexAddress",
    "LiftedFunction",
    "lift",
    "kirchhoff_residual",
    "tree_decay_check",
    "TreeDecay",
    "tree_dynamical_moment",
    "vertices_at",
    "edge_quadrature",
    "inner_product",
]


@dataclass(frozen=True)
class VertexAddress:
    path: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "path", tuple(int(i) for i in self.path))
        if any(i < 1 for i in self.path):
            raise ValueError("child indices are 1-based")

    @property
    def generation(self) -> int:
        return len(self.path)

    def child(self, i: int) -> "VertexAddress":
        return VertexAddress(self.path + (i,))

    @property
    def parent(self) -> "VertexAddress":
        if not self.path:
            raise ValueError("the root has no parent")
        return VertexAddress(self.path[:-1])

    def is_descendant_of(self, v: "VertexAddress") -> bool:
        return self.path[: len(v.path)] == v.path

    def validate(self, geometry: TreeGeometry) -> None:
        bs = geometry.branchings
        for g, i in enumerate(self.path):
            if g >= len(bs) or not 1 <= i <= bs[g]:
                raise ValueError(f"address {self.path} invalid at generation {g}")

    def __str__(self):
        return "/" + "/".join(map(str, self.path))


def _addr(v) -> VertexAddress:
    return v if isinstance(v, VertexAddress) else VertexAddress(tuple(v))


def vertices_at(geometry: TreeGeometry, g: int, below: VertexAddress | None = None) -> Iterator[VertexAddress]:
    """All vertices of generation ``g`` (optionally inside the subtree of ``below``)."""
    base = below.path if below is not None else ()
    ranges = [range(1, int(geometry.branchings[h]) + 1) for h in range(len(base), g)]
    for tail in itertools.product(*ranges):
        yield VertexAddress(base + tail)


@dataclass
class LiftedFunction:
    """Lazy lift of a half-line profile; evaluation is on demand."""

    base: VertexAddress
    k: int
    profile: HalfLineProfile = field(repr=False)
    geometry: TreeGeometry = field(repr=False)

    @property
    def g(self) -> int:
        return self.base.generation

    def band_weight(self, h: int) -> float:
        """``w_v`` on generation-``h`` edges: ``w_o(h) / w_o(gen v)``."""
        lgw = self.geometry.log_gen_weights
        return math.exp(lgw[h] - lgw[self.g])

    def amplitude(self, x: VertexAddress) -> complex:
        """Roots-of-unity factor on the branch of ``T_v`` containing ``x`` (0 outside)."""
        if x.generation <= self.g or not x.is_descendant_of(self.base):
            return 0.0
        if self.k == 0:
            return 1.0
        bg = int(self.geometry.branchings[self.g])
        j = x.path[self.g]
        return cmath.exp(2j * math.pi * j * self.k / bg)

    def _local(self, h: int) -> int:
        """Index of generation ``h`` in the shifted profile."""
        return h - self.g

    def __call__(self, x, offset: float) -> complex:
        """Value on the edge ending at ``x`` at distance ``offset`` from its near end."""
        x = _addr(x)
        a = self.amplitude(x)
        if a == 0:
            return 0.0
        h = x.generation
        if self._local(h) > self.profile.n:
            return 0.0
        r = self.geometry.positions[h - 1] + offset
        return a * complex(self.profile.evaluate(r)) / math.sqrt(self.band_weight(h))

    def vertex_limits(self, h: int):
        """Radial data ``(f(t_h^-), f'(t_h^-), f(t_h^+), f'(t_h^+))`` of the profile at generation ``h``."""
        i = self._local(h)
        bd = self.profile.boundary_data
        after = bd[i] if 0 <= i <= self.profile.n else np.zeros(2)
        if 1 <= i <= self.profile.n:
            before = self.profile.left_limits()[i - 1]
        else:
            before = np.zeros(2)
        return before[0], before[1], after[0], after[1]

    def norm_squared(self) -> float:
        """Tree L^2 norm squared; equals the half-line norm squared."""
        _, w, f, ref = self.profile.quadrature()
        return float(np.sum(w * f * f)) * math.exp(2 * ref)

    def to_rows(self, depth: int):
        """Rows ``(generation, path, branch, re, im)`` of vertex values down to ``depth``."""
        rows = []
        for h in range(self.g + 1, depth + 1):
            fm, _, _, _ = self.vertex_limits(h)
            for x in vertices_at(self.geometry, h, self.base):
                val = self.amplitude(x) * fm / math.sqrt(self.band_weight(h))
                branch = x.path[self.g]
                rows.append((h, str(x), branch, float(np.real(val)), float(np.imag(val))))
        return rows


def lift(profile: HalfLineProfile, v, k: int, geometry: TreeGeometry, tol: float = 1e-9) -> LiftedFunction:
    """Lift ``profile`` (a solution on ``[t_g, t_N]``) to the subtree of ``v``."""
    v = _addr(v)
    v.validate(geometry)
    g = v.generation
    bg = int(geometry.branchings[g])
    if g == 0:
        if k != 0:
            raise ValueError("the root lift has k = 0")
    elif not 1 <= k <= bg - 1:
        raise ValueError(f"k must lie in 1..{bg - 1}")
    if abs(profile.origin - geometry.positions[g]) > 1e-9 * max(1.0, geometry.positions[g]):
        raise ValueError("profile does not start at the radius of v")
    scale = float(np.max(np.abs(profile.boundary_data)))
    if abs(profile.boundary_data[0, 0]) > tol * scale:
        raise ValueError("profile lacks the Dirichlet start at its base vertex")
    return LiftedFunction(v, int(k), profile, geometry)


def kirchhoff_residual(fn: LiftedFunction, x, geometry: TreeGeometry | None = None) -> tuple[float, float]:
    """Continuity and flux residuals of the lifted function at vertex ``x``.

    Left limits at ``t_h`` come from propagating the data at ``t_{h-1}^+`` across
    edge ``h``, right limits from the data at ``t_h^+``.  The flux residual is
    ``|sum of derivatives pointing into the incident edges - q f(x)|``.  At the
    root only the Dirichlet value is checked (reported as continuity).
    """
    geometry = geometry or fn.geometry
    x = _addr(x)
    h = x.generation
    bs = geometry.branchings
    if h >= len(bs):
        raise ValueError("vertex beyond the word")
    q = fn.profile.word.q
    fm, dfm, fp, dfp = fn.vertex_limits(h)
    parent_val = parent_der = 0.0
    if h > 0:
        a = fn.amplitude(x)
        if a != 0:
            W = fn.band_weight(h)
            parent_val = a * fm / math.sqrt(W)
            parent_der = -a * dfm / math.sqrt(W)
    children_vals, children_der = [], []
    if fn._local(h + 1) <= fn.profile.n and h + 1 < len(bs):
        Wc = fn.band_weight(h + 1)
        for i in range(1, int(bs[h]) + 1):
            c = x.child(i)
            a = fn.amplitude(c)
            children_vals.append(a * fp / math.sqrt(Wc))
            children_der.append(a * dfp / math.sqrt(Wc))
    if h == 0:
        return (abs(children_vals[0]) if children_vals else 0.0, 0.0)
    vals = ([parent_val] if h > 0 else []) + children_vals
    cont = max((abs(a - b) for a, b in itertools.combinations(vals, 2)), default=0.0)
    i = fn._local(h)
    qv = q[i - 1] if 1 <= i <= len(q) else 0.0
    fx = parent_val if fn.amplitude(x) != 0 else (children_vals[0] if children_vals else 0.0)
    flux = abs(parent_der + sum(children_der) - qv * fx)
    return float(cont), float(flux)


@dataclass(frozen=True)
class TreeDecay:
    C: float
    lam: float
    holds: bool
    r_squared: float

    def __iter__(self):
        return iter((self.C, self.lam, self.holds))


def tree_decay_check(fn: LiftedFunction, geometry: TreeGeometry | None = None, lam_min: float = 1e-3,
                     r2_min: float = 0.8, slack: float = 0.05) -> TreeDecay:
    """Check ``|f(x)| <= C exp(-lambda |x|) / sqrt(w_o(|x|))`` generation by generation.

    The sample at generation ``h`` is ``sqrt(w_o(h))`` times the largest local
    amplitude of the lift on generation-``h`` vertices.  ``lambda`` is the
    least-squares decay slope beyond the peak and ``C`` the smallest constant
    covering every sample with ``slack``.  ``holds`` requires
    ``lambda > lam_min`` and a tail fit with ``r_squared >= r2_min``.
    """
    geometry = geometry or fn.geometry
    prof = fn.profile
    hs = np.arange(fn.g + 1, fn.g + prof.n + 1)
    # sqrt(w_o(h)) / sqrt(w_v(h)) = sqrt(w_o(g)) on every band
    logs = prof.log_amplitude()[1:] + 0.5 * geometry.log_gen_weights[fn.g]
    t = geometry.positions[hs]
    ok = np.isfinite(logs)
    t, logs = t[ok], logs[ok]
    j0 = int(np.argmax(logs))
    tail = slice(j0 + max(1, (len(t) - j0) // 10), None)
    X, Y = t[tail], logs[tail]
    if len(X) < 3:
        return TreeDecay(math.exp(float(np.max(logs))), 0.0, False, 0.0)
    slope, icpt = np.polyfit(X, Y, 1)
    resid = Y - (slope * X + icpt)
    ss = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss if ss > 0 else 0.0
    lam = float(-slope)
    C = (1 + slack) * math.exp(float(np.max(logs + lam * t)))
    holds = lam > lam_min and r2 >= r2_min
    return TreeDecay(C, lam, bool(holds), r2)


def edge_quadrature(fn: LiftedFunction, depth: int, energy: float | None = None) -> dict:
    """Values at Gauss nodes on every edge of generation ``<= depth`` in the support.

    Returns ``{address: (weights, values)}``; edges are split as in the half-line
    quadrature for ``energy`` (default: the profile's own).
    """
    out = {}
    prof = fn.profile
    k = math.sqrt(abs(prof.energy if energy is None else energy))
    for h in range(fn.g + 1, min(depth, fn.g + prof.n) + 1):
        ell = fn.geometry.positions[h] - fn.geometry.positions[h - 1]
        m = max(1, int(math.ceil(k * ell / 0.25)))
        hh = ell / m
        loc = ((np.arange(m)[:, None] + 0.5 + 0.5 * _GL_X[None, :]) * hh).ravel()
        w = (0.5 * hh * np.tile(_GL_W, m))
        radial = prof.evaluate(fn.geometry.positions[h - 1] + loc) / math.sqrt(fn.band_weight(h))
        for x in vertices_at(fn.geometry, h, fn.base):
            out[x] = (w, fn.amplitude(x) * radial)
    return out


def inner_product(f1: LiftedFunction, f2: LiftedFunction, depth: int) -> complex:
    """Tree ``L^2`` inner product restricted to generations ``<= depth``."""
    E = max(abs(f1.profile.energy), abs(f2.profile.energy))
    q1 = edge_quadrature(f1, depth, E)
    q2 = edge_quadrature(f2, depth, E)
    tot = 0.0 + 0.0j
    for x in q1.keys() & q2.keys():
        w, a = q1[x]
        _, b = q2[x]
        tot += complex(np.sum(w * np.conj(a) * b))
    return tot


def tree_dynamical_moment(word: EnvironmentWord, depth: int, window, p: float, radius: float,
                          return_terms: bool = False):
    """Decomposition bound for ``|| |X|^p chi_I(H) e^{-itH} chi_K ||`` with ``K`` the ball of ``radius``.

    For every generation ``g`` with ``t_g < radius`` (the root always counts)
    and each eigenfunction ``f`` of the truncated problem on ``[t_g, t_depth]``
    with energy in ``window``, the term
    ``m(g) * int_{t_g}^{radius} sqrt(w_v) |f| * || |x|^p f ||`` is added,
    ``m(g)`` being the number of lifts based at generation ``g``.
    """
    geo = tree_geometry(word)
    t = geo.positions
    if depth > len(word):
        raise ValueError("depth exceeds the word length")
    if radius > t[depth] / 2:
        raise ValueError("support radius must not exceed half the truncation radius")
    total = 0.0
    terms = []
    g = 0
    while g < depth and (g == 0 or t[g] < radius):
        mult = float(geo.multiplicities[g])
        if mult > 0:
            shifted = word.shift(g)
            n = depth - g
            spec = truncated_eigenvalues(shifted, n, window, with_residuals=False)
            sub = 0.0
            for prof in eigenpairs(shifted, n, spec.eigenvalues):
                prof.origin = float(t[g])
                prof = prof.normalized("function")
                x, w, f, ref = prof.quadrature()
                f = f * math.exp(ref)
                wv = geo.weight_at(x) / geo.gen_weights[g]
                inside = x <= radius
                A = float(np.sum((w * np.sqrt(wv) * np.abs(f))[inside]))
                B = math.sqrt(float(np.sum(w * x ** (2 * p) * f * f)))
                sub += A * B
            terms.append((g, mult, len(spec.eigenvalues), sub))
            total += mult * sub
        g += 1
    if not terms or terms[0][2] == 0:
        import warnings

        warnings.warn("no eigenvalues of the root problem in the window; increase depth or widen the window",
                      RuntimeWarning)
    return (total, terms) if return_terms else total
