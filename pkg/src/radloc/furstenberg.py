"""Commutators of one-step matrices and exceptional energy sets.

For two atoms with one-step matrices ``M_1(E), M_2(E)`` the commutator
``g = M_1 M_2 - M_2 M_1`` is trace free, so ``det g = 0`` is equivalent to
``g`` being nilpotent.  Energies where ``det g`` vanishes for every pair of
atoms are reported as the (candidate) exceptional set.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .cocycle import (
    StepKind,
    _kind,
    continuum_step,
    continuum_steps,
    cs_functions,
    discrete_step,
    discrete_steps,
    lyapunov_mc,
    norm2,
)
from .model import InvalidDistribution, SingleGenDistribution, SiteParams, _as_site, substream

__all__ = [
    "PairAnalysis",
    "ExceptionalSet",
    "commutator",
    "det_commutator",
    "rbm_det_closed_form",
    "rlm_commutator_closed_form",
    "exceptional_set_continuum",
    "exceptional_set_discrete",
    "classify_discrete_pair",
    "elliptic_boundedness_probe",
    "zero_le_block_identity",
]

CERT_TOL = 1e-8


@dataclass(frozen=True)
class PairAnalysis:
    site1: SiteParams
    site2: SiteParams
    energy: float
    g: np.ndarray = field(repr=False)
    det_g: float
    traces: tuple[float, float]

    @property
    def comm_norm(self) -> float:
        return float(norm2(self.g))


def _pair_mats(E, s1, s2, kind, prev_p=1.0):
    kind = _kind(kind)
    if kind is StepKind.CONTINUUM:
        return continuum_step(E, s1), continuum_step(E, s2)
    return discrete_step(E, s1, prev_p), discrete_step(E, s2, prev_p)


def commutator(E: float, s1, s2, kind="continuum", prev_p: float = 1.0) -> PairAnalysis:
    """Commutator ``[M_1, M_2]`` at energy ``E``.

    For the discrete map both matrices use the previous weight ``prev_p``;
    the pair analysis is only used where the weights are constant (``p = 1``)
    or the couplings vanish, and then ``prev_p`` plays no role or equals one.
    """
    s1, s2 = _as_site(s1), _as_site(s2)
    M1, M2 = _pair_mats(E, s1, s2, kind, prev_p)
    g = M1 @ M2 - M2 @ M1
    return PairAnalysis(s1, s2, float(E), g, float(np.linalg.det(g)), (float(np.trace(M1)), float(np.trace(M2))))


def det_commutator(E, s1, s2, kind="continuum", prev_p: float = 1.0):
    """Vectorized ``det [M_1(E), M_2(E)]``; complex ``E`` allowed for the continuum map."""
    s1, s2 = _as_site(s1), _as_site(s2)
    kind = _kind(kind)
    E = np.asarray(E)
    if kind is StepKind.CONTINUUM:
        M1 = continuum_steps(E, s1.b, s1.ell, s1.q)
        M2 = continuum_steps(E, s2.b, s2.ell, s2.q)
    else:
        M1 = discrete_steps(E, s1.b, s1.ell, s1.q, prev_p)
        M2 = discrete_steps(E, s2.b, s2.ell, s2.q, prev_p)
    g = M1 @ M2 - M2 @ M1
    # trace free: det g = -(g11^2 + g12 g21)
    return -(g[..., 0, 0] ** 2 + g[..., 0, 1] * g[..., 1, 0])


def rbm_det_closed_form(E, b1: int, b2: int):
    """``-(b1 - b2)^2 / (b1 b2) sin^2(sqrt E)`` for unit lengths and no coupling."""
    _, s = cs_functions(E, 1.0)
    # sin^2(sqrt E) = E s^2, also valid for E <= 0
    return -((b1 - b2) ** 2) / (b1 * b2) * np.asarray(E) * s * s


def rlm_commutator_closed_form(E: float, b: int, ell1: float, ell2: float) -> np.ndarray:
    """Anti-diagonal commutator for equal branching, no coupling and lengths ``ell1 != ell2``."""
    if ell1 == ell2:
        raise ValueError("lengths must differ")
    _, s = cs_functions(E, ell2 - ell1)
    s = float(s)
    return np.array([[0.0, (b - 1) * s], [(b - 1) / b * E * s, 0.0]])


@dataclass
class ExceptionalSet:
    kind: str
    energies: tuple
    certificates: list
    window: tuple | None = None
    candidate: bool = False

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "energies": list(self.energies), "certificates": self.certificates}
        if self.window is not None:
            d["window"] = list(self.window)
        if self.candidate:
            d["label"] = "candidate set"
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def __len__(self):
        return len(self.energies)

    def __iter__(self):
        return iter(self.energies)


def _continuum_kind(dist: SingleGenDistribution) -> str:
    bs = {a.b for a in dist.atoms}
    ls = {a.ell for a in dist.atoms}
    qs = {a.q for a in dist.atoms}
    if qs == {0.0} and len(ls) == 1 and len(bs) > 1:
        return "continuumRBM"
    if qs == {0.0} and len(bs) == 1 and len(ls) > 1:
        return "continuumRLM"
    return "continuumGeneric"


def _closed_form_zeros(s1: SiteParams, s2: SiteParams, window) -> list[float] | None:
    """Analytic zero sets of ``det g`` for the branching and length models."""
    lo, hi = window
    if s1.q != 0 or s2.q != 0:
        return None
    if s1.ell == s2.ell and s1.b != s2.b:
        period = math.pi / s1.ell
    elif s1.b == s2.b and s1.ell != s2.ell and s1.b > 1:
        period = math.pi / abs(s1.ell - s2.ell)
    else:
        return None
    # zeros at (period k)^2, k >= 1
    kmin = max(1, math.ceil(math.sqrt(max(lo, 0.0)) / period - 1e-12))
    out = []
    k = kmin
    while (period * k) ** 2 <= hi:
        E = (period * k) ** 2
        if lo <= E <= hi:
            out.append(E)
        k += 1
    return out


def _det_derivative(E, s1, s2):
    """d/dE det g by the complex-step method."""
    h = 1e-20
    return np.imag(det_commutator(np.asarray(E) + 1j * h, s1, s2)) / h


def _pair_zeros_numeric(s1, s2, window, grid_step):
    """Zeros of ``det g`` in the window: sign changes plus even-order zeros.

    Even-order zeros (e.g. of ``sin^2`` factors) are found as sign changes of
    the derivative where ``|det g|`` is small, then certified by ``|det g| < 1e-8``.
    """
    lo, hi = window
    m = max(2, int(math.ceil((hi - lo) / grid_step)) + 1)
    E = np.linspace(lo, hi, m)
    f = lambda x: float(det_commutator(x, s1, s2))
    d = det_commutator(E, s1, s2)
    dp = _det_derivative(E, s1, s2)
    scale = max(1.0, float(np.max(np.abs(d))))
    roots = []
    for i in range(m - 1):
        a, b = E[i], E[i + 1]
        if d[i] == 0:
            roots.append(a)
        elif d[i] * d[i + 1] < 0:
            roots.append(brentq(f, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps))
        elif dp[i] * dp[i + 1] < 0:
            # local extremum of det g inside the cell
            r = brentq(lambda x: float(_det_derivative(x, s1, s2)), a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps)
            if abs(f(r)) < CERT_TOL * scale:
                roots.append(r)
    if d[-1] == 0:
        roots.append(E[-1])
    roots = sorted(roots)
    merged = []
    for r in roots:
        if not merged or abs(r - merged[-1]) > 1e-9 * max(1.0, abs(r)):
            merged.append(r)
    return merged


def _intersect(sets, tol=1e-8):
    base = list(sets[0])
    out = []
    for E in base:
        if all(any(abs(E - F) <= tol * max(1.0, abs(E)) for F in other) for other in sets[1:]):
            out.append(E)
    return out


def exceptional_set_continuum(dist: SingleGenDistribution, window=(0.5, 50.0), grid_step: float = 0.01) -> ExceptionalSet:
    """Energies in ``window`` where every pair of atoms has ``det [M_1, M_2] = 0``.

    Each pair is scanned on a grid of step ``grid_step`` and roots are refined
    by bracketing.  For pairs with a closed form (equal lengths, or equal
    branching with no coupling) the analytic zeros are reported and must
    agree with the numerical ones.
    """
    lo, hi = map(float, window)
    if not lo < hi:
        raise ValueError("empty window")
    if grid_step <= 0 or grid_step > 0.01:
        raise ValueError("grid_step must lie in (0, 0.01]")
    if len(dist.atoms) < 2:
        raise InvalidDistribution("need at least two atoms")
    per_pair = []
    certs = {}
    for s1, s2 in itertools.combinations(dist.atoms, 2):
        numeric = _pair_zeros_numeric(s1, s2, (lo, hi), grid_step)
        closed = _closed_form_zeros(s1, s2, (lo, hi))
        if closed is not None:
            if len(closed) != len(numeric) or any(abs(a - b) > 1e-8 * max(1, a) for a, b in zip(closed, numeric)):
                raise RuntimeError(f"closed form {closed} disagrees with bisection {numeric} for pair {s1}, {s2}")
            zeros, how = closed, "analytic formula"
        else:
            zeros, how = numeric, "detG root"
        per_pair.append(zeros)
        for E in zeros:
            certs.setdefault(round(E, 9), []).append(
                {"pair": [s1.to_dict(), s2.to_dict()], "type": how, "detG": float(det_commutator(E, s1, s2))}
            )
    energies = _intersect(per_pair)
    certificates = []
    for E in energies:
        ev = [c for key, cs in certs.items() if abs(key - E) <= 1e-8 * max(1, E) for c in cs]
        s1, s2 = dist.atoms[0], dist.atoms[1]
        tr = [float(np.trace(continuum_step(E, a))) for a in dist.atoms]
        certificates.append({"energy": E, "evidence": ev, "traces": tr})
    return ExceptionalSet(_continuum_kind(dist), tuple(energies), certificates, (lo, hi), candidate=len(dist.atoms) > 2)


# Discrete models -----------------------------------------------------------------


def _case1_det(E, s1: SiteParams, s2: SiteParams):
    b1, b2, q1, q2 = s1.b, s2.b, s1.q, s2.q
    X = (b1 + 1) * q1 - (b2 + 1) * q2
    Y = (b1 - b2) * E + b2 * (b1 + 1) * q1 - b1 * (b2 + 1) * q2
    return (-((b1 - b2) ** 2) - X * Y) / (b1 * b2)


def classify_discrete_pair(s1, s2, regime: str):
    """Case label and exceptional energies of one pair.

    Returns ``(case, energies)`` or ``(None, None)`` when the pair does not
    certify anything (adjacency pair with equal ``p sqrt(b)``).
    """
    s1, s2 = _as_site(s1), _as_site(s2)
    if regime == "adjacency":
        if math.isclose(s1.p * math.sqrt(s1.b), s2.p * math.sqrt(s2.b), rel_tol=0, abs_tol=1e-14):
            return None, None
        return "discreteCase2", [0.0]
    b1, b2 = s1.b, s2.b
    if b1 == b2:
        return "discreteCase1a", []
    X = (b1 + 1) * s1.q - (b2 + 1) * s2.q
    if abs(X) <= 1e-14 * max(1.0, abs((b1 + 1) * s1.q)):
        return "discreteCase1bi", [float((b1 + 1) * s1.q)]
    # det g is affine in E with slope -(b1 - b2) X / (b1 b2)
    E1 = (-((b1 - b2) ** 2) / X - b2 * (b1 + 1) * s1.q + b1 * (b2 + 1) * s2.q) / (b1 - b2)
    f = lambda E: _case1_det(E, s1, s2)
    w = 1.0 + abs(E1)
    a, b = E1 - w, E1 + w
    Eb = brentq(f, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    if abs(Eb - E1) > 1e-9 * w:
        raise RuntimeError(f"closed-form root {E1} disagrees with bisection {Eb}")
    return "discreteCase1bii", [float(E1) + 0.0]


def exceptional_set_discrete(dist: SingleGenDistribution, regime: str = "schroedinger") -> ExceptionalSet:
    """Exceptional energies of a discrete model, intersected over atom pairs.

    ``regime='schroedinger'`` requires ``p = 1`` on every atom;
    ``regime='adjacency'`` requires ``q = 0`` and two atoms with different ``p sqrt(b)``.
    """
    if regime not in ("schroedinger", "adjacency"):
        raise ValueError(f"unknown regime {regime!r}")
    atoms = dist.atoms
    if regime == "schroedinger" and any(a.p != 1.0 for a in atoms):
        raise InvalidDistribution("the Schroedinger regime needs unit edge weights")
    if regime == "adjacency":
        if any(a.q != 0.0 for a in atoms):
            raise InvalidDistribution("the adjacency regime needs zero couplings")
        if len({round(a.p * math.sqrt(a.b), 14) for a in atoms}) < 2:
            raise InvalidDistribution("adjacency regime needs two atoms with distinct p*sqrt(b)")
    results = []
    for s1, s2 in itertools.combinations(atoms, 2):
        case, Es = classify_discrete_pair(s1, s2, regime)
        if case is None:
            continue
        results.append((case, Es, s1, s2))
    if not results:
        raise InvalidDistribution("no pair of atoms satisfies the hypotheses")
    energies = _intersect([r[1] for r in results], tol=1e-12)
    kind = next((r[0] for r in results if len(r[1]) == len(energies)), results[0][0])
    certificates = []
    for E in energies:
        ev = []
        for case, Es, s1, s2 in results:
            if any(abs(E - F) <= 1e-12 * max(1, abs(E)) for F in Es):
                pa = commutator(E, s1, s2, "discrete", prev_p=1.0)
                ev.append({"pair": [s1.to_dict(), s2.to_dict()], "case": case, "detG": pa.det_g, "traces": list(pa.traces)})
        certificates.append({"energy": E, "evidence": ev})
    return ExceptionalSet(kind, tuple(energies), certificates, None, candidate=len(atoms) > 2)


# Ellipticity and zero Lyapunov exponent ------------------------------------------


@dataclass(frozen=True)
class ProbeResult:
    comm_norm: float
    traces: tuple[float, float]
    max_product_norm: float
    log_norm_slope: float

    def __iter__(self):
        return iter((self.comm_norm, self.traces, self.max_product_norm))


def elliptic_boundedness_probe(E: float, s1, s2, kind="continuum", max_n: int = 10_000, trials: int = 20,
                               seed: int | None = 0) -> ProbeResult:
    """Commutator norm, traces and the largest product norm along random words of the pair.

    ``log_norm_slope`` is the least-squares slope of the mean ``log ||M_n||``
    against ``n`` over the second half of the run.
    """
    s1, s2 = _as_site(s1), _as_site(s2)
    M1, M2 = _pair_mats(E, s1, s2, kind)
    g = M1 @ M2 - M2 @ M1
    mats = np.stack([M1, M2])
    best = 0.0
    checkpoints = np.unique(np.linspace(1, max_n, 50).astype(int))
    logs = np.zeros((trials, len(checkpoints)))
    for t in range(trials):
        rng = substream(seed, t)
        idx = rng.integers(0, 2, size=max_n)
        P = np.eye(2)
        acc = 0.0
        ci = 0
        for j in range(max_n):
            P = mats[idx[j]] @ P
            nP = float(norm2(P))
            best = max(best, acc + math.log(nP))
            if nP > 1e100:
                P /= nP
                acc += math.log(nP)
            if ci < len(checkpoints) and j + 1 == checkpoints[ci]:
                logs[t, ci] = acc + math.log(float(norm2(P)))
                ci += 1
    half = len(checkpoints) // 2
    slope = float(np.polyfit(checkpoints[half:], logs.mean(0)[half:], 1)[0]) if len(checkpoints) > 3 else 0.0
    maxnorm = math.exp(best) if best < 700 else math.inf
    return ProbeResult(float(norm2(g)), (float(np.trace(M1)), float(np.trace(M2))), maxnorm, slope)


@dataclass(frozen=True)
class ZeroLEReport:
    energy: float
    square_residuals: tuple[float, float]
    r_inverse_residual: float
    r_residual: float
    lyapunov: object

    @property
    def max_residual(self) -> float:
        return max(*self.square_residuals, self.r_inverse_residual, self.r_residual)

    def passed(self, tol: float = 1e-12, le_tol: float = 0.01) -> bool:
        return self.max_residual < tol and abs(self.lyapunov.value) < le_tol


def zero_le_block_identity(b1: int, q1: float, b2: int, q2: float, n: int = 10_000, trials: int = 50,
                           seed: int | None = 0) -> ZeroLEReport:
    """Check the block identities at ``E_0 = (b_1 + 1) q_1`` and estimate the Lyapunov exponent there."""
    if b1 == b2 or not math.isclose((b1 + 1) * q1, (b2 + 1) * q2, rel_tol=1e-14, abs_tol=1e-14):
        raise ValueError("need b1 != b2 and (b1 + 1) q1 = (b2 + 1) q2")
    E0 = (b1 + 1) * q1
    s1, s2 = SiteParams(b1, 1.0, q1), SiteParams(b2, 1.0, q2)
    M1, M2 = discrete_step(E0, s1, 1.0), discrete_step(E0, s2, 1.0)
    r = -math.sqrt(b1 / b2)
    R = np.diag([r, 1 / r])
    Rinv = np.diag([1 / r, r])
    I = np.eye(2)
    res = lambda A, B: float(np.max(np.abs(A - B)))
    L = lyapunov_mc(E0, SingleGenDistribution([s1, s2]), "discrete", n=n, trials=trials, seed=seed)
    return ZeroLEReport(E0, (res(M1 @ M1, -I), res(M2 @ M2, -I)), res(M1 @ M2, Rinv), res(M2 @ M1, R), L)
