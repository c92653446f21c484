"""Single-generation parameters, distributions and sampled environment words.

A site ``(b, ell, q)`` describes one generation of a radial tree.  For the
continuum (quantum graph) models ``ell`` is the length of the edge arriving at
the generation and ``q`` the delta coupling at its vertex.  For the discrete
models the same slot ``ell`` holds the edge weight ``p``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "InvalidDistribution",
    "SiteParams",
    "SingleGenDistribution",
    "EnvironmentWord",
    "TreeGeometry",
    "sample_word",
    "substream",
    "tree_geometry",
    "vertex_positions",
    "generation_weight",
    "multiplicity",
    "periodic_word",
    "rbm",
    "rlm",
    "rkm",
]


class InvalidDistribution(ValueError):
    """Raised when a single-generation law violates the model hypotheses."""


@dataclass(frozen=True, order=True)
class SiteParams:
    """Parameters of one generation: branching ``b``, length (or weight) ``ell``, coupling ``q``."""

    b: int
    ell: float
    q: float = 0.0

    def __post_init__(self):
        b = self.b
        if isinstance(b, float):
            if not b.is_integer():
                raise ValueError(f"branching must be an integer, got {b}")
            object.__setattr__(self, "b", int(b))
        elif not isinstance(b, (int, np.integer)):
            raise ValueError(f"branching must be an integer, got {b!r}")
        else:
            object.__setattr__(self, "b", int(b))
        if self.b < 1:
            raise ValueError(f"branching must be >= 1, got {self.b}")
        ell = float(self.ell)
        if not (math.isfinite(ell) and ell > 0):
            raise ValueError(f"length/weight must be positive and finite, got {self.ell}")
        q = float(self.q)
        if not math.isfinite(q):
            raise ValueError(f"coupling must be finite, got {self.q}")
        object.__setattr__(self, "ell", ell)
        object.__setattr__(self, "q", q)

    @property
    def p(self) -> float:
        """Edge weight, the discrete reading of ``ell``."""
        return self.ell

    def as_tuple(self) -> tuple[int, float, float]:
        return (self.b, self.ell, self.q)

    def to_dict(self) -> dict:
        return {"b": self.b, "ell": self.ell, "q": self.q}


def _as_site(x) -> SiteParams:
    if isinstance(x, SiteParams):
        return x
    if isinstance(x, dict):
        ell = x.get("ell", x.get("p", 1.0))
        return SiteParams(x["b"], ell, x.get("q", 0.0))
    return SiteParams(*x)


@dataclass(frozen=True)
class SingleGenDistribution:
    """Finitely supported law on sites; the support must contain two distinct atoms."""

    atoms: tuple[SiteParams, ...]
    weights: tuple[float, ...]

    def __init__(self, atoms: Iterable, weights: Sequence[float] | None = None):
        atoms = tuple(_as_site(a) for a in atoms)
        if weights is None:
            weights = [1.0 / len(atoms)] * len(atoms) if atoms else []
        weights = tuple(float(w) for w in weights)
        if len(atoms) != len(weights):
            raise InvalidDistribution("atoms and weights differ in length")
        if len(atoms) < 2:
            raise InvalidDistribution(
                "the law must charge at least two distinct atoms (two-point support hypothesis)"
            )
        if any(not math.isfinite(w) or w <= 0 for w in weights):
            raise InvalidDistribution("weights must be strictly positive")
        if abs(sum(weights) - 1.0) > 1e-12:
            raise InvalidDistribution(f"weights sum to {sum(weights)!r}, not 1")
        if len(set(atoms)) != len(atoms):
            raise InvalidDistribution("atoms must be distinct")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return len(self.atoms)

    @property
    def probabilities(self) -> np.ndarray:
        return np.asarray(self.weights)

    def mean(self, attr: str) -> float:
        vals = np.array([getattr(a, attr) for a in self.atoms], dtype=float)
        return float(vals @ self.probabilities)

    def mean_log_branching(self) -> float:
        return float(np.log([a.b for a in self.atoms]) @ self.probabilities)

    def bounds(self, attr: str) -> tuple[float, float]:
        vals = [getattr(a, attr) for a in self.atoms]
        return (min(vals), max(vals))

    def to_dict(self) -> dict:
        return {"atoms": [dict(a.to_dict(), w=w) for a, w in zip(self.atoms, self.weights)]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "SingleGenDistribution":
        atoms = d["atoms"]
        if not atoms:
            raise InvalidDistribution("empty atom list")
        if all("w" in a for a in atoms):
            w = [a["w"] for a in atoms]
            total = sum(w)
            if total <= 0:
                raise InvalidDistribution("weights must be positive")
            # tolerate user files whose weights do not quite sum to one
            w = [x / total for x in w]
        else:
            w = None
        return cls([_as_site(a) for a in atoms], w)

    @classmethod
    def from_json(cls, s: str) -> "SingleGenDistribution":
        return cls.from_dict(json.loads(s))


def rbm(branchings: Sequence[int] = (2, 3), weights=None, ell: float = 1.0) -> SingleGenDistribution:
    """Random branching model: random ``b``, unit lengths, no coupling."""
    return SingleGenDistribution([SiteParams(b, ell, 0.0) for b in branchings], weights)


def rlm(lengths: Sequence[float] = (1.0, 2.0), weights=None, b: int = 2) -> SingleGenDistribution:
    """Random length model: fixed ``b``, random edge lengths, no coupling."""
    return SingleGenDistribution([SiteParams(b, l, 0.0) for l in lengths], weights)


def rkm(couplings: Sequence[float] = (0.0, 1.0), weights=None, b: int = 2, ell: float = 1.0) -> SingleGenDistribution:
    """Random Kirchhoff model: fixed ``b`` and lengths, random delta couplings."""
    return SingleGenDistribution([SiteParams(b, ell, q) for q in couplings], weights)


@dataclass(frozen=True)
class EnvironmentWord:
    """A finite word of sites.

    Continuum words list generations ``1..N``: ``word[j-1]`` holds the length of
    edge ``j`` and the branching and coupling of vertex ``j``.  Discrete words
    list generations ``0..N-1`` directly.
    """

    sites: tuple[SiteParams, ...]
    seed: int | None = None
    origin: str = "explicit"

    def __init__(self, sites: Iterable, seed: int | None = None, origin: str = "explicit"):
        object.__setattr__(self, "sites", tuple(_as_site(s) for s in sites))
        object.__setattr__(self, "seed", seed)
        object.__setattr__(self, "origin", origin)

    def __len__(self):
        return len(self.sites)

    def __getitem__(self, k):
        if isinstance(k, slice):
            return EnvironmentWord(self.sites[k], self.seed, self.origin)
        return self.sites[k]

    def __iter__(self):
        return iter(self.sites)

    @property
    def b(self) -> np.ndarray:
        return np.array([s.b for s in self.sites], dtype=float)

    @property
    def ell(self) -> np.ndarray:
        return np.array([s.ell for s in self.sites], dtype=float)

    p = ell

    @property
    def q(self) -> np.ndarray:
        return np.array([s.q for s in self.sites], dtype=float)

    def shift(self, k: int) -> "EnvironmentWord":
        """The shifted word ``T^k``, dropping the first ``k`` sites."""
        return EnvironmentWord(self.sites[k:], self.seed, self.origin)

    def positions(self) -> np.ndarray:
        """Vertex radii ``t_0 = 0, t_1, ..., t_N`` for a continuum word."""
        return np.concatenate([[0.0], np.cumsum(self.ell)])

    def to_dict(self) -> dict:
        return {"seed": self.seed, "origin": self.origin, "sites": [s.to_dict() for s in self.sites]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "EnvironmentWord":
        return cls(d["sites"], d.get("seed"), d.get("origin", "explicit"))

    @classmethod
    def from_json(cls, s: str) -> "EnvironmentWord":
        return cls.from_dict(json.loads(s))

    @classmethod
    def constant(cls, site, n: int) -> "EnvironmentWord":
        return cls([_as_site(site)] * n, origin="constant")

    @classmethod
    def periodic(cls, cell: Sequence, n: int) -> "EnvironmentWord":
        cell = [_as_site(c) for c in cell]
        return cls([cell[j % len(cell)] for j in range(n)], origin="periodic")


def substream(seed: int | None, *keys: int) -> np.random.Generator:
    """Independent generator derived from ``seed`` and integer keys.

    The keys are hashed through ``SeedSequence``, so the stream for a given
    ``(seed, keys)`` does not depend on how work is split between threads.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in keys)))


def sample_indices(dist: SingleGenDistribution, shape, rng: np.random.Generator) -> np.ndarray:
    """Atom indices of shape ``shape`` drawn i.i.d. from ``dist``."""
    cdf = np.cumsum(dist.probabilities)
    idx = np.searchsorted(cdf, rng.random(shape), side="right")
    return np.minimum(idx, len(cdf) - 1).astype(np.int32)


def sample_word(dist: SingleGenDistribution, n: int, seed: int | None = None) -> EnvironmentWord:
    """Draw an i.i.d. word of length ``n``; identical seeds give identical words."""
    if n < 0:
        raise ValueError("word length must be non-negative")
    rng = np.random.default_rng(seed)
    idx = sample_indices(dist, (n,), rng)
    return EnvironmentWord([dist.atoms[i] for i in idx], seed=seed, origin="sampled")


@dataclass
class TreeGeometry:
    """Radial data of the continuum tree built from a word.

    ``positions[j] = t_j``; ``gen_weights[j] = w_o(j) = b_0 ... b_{j-1}`` is the
    number of generation-``j`` edges; ``multiplicities[n]`` counts the invariant
    subspaces whose radial problem starts at generation ``n``.
    """

    positions: np.ndarray
    gen_weights: np.ndarray
    multiplicities: np.ndarray
    branchings: np.ndarray = field(repr=False)
    log_gen_weights: np.ndarray = field(repr=False, default=None)

    def weight_at(self, t) -> np.ndarray:
        """Sphere size ``w_o(|x|)`` at radius ``t`` (edges of generation j cover ``(t_{j-1}, t_j]``)."""
        t = np.asarray(t, dtype=float)
        j = np.searchsorted(self.positions, t, side="left")
        j = np.clip(j, 1, len(self.positions) - 1)
        return self.gen_weights[j]


def tree_geometry(word: EnvironmentWord, root_branching: int = 1) -> TreeGeometry:
    b = np.concatenate([[float(root_branching)], word.b])
    pos = word.positions()
    # w_o(j) = b_0 ... b_{j-1}, j = 0..N; overflows to inf on deep words, hence the logs
    lgw = np.concatenate([[0.0], np.cumsum(np.log(b[:-1]))])
    with np.errstate(over="ignore"):
        gw = np.concatenate([[1.0], np.cumprod(b[:-1])])
        mult = np.empty(len(word) + 1)
        mult[0] = 1.0
        mult[1:] = gw[1:] * (b[1:] - 1.0)
    return TreeGeometry(pos, gw, mult, b, lgw)


def vertex_positions(word: EnvironmentWord) -> np.ndarray:
    """Radii ``t_0 = 0 < t_1 < ...`` of the vertices of a continuum word."""
    if len(word) == 0:
        raise ValueError("empty word")
    return word.positions()


def _branchings_with_root(word: EnvironmentWord, root_branching: int | None) -> list[int]:
    bs = [s.b for s in word]
    if root_branching is None:
        return bs
    return [int(root_branching)] + bs


def generation_weight(word: EnvironmentWord, n: int, root_branching: int | None = 1) -> int:
    """Number of generation-``n`` vertices, ``b_0 b_1 ... b_{n-1}`` with ``w(0) = 1``.

    With the default ``root_branching=1`` the word holds ``b_1, b_2, ...`` (continuum
    convention).  Passing ``None`` reads ``b_0`` from ``word[0]`` (discrete convention).
    """
    bs = _branchings_with_root(word, root_branching)
    if not 0 <= n <= len(bs):
        raise ValueError(f"generation {n} out of range 0..{len(bs)}")
    return math.prod(bs[:n])


def multiplicity(word: EnvironmentWord, n: int, root_branching: int | None = 1) -> int:
    """``m(0) = 1`` and ``m(n) = b_0 ... b_{n-1} (b_n - 1)`` for ``n >= 1``."""
    bs = _branchings_with_root(word, root_branching)
    if not 0 <= n < len(bs):
        raise ValueError(f"generation {n} out of range 0..{len(bs) - 1}")
    if n == 0:
        return 1
    return math.prod(bs[:n]) * (bs[n] - 1)


def periodic_word(cell: Sequence, copies: int) -> EnvironmentWord:
    if copies < 1 or len(cell) == 0:
        raise ValueError("need a nonempty cell and copies >= 1")
    return EnvironmentWord.periodic(cell, len(cell) * copies)
