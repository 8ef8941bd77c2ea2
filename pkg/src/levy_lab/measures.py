"""Candidate Levy measures on finite-dimensional sequence and grid L^p spaces.

Two measure types are provided:

* :class:`DiscreteMeasure` -- finitely many weighted atoms; always a finite
  measure, hence always a Levy measure.
* :class:`RadialFamily` -- the sigma-finite power law
  ``sum_dir w_dir * r^(-1-alpha) dr`` along finitely many unit directions,
  usable through closed-form radial integrals and finite truncations.

Membership in a ball uses the closed-ball convention ``||u|| <= r``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .rng import as_generator

MERGE_TOL = 1e-12
UNIT_TOL = 1e-12


class DomainError(ValueError):
    """Raised when an operation is called outside its domain."""


# --------------------------------------------------------------------------
# model space


@dataclass(frozen=True)
class ModelSpace:
    """``R^d`` with the l^p norm (``kind="sequence"``) or a weighted grid
    L^p norm (``kind="grid"``, weights ``mu_1..mu_G``)."""

    kind: str
    dimension: int
    p: float
    grid_weights: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("sequence", "grid"):
            raise DomainError(f"unknown space kind {self.kind!r}")
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise DomainError("dimension must be a positive integer")
        object.__setattr__(self, "dimension", int(self.dimension))
        p = float(self.p)
        if not (p > 1.0 and math.isfinite(p)):
            raise DomainError("exponent p must be finite and > 1")
        object.__setattr__(self, "p", p)
        if self.kind == "grid":
            if self.grid_weights is None:
                raise DomainError("grid space needs grid_weights")
            w = tuple(float(x) for x in self.grid_weights)
            if len(w) != self.dimension:
                raise DomainError("grid_weights length must equal dimension")
            if not all(x > 0 and math.isfinite(x) for x in w):
                raise DomainError("grid weights must be positive and finite")
            object.__setattr__(self, "grid_weights", w)
        elif self.grid_weights is not None:
            raise DomainError("sequence space uses unit weights")

    @classmethod
    def sequence(cls, d: int, p: float) -> "ModelSpace":
        return cls("sequence", d, p)

    @classmethod
    def grid(cls, weights, p: float) -> "ModelSpace":
        w = tuple(float(x) for x in weights)
        return cls("grid", len(w), p, w)

    @property
    def weights(self) -> np.ndarray:
        if self.kind == "grid":
            return np.asarray(self.grid_weights, dtype=float)
        return np.ones(self.dimension)

    @property
    def conjugate(self) -> float:
        return self.p / (self.p - 1.0)

    def with_p(self, p: float) -> "ModelSpace":
        return replace(self, p=float(p))

    def norm(self, x) -> np.ndarray:
        """Norm along the last axis, scaled to avoid over/underflow."""
        x = np.abs(np.asarray(x, dtype=float))
        if x.shape[-1] != self.dimension:
            raise DomainError("vector length does not match the space dimension")
        m = x.max(axis=-1, keepdims=True) if x.size else np.zeros(x.shape[:-1] + (1,))
        safe = np.where(m > 0, m, 1.0)
        s = np.sum(self.weights * (x / safe) ** self.p, axis=-1) ** (1.0 / self.p)
        return np.where(m[..., 0] > 0, m[..., 0] * s, 0.0)

    def pairing(self, f, g) -> np.ndarray:
        """Duality pairing, weighted by the grid weights on grid spaces."""
        return np.sum(np.asarray(f, float) * np.asarray(g, float) * self.weights, axis=-1)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "dimension": self.dimension, "p": self.p}
        if self.kind == "grid":
            d["grid_weights"] = list(self.grid_weights)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpace":
        gw = d.get("grid_weights")
        return cls(d["kind"], int(d["dimension"]), float(d["p"]), None if gw is None else tuple(gw))


# --------------------------------------------------------------------------
# discrete measures


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finite measure ``sum_a w_a delta_{u_a}``.

    ``allow_origin`` is only set for results of :func:`convolve`, whose
    atoms may cancel to the origin.
    """

    space: ModelSpace
    atoms: np.ndarray
    masses: np.ndarray
    allow_origin: bool = False

    def __post_init__(self):
        d = self.space.dimension
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.size == 0:
            atoms = np.zeros((0, d))
        atoms = atoms.reshape(-1, d) if atoms.ndim == 1 else atoms
        masses = np.asarray(self.masses, dtype=float).reshape(-1)
        if atoms.ndim != 2 or atoms.shape[1] != d:
            raise DomainError("atoms must be an (n, d) array")
        if masses.shape[0] != atoms.shape[0]:
            raise DomainError("one mass per atom required")
        if not np.all(np.isfinite(atoms)):
            raise DomainError("atoms must be finite")
        if not np.all((masses > 0) & np.isfinite(masses)):
            raise DomainError("masses must be positive and finite")
        if not self.allow_origin and atoms.shape[0] and np.any(np.all(atoms == 0.0, axis=1)):
            raise DomainError("a Levy measure cannot charge the origin")
        object.__setattr__(self, "atoms", _frozen(atoms))
        object.__setattr__(self, "masses", _frozen(masses))

    # basic quantities -------------------------------------------------
    @classmethod
    def empty(cls, space: ModelSpace) -> "DiscreteMeasure":
        return cls(space, np.zeros((0, space.dimension)), np.zeros(0))

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[0]

    @property
    def total_mass(self) -> float:
        return math.fsum(self.masses)

    def atom_norms(self) -> np.ndarray:
        if self.n_atoms == 0:
            return np.zeros(0)
        return self.space.norm(self.atoms)

    def inside_mask(self, r: float) -> np.ndarray:
        return self.atom_norms() <= r

    def subset(self, mask) -> "DiscreteMeasure":
        mask = np.asarray(mask)
        return DiscreteMeasure(self.space, self.atoms[mask], self.masses[mask], self.allow_origin)

    def restrict(self, r: float, side: str) -> "DiscreteMeasure":
        if not r > 0:
            raise DomainError("restriction radius must be positive")
        inside = self.inside_mask(r)
        if side == "inside":
            return self.subset(inside)
        if side == "outside":
            return self.subset(~inside)
        raise DomainError("side must be 'inside' or 'outside'")

    def ball_mass(self, r: float, side: str = "outside") -> float:
        return self.restrict(r, side).total_mass

    def integrate(self, values) -> float:
        """``sum_a w_a values_a``."""
        return math.fsum(np.asarray(values, float) * self.masses)

    # Levy-Khintchine ingredients ---------------------------------------
    def shift_vector(self) -> np.ndarray:
        inside = self.inside_mask(1.0)
        return -(self.masses[inside, None] * self.atoms[inside]).sum(axis=0)

    def char_exponent(self, duals) -> np.ndarray:
        duals = np.asarray(duals, dtype=float)
        single = duals.ndim == 1
        duals = np.atleast_2d(duals)
        if self.n_atoms == 0:
            out = np.zeros(duals.shape[0], dtype=complex)
        else:
            x = self.atoms @ (duals * self.space.weights).T  # (n_atoms, n_duals)
            comp = self.inside_mask(1.0)[:, None]
            terms = np.expm1(1j * x) - 1j * x * comp
            out = self.masses @ terms
        return out[0] if single else out

    def char_fn(self, duals) -> np.ndarray:
        """Characteristic function of the infinitely divisible law built from
        this measure, evaluated exactly as a finite sum."""
        return np.exp(self.char_exponent(duals))

    def sample_compound_poisson(self, rng, n: int) -> np.ndarray:
        rng = as_generator(rng)
        d = self.space.dimension
        out = np.zeros((n, d))
        lam = self.total_mass
        if self.n_atoms == 0 or lam == 0:
            return out
        counts = rng.poisson(lam, size=n)
        total = int(counts.sum())
        if total == 0:
            return out
        idx = rng.choice(self.n_atoms, size=total, p=self.masses / self.masses.sum())
        jumps = self.atoms[idx]
        hit = counts > 0
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))[hit]
        out[hit] = np.add.reduceat(jumps, starts, axis=0)
        return out

    def sample_eta(self, rng, n: int) -> np.ndarray:
        return self.sample_compound_poisson(rng, n) + self.shift_vector()

    # serialisation ----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "space": self.space.to_dict(),
            "atoms": [[list(map(float, u)), float(w)] for u, w in zip(self.atoms, self.masses)],
        }

    @classmethod
    def from_dict(cls, d: dict, allow_origin: bool = False) -> "DiscreteMeasure":
        space = ModelSpace.from_dict(d["space"])
        pairs = d.get("atoms", [])
        atoms = np.array([a for a, _ in pairs], dtype=float).reshape(len(pairs), space.dimension)
        masses = np.array([w for _, w in pairs], dtype=float)
        return cls(space, atoms, masses, allow_origin)


def convolve(a: DiscreteMeasure, b: DiscreteMeasure, tol: float = MERGE_TOL) -> DiscreteMeasure:
    """Convolution of two finite measures with coincident atoms merged."""
    if a.space != b.space:
        raise DomainError("convolution needs measures on the same space")
    space = a.space
    if a.n_atoms == 0 or b.n_atoms == 0:
        return DiscreteMeasure(space, np.zeros((0, space.dimension)), np.zeros(0), True)
    atoms = (a.atoms[:, None, :] + b.atoms[None, :, :]).reshape(-1, space.dimension)
    masses = (a.masses[:, None] * b.masses[None, :]).reshape(-1)
    atoms, masses = merge_atoms(space, atoms, masses, tol)
    return DiscreteMeasure(space, atoms, masses, allow_origin=True)


def merge_atoms(space: ModelSpace, atoms: np.ndarray, masses: np.ndarray, tol: float = MERGE_TOL):
    """Merge atoms closer than ``tol`` in the space norm (transitively).

    Merged atoms sit at the mass-weighted mean of their group; groups are
    emitted in order of their first member.
    """
    n = atoms.shape[0]
    if n <= 1:
        return atoms, masses
    scaled = atoms * space.weights ** (1.0 / space.p)
    pairs = cKDTree(scaled).query_pairs(r=tol, p=space.p, output_type="ndarray")
    if len(pairs) == 0:
        return atoms, masses
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    # relabel by first appearance for a stable order
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    group = rank[inverse]
    k = order.size
    m = np.bincount(group, weights=masses, minlength=k)
    pos = np.zeros((k, atoms.shape[1]))
    np.add.at(pos, group, atoms * masses[:, None])
    pos /= m[:, None]
    # keep exact coordinates for singleton groups
    sizes = np.bincount(group, minlength=k)
    single = sizes[group] == 1
    pos[group[single]] = atoms[single]
    return pos, m


# --------------------------------------------------------------------------
# radial power family


def radial_integral(beta: float, a: float, b: float) -> float:
    """``int_a^b r^(beta-1) dr`` for ``0 <= a``; ``inf`` when it diverges at 0."""
    if not b > a:
        return 0.0
    if a == 0.0:
        return math.inf if beta <= 0 else b**beta / beta
    if math.isinf(b):
        return math.inf if beta >= 0 else -(a**beta) / beta
    L = math.log(b / a)
    if beta == 0.0:
        return L
    # a^beta * (exp(beta L) - 1) / beta, stable near beta = 0
    return a**beta * math.expm1(beta * L) / beta


@dataclass(frozen=True, eq=False)
class RadialFamily:
    """``lambda(A) = sum_dir w_dir int_rmin^rmax 1_A(r dir) r^(-1-alpha) dr``.

    ``rmin`` is zero for the full family; a positive ``rmin`` is the symbolic
    result of restricting to the outside of a ball.
    """

    space: ModelSpace
    alpha: float
    directions: DiscreteMeasure
    rmax: float
    rmin: float = 0.0

    def __post_init__(self):
        a = float(self.alpha)
        if not (0.0 < a <= 2.0):
            raise DomainError("stability index must lie in (0, 2]")
        object.__setattr__(self, "alpha", a)
        if self.directions.space != self.space:
            raise DomainError("directions live on a different space")
        if self.directions.n_atoms == 0:
            raise DomainError("at least one direction is required")
        if np.any(np.abs(self.directions.atom_norms() - 1.0) > UNIT_TOL):
            raise DomainError("direction atoms must have unit norm")
        if not (self.rmax > 0 and math.isfinite(self.rmax)):
            raise DomainError("radial cutoff must be positive and finite")
        if not self.rmin >= 0:
            raise DomainError("inner radius must be non-negative")
        object.__setattr__(self, "rmax", float(self.rmax))
        object.__setattr__(self, "rmin", float(self.rmin))

    @property
    def direction_weight(self) -> float:
        return self.directions.total_mass

    def radial_moment(self, k: float, lo: float = 0.0, hi: float = math.inf) -> float:
        """``int ||u||^k 1{lo <= ||u|| <= hi} lambda(du)`` in closed form."""
        a, b = max(lo, self.rmin), min(hi, self.rmax)
        if not b > a:
            return 0.0
        return self.direction_weight * radial_integral(k - self.alpha, a, b)

    @property
    def total_mass(self) -> float:
        return self.radial_moment(0.0)

    def tail_mass(self, r: float) -> float:
        """Mass of ``{||u|| > r}``."""
        return self.radial_moment(0.0, lo=r)

    def restrict(self, r: float, side: str) -> "RadialFamily":
        if not r > 0:
            raise DomainError("restriction radius must be positive")
        if side == "inside":
            return replace(self, rmax=min(r, self.rmax))
        if side == "outside":
            return replace(self, rmin=max(r, self.rmin))
        raise DomainError("side must be 'inside' or 'outside'")

    def cells(self, lo: float, hi: float, n: int):
        """Centroid radii and radial masses of ``n`` log-spaced cells of ``[lo, hi]``."""
        e = lo * (hi / lo) ** (np.arange(n + 1) / n)
        e[0], e[-1] = lo, hi
        mass = np.array([radial_integral(-self.alpha, e[i], e[i + 1]) for i in range(n)])
        first = np.array([radial_integral(1.0 - self.alpha, e[i], e[i + 1]) for i in range(n)])
        return first / mass, mass

    def materialise(self, delta: float, n: int) -> DiscreteMeasure:
        """Finite atomic version of the restriction outside the ball of radius
        ``delta``: ``n`` atoms per direction at the mass centroids of
        log-spaced radial cells, carrying the exact cell masses."""
        if not delta > 0:
            raise DomainError("delta must be positive")
        if delta >= self.rmax:
            raise DomainError("delta must be smaller than the radial cutoff")
        if int(n) != n or n < 1:
            raise DomainError("radial cell count must be a positive integer")
        lo = max(delta, self.rmin)
        if lo >= self.rmax:
            return DiscreteMeasure.empty(self.space)
        return self.materialise_annulus(lo, self.rmax, int(n))

    def materialise_annulus(self, lo: float, hi: float, n: int) -> DiscreteMeasure:
        """Atoms for the part of the family with ``lo < ||u|| <= hi``."""
        lo, hi = max(lo, self.rmin), min(hi, self.rmax)
        if not hi > lo:
            return DiscreteMeasure.empty(self.space)
        radii, mass = self.cells(lo, hi, n)
        dirs, w = self.directions.atoms, self.directions.masses
        atoms = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, self.space.dimension)
        masses = (mass[:, None] * w[None, :]).reshape(-1)
        return DiscreteMeasure(self.space, atoms, masses)

    def to_dict(self) -> dict:
        d = {
            "space": self.space.to_dict(),
            "alpha": self.alpha,
            "directions": self.directions.to_dict()["atoms"],
            "rmax": self.rmax,
        }
        if self.rmin > 0:
            d["rmin"] = self.rmin
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RadialFamily":
        space = ModelSpace.from_dict(d["space"])
        dirs = DiscreteMeasure.from_dict({"space": d["space"], "atoms": d["directions"]})
        return cls(space, float(d["alpha"]), dirs, float(d["rmax"]), float(d.get("rmin", 0.0)))


@dataclass(frozen=True, eq=False)
class MeasureSequence:
    """Increasing family of finite truncations ``lambda_1 <= lambda_2 <= ...``
    of a sigma-finite measure, indexed by a size parameter such as the
    dimension. Members are built on demand by ``builder(size)``."""

    sizes: tuple
    builder: Callable = field(repr=False)
    name: str = "sequence"

    def __post_init__(self):
        sizes = tuple(self.sizes)
        if len(sizes) < 1 or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise DomainError("sizes must be strictly increasing")
        object.__setattr__(self, "sizes", sizes)

    def member(self, size) -> DiscreteMeasure:
        return self.builder(size)


def concat(space: ModelSpace, measures) -> DiscreteMeasure:
    """Sum of finite measures, atoms kept separate."""
    measures = list(measures)
    if not measures:
        return DiscreteMeasure.empty(space)
    return DiscreteMeasure(
        space,
        np.concatenate([m.atoms for m in measures]),
        np.concatenate([m.masses for m in measures]),
        any(m.allow_origin for m in measures),
    )


def unit_directions(space: ModelSpace, vectors, weights=None) -> DiscreteMeasure:
    """Normalise ``vectors`` to the unit sphere of ``space``."""
    v = np.atleast_2d(np.asarray(vectors, dtype=float))
    v = v / space.norm(v)[:, None]
    w = np.ones(v.shape[0]) if weights is None else np.asarray(weights, float)
    return DiscreteMeasure(space, v, w)


def measure_to_json(m) -> str:
    return json.dumps(m.to_dict())


def measure_from_dict(d: dict):
    return RadialFamily.from_dict(d) if "alpha" in d else DiscreteMeasure.from_dict(d)


def measure_from_json(text: str):
    return measure_from_dict(json.loads(text))
