"""Poisson random measures with intensity Leb x lambda and compensated
integrals of simple functions.

Two samplers are used:

* point configurations (event times and atoms), needed for path
  functionals such as the running supremum;
* independent Poisson counts per (time interval, atom), which suffice for
  anything evaluated at the horizon and stay cheap when masses are huge.

Both give the same law for horizon quantities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measures import DiscreteMeasure, DomainError, ModelSpace, RadialFamily
from .rng import as_generator
from .norms import SimpleFunction


@dataclass(frozen=True, eq=False)
class PointConfiguration:
    """One realisation of ``N`` on ``(0, t] x U``: sorted times and atom indices."""

    horizon: float
    times: np.ndarray
    atoms: np.ndarray
    measure: DiscreteMeasure

    def __post_init__(self):
        times = np.asarray(self.times, float)
        atoms = np.asarray(self.atoms, np.int64)
        if times.shape != atoms.shape:
            raise DomainError("one atom index per point")
        if np.any(np.diff(times) < 0):
            raise DomainError("times must be sorted")
        if atoms.size and (atoms.min() < 0 or atoms.max() >= self.measure.n_atoms):
            raise DomainError("invalid atom index")
        if times.size and (times[0] <= 0 or times[-1] > self.horizon):
            raise DomainError("times must lie in (0, horizon]")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "atoms", atoms)

    @property
    def n_points(self) -> int:
        return self.times.size

    def count(self, s: float, cell) -> int:
        """``N((0, s] x B)``."""
        mask = _cell_mask(cell, self.measure.n_atoms)
        return int(np.sum((self.times <= s) & mask[self.atoms]))


@dataclass
class PathStatistic:
    perSample: np.ndarray
    estimate: float
    stderr: float


def mean_and_stderr(x) -> tuple[float, float]:
    """Mean with compensated summation (order-independent) and its stderr."""
    x = np.asarray(x, float).ravel()
    n = x.size
    m = math.fsum(x) / n
    if n < 2:
        return m, math.nan
    var = math.fsum((x - m) ** 2) / (n - 1)
    return m, math.sqrt(var / n)


def _cell_mask(cell, n_atoms: int) -> np.ndarray:
    if cell is None:
        return np.ones(n_atoms, bool)
    c = np.asarray(cell)
    if c.dtype == bool:
        if c.shape != (n_atoms,):
            raise DomainError("boolean cell mask has the wrong length")
        return c
    c = c.astype(np.int64).ravel()
    if c.size and (c.min() < 0 or c.max() >= n_atoms):
        raise DomainError("cell refers to a missing atom")
    m = np.zeros(n_atoms, bool)
    m[c] = True
    return m


# --------------------------------------------------------------------------
# sampling


def sample_prm(measure: DiscreteMeasure, t: float, rng) -> PointConfiguration:
    rng = as_generator(rng)
    lam = measure.total_mass
    if measure.n_atoms == 0 or lam == 0:
        return PointConfiguration(t, np.zeros(0), np.zeros(0, np.int64), measure)
    k = int(rng.poisson(t * lam))
    times = t - rng.uniform(0.0, t, size=k)  # uniform on (0, t]
    atoms = rng.choice(measure.n_atoms, size=k, p=measure.masses / measure.masses.sum())
    order = np.argsort(times, kind="stable")
    return PointConfiguration(t, times[order], atoms[order], measure)


def sample_counts(measure: DiscreteMeasure, F: SimpleFunction, reps: int, rng, t: float | None = None):
    """Poisson counts ``N((t_i, t_{i+1}] x {u_a})``: shape ``(reps, m, n_atoms)``."""
    rng = as_generator(rng)
    dt = _interval_lengths(F, t)
    lam = dt[:, None] * measure.masses[None, :]
    return rng.poisson(lam, size=(reps,) + lam.shape)


def _interval_lengths(F: SimpleFunction, t: float | None):
    bp = F.breakpoints if t is None else np.minimum(F.breakpoints, t)
    return np.diff(bp)


# --------------------------------------------------------------------------
# compensated integrals


def _restricted_values(measure, F, cell):
    F.check_measure(measure)
    vals = F.atom_values(measure.n_atoms)  # (m, n, d)
    mask = _cell_mask(cell, measure.n_atoms)
    return vals * mask[None, :, None]


def compensator_rate(measure, F, cell=None) -> np.ndarray:
    """Drift per time interval: ``sum_a w_a 1_B(u_a) v_{i,a}``, shape ``(m, d)``."""
    vals = _restricted_values(measure, F, cell)
    return np.einsum("a,iad->id", measure.masses, vals)


def compensated_integral(cfg: PointConfiguration, F: SimpleFunction, cell=None, upto: float | None = None) -> np.ndarray:
    """``int_{(0, s] x B} F dN~`` evaluated exactly for one configuration."""
    s = cfg.horizon if upto is None else float(upto)
    if s > cfg.horizon:
        raise DomainError("evaluation time beyond the horizon")
    measure = cfg.measure
    vals = _restricted_values(measure, F, cell)
    rate = np.einsum("a,iad->id", measure.masses, vals)
    lengths = np.diff(np.minimum(F.breakpoints, s))
    out = -(lengths[:, None] * rate).sum(0)
    sel = cfg.times <= s
    if np.any(sel):
        times, atoms = cfg.times[sel], cfg.atoms[sel]
        iv = _interval_index(F, times)
        ok = iv >= 0
        out = out + vals[iv[ok], atoms[ok]].sum(0)
    return out


def _interval_index(F: SimpleFunction, times):
    """Index ``i`` with ``t_i < s <= t_{i+1}``; -1 beyond the last breakpoint."""
    i = np.searchsorted(F.breakpoints, times, side="left") - 1
    return np.where(times > F.breakpoints[-1], -1, i)


def _compensator_at(F, rate, times):
    """Cumulative compensator ``sum_i |(t_i, t_{i+1}] cap (0, s]| rate_i``."""
    bp = F.breakpoints
    cum = np.vstack([np.zeros(rate.shape[1]), np.cumsum(np.diff(bp)[:, None] * rate, axis=0)])
    s = np.minimum(times, bp[-1])
    i = np.clip(np.searchsorted(bp, s, side="right") - 1, 0, len(bp) - 2)
    return cum[i] + (s - bp[i])[..., None] * rate[i]


def running_sup(cfg: PointConfiguration, F: SimpleFunction, cell=None) -> float:
    """``sup_{0 < s <= t} ||int_{(0, s] x B} F dN~||`` computed exactly.

    The path is affine between events (jumps and breakpoints) and the norm is
    convex, so the supremum is attained at an event value or a left limit.
    """
    measure = cfg.measure
    vals = _restricted_values(measure, F, cell)
    rate = np.einsum("a,iad->id", measure.masses, vals)
    space = measure.space
    t = cfg.horizon
    bps = F.breakpoints[(F.breakpoints > 0) & (F.breakpoints < t)]
    ev_t = np.concatenate([cfg.times, bps, [t]])
    jumps = np.zeros((ev_t.size, space.dimension))
    if cfg.n_points:
        iv = _interval_index(F, cfg.times)
        ok = iv >= 0
        jumps[: cfg.n_points][ok] = vals[iv[ok], cfg.atoms[ok]]
    order = np.argsort(ev_t, kind="stable")
    ev_t, jumps = ev_t[order], jumps[order]
    value = np.cumsum(jumps, axis=0) - _compensator_at(F, rate, ev_t)
    left = value - jumps
    return float(max(space.norm(value).max(), space.norm(left).max(), 0.0))


def sup_and_terminal_batch(measure: DiscreteMeasure, F: SimpleFunction, cell, t: float, reps: int, rng,
                           chunk: int = 4000):
    """Running suprema and horizon values for ``reps`` independent paths.

    Works on padded per-replication event arrays in chunks; the result is
    identical to calling :func:`running_sup` on each sampled configuration.
    """
    rng = as_generator(rng)
    lam = measure.total_mass
    probs = measure.masses / lam if lam > 0 else None
    sups, terms = [], []
    done = 0
    while done < reps:
        r = min(chunk, reps - done)
        counts = rng.poisson(t * lam, size=r) if lam > 0 else np.zeros(r, np.int64)
        total = int(counts.sum())
        times = t - rng.uniform(0.0, t, size=total)
        atoms = rng.choice(measure.n_atoms, size=total, p=probs) if total else np.zeros(0, np.int64)
        s_, v_ = _padded_paths(measure, F, cell, t, counts, times, atoms)
        sups.append(s_)
        terms.append(v_)
        done += r
    return np.concatenate(sups), np.concatenate(terms)


def running_sup_many(configs, F: SimpleFunction, cell=None):
    """Batched :func:`running_sup` over configurations sharing one measure
    and horizon; returns ``(suprema, horizon values)``."""
    if not configs:
        return np.zeros(0), np.zeros((0, F.dimension))
    measure, t = configs[0].measure, configs[0].horizon
    counts = np.array([c.n_points for c in configs])
    times = np.concatenate([c.times for c in configs])
    atoms = np.concatenate([c.atoms for c in configs])
    return _padded_paths(measure, F, cell, t, counts, times, atoms)


def _padded_paths(measure, F, cell, t, counts, times, atoms):
    space = measure.space
    d = space.dimension
    vals = _restricted_values(measure, F, cell)
    rate = np.einsum("a,iad->id", measure.masses, vals)
    bps = F.breakpoints[(F.breakpoints > 0) & (F.breakpoints < t)]
    r, total = counts.size, int(counts.sum())
    L = int(counts.max()) if r else 0
    width = L + bps.size + 1
    T = np.full((r, width), float(t))
    J = np.zeros((r, width, d))
    rows = np.repeat(np.arange(r), counts)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    cols = np.arange(total) - np.repeat(starts, counts)
    T[rows, cols] = times
    iv = _interval_index(F, times)
    ok = iv >= 0
    jj = np.zeros((total, d))
    jj[ok] = vals[iv[ok], atoms[ok]]
    J[rows, cols] = jj
    if bps.size:
        T[:, L:L + bps.size] = bps
    order = np.argsort(T, axis=1, kind="stable")
    T = np.take_along_axis(T, order, axis=1)
    J = np.take_along_axis(J, order[:, :, None], axis=1)
    V = np.cumsum(J, axis=1) - _compensator_at(F, rate, T)
    sup = np.maximum(np.maximum(space.norm(V).max(1), space.norm(V - J).max(1)), 0.0)
    return sup, V[:, -1]


def terminal_values(measure: DiscreteMeasure, F: SimpleFunction, cell, t: float, reps: int, rng) -> np.ndarray:
    """Horizon values ``int_{(0, t] x B} F dN~`` from Poisson counts."""
    vals = _restricted_values(measure, F, cell)
    dt = _interval_lengths(F, t)
    lam = dt[:, None] * measure.masses[None, :]
    rng = as_generator(rng)
    out = np.zeros((reps, measure.space.dimension))
    for i in range(vals.shape[0]):
        active = np.flatnonzero(np.any(vals[i] != 0, axis=1) & (lam[i] > 0))
        if active.size == 0:
            continue
        n = rng.poisson(lam[i, active], size=(reps, active.size))
        out += (n - lam[i, active]) @ vals[i, active]
    return out


def estimate_lhs(measure, F, cell, p: float, t: float, reps: int, rng, variant: str = "sup") -> PathStatistic:
    """Monte Carlo estimate of ``E sup_s ||int_{(0,s] x B} F dN~||^p``
    (``variant="sup"``) or of ``E ||int_{(0,t] x B} F dN~||^p``
    (``variant="terminal"``)."""
    if reps < 2:
        raise DomainError("need at least two replications")
    if variant == "sup":
        sups, _ = sup_and_terminal_batch(measure, F, cell, t, reps, rng)
        x = sups**p
    elif variant == "terminal":
        term = terminal_values(measure, F, cell, t, reps, rng)
        x = measure.space.norm(term) ** p
    else:
        raise DomainError("variant must be 'sup' or 'terminal'")
    est, se = mean_and_stderr(x)
    return PathStatistic(x, est, se)


def integral_char_fn(measure: DiscreteMeasure, F: SimpleFunction, cell, duals, t: float | None = None) -> np.ndarray:
    """Characteristic function of the horizon value, exactly:
    ``exp(sum_i dt_i sum_{a in B} w_a (e^{i<v,u*>} - 1 - i<v,u*>))``."""
    vals = _restricted_values(measure, F, cell)
    dt = _interval_lengths(F, t)
    duals = np.atleast_2d(np.asarray(duals, float))
    x = np.einsum("iad,kd->kia", vals, duals * measure.space.weights)
    terms = np.expm1(1j * x) - 1j * x
    return np.exp(np.einsum("kia,i,a->k", terms, dt, measure.masses))


def l1_bound(measure, F, cell, t: float, reps: int, rng):
    """``(E ||int F dN~||, stderr, 2 ||F||_{L^1})`` over ``(0, t] x B``."""
    term = terminal_values(measure, F, cell, t, reps, rng)
    est, se = mean_and_stderr(measure.space.norm(term))
    vals = _restricted_values(measure, F, cell)
    dt = _interval_lengths(F, t)
    nrm = measure.space.norm(vals) if vals.size else np.zeros(vals.shape[:2])
    l1 = math.fsum((dt[:, None] * measure.masses[None, :] * nrm).ravel())
    return est, se, 2.0 * l1


# --------------------------------------------------------------------------
# truncation sequences and Cauchy statistics


@dataclass
class TruncationLevels:
    """Coupled per-level samples ``X_k`` (``samples``: list of ``(reps, d)``)
    or, for very wide coordinate spaces, only the per-block p-th power sums
    ``block_pth[:, k] = ||X_k - X_{k-1}||^p`` (with ``X_{-1} = 0``), which
    determine every Cauchy statistic because the p-th power of the norm is
    additive over disjoint coordinates."""

    scales: np.ndarray  # growth variable per level (1/delta or dimension)
    samples: list | None
    space: ModelSpace
    labels: list
    block_pth: np.ndarray | None = None
    block_p: float | None = None


def truncation_sequence(family: RadialFamily, schedule, cells: int, t: float, rng, reps: int,
                        coupled: bool = True) -> TruncationLevels:
    """Samples of ``X_k = int_{(0,t] x D_k} u N~(ds, du)`` with
    ``D_k = {delta_k < ||u|| <= 1}``.

    With ``coupled=True`` all levels share one realisation: ``X_k`` is the
    sum of independent annulus contributions ``Y_j``, ``j <= k``, so
    ``X_k - X_{k-1}`` only depends on points in the k-th annulus. With
    ``coupled=False`` every level is sampled afresh (diagnostic).
    """
    rng = as_generator(rng)
    sched = np.asarray(schedule, float)
    if np.any(np.diff(sched) >= 0) or np.any(sched <= 0):
        raise DomainError("schedule must be strictly decreasing and positive")
    top = min(1.0, family.rmax)
    uppers = np.concatenate(([top], sched[:-1]))
    annuli = [family.materialise_annulus(lo, max(hi, lo), cells) if lo < top else None
              for lo, hi in zip(sched, np.minimum(uppers, top))]
    d = family.space.dimension

    def annulus_sample(m, gen):
        if m is None or m.n_atoms == 0:
            return np.zeros((reps, d))
        lam = t * m.masses
        n = gen.poisson(lam, size=(reps, m.n_atoms))
        return (n - lam) @ m.atoms

    samples = []
    if coupled:
        acc = np.zeros((reps, d))
        for m in annuli:
            acc = acc + annulus_sample(m, rng)
            samples.append(acc.copy())
    else:
        for k in range(len(annuli)):
            acc = np.zeros((reps, d))
            for m in annuli[: k + 1]:
                acc = acc + annulus_sample(m, rng)
            samples.append(acc)
    return TruncationLevels(1.0 / sched, samples, family.space, [float(x) for x in sched])


def discrete_levels(measure: DiscreteMeasure, schedule, t: float, rng, reps: int) -> TruncationLevels:
    """Coupled ``X_k = int_{(0,t] x D_k} u N~`` for a finite measure, from one
    set of per-atom Poisson counts."""
    rng = as_generator(rng)
    sched = np.asarray(schedule, float)
    if np.any(np.diff(sched) >= 0) or np.any(sched <= 0):
        raise DomainError("schedule must be strictly decreasing and positive")
    inside = measure.inside_mask(1.0)
    lam = t * measure.masses
    n = rng.poisson(lam, size=(reps, measure.n_atoms)) if measure.n_atoms else np.zeros((reps, 0))
    centred = n - lam
    norms = measure.atom_norms()
    samples = []
    for delta in sched:
        sel = inside & (norms > delta)
        samples.append(centred[:, sel] @ measure.atoms[sel])
    return TruncationLevels(1.0 / sched, samples, measure.space, [float(x) for x in sched])


def series_levels(p: float, sizes, t: float, rng, reps: int, chunk: int = 256) -> TruncationLevels:
    """Coupled horizon values for the dimension-indexed series family
    ``sum_k w_k delta_{c_k e_k}`` (``c_k = k^-2``, ``w_k c_k^2 = k^(-2/p)``):
    level ``K`` keeps the first ``K`` coordinates of one realisation.
    Only block p-th power sums are stored."""
    rng = as_generator(rng)
    sizes = [int(s) for s in sizes]
    if any(b <= a for a, b in zip(sizes, sizes[1:])) or sizes[0] < 1:
        raise DomainError("sizes must be positive and strictly increasing")
    edges = [0] + sizes
    blocks = np.zeros((reps, len(sizes)))
    for b in range(len(sizes)):
        for lo in range(edges[b], edges[b + 1], chunk):
            hi = min(lo + chunk, edges[b + 1])
            k = np.arange(lo + 1, hi + 1, dtype=float)
            c = k**-2.0
            lam = t * k ** (-2.0 / p) / c**2
            X = (rng.poisson(lam, size=(reps, k.size)) - lam) * c
            blocks[:, b] += np.sum(np.abs(X) ** p, axis=1)
    space = ModelSpace.sequence(sizes[-1], p)
    return TruncationLevels(np.asarray(sizes, float), None, space, sizes, blocks, float(p))


def cauchy_statistic(levels: TruncationLevels, p: float):
    """``[(k, j, estimate of E||X_k - X_j||^p, stderr)]`` for adjacent pairs
    and for ``(first, k)`` at every level ``k >= 2``."""
    if levels.block_pth is not None:
        if p != levels.block_p:
            raise DomainError("block sums were stored for a different exponent")
        B = levels.block_pth
        n = B.shape[1]

        def between(k, j):
            return B[:, j + 1: k + 1].sum(1)
    else:
        S = levels.samples
        n = len(S)
        norm = levels.space.norm

        def between(k, j):
            return norm(S[k] - S[j]) ** p
    out = []
    for k in range(1, n):
        out.append((k, k - 1) + mean_and_stderr(between(k, k - 1)))
    for k in range(2, n):
        out.append((k, 0) + mean_and_stderr(between(k, 0)))
    return out
