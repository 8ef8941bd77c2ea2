"""Two-sample energy-distance permutation test.

Samples of compound Poisson type live on a lattice of atom sums, so the
pooled sample is compressed to its distinct rows first; a permutation then
only needs the per-row counts of the first group, which follow a
multivariate hypergeometric law.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .rng import as_generator

MAX_DISTINCT = 6000


@dataclass(frozen=True)
class EnergyTest:
    statistic: float
    p_value: float
    n_permutations: int
    n_distinct: int

    def passes(self, level: float = 0.999) -> bool:
        return self.p_value > 1.0 - level


def _compress(x, y, decimals: int):
    pooled = np.round(np.vstack([x, y]), decimals)
    rows, inv = np.unique(pooled, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    a = np.bincount(inv[: len(x)], minlength=len(rows))
    b = np.bincount(inv[len(x):], minlength=len(rows))
    return rows, a, b


def _energy(D, a, b, n1, n2):
    """Scaled energy statistic from count vectors (rows of ``a``/``b``)."""
    Da, Db = a @ D, b @ D
    exy = np.einsum("...u,...u->...", Da, b) / (n1 * n2)
    exx = np.einsum("...u,...u->...", Da, a) / (n1 * n1)
    eyy = np.einsum("...u,...u->...", Db, b) / (n2 * n2)
    return n1 * n2 / (n1 + n2) * (2 * exy - exx - eyy)


def energy_test(x, y, n_permutations: int = 1999, rng=0, decimals: int = 9, batch: int = 200) -> EnergyTest:
    """Permutation p-value ``(1 + #{T_perm >= T_obs}) / (1 + B)`` for the
    Euclidean energy distance between the samples ``x`` and ``y``."""
    x = np.atleast_2d(np.asarray(x, float))
    y = np.atleast_2d(np.asarray(y, float))
    if x.shape[0] == 1 and x.shape[1] > 1 and y.shape[0] == 1:
        x, y = x.T, y.T
    rows, a, b = _compress(x, y, decimals)
    if len(rows) > MAX_DISTINCT:
        raise ValueError(f"{len(rows)} distinct values; the compressed test handles at most {MAX_DISTINCT}")
    n1, n2 = len(x), len(y)
    D = cdist(rows, rows)
    af, bf = a.astype(float), b.astype(float)
    obs = float(_energy(D, af, bf, n1, n2))
    rng = as_generator(rng)
    total = a + b
    exceed = 0
    done = 0
    while done < n_permutations:
        k = min(batch, n_permutations - done)
        pa = rng.multivariate_hypergeometric(total, n1, size=k).astype(float)
        stats = _energy(D, pa, total - pa, n1, n2)
        exceed += int(np.sum(stats >= obs - 1e-12 * abs(obs)))
        done += k
    return EnergyTest(obs, (1 + exceed) / (1 + n_permutations), n_permutations, len(rows))
