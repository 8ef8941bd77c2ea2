"""Simple integrands and the norms in which the integrability criteria are
stated: vector norms, the square-function norm S, the p-integral norm D and
their max (p >= 2) or inf-convolution (p <= 2) combination."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .infconv import SolverConfig, d_norm, s_norm, solve_inf_convolution
from .measures import DiscreteMeasure, DomainError, ModelSpace


@dataclass(frozen=True, eq=False)
class SimpleFunction:
    """``F = sum_{i,j} 1_{(t_i, t_{i+1}] x B_j} v_ij``.

    ``cells`` are disjoint tuples of atom indices of the measure the function
    is integrated against; ``values`` has shape ``(m, n, d)`` for ``m`` time
    intervals and ``n`` cells.
    """

    breakpoints: np.ndarray
    cells: tuple
    values: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float).reshape(-1)
        if bp.size < 2 or bp[0] != 0.0 or np.any(np.diff(bp) <= 0):
            raise DomainError("breakpoints must start at 0 and increase strictly")
        cells = tuple(np.asarray(c, dtype=np.int64).reshape(-1) for c in self.cells)
        allidx = np.concatenate(cells) if cells else np.zeros(0, np.int64)
        if np.unique(allidx).size != allidx.size:
            raise DomainError("cells must be pairwise disjoint")
        if allidx.size and allidx.min() < 0:
            raise DomainError("negative atom index in a cell")
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 3 or vals.shape[:2] != (bp.size - 1, len(cells)):
            raise DomainError("values must have shape (intervals, cells, d)")
        for c in cells:
            c.setflags(write=False)
        bp.setflags(write=False)
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "values", vals)

    @property
    def horizon(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def dimension(self) -> int:
        return self.values.shape[2]

    @classmethod
    def constant(cls, cells, values, t: float = 1.0) -> "SimpleFunction":
        """Time-constant integrand on ``(0, t]``; ``values`` is ``(n, d)``."""
        v = np.asarray(values, dtype=float)
        return cls(np.array([0.0, t]), tuple(cells), v[None])

    def scaled(self, c: float) -> "SimpleFunction":
        return SimpleFunction(self.breakpoints, self.cells, c * self.values)

    def with_values(self, values) -> "SimpleFunction":
        return SimpleFunction(self.breakpoints, self.cells, values)

    def check_measure(self, measure: DiscreteMeasure) -> None:
        if self.dimension != measure.space.dimension:
            raise DomainError("integrand dimension differs from the space dimension")
        for c in self.cells:
            if c.size and c.max() >= measure.n_atoms:
                raise DomainError("cell refers to a missing atom")

    def cell_masses(self, measure: DiscreteMeasure) -> np.ndarray:
        self.check_measure(measure)
        return np.array([math.fsum(measure.masses[c]) for c in self.cells])

    def atom_values(self, n_atoms: int) -> np.ndarray:
        """Values per (interval, atom): shape ``(m, n_atoms, d)``; zero off the cells."""
        out = np.zeros((self.values.shape[0], n_atoms, self.dimension))
        for j, c in enumerate(self.cells):
            out[:, c, :] = self.values[:, j, None, :]
        return out

    def atom_cell(self, n_atoms: int) -> np.ndarray:
        """Cell index of each atom, -1 for atoms outside every cell."""
        lab = np.full(n_atoms, -1, dtype=np.int64)
        for j, c in enumerate(self.cells):
            lab[c] = j
        return lab

    def matrix_form(self, measure: DiscreteMeasure):
        """Rows ``(i, j)`` with weight ``dt_i * lambda(B_j)`` and values ``v_ij``.

        Rows of zero weight (empty cells) are dropped; ``keep`` marks the
        retained rows in the flattened ``(m * n)`` order.
        """
        w = (self.dt[:, None] * self.cell_masses(measure)[None, :]).reshape(-1)
        V = self.values.reshape(-1, self.dimension)
        keep = w > 0
        return w[keep], V[keep], keep


@dataclass(frozen=True, eq=False)
class IntegrandDecomposition:
    """Split ``F = F1 + F2`` of an integrand's values (same shape as ``F.values``)."""

    F1values: np.ndarray
    F2values: np.ndarray


@dataclass(frozen=True, eq=False)
class SumNormResult:
    value: float
    decomposition: IntegrandDecomposition
    status: str
    residual: float
    iterations: int
    method: str

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def identity_integrand(measure: DiscreteMeasure, radius: float = 1.0, t: float = 1.0) -> SimpleFunction:
    """``G(s, u) = u 1{||u|| <= radius}`` on ``(0, t]``, one cell per atom."""
    idx = np.flatnonzero(measure.inside_mask(radius))
    cells = tuple(np.array([i]) for i in idx)
    vals = measure.atoms[idx] if idx.size else np.zeros((0, measure.space.dimension))
    return SimpleFunction.constant(cells, vals, t)


def _exponent(space: ModelSpace, p):
    p = space.p if p is None else float(p)
    if not (p > 1 and math.isfinite(p)):
        raise DomainError("exponent must be finite and > 1")
    return p


def vector_norm(space: ModelSpace, f) -> float:
    return float(space.norm(np.asarray(f, dtype=float)))


def s_norm_of(measure: DiscreteMeasure, F: SimpleFunction, p=None) -> float:
    """Square-function norm ``(sum_s mu_s q(s)^(p/2))^(1/p)`` with
    ``q(s) = sum_i dt_i sum_j lambda(B_j) v_ij(s)^2``."""
    p = _exponent(measure.space, p)
    w, V, _ = F.matrix_form(measure)
    return s_norm(V, w, measure.space.weights, p)


def d_norm_of(measure: DiscreteMeasure, F: SimpleFunction, p=None) -> float:
    """``(sum_i dt_i sum_j lambda(B_j) ||v_ij||_p^p)^(1/p)``."""
    p = _exponent(measure.space, p)
    w, V, _ = F.matrix_form(measure)
    return d_norm(V, w, measure.space.weights, p)


def ip_norm_max(measure: DiscreteMeasure, F: SimpleFunction, p=None) -> float:
    p = _exponent(measure.space, p)
    if p < 2:
        raise DomainError("the max-combination is used for p >= 2")
    return max(s_norm_of(measure, F, p), d_norm_of(measure, F, p))


def ip_norm_sum(measure: DiscreteMeasure, F: SimpleFunction, p=None,
                solver: SolverConfig | None = None, method: str = "auto") -> SumNormResult:
    """``inf { ||F1||_S + ||F2||_D : F = F1 + F2 }`` for ``1 < p <= 2``.

    The result carries the minimising split, the relative duality gap as
    residual, and an explicit ``"unconverged"`` status when the gap exceeds
    the solver tolerance.
    """
    p = _exponent(measure.space, p)
    if not p <= 2:
        raise DomainError("the sum-combination is used for 1 < p <= 2")
    w, V, keep = F.matrix_form(measure)
    res = solve_inf_convolution(V, w, measure.space.weights, p, solver, method)
    F1 = np.zeros((keep.size, F.dimension))
    F1[keep] = res.X
    F1 = F1.reshape(F.values.shape)
    dec = IntegrandDecomposition(F1, F.values - F1)
    return SumNormResult(float(res.value), dec, res.status, float(res.residual), res.iterations, res.method)


def ip_norm(measure: DiscreteMeasure, F: SimpleFunction, p=None, solver: SolverConfig | None = None):
    """The combined norm for either regime, with the solver status (or
    ``"exact"`` for p >= 2)."""
    p = _exponent(measure.space, p)
    if p >= 2:
        return ip_norm_max(measure, F, p), "exact"
    r = ip_norm_sum(measure, F, p, solver)
    return r.value, r.status
