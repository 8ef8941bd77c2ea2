"""Finite-rank gamma-radonifying operators and the random operators built
from a realised Poisson random measure.

An operator ``T = sum_n h_n (x) v_n`` acts on ``R^K`` with the weighted inner
product ``<a, b> = sum_k omega_k a_k b_k`` by ``T g = sum_n <g, h_n> v_n``.
Once the ``h_n`` are orthonormal, ``||T||_gamma^2 = E||sum_n g_n v_n||^2``
for i.i.d. standard Gaussians ``g_n``; it depends on the ``v_n`` only
through the covariance ``sum_n v_n v_n^T``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .measures import DiscreteMeasure, DomainError, ModelSpace
from .norms import SimpleFunction
from .prm import (PointConfiguration, _cell_mask, _interval_index, _interval_lengths, _restricted_values,
                  estimate_lhs, mean_and_stderr)
from .rng import as_generator, substream

RANK_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class FiniteRankOperator:
    """``sum_n h_n (x) v_n``; ``h`` is ``(n, K)``, ``v`` is ``(n, d)``."""

    h: np.ndarray
    v: np.ndarray
    space: ModelSpace
    h_weights: np.ndarray | None = None
    orthonormalised: bool = False

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.h, float))
        v = np.asarray(self.v, float).reshape(-1, self.space.dimension)
        if h.shape[0] != v.shape[0]:
            raise DomainError("h and v vectors must come in equal numbers")
        K = h.shape[1]
        om = np.ones(K) if self.h_weights is None else np.asarray(self.h_weights, float).reshape(-1)
        if om.shape != (K,) or np.any(om <= 0):
            raise DomainError("h weights must be positive, one per coordinate")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "h_weights", om)

    @classmethod
    def zero(cls, space: ModelSpace, K: int = 0) -> "FiniteRankOperator":
        return cls(np.zeros((0, K)), np.zeros((0, space.dimension)), space, None, True)

    @property
    def rank_bound(self) -> int:
        return self.h.shape[0]

    @property
    def input_dimension(self) -> int:
        return self.h.shape[1]

    def gram(self) -> np.ndarray:
        return (self.h * self.h_weights) @ self.h.T

    def apply(self, g) -> np.ndarray:
        """``T g``; ``g`` may be ``(K,)`` or ``(batch, K)``."""
        g = np.asarray(g, float)
        return (g * self.h_weights) @ self.h.T @ self.v

    def covariance(self) -> np.ndarray:
        """``sum_n v_n v_n^T`` of the orthonormalised form."""
        op = self.orthonormalise()
        return op.v.T @ op.v

    def orthonormalise(self) -> "FiniteRankOperator":
        """Modified Gram-Schmidt in the weighted inner product.

        ``h = C Q`` with orthonormal rows ``Q``; the new values are
        ``C^T v`` so the action is unchanged. Directions whose residual is
        below ``RANK_TOL`` times the largest input norm are dropped.
        """
        if self.orthonormalised:
            return self
        H, om = self.h, self.h_weights
        n, K = H.shape
        norms = np.sqrt(np.maximum(np.einsum("nk,nk,k->n", H, H, om), 0.0))
        scale = norms.max() if n else 0.0
        Q = []
        C = np.zeros((n, min(n, K)))
        for i in range(n):
            r = H[i].copy()
            coef = np.zeros(len(Q))
            for j, q in enumerate(Q):
                c = np.dot(r * om, q)
                r -= c * q
                coef[j] = c
            for j, q in enumerate(Q):  # one reorthogonalisation pass
                c = np.dot(r * om, q)
                r -= c * q
                coef[j] += c
            C[i, : len(Q)] = coef
            nr = math.sqrt(max(np.dot(r * om, r), 0.0))
            if scale > 0 and nr > RANK_TOL * scale and len(Q) < K:
                Q.append(r / nr)
                C[i, len(Q) - 1] = nr
        r = len(Q)
        Qm = np.array(Q).reshape(r, K)
        Vn = C[:, :r].T @ self.v
        return FiniteRankOperator(Qm, Vn, self.space, om, True)


def _hilbert_space(op: FiniteRankOperator, p=None):
    p = op.space.p if p is None else p
    if p != 2:
        raise DomainError("the Hilbert-Schmidt formula needs a target with p = 2")


def gamma_norm_exact_hilbert(op: FiniteRankOperator) -> float:
    """Hilbert-Schmidt norm ``(sum_n ||v_n||^2)^(1/2)`` after orthonormalisation."""
    _hilbert_space(op)
    v = op.orthonormalise().v
    if v.size == 0:
        return 0.0
    return math.sqrt(math.fsum(op.space.norm(v) ** 2))


def kappa(p: float) -> float:
    """``E|g|^p = 2^(p/2) Gamma((p+1)/2) / sqrt(pi)`` for a standard Gaussian."""
    return math.exp(0.5 * p * math.log(2.0) + gammaln(0.5 * (p + 1.0)) - 0.5 * math.log(math.pi))


def square_function_norm(op: FiniteRankOperator, p: float | None = None) -> float:
    """``(sum_s (sum_n v_n(s)^2)^(p/2) mu_s)^(1/p)`` after orthonormalisation."""
    p = op.space.p if p is None else float(p)
    v = op.orthonormalise().v
    if v.size == 0:
        return 0.0
    sigma = np.sqrt(np.einsum("nd,nd->d", v, v))
    return op.space.with_p(p).norm(sigma) if np.any(sigma) else 0.0


def gaussian_moment_exact(op: FiniteRankOperator, p: float | None = None) -> float:
    """``E||sum_n g_n v_n||_p^p = kappa_p sum_s sigma_s^p mu_s``."""
    p = op.space.p if p is None else float(p)
    return kappa(p) * square_function_norm(op, p) ** p


def kahane_band(p: float) -> tuple[float, float]:
    """Range of ``gamma norm / square-function norm`` for targets of exponent p.

    Gaussian hypercontractivity gives
    ``(E||X||^2)^(1/2) <= (E||X||^p)^(1/p) <= sqrt(p-1) (E||X||^2)^(1/2)`` for
    ``p >= 2`` and the reverse chain for ``p < 2``.
    """
    k = kappa(p) ** (1.0 / p)
    c = math.sqrt(p - 1.0)
    return (k / c, k) if p >= 2 else (k, k / c)


@dataclass(frozen=True)
class GammaEstimate:
    estimate: float
    stderr: float
    moment: float  # E||X||_q^q for the requested q
    moment_stderr: float
    moment_exact: float
    n_gauss: int


def gaussian_draws(n_gauss: int, rank: int, rng) -> np.ndarray:
    return as_generator(rng).standard_normal((n_gauss, rank))


def gamma_norm_mc(op: FiniteRankOperator, n_gauss: int, rng, moment_p: float | None = None,
                  G: np.ndarray | None = None) -> GammaEstimate:
    """Monte Carlo ``(E||sum g_n v_n||^2)^(1/2)`` with a delta-method stderr,
    plus the ``q``-th moment diagnostic (``q = moment_p`` or the space's p)
    next to its closed form. Passing ``G`` (at least ``rank`` columns)
    reuses fixed Gaussian draws."""
    op = op.orthonormalise()
    q = op.space.p if moment_p is None else float(moment_p)
    r = op.v.shape[0]
    if G is None:
        G = gaussian_draws(n_gauss, r, rng)
    X = G[:, :r] @ op.v
    nrm = op.space.norm(X)
    m2, se2 = mean_and_stderr(nrm**2)
    est = math.sqrt(m2)
    se = se2 / (2.0 * est) if est > 0 else 0.0
    qn = nrm if q == op.space.p else op.space.with_p(q).norm(X)
    mq, seq = mean_and_stderr(qn**q)
    return GammaEstimate(est, se, mq, seq, gaussian_moment_exact(op, q), X.shape[0])


# --------------------------------------------------------------------------
# ideal property


def operator_norm_weighted(A, weights, p: float) -> float:
    """Norm of ``A`` on ``L^p_mu`` (grid weights ``mu``), exact for
    p in {1, 2, inf} and a Riesz-Thorin upper bound otherwise."""
    A = np.asarray(A, float)
    mu = np.asarray(weights, float)
    n1 = float(np.max(np.abs(A).T @ mu / mu)) if A.size else 0.0
    ninf = float(np.max(np.abs(A).sum(1))) if A.size else 0.0
    s = np.sqrt(mu)
    n2 = float(np.linalg.norm(s[:, None] * A / s[None, :], 2)) if A.size else 0.0
    if p == 1:
        return n1
    if p == 2:
        return n2
    if math.isinf(p):
        return ninf
    if p < 2:
        theta = 2.0 - 2.0 / p  # 1/p = (1 - theta)/1 + theta/2
        return n1 ** (1 - theta) * n2**theta
    theta = 2.0 / p  # 1/p = theta/2 + (1 - theta)/inf
    return n2**theta * ninf ** (1 - theta)


def hilbert_operator_norm(R, h_weights) -> float:
    om = np.sqrt(np.asarray(h_weights, float))
    R = np.asarray(R, float)
    return float(np.linalg.norm(om[:, None] * R / om[None, :], 2)) if R.size else 0.0


def compose(T: FiniteRankOperator, R=None, Tpost=None) -> FiniteRankOperator:
    """``Tpost o T o R`` with ``R`` acting on the (weighted) input space and
    ``Tpost`` on the target; ``R`` enters through its adjoint
    ``Omega^-1 R^T Omega``."""
    K, d = T.input_dimension, T.space.dimension
    h, v = T.h, T.v
    if R is not None:
        R = np.asarray(R, float)
        if R.shape != (K, K):
            raise DomainError("R must be a square matrix on the input space")
        om = T.h_weights
        h = (h * om) @ R / om  # rows: (Omega^-1 R^T Omega h_n)^T
    if Tpost is not None:
        A = np.asarray(Tpost, float)
        if A.shape != (d, d):
            raise DomainError("Tpost must be a square matrix on the target")
        v = v @ A.T
    return FiniteRankOperator(h, v, T.space, T.h_weights, False)


@dataclass(frozen=True)
class IdealCheck:
    lhs: float
    lhs_stderr: float
    bound: float
    bound_stderr: float
    norm_R: float
    norm_Tpost: float
    exact: bool

    @property
    def holds(self) -> bool:
        return self.lhs <= self.bound + 3.0 * math.hypot(self.lhs_stderr, self.bound_stderr) + 1e-12 * self.bound


def ideal_property_check(T: FiniteRankOperator, R, Tpost, n_gauss: int = 20000, rng=0) -> IdealCheck:
    """``||Tpost T R||_gamma`` against ``||Tpost|| ||T||_gamma ||R||``.

    Exact for p = 2 targets; otherwise both gamma norms use the same
    Gaussian draws.
    """
    S = compose(T, R, Tpost).orthonormalise()
    To = T.orthonormalise()
    nR = hilbert_operator_norm(np.eye(T.input_dimension) if R is None else R, T.h_weights)
    d = T.space.dimension
    nA = operator_norm_weighted(np.eye(d) if Tpost is None else Tpost, T.space.weights, T.space.p)
    if T.space.p == 2:
        lhs = gamma_norm_exact_hilbert(S)
        g = gamma_norm_exact_hilbert(To)
        return IdealCheck(lhs, 0.0, nA * g * nR, 0.0, nR, nA, True)
    G = gaussian_draws(n_gauss, max(S.rank_bound, To.rank_bound), rng)
    a = gamma_norm_mc(S, n_gauss, None, G=G)
    b = gamma_norm_mc(To, n_gauss, None, G=G)
    return IdealCheck(a.estimate, a.stderr, nA * b.estimate * nR, nA * b.stderr * nR, nR, nA, False)


# --------------------------------------------------------------------------
# random operators from a realised Poisson random measure


def _point_jumps(cfg: PointConfiguration, F: SimpleFunction, cell):
    """Jump vectors ``F(s_k, u_{a_k})`` of the points with ``u_{a_k}`` in B."""
    mask = _cell_mask(cell, cfg.measure.n_atoms)
    sel = mask[cfg.atoms]
    times, atoms = cfg.times[sel], cfg.atoms[sel]
    vals = _restricted_values(cfg.measure, F, cell)
    iv = _interval_index(F, times)
    jumps = np.zeros((times.size, cfg.measure.space.dimension))
    ok = iv >= 0
    jumps[ok] = vals[iv[ok], atoms[ok]]
    return times, jumps


def build_TG(cfg: PointConfiguration, F: SimpleFunction, cell=None) -> FiniteRankOperator:
    """``T_F g = sum_k g_k F(s_k, u_{a_k})`` on the counting space of the
    realised points in ``(0, t] x B`` (unit weight per point)."""
    _, jumps = _point_jumps(cfg, F, cell)
    K = jumps.shape[0]
    return FiniteRankOperator(np.eye(K), jumps, cfg.measure.space, None, True)


def build_jump_operator(cfg: PointConfiguration, F: SimpleFunction, cell=None) -> FiniteRankOperator:
    """``J h = sum_s h_s Delta M(s)`` indexed by the distinct jump times;
    jumps at equal times are summed."""
    times, jumps = _point_jumps(cfg, F, cell)
    if times.size == 0:
        return FiniteRankOperator.zero(cfg.measure.space)
    uniq, inv = np.unique(times, return_inverse=True)
    dM = np.zeros((uniq.size, jumps.shape[1]))
    np.add.at(dM, inv, jumps)
    return FiniteRankOperator(np.eye(uniq.size), dM, cfg.measure.space, None, True)


def campbell_second_moment(measure: DiscreteMeasure, F: SimpleFunction, cell=None, t: float | None = None) -> float:
    """``int_0^t int_B ||F||^2 dlambda ds`` as an exact finite sum."""
    vals = _restricted_values(measure, F, cell)
    dt = _interval_lengths(F, t)
    if vals.size == 0:
        return 0.0
    sq = measure.space.norm(vals) ** 2
    return math.fsum((dt[:, None] * measure.masses[None, :] * sq).ravel())


@dataclass(frozen=True)
class MomentEstimate:
    estimate: float
    stderr: float
    perSample: np.ndarray
    exact_inner: bool


def estimate_expected_gamma_norm(measure: DiscreteMeasure, F: SimpleFunction, cell, p: float, t: float,
                                 reps_outer: int, n_gauss: int, rng, chunk: int = 64) -> MomentEstimate:
    """Monte Carlo ``E||T_{F_B}||_gamma^p`` over realisations of N.

    Per realisation only the Poisson counts ``N_ia`` per (interval, atom)
    matter: ``sum_k g_k v_k`` has the law of ``sum_ia sqrt(N_ia) g_ia v_ia``.
    For p = 2 targets the inner norm is exact; otherwise it is estimated
    from ``n_gauss`` draws and the plug-in ``Q^(p/2)`` is corrected to second
    order in the inner variance. The stderr is taken across outer
    replications, which already contains the inner noise.
    """
    if reps_outer < 2:
        raise DomainError("need at least two outer replications")
    rng = as_generator(rng)
    vals = _restricted_values(measure, F, cell)
    dt = _interval_lengths(F, t)
    lam = (dt[:, None] * measure.masses[None, :]).ravel()
    V = vals.reshape(-1, measure.space.dimension)
    active = np.flatnonzero(np.any(V != 0, axis=1) & (lam > 0))
    lam, V = lam[active], V[active]
    space = measure.space
    exact = space.p == 2
    if active.size == 0:
        x = np.zeros(reps_outer)
        return MomentEstimate(0.0, 0.0, x, exact)
    counts = rng.poisson(lam, size=(reps_outer, lam.size)).astype(float)
    if exact:
        sq = space.norm(V) ** 2
        Q = counts @ sq
        x = Q ** (p / 2.0)
    else:
        x = np.empty(reps_outer)
        a = p / 2.0
        for lo in range(0, reps_outer, chunk):
            c = counts[lo: lo + chunk]
            G = rng.standard_normal((c.shape[0], n_gauss, lam.size))
            X = np.einsum("rgm,rm,md->rgd", G, np.sqrt(c), V)
            n2 = space.norm(X) ** 2
            Q = n2.mean(1)
            varQ = n2.var(1, ddof=1) / n_gauss if n_gauss > 1 else np.zeros_like(Q)
            with np.errstate(divide="ignore", invalid="ignore"):
                corr = np.where(Q > 0, 0.5 * a * (a - 1.0) * Q ** (a - 2.0) * varQ, 0.0)
            x[lo: lo + chunk] = Q**a - corr
    est, se = mean_and_stderr(x)
    return MomentEstimate(est, se, x, exact)


@dataclass(frozen=True)
class UMDReport:
    status: str  # "ok" or "degenerate"
    lhs: float
    lhs_stderr: float
    rhs: float
    rhs_stderr: float
    ratio: float
    ratio_stderr: float
    variant: str
    campbell: float | None

    def to_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in self.__dict__.items()}


def umd_equivalence_check(measure: DiscreteMeasure, F: SimpleFunction, cell, p: float, t: float,
                          reps: int, reps_outer: int, n_gauss: int, rng, variant: str = "sup") -> UMDReport:
    """``E sup ||int F dN~||^p`` (or the horizon variant) against
    ``E||T_{F_B}||_gamma^p``, with their ratio and a propagated stderr."""
    seed = rng if isinstance(rng, (int, np.integer)) else int(as_generator(rng).integers(2**63))
    lhs = estimate_lhs(measure, F, cell, p, t, reps, substream(seed, "umd", "lhs"), variant)
    rhs = estimate_expected_gamma_norm(measure, F, cell, p, t, reps_outer, n_gauss, substream(seed, "umd", "rhs"))
    camp = campbell_second_moment(measure, F, cell, t) if (p == 2 and measure.space.p == 2) else None
    if rhs.estimate == 0 or lhs.estimate == 0:
        return UMDReport("degenerate", lhs.estimate, lhs.stderr, rhs.estimate, rhs.stderr,
                         math.nan, math.nan, variant, camp)
    ratio = lhs.estimate / rhs.estimate
    rse = ratio * math.hypot(lhs.stderr / lhs.estimate, rhs.stderr / rhs.estimate)
    return UMDReport("ok", lhs.estimate, lhs.stderr, rhs.estimate, rhs.stderr, ratio, rse, variant, camp)
