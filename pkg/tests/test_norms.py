import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy import optimize

from conftest import random_discrete
from levy_lab.infconv import SolverConfig
from levy_lab.measures import DiscreteMeasure, DomainError, ModelSpace
from levy_lab.norms import (
    SimpleFunction,
    d_norm_of,
    identity_integrand,
    ip_norm,
    ip_norm_max,
    ip_norm_sum,
    s_norm_of,
    vector_norm,
)
from strategies import measure_and_function

TOL = SolverConfig().tol


def single_atom(w, f0, p, t=1.0, weights=None):
    f0 = np.atleast_1d(np.asarray(f0, float))
    d = f0.size
    space = ModelSpace.sequence(d, p) if weights is None else ModelSpace.grid(weights, p)
    m = DiscreteMeasure(space, [np.full(d, 0.5)], [w])
    return m, SimpleFunction.constant((np.array([0]),), f0[None, :], t)


def _rescaled(F):
    # both norms are 1-homogeneous; factoring out the largest entry keeps
    # the plain loops below clear of underflow
    c = float(np.abs(F.values).max()) or 1.0
    return c, F.values / c


def brute_s(m, F, p):
    mu = m.space.weights
    c, V = _rescaled(F)
    total = 0.0
    for s in range(m.space.dimension):
        q = 0.0
        for i in range(len(F.dt)):
            for j, cell in enumerate(F.cells):
                q += F.dt[i] * m.masses[cell].sum() * V[i, j, s] ** 2
        total += mu[s] * q ** (p / 2)
    return c * total ** (1 / p)


def brute_d(m, F, p):
    mu = m.space.weights
    c, V = _rescaled(F)
    total = 0.0
    for i in range(len(F.dt)):
        for j, cell in enumerate(F.cells):
            for s in range(m.space.dimension):
                total += F.dt[i] * m.masses[cell].sum() * mu[s] * abs(V[i, j, s]) ** p
    return c * total ** (1 / p)


# ---------------------------------------------------------------- SimpleFunction


def test_simple_function_validation():
    with pytest.raises(DomainError):
        SimpleFunction([0.0, 0.5, 0.5], (np.array([0]),), np.zeros((2, 1, 1)))
    with pytest.raises(DomainError):
        SimpleFunction([0.1, 0.5], (np.array([0]),), np.zeros((1, 1, 1)))
    with pytest.raises(DomainError):
        SimpleFunction([0.0, 1.0], (np.array([0, 1]), np.array([1])), np.zeros((1, 2, 1)))
    with pytest.raises(DomainError):
        SimpleFunction([0.0, 1.0], (np.array([0]),), np.zeros((2, 1, 1)))


def test_simple_function_checks_measure():
    m = DiscreteMeasure(ModelSpace.sequence(2, 2.0), [[1.0, 0.0]], [1.0])
    F = SimpleFunction.constant((np.array([3]),), np.ones((1, 2)))
    with pytest.raises(DomainError):
        s_norm_of(m, F)
    G = SimpleFunction.constant((np.array([0]),), np.ones((1, 3)))
    with pytest.raises(DomainError):
        d_norm_of(m, G)


# ---------------------------------------------------------------- vector / S / D


def test_vector_norm_op():
    assert vector_norm(ModelSpace.grid([2.0, 3.0], 2.0), [1.0, 1.0]) == pytest.approx(math.sqrt(5))


@pytest.mark.parametrize("p", [1.3, 2.0, 3.5])
def test_single_atom_s_and_d(p):
    f0 = np.array([0.7, -1.2, 0.1])
    w = 2.5
    m, F = single_atom(w, f0, p)
    lp = np.sum(np.abs(f0) ** p) ** (1 / p)
    assert s_norm_of(m, F) == pytest.approx(math.sqrt(w) * lp, rel=1e-14)
    assert d_norm_of(m, F) == pytest.approx(w ** (1 / p) * lp, rel=1e-14)


def test_s_norm_horizon_doubling():
    m, F = single_atom(1.3, [1.0, 2.0], 3.0, t=1.0)
    _, F2 = single_atom(1.3, [1.0, 2.0], 3.0, t=2.0)
    assert s_norm_of(m, F2) == pytest.approx(math.sqrt(2) * s_norm_of(m, F), rel=1e-14)


def test_zero_function_norms_vanish(rng):
    m = random_discrete(rng, n=4)
    F = SimpleFunction.constant((np.arange(4),), np.zeros((1, 3)))
    assert s_norm_of(m, F) == d_norm_of(m, F) == ip_norm_max(m, F) == 0.0
    r = ip_norm_sum(m, F, 1.5)
    assert r.value == 0.0 and np.all(r.decomposition.F1values == 0) and np.all(r.decomposition.F2values == 0)


@given(measure_and_function())
def test_s_and_d_match_brute_force(mf):
    m, F = mf
    p = m.space.p
    assert s_norm_of(m, F) == pytest.approx(brute_s(m, F, p), rel=1e-12, abs=1e-300)
    assert d_norm_of(m, F) == pytest.approx(brute_d(m, F, p), rel=1e-12, abs=1e-300)


def test_d_norm_pth_power_additive_over_cells(rng):
    m = random_discrete(rng, n=6, grid=True, p=1.7)
    vals = rng.normal(size=(1, 2, 3))
    F = SimpleFunction.constant((np.array([0, 2]), np.array([4, 5])), vals[0])
    F1 = SimpleFunction.constant((np.array([0, 2]),), vals[0, :1])
    F2 = SimpleFunction.constant((np.array([4, 5]),), vals[0, 1:])
    assert d_norm_of(m, F) ** 1.7 == pytest.approx(d_norm_of(m, F1) ** 1.7 + d_norm_of(m, F2) ** 1.7, rel=1e-13)


# ---------------------------------------------------------------- max combination


def test_ip_norm_max_examples():
    f0 = np.array([0.3, -0.4])
    m, F = single_atom(1.0, f0, 2.0)
    assert ip_norm_max(m, F) == pytest.approx(0.5, rel=1e-15)
    m4, F4 = single_atom(4.0, f0, 2.0)
    assert s_norm_of(m4, F4) == pytest.approx(d_norm_of(m4, F4), rel=1e-15)
    assert ip_norm_max(m4, F4) == pytest.approx(1.0, rel=1e-15)
    with pytest.raises(DomainError):
        ip_norm_max(m, F, 1.5)
    with pytest.raises(DomainError):
        ip_norm_sum(m, F, 2.5)


# ---------------------------------------------------------------- sum combination


def golden(fun, lo, hi):
    res = optimize.minimize_scalar(fun, bracket=(lo, 0.5 * (lo + hi), hi), method="golden",
                                   options={"xtol": 1e-12})
    return res.fun, res.x


def test_golden_oracle_on_pth_power_objective():
    c, p = 1.7, 1.5
    val, a = golden(lambda a: abs(a) ** p + abs(c - a) ** p, -1.0, 3.0)
    assert a == pytest.approx(c / 2, abs=1e-6)
    assert val == pytest.approx(2**-0.5 * c**1.5, rel=1e-10)


@pytest.mark.parametrize("p", [1.1, 1.5, 1.9])
@pytest.mark.parametrize("w", [0.2, 1.0, 5.0])
def test_single_atom_sum_norm_matches_golden(p, w):
    c = -1.3
    m, F = single_atom(w, [c], p)
    r = ip_norm_sum(m, F)
    oracle, _ = golden(lambda a: math.sqrt(w) * abs(a) + w ** (1 / p) * abs(c - a), -3.0, 3.0)
    assert r.converged
    assert r.value == pytest.approx(oracle, rel=1e-6)
    assert r.value <= min(s_norm_of(m, F), d_norm_of(m, F)) * (1 + 1e-12)


def test_sum_norm_decomposition_is_a_split(rng):
    m = random_discrete(rng, n=7, d=4, p=1.4, grid=True)
    F = SimpleFunction(np.array([0.0, 0.3, 1.0]), (np.array([0, 1]), np.array([2]), np.array([5, 6])),
                       rng.normal(size=(2, 3, 4)))
    r = ip_norm_sum(m, F)
    dec = r.decomposition
    assert np.allclose(dec.F1values + dec.F2values, F.values, rtol=0, atol=1e-15)
    S = s_norm_of(m, F.with_values(dec.F1values))
    D = d_norm_of(m, F.with_values(dec.F2values))
    assert S + D == pytest.approx(r.value, rel=1e-12)
    assert r.residual <= TOL


def test_sum_norm_is_locally_minimal(rng):
    m = random_discrete(rng, n=5, d=3, p=1.6)
    F = SimpleFunction.constant(tuple(np.array([i]) for i in range(5)), rng.normal(size=(5, 3)))
    r = ip_norm_sum(m, F)
    X = r.decomposition.F1values
    for _ in range(200):
        Z = X + rng.normal(size=X.shape) * 10 ** rng.uniform(-6, 0)
        val = s_norm_of(m, F.with_values(Z)) + d_norm_of(m, F.with_values(F.values - Z))
        assert val >= r.value * (1 - 1e-9)


def test_first_order_fallback_agrees(rng):
    m = random_discrete(rng, n=4, d=3, p=1.5)
    F = SimpleFunction.constant(tuple(np.array([i]) for i in range(4)), rng.normal(size=(4, 3)))
    exact = ip_norm_sum(m, F)
    fo = ip_norm_sum(m, F, method="first-order")
    assert fo.value >= exact.value * (1 - 1e-9)
    assert fo.value == pytest.approx(exact.value, rel=1e-5)


def test_unconverged_status_is_explicit(rng):
    m = random_discrete(rng, n=6, d=5, p=1.3)
    F = SimpleFunction.constant(tuple(np.array([i]) for i in range(6)), rng.normal(size=(6, 5)))
    r = ip_norm_sum(m, F, solver=SolverConfig(tol=1e-14, max_iter=3), method="first-order")
    assert r.status == "unconverged"
    assert math.isfinite(r.value) and r.value >= ip_norm_sum(m, F).value * (1 - 1e-12)


def test_p_equal_two_accepted_and_matches_max(rng):
    m = random_discrete(rng, n=5, d=3, p=2.0, grid=True)
    F = identity_integrand(m, radius=10.0)
    assert ip_norm_sum(m, F).value == pytest.approx(ip_norm_max(m, F), rel=1e-8)


def test_p_to_two_consistency(rng):
    for _ in range(10):
        m = random_discrete(rng, n=6, d=4, grid=True)
        F = SimpleFunction.constant(tuple(np.array([i]) for i in range(6)), rng.normal(size=(6, 4)))
        lo = ip_norm_sum(m, F, 2 - 1e-6).value
        hi = ip_norm_max(m, F, 2 + 1e-6)
        assert abs(lo - hi) <= 1e-3 * hi


def test_ip_norm_dispatch(rng):
    m = random_discrete(rng, n=3, p=3.0)
    F = identity_integrand(m, 10.0)
    assert ip_norm(m, F) == (ip_norm_max(m, F), "exact")
    val, status = ip_norm(m, F, 1.5)
    assert status == "converged" and val == ip_norm_sum(m, F, 1.5).value


# ---------------------------------------------------------------- norm properties


def _norms(m, F, p):
    out = {"S": s_norm_of(m, F, p), "D": d_norm_of(m, F, p)}
    if p >= 2:
        out["max"] = ip_norm_max(m, F, p)
    if p <= 2:
        out["sum"] = ip_norm_sum(m, F, p).value
    return out


@given(measure_and_function(), st.floats(-20, 20))
def test_homogeneity(mf, c):
    m, F = mf
    p = m.space.p
    base, scaled = _norms(m, F, p), _norms(m, F.scaled(c), p)
    for k in base:
        assert scaled[k] == pytest.approx(abs(c) * base[k], rel=1e-10, abs=1e-12)


@given(measure_and_function(), st.integers(0, 2**32 - 1))
def test_triangle_inequality(mf, seed):
    m, F = mf
    p = m.space.p
    G = F.with_values(np.random.default_rng(seed).normal(size=F.values.shape))
    a, b, ab = _norms(m, F, p), _norms(m, G, p), _norms(m, F.with_values(F.values + G.values), p)
    for k in a:
        slack = 1e-6 + 2 * TOL if k == "sum" else 1e-12
        assert ab[k] <= (a[k] + b[k]) * (1 + slack) + 1e-12


@given(measure_and_function(), st.integers(0, 2**32 - 1))
def test_monotone_under_pointwise_domination(mf, seed):
    m, F = mf
    p = m.space.p
    shrink = np.random.default_rng(seed).uniform(0, 1, F.values.shape)
    small = F.with_values(F.values * shrink * np.sign(np.random.default_rng(seed + 1).normal(size=F.values.shape)))
    big, little = _norms(m, F, p), _norms(m, small, p)
    for k in big:
        slack = 2 * TOL if k == "sum" else 1e-12
        assert little[k] <= big[k] * (1 + slack) + 1e-14


@given(measure_and_function(p=1.5))
def test_sum_norm_below_pure_assignments(mf):
    m, F = mf
    r = ip_norm_sum(m, F)
    assert r.converged
    assert r.value <= min(s_norm_of(m, F), d_norm_of(m, F)) * (1 + 1e-12) + 1e-300
