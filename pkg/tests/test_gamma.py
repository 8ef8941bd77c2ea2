import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import ortho_group

from conftest import random_discrete
from levy_lab.gamma import (
    FiniteRankOperator,
    build_jump_operator,
    build_TG,
    campbell_second_moment,
    compose,
    estimate_expected_gamma_norm,
    gamma_norm_exact_hilbert,
    gamma_norm_mc,
    gaussian_moment_exact,
    hilbert_operator_norm,
    ideal_property_check,
    kahane_band,
    kappa,
    operator_norm_weighted,
    square_function_norm,
    umd_equivalence_check,
)
from levy_lab.measures import DiscreteMeasure, DomainError, ModelSpace
from levy_lab.norms import SimpleFunction
from levy_lab.prm import PointConfiguration, sample_prm


def random_operator(rng, n=4, K=6, d=3, p=2.0, weighted=False):
    space = ModelSpace.grid(rng.uniform(0.5, 2.0, d), p) if weighted else ModelSpace.sequence(d, p)
    om = rng.uniform(0.3, 3.0, K) if weighted else None
    return FiniteRankOperator(rng.normal(size=(n, K)), rng.normal(size=(n, d)), space, om)


# ---------------------------------------------------------------- construction


def test_operator_validation():
    s = ModelSpace.sequence(2, 2.0)
    with pytest.raises(DomainError):
        FiniteRankOperator(np.ones((2, 3)), np.ones((3, 2)), s)
    with pytest.raises(DomainError):
        FiniteRankOperator(np.ones((1, 3)), np.ones((1, 2)), s, h_weights=[1.0, -1.0, 1.0])
    z = FiniteRankOperator.zero(s, 4)
    assert z.rank_bound == 0 and z.input_dimension == 4 and gamma_norm_exact_hilbert(z) == 0.0


def test_orthonormalise_examples():
    s = ModelSpace.sequence(2, 2.0)
    op = FiniteRankOperator([[1.0, 0.0], [1.0, 0.0]], [[3.0, 0.0], [0.0, 4.0]], s)
    o = op.orthonormalise()
    assert o.rank_bound == 1
    assert np.allclose(np.abs(o.v), [[3.0, 4.0]])
    assert gamma_norm_exact_hilbert(op) == pytest.approx(5.0, rel=1e-15)
    assert o.orthonormalise() is o


@given(st.integers(0, 2**32 - 1), st.booleans())
def test_orthonormalise_preserves_action(seed, weighted):
    rng = np.random.default_rng(seed)
    op = random_operator(rng, n=int(rng.integers(1, 8)), K=int(rng.integers(1, 6)), weighted=weighted)
    o = op.orthonormalise()
    assert np.allclose(o.gram(), np.eye(o.rank_bound), atol=1e-12)
    g = rng.normal(size=(5, op.input_dimension))
    assert np.allclose(o.apply(g), op.apply(g), atol=1e-11 * (1 + np.abs(op.apply(g)).max()))


def test_rank_deficient_input():
    rng = np.random.default_rng(2)
    base = rng.normal(size=(2, 5))
    h = np.vstack([base, base.sum(0, keepdims=True), 2 * base[:1]])
    op = FiniteRankOperator(h, rng.normal(size=(4, 3)), ModelSpace.sequence(3, 2.0))
    assert op.orthonormalise().rank_bound == 2


# ---------------------------------------------------------------- Hilbert-Schmidt and Monte Carlo


def test_hilbert_schmidt_deterministic_matches_frobenius():
    rng = np.random.default_rng(3)
    for _ in range(20):
        op = random_operator(rng, weighted=False)
        M = op.h.T @ op.v  # matrix of T from R^K to R^d
        assert gamma_norm_exact_hilbert(op) == pytest.approx(np.linalg.norm(M), rel=1e-12)


def test_hilbert_schmidt_weighted_spaces():
    rng = np.random.default_rng(4)
    for _ in range(10):
        op = random_operator(rng, weighted=True)
        om, mu = op.h_weights, op.space.weights
        M = (op.h * om).T @ op.v  # T e_k
        # orthonormal basis of the input is e_k / sqrt(om_k)
        hs2 = np.sum(mu[None, :] * (M / np.sqrt(om)[:, None]) ** 2)
        assert gamma_norm_exact_hilbert(op) == pytest.approx(math.sqrt(hs2), rel=1e-12)


def test_exact_hilbert_rejects_other_exponents():
    op = random_operator(np.random.default_rng(0), p=3.0)
    with pytest.raises(DomainError):
        gamma_norm_exact_hilbert(op)


def test_monte_carlo_matches_hilbert_schmidt():
    op = random_operator(np.random.default_rng(5))
    est = gamma_norm_mc(op, 100000, np.random.default_rng(6))
    assert abs(est.estimate - gamma_norm_exact_hilbert(op)) <= 3 * est.stderr


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_gaussian_moment_closed_form(p):
    op = random_operator(np.random.default_rng(int(p * 10)), p=p, weighted=True)
    est = gamma_norm_mc(op, 100000, np.random.default_rng(7))
    assert abs(est.moment - est.moment_exact) <= 3 * est.moment_stderr
    assert est.moment_exact == pytest.approx(gaussian_moment_exact(op), rel=1e-15)


def test_kappa_values():
    assert kappa(2.0) == pytest.approx(1.0, rel=1e-14)
    assert kappa(4.0) == pytest.approx(3.0, rel=1e-14)
    assert kappa(1.0) == pytest.approx(math.sqrt(2 / math.pi), rel=1e-14)


def test_square_function_norm_single_vector():
    s = ModelSpace.sequence(2, 3.0)
    op = FiniteRankOperator([[1.0]], [[3.0, -4.0]], s)
    assert square_function_norm(op) == pytest.approx((27 + 64) ** (1 / 3), rel=1e-14)


def test_kahane_band_on_random_operators():
    rng = np.random.default_rng(8)
    for i in range(50):
        p = [1.3, 1.7, 2.5, 4.0][i % 4]
        op = random_operator(rng, n=int(rng.integers(1, 6)), p=p, weighted=bool(i % 2))
        est = gamma_norm_mc(op, 20000, rng)
        lo, hi = kahane_band(p)
        ratio = est.estimate / square_function_norm(op)
        slack = 3 * est.stderr / square_function_norm(op)
        assert lo - slack <= ratio <= hi + slack


def test_kahane_band_is_degenerate_at_two():
    lo, hi = kahane_band(2.0)
    assert lo == pytest.approx(1.0) and hi == pytest.approx(1.0)


# ---------------------------------------------------------------- invariances and ideal property


def test_unitary_invariance():
    rng = np.random.default_rng(9)
    for p in (2.0, 3.0):
        T = random_operator(rng, n=5, K=5, p=p)
        U = ortho_group.rvs(5, random_state=1)
        # T o U has the same covariance, hence the same gamma norm
        TU = compose(T, U)
        assert np.allclose(TU.covariance(), T.covariance(), atol=1e-10)
        assert square_function_norm(TU) == pytest.approx(square_function_norm(T), rel=1e-12)
    G = np.random.default_rng(3).standard_normal((5000, 5))
    a = gamma_norm_mc(T, 5000, None, G=G).estimate
    b = gamma_norm_mc(TU, 5000, None, G=G).estimate
    assert b == pytest.approx(a, rel=0.05)


def test_operator_norms():
    A = np.array([[1.0, 2.0], [0.0, 1.0]])
    w = np.ones(2)
    assert operator_norm_weighted(A, w, 1) == pytest.approx(3.0)
    assert operator_norm_weighted(A, w, math.inf) == pytest.approx(3.0)
    assert operator_norm_weighted(A, w, 2) == pytest.approx(np.linalg.norm(A, 2))
    # interpolated bound dominates the true norm, sampled
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2000, 2))
    for p in (1.5, 3.0):
        true = np.max(np.sum(np.abs(x @ A.T) ** p, 1) ** (1 / p) / np.sum(np.abs(x) ** p, 1) ** (1 / p))
        assert true <= operator_norm_weighted(A, w, p) * (1 + 1e-12)
    assert hilbert_operator_norm(np.eye(3) * 2, [1.0, 2.0, 3.0]) == pytest.approx(2.0)


def test_ideal_property_on_random_trials():
    rng = np.random.default_rng(10)
    for i in range(50):
        p = [2.0, 1.5, 3.0][i % 3]
        T = random_operator(rng, n=3, K=4, d=3, p=p, weighted=bool(i % 2))
        R = rng.normal(size=(4, 4))
        A = rng.normal(size=(3, 3))
        chk = ideal_property_check(T, R, A, n_gauss=4000, rng=i)
        assert chk.holds, (i, chk)
        assert chk.exact == (p == 2.0)


def test_compose_shapes_checked():
    T = random_operator(np.random.default_rng(0))
    with pytest.raises(DomainError):
        compose(T, np.eye(3))
    with pytest.raises(DomainError):
        compose(T, None, np.eye(2))


# ---------------------------------------------------------------- operators from configurations


def test_jump_operator_equals_TG_on_configurations():
    rng = np.random.default_rng(11)
    for i in range(100):
        p = [2.0, 1.5, 3.0][i % 3]
        m = random_discrete(rng, d=3, n=4, p=p)
        F = SimpleFunction([0.0, 0.5, 1.0], (np.array([0, 1]), np.array([2, 3])), rng.normal(size=(2, 2, 3)))
        cfg = sample_prm(m, 1.0, rng)
        J, T = build_jump_operator(cfg, F), build_TG(cfg, F)
        assert np.allclose(J.covariance(), T.covariance(), atol=1e-12 * (1 + np.abs(T.covariance()).max()))
        if p == 2.0:
            assert gamma_norm_exact_hilbert(J) == pytest.approx(gamma_norm_exact_hilbert(T), rel=1e-12, abs=1e-300)
        assert square_function_norm(J) == pytest.approx(square_function_norm(T), rel=1e-12, abs=1e-300)


def test_jump_operator_merges_simultaneous_points():
    m = DiscreteMeasure(ModelSpace.sequence(1, 2.0), [[1.0], [2.0]], [1.0, 1.0])
    F = SimpleFunction.constant((np.array([0, 1]),), np.array([[1.0]]))
    cfg = PointConfiguration(1.0, [0.5, 0.5], [0, 0], m)
    J = build_jump_operator(cfg, F)
    assert J.rank_bound == 1 and J.v[0, 0] == 2.0
    assert build_TG(cfg, F).rank_bound == 2
    empty = PointConfiguration(1.0, [], [], m)
    assert build_jump_operator(empty, F).rank_bound == 0


def test_campbell_identity_for_expected_gamma_norm():
    rng = np.random.default_rng(12)
    m = random_discrete(rng, d=3, n=5)
    F = SimpleFunction([0.0, 0.3, 1.2], (np.array([0, 1, 2]), np.array([3, 4])), rng.normal(size=(2, 2, 3)))
    exact = campbell_second_moment(m, F, None, 1.2)
    est = estimate_expected_gamma_norm(m, F, None, 2.0, 1.2, 40000, 1, rng)
    assert est.exact_inner and abs(est.estimate - exact) <= 3 * est.stderr
    # point configurations give the same expectation
    vals = [gamma_norm_exact_hilbert(build_TG(sample_prm(m, 1.2, rng), F)) ** 2 for _ in range(4000)]
    mean, se = np.mean(vals), np.std(vals, ddof=1) / math.sqrt(len(vals))
    assert abs(mean - exact) <= 3 * se


def test_expected_gamma_norm_non_hilbert_target():
    rng = np.random.default_rng(13)
    m = random_discrete(rng, d=2, n=3, p=3.0)
    F = SimpleFunction.constant((np.arange(3),), rng.normal(size=(1, 2)))
    a = estimate_expected_gamma_norm(m, F, None, 3.0, 1.0, 3000, 64, np.random.default_rng(1))
    # reference from point configurations and large inner samples
    ref = []
    for _ in range(600):
        T = build_TG(sample_prm(m, 1.0, rng), F)
        ref.append(gamma_norm_mc(T, 4000, rng).estimate ** 3 if T.rank_bound else 0.0)
    # 2% covers the residual third-order bias of the inner-noise correction
    assert abs(a.estimate - np.mean(ref)) <= 3 * math.hypot(a.stderr, np.std(ref) / math.sqrt(600)) + 0.02 * a.estimate
    with pytest.raises(DomainError):
        estimate_expected_gamma_norm(m, F, None, 3.0, 1.0, 1, 10, 0)


# ---------------------------------------------------------------- UMD equivalence


def test_umd_degenerate_when_integrand_vanishes():
    m = random_discrete(np.random.default_rng(14), d=2, n=3)
    F = SimpleFunction.constant((np.arange(3),), np.zeros((1, 2)))
    r = umd_equivalence_check(m, F, None, 2.0, 1.0, 200, 200, 10, 5)
    assert r.status == "degenerate" and r.to_dict()["ratio"] is None


def test_umd_ratio_invariant_under_scaling():
    m = random_discrete(np.random.default_rng(15), d=2, n=3, p=3.0)
    F = SimpleFunction.constant((np.arange(3),), np.ones((1, 2)))
    a = umd_equivalence_check(m, F, None, 3.0, 1.0, 500, 100, 32, 7)
    b = umd_equivalence_check(m, F.scaled(10.0), None, 3.0, 1.0, 500, 100, 32, 7)
    assert b.ratio == pytest.approx(a.ratio, rel=1e-12)
    assert b.lhs == pytest.approx(1000 * a.lhs, rel=1e-12)


def test_umd_terminal_variant_matches_campbell_on_l2():
    m = random_discrete(np.random.default_rng(16), d=3, n=4)
    F = SimpleFunction.constant((np.arange(4),), np.array([[0.5, -1.0, 0.2]]))
    r = umd_equivalence_check(m, F, None, 2.0, 1.0, 20000, 20000, 1, 3, variant="terminal")
    assert r.status == "ok"
    assert abs(r.lhs - r.campbell) <= 3 * r.lhs_stderr
    assert abs(r.rhs - r.campbell) <= 3 * r.rhs_stderr
    assert 0.9 <= r.ratio <= 1.1
