import numpy as np
import pytest
from scipy.spatial.distance import cdist

from levy_lab.stats import MAX_DISTINCT, energy_test


def naive_energy(x, y):
    n1, n2 = len(x), len(y)
    return n1 * n2 / (n1 + n2) * (2 * cdist(x, y).mean() - cdist(x, x).mean() - cdist(y, y).mean())


def test_statistic_matches_direct_formula():
    rng = np.random.default_rng(0)
    x = rng.integers(-3, 4, size=(300, 2)).astype(float)
    y = rng.integers(-3, 4, size=(250, 2)).astype(float) + 0.5
    r = energy_test(x, y, n_permutations=99)
    assert r.statistic == pytest.approx(naive_energy(x, y), rel=1e-10)
    assert r.n_distinct == len(np.unique(np.vstack([x, y]), axis=0))


def test_same_law_passes_and_shift_fails():
    rng = np.random.default_rng(1)
    x = rng.poisson(2.0, size=(2000, 2)).astype(float)
    y = rng.poisson(2.0, size=(2000, 2)).astype(float)
    assert energy_test(x, y, n_permutations=499, rng=2).passes()
    z = rng.poisson(2.3, size=(2000, 2)).astype(float)
    r = energy_test(x, z, rng=2)  # 1999 permutations resolve p down to 1/2000
    assert r.p_value == pytest.approx(1 / 2000) and not r.passes()


def test_null_p_values_are_not_concentrated_near_zero():
    rng = np.random.default_rng(3)
    ps = []
    for i in range(40):
        x = rng.poisson(1.0, size=(200, 1)).astype(float)
        y = rng.poisson(1.0, size=(200, 1)).astype(float)
        ps.append(energy_test(x, y, n_permutations=199, rng=i).p_value)
    ps = np.array(ps)
    assert np.all((ps > 0) & (ps <= 1))
    assert np.mean(ps < 0.1) <= 0.25 and np.mean(ps > 0.5) >= 0.25


def test_one_dimensional_inputs():
    rng = np.random.default_rng(4)
    x, y = rng.poisson(3.0, 500).astype(float), rng.poisson(3.0, 400).astype(float)
    a = energy_test(x, y, n_permutations=99, rng=0)
    b = energy_test(x[:, None], y[:, None], n_permutations=99, rng=0)
    assert a == b


def test_seeded_and_reproducible():
    rng = np.random.default_rng(5)
    x, y = rng.poisson(1.0, (300, 2)).astype(float), rng.poisson(1.0, (300, 2)).astype(float)
    assert energy_test(x, y, 199, rng=7) == energy_test(x, y, 199, rng=7)


def test_too_many_distinct_values_rejected():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(MAX_DISTINCT, 1))
    with pytest.raises(ValueError):
        energy_test(x, rng.normal(size=(10, 1)), n_permutations=9)
