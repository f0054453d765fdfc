import math

import numpy as np
import pytest

from banachpoly.algebra import AlgebraElement, MatrixAlgebra
from banachpoly.counterexample import EntryMoments, operator_L
from banachpoly.moments import (PAR, PERP, _word_exact, cond_expectation_words,
                                cond_moment_commutative, cond_moment_ou, expected_monomial,
                                flip_binomial_signs, gaussian_moment_tensor, norm_even_moment,
                                norm_odd_moment, partial_matchings, word_counts, words)
from banachpoly.multilinear import KLinearMap
from banachpoly.oracle import FrozenScenario, conditional_mc, laplace_estimator, tolerance_gate
from banachpoly.process import (GaussianLaw, MatrixLevyProcess, Path, gaussian_raw_moment,
                                ou_perp_covariance)


@pytest.fixture(scope="module")
def scenario(ou):
    f_s = AlgebraElement(1 + 0.1 * ou.space.grid.nodes, ou.space)
    return ou, Path.constant(0.5, f_s)


def test_partial_matchings_count():
    # telephone numbers 1, 1, 2, 4, 10, 26
    assert [sum(1 for _ in partial_matchings(range(n))) for n in range(6)] == [1, 1, 2, 4, 10, 26]


def test_moment_tensor_order_two(rng):
    A = rng.standard_normal((3, 3))
    law = GaussianLaw(rng.standard_normal(3), A @ A.T)
    T = gaussian_moment_tensor(law, 2).tensor
    assert np.allclose(T, law.cov + np.outer(law.mean, law.mean), atol=1e-14)
    assert not np.any(gaussian_moment_tensor(GaussianLaw(np.zeros(3), A @ A.T), 3).tensor)
    with pytest.raises(ValueError):
        gaussian_moment_tensor(law, 9)


def test_moment_tensor_against_gauss_hermite(rng):
    nodes, weights = np.polynomial.hermite_e.hermegauss(12)
    weights = weights / weights.sum()
    A = rng.standard_normal((2, 2))
    mean = np.array([0.3, -0.2])
    law = GaussianLaw(mean, A @ A.T)
    L = np.linalg.cholesky(law.cov)
    z1, z2 = np.meshgrid(nodes, nodes, indexing="ij")
    w = np.outer(weights, weights)
    X = mean[:, None, None] + np.einsum("ij,jab->iab", L, np.stack([z1, z2]))
    T = gaussian_moment_tensor(law, 4).tensor
    for idx in np.ndindex(2, 2, 2, 2):
        ref = np.sum(w * np.prod([X[i] for i in idx], axis=0))
        assert T[idx] == pytest.approx(ref, rel=1e-12, abs=1e-13)
    T_id = gaussian_moment_tensor(GaussianLaw(np.zeros(2), np.eye(2)), 4).tensor
    assert T_id[0, 0, 1, 1] == pytest.approx(1.0) and T_id[0, 0, 0, 0] == pytest.approx(3.0)


def test_commutative_low_orders(scenario):
    p, path = scenario
    d = p.decompose(path, 0.5, 1.0)
    assert np.array_equal(cond_moment_commutative(1, d).value.coords, d.parallel.coords)
    two = cond_moment_commutative(2, d).value.coords
    want = d.parallel.coords**2 + np.diag(d.perp_law.cov)
    assert np.allclose(two, want, rtol=1e-14)
    for k in range(6):
        assert max(cond_moment_commutative(k, d).orders()) <= k
    md = MatrixLevyProcess().decompose(Path.constant(0.0, AlgebraElement(np.eye(2).ravel(),
                                                                          MatrixAlgebra(2))), 0, 1)
    with pytest.raises(ValueError):
        cond_moment_commutative(2, md)


def test_commutative_matches_oracle_k3(scenario):
    p, path = scenario
    scen = FrozenScenario(p, path, 0.5, 77)
    closed = cond_moment_commutative(3, scen.decomposition(1.0)).value.coords
    est = conditional_mc(scen, lambda X: X**3, 1.0, 200_000)
    assert tolerance_gate(est, closed).passed


def test_ou_form(scenario):
    p, path = scenario
    f_s = path.at(0.5)
    assert np.array_equal(cond_moment_ou(1, f_s, 0.5, 1.0, p).value.coords,
                          p.space.shift(0.5, f_s.coords))
    dx = p.space.grid.dx
    t = 0.5 + 4 * dx
    sq = p.space.shift(4 * dx, f_s.coords**2)
    assert np.array_equal(sq, p.space.shift(4 * dx, f_s.coords) ** 2)
    d = p.decompose(path, 0.5, t)
    for k in range(1, 6):
        a = cond_moment_ou(k, f_s, 0.5, t, p).value.coords
        b = cond_moment_commutative(k, d).value.coords
        assert np.max(np.abs(a - b)) <= 1e-10 * max(1, np.abs(b).max())
    with pytest.raises(ValueError):
        cond_moment_ou(2, f_s, 1.0, 0.5, p)


def test_mutation_hook_restores(scenario):
    p, path = scenario
    d = p.decompose(path, 0.5, 1.0)
    base = cond_moment_commutative(3, d).value.coords
    with flip_binomial_signs():
        flipped = cond_moment_commutative(3, d).value.coords
    assert not np.allclose(base, flipped)
    assert np.array_equal(base, cond_moment_commutative(3, d).value.coords)


def test_tower_consistency(ou):
    dx = ou.space.grid.dx
    r, s, t = 0.0, 2 * dx, 4 * dx
    f_r = AlgebraElement(1 + 0.1 * ou.space.grid.nodes, ou.space)
    scen = FrozenScenario(ou, Path.constant(r, f_r), r, 5)

    def inner(X):
        return np.stack([cond_moment_ou(2, AlgebraElement(x, ou.space), s, t, ou).value.coords
                         for x in X])

    est = conditional_mc(scen, inner, s, 20_000)
    assert tolerance_gate(est, cond_moment_ou(2, f_r, r, t, ou).value.coords).passed


def test_word_counts():
    for k in range(1, 6):
        assert word_counts(k) == {n: math.comb(k, n) for n in range(k + 1)}
        assert len(words(k)) == 2**k


def test_mixed_word_is_sandwich():
    lp = MatrixLevyProcess(2, mu=0.4, sigma2=0.7)
    y = np.array([1.0, -2.0, 0.5, 3.0])
    d = lp.decompose(Path.constant(0.0, AlgebraElement(y, lp.space)), 0.0, 1.0)
    T = KLinearMap.product(3, lp.space).to_dense().rep.tensor
    moments = {r: gaussian_moment_tensor(d.perp_law, r).tensor for r in (1, 2, 3)}
    word = _word_exact(T, (PERP, PAR, PERP), d.parallel.coords, moments)
    em = EntryMoments.gaussian(0.4, 0.7)
    assert np.allclose(word, operator_L(y.reshape(2, 2), em).ravel(), atol=1e-12)


def test_words_zero_parallel_and_linearity(rng):
    m = MatrixAlgebra(2)
    law = GaussianLaw(0.2 * np.ones(4), 0.5 * np.eye(4))
    d = MatrixLevyProcess(2, 0.2, 0.5).decompose(
        Path.constant(0.0, AlgebraElement(np.zeros(4), m)), 0.0, 1.0)
    L1 = KLinearMap.dense(rng.standard_normal((4,) * 4), m, 1.0)
    L2 = KLinearMap.product(3, m).to_dense()
    r1 = cond_expectation_words(L1, d)
    assert np.allclose(r1.value.coords, expected_monomial(L1, law), atol=1e-12)
    assert all(not np.any(c.coords) for j, c in r1.contributions if j > 0)
    combo = cond_expectation_words(L1.scale(2.0) + L2.scale(-0.5), d).value.coords
    want = 2.0 * r1.value.coords - 0.5 * cond_expectation_words(L2, d).value.coords
    assert np.allclose(combo, want, rtol=1e-12, atol=1e-12)
    with pytest.raises(ValueError):
        cond_expectation_words(KLinearMap.product(6, m), d)


def test_words_product_grid_mc(scenario):
    p, path = scenario
    d = p.decompose(path, 0.5, 1.0)
    res = cond_expectation_words(KLinearMap.product(3, p.space), d, 100_000, seed=3)
    assert res.method == "mc"
    dev = np.abs(res.value.coords - cond_moment_commutative(3, d).value.coords)
    assert np.all(dev <= 5 * res.se)


def test_norm_even_examples(ou, rng):
    law = ou_perp_covariance(ou, 0.0, 1.0)
    G = ou.space.gram
    assert norm_even_moment(1, law, ou.space) == pytest.approx(np.trace(G @ law.cov), rel=1e-12)
    GC = G @ law.cov
    assert norm_even_moment(2, law, ou.space) == pytest.approx(
        np.trace(GC) ** 2 + 2 * np.trace(GC @ GC), rel=1e-12)
    zero = GaussianLaw(np.zeros(ou.space.dim), np.zeros((ou.space.dim,) * 2))
    assert norm_even_moment(2, zero, ou.space) == 0.0
    with pytest.raises(ValueError):
        norm_even_moment(5, law, ou.space)
    x = law.sample(4, 100_000)
    vals = ou.space.norm(x) ** 4
    assert abs(vals.mean() - norm_even_moment(2, law, ou.space)) <= 5 * vals.std() / np.sqrt(len(x))


def test_norm_even_with_mean_matrix():
    m = MatrixAlgebra(2)
    law = GaussianLaw(np.array([1.0, 0.0, 0.0, 1.0]), 0.3 * np.eye(4))
    # ||X||_F^2 = sum of 4 independent N(mu_i, .3) squares
    m2 = sum(gaussian_raw_moment(2, mu, 0.3) for mu in law.mean)
    assert norm_even_moment(1, law, m) == pytest.approx(m2, rel=1e-13)
    x = law.sample(8, 200_000)
    v = m.norm(x) ** 6
    assert abs(v.mean() - norm_even_moment(3, law, m)) <= 5 * v.std() / np.sqrt(len(v))


class _GaussLaplace:
    def __call__(self, x):
        return (1 + 2 * x) ** -0.5


def test_norm_odd_closed_form():
    assert norm_odd_moment(0, _GaussLaplace()) == pytest.approx(math.sqrt(2 / math.pi), abs=1e-4)
    assert norm_odd_moment(0, lambda x: 1.0) == pytest.approx(0.0, abs=1e-12)
    # E|X|^3 = 2 sqrt(2/pi) from phi(x) = E exp(-x X^4), by 1-D quadrature
    nodes, weights = np.polynomial.hermite_e.hermegauss(80)
    weights = weights / weights.sum()

    def phi4(x):
        return float(np.sum(weights * np.exp(-x * nodes**4)))

    assert norm_odd_moment(1, phi4) == pytest.approx(2 * math.sqrt(2 / math.pi), rel=1e-4)
    with pytest.raises(ValueError):
        norm_odd_moment(0, lambda x: 1.5)


def test_norm_odd_grid_ou_two_estimators(scenario):
    p, path = scenario
    lap = laplace_estimator(FrozenScenario(p, path, 0.5, 101), 1.0, 2, 100_000)
    odd = norm_odd_moment(0, lap)
    direct = conditional_mc(FrozenScenario(p, path, 0.5, 202), lambda X: p.space.norm(X),
                            1.0, 100_000)
    assert abs(odd - direct.mean) <= 5 * math.hypot(lap.moment_se(1), direct.se)
