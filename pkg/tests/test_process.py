import numpy as np
import pytest
from scipy import integrate, stats

from banachpoly.algebra import AlgebraElement, grid_function
from banachpoly.process import (GaussianLaw, MatrixLevyProcess, OUProcess, Path, decompose,
                                double_factorial, gaussian_raw_moment, ou_perp_covariance,
                                simulate_path)


def test_gaussian_raw_moment():
    assert double_factorial(5) == 15 and double_factorial(0) == 1
    assert gaussian_raw_moment(4, 0.0, 2.0) == pytest.approx(12.0)
    assert gaussian_raw_moment(3, 1.0, 1.0) == pytest.approx(4.0)  # mu^3 + 3 mu var


def test_law_validation():
    with pytest.raises(ValueError):
        GaussianLaw(np.zeros(2), np.array([[1.0, 0.5], [0.4, 1.0]]))
    with pytest.raises(ValueError):
        GaussianLaw(np.zeros(2), np.array([[1.0, 0.0], [0.0, -0.1]]))
    law = GaussianLaw(np.zeros(2), np.array([[1.0, 0.0], [0.0, -1e-13]]))  # clipped
    assert np.all(np.linalg.eigvalsh(law.cov) >= -1e-12)


def test_law_sampling():
    law = GaussianLaw.degenerate(np.array([1.0, 2.0]))
    assert np.array_equal(law.sample(0, 5), np.tile([1.0, 2.0], (5, 1)))
    cov = np.array([[1.0, 0.6, 0.0], [0.6, 2.0, -0.3], [0.0, -0.3, 0.5]])
    law = GaussianLaw(np.array([0.5, -1.0, 0.0]), cov)
    x = law.sample(7, 100_000)
    assert np.array_equal(x, law.sample(7, 100_000))
    xc = x - law.mean
    prods = xc[:, :, None] * xc[:, None, :]
    se = prods.std(axis=0, ddof=1) / np.sqrt(len(x))
    assert np.all(np.abs(prods.mean(axis=0) - cov) <= 5 * se)
    back = GaussianLaw.from_json(law.to_json())
    assert np.array_equal(back.cov, law.cov) and np.array_equal(back.mean, law.mean)


def test_perp_covariance_trivial_cases(ou):
    assert not np.any(ou_perp_covariance(ou, 0.3, 0.3).cov)
    quiet = OUProcess.default(sigma=0.0)
    assert not np.any(ou_perp_covariance(quiet, 0.0, 1.0).cov)
    with pytest.raises(ValueError):
        ou_perp_covariance(ou, 1.0, 0.5)


def _reference_variance(p, node, tau):
    """Variance at one node by adaptive quadrature of the interpolated kernel."""
    space = p.space
    x0 = space.grid.nodes[node]
    Q = p.noise_cov_Q

    def integrand(u):
        w = space.interpolation_weights(min(x0 + u, space.grid.x_max))
        return w @ Q @ w

    breaks = [b - x0 for b in space.grid.nodes if 0 < b - x0 < tau]
    val, _ = integrate.quad(integrand, 0.0, tau, points=breaks or None, epsabs=1e-14,
                            epsrel=1e-12, limit=200)
    return val


def test_perp_covariance_against_refined_quadrature(ou):
    fine = OUProcess.default(dt_quadrature=1e-4)
    coarse_var = np.diag(ou.perp_covariance(1.0))
    fine_var = np.diag(fine.perp_covariance(1.0))
    assert np.allclose(coarse_var, fine_var, rtol=1e-4, atol=0)
    for node in (0, 7, 15):
        ref = _reference_variance(ou, node, 1.0)
        assert fine_var[node] == pytest.approx(ref, rel=1e-6)


def test_decompose_examples(ou, rng):
    g = AlgebraElement(rng.standard_normal(ou.space.dim), ou.space)
    path = Path.constant(0.5, g)
    d = decompose(ou, path, 0.5, 0.5)
    assert np.array_equal(d.parallel.coords, g.coords) and not np.any(d.perp_law.cov)
    dx = ou.space.grid.dx
    d = ou.decompose(path, 0.5, 0.5 + dx)
    assert np.array_equal(d.parallel.coords[:-1], g.coords[1:])
    with pytest.raises(ValueError):
        ou.decompose(path, 0.5, 0.4)


def test_matrix_levy_increments_standard_normal():
    lp = MatrixLevyProcess(2, mu=0.0, sigma2=1.0)
    path = Path.constant(0.0, AlgebraElement(np.zeros(4), lp.space))
    d = lp.decompose(path, 0.0, 1.0)
    x = d.perp_law.sample(3, 10_000)
    for j in range(4):
        assert stats.kstest(x[:, j], "norm").pvalue > 0.01
    assert lp.entry_moments(1.0, 3) == [0.0, 1.0, 0.0]


def test_noiseless_transport():
    quiet = OUProcess.default(sigma=0.0)
    g = grid_function(quiet.space, np.sin)
    one = simulate_path(quiet, 1.0, 1.0, 0, g)
    assert np.array_equal(one.at(1.0).coords, quiet.space.shift(1.0, g.coords))
    # interpolated shifts compose exactly only at grid multiples
    dx = quiet.space.grid.dx
    path = simulate_path(quiet, 3 * dx, dx, 0, g)
    assert np.array_equal(path.values[-1], quiet.space.shift(3 * dx, g.coords))


def test_chapman_kolmogorov(ou):
    dx = ou.space.grid.dx
    S = ou.space.shift_matrix(dx)
    two_step = S @ ou.perp_covariance(dx) @ S.T + ou.perp_covariance(dx)
    assert np.allclose(two_step, ou.perp_covariance(2 * dx), rtol=0, atol=1e-6)
    # decompose at s then transport equals the direct law of X(t) from 0
    s, t = 2 * dx, 5 * dx
    St = ou.space.shift_matrix(t - s)
    via_s = St @ ou.perp_covariance(s) @ St.T + ou.perp_covariance(t - s)
    assert np.allclose(via_s, ou.perp_covariance(t), rtol=0, atol=1e-6)


def test_one_step_marginal_and_reproducibility(ou):
    paths = [ou.simulate_path(0.25, 0.25, seed, np.zeros(ou.space.dim)) for seed in range(3)]
    again = ou.simulate_path(0.25, 0.25, 1, np.zeros(ou.space.dim))
    assert np.array_equal(paths[1].values, again.values)
    assert not np.array_equal(paths[0].values, paths[1].values)
    law = ou_perp_covariance(ou, 0.0, 0.25)
    expected = law.sample(np.random.default_rng(1))
    assert np.allclose(again.values[-1], expected)


def test_decomposition_independence(ou):
    n, s, t = 10_000, 0.5, 1.0
    x_s = GaussianLaw(np.zeros(ou.space.dim), ou.perp_covariance(s)).sample(11, n)
    par = x_s @ ou.space.shift_matrix(t - s).T
    perp = ou_perp_covariance(ou, s, t).sample(12, n)
    a = (par - par.mean(0)) / par.std(0)
    b = (perp - perp.mean(0)) / perp.std(0)
    corr = a.T @ b / n
    assert np.all(np.abs(corr) <= 5 / np.sqrt(n))


def test_perp_norm_moments_stable(ou):
    law = ou_perp_covariance(ou, 0.0, 1.0)
    norms = ou.space.norm(law.sample(5, 40_000))
    for n in range(1, 9):
        half, full = np.mean(norms[:20_000] ** n), np.mean(norms**n)
        assert np.isfinite(full) and abs(half / full - 1) < 0.2


def test_matrix_levy_path_shapes():
    lp = MatrixLevyProcess(2, mu=0.3, sigma2=0.5)
    path = lp.simulate_path(1.0, 0.25, 9, lp.space.identity())
    assert path.values.shape == (5, 4) and path.end == 1.0
    with pytest.raises(ValueError):
        MatrixLevyProcess(2, sigma2=-1.0)
