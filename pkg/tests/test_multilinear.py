import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from banachpoly.algebra import AlgebraElement, LatticeAlgebra, MatrixAlgebra
from banachpoly.multilinear import (DENSE_CAP, DenseTensor, KLinearMap, Monomial,
                                    estimate_bound, finite_difference_derivative,
                                    form_from_monomial, frechet_derivative, inner_product_form,
                                    lipschitz_witness)
from conftest import SPACES

SCALAR = MatrixAlgebra(1)


def el(space, v):
    return AlgebraElement(np.atleast_1d(np.asarray(v, dtype=float)), space)


def test_product_map_cube(grid, rng):
    g = el(grid, rng.standard_normal(grid.dim))
    L = KLinearMap.product(3, grid)
    assert np.allclose(L(g, g, g).coords, g.coords**3, rtol=1e-15, atol=0)


def test_zero_dense_map(grid, rng):
    L = KLinearMap.dense(np.zeros((grid.dim,) * 3), grid, bound_K=0.0)
    x = el(grid, rng.standard_normal(grid.dim))
    assert not np.any(L(x, x).coords)


def test_scalar_dense_brute_force(rng):
    c = 1.7
    L = KLinearMap.dense(np.full((1,) * 4, c), SCALAR)
    xs = rng.standard_normal(3)
    assert L(*(el(SCALAR, x) for x in xs)).coords[0] == pytest.approx(c * np.prod(xs), rel=1e-14)


def test_arity_mismatch(grid):
    L = KLinearMap.product(2, grid)
    with pytest.raises(ValueError):
        L.eval_coords([np.ones(grid.dim)])


@pytest.mark.parametrize("tag", SPACES)
def test_to_dense_matches_product(tag, rng):
    space = SPACES[tag]
    L = KLinearMap.product(3, space)
    D = L.to_dense()
    args = list(rng.standard_normal((3, 50, space.dim)))
    assert np.allclose(L.eval_coords(args), D.eval_coords(args), rtol=1e-12, atol=1e-12)


def test_dense_cap(grid):
    with pytest.raises(ValueError):
        KLinearMap.product(6, grid).to_dense()
    assert 16**6 <= DENSE_CAP < 16**7


def test_dense_json_roundtrip(rng):
    T = DenseTensor(rng.standard_normal((2, 2, 2)))
    assert np.array_equal(DenseTensor.from_json(T.to_json()).tensor, T.tensor)


@pytest.mark.parametrize("tag", SPACES)
def test_multilinearity(tag, rng):
    space = SPACES[tag]
    L = KLinearMap.product(3, space)
    args = list(rng.standard_normal((3, space.dim)))
    y = rng.standard_normal(space.dim)
    a, b = 0.7, -1.3
    for slot in range(3):
        mixed = list(args)
        mixed[slot] = a * args[slot] + b * y
        other = list(args)
        other[slot] = y
        lhs = L.eval_coords(mixed)
        rhs = a * L.eval_coords(args) + b * L.eval_coords(other)
        assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.abs(rhs).max())


@pytest.mark.parametrize("tag", SPACES)
def test_boundedness_product(tag, rng):
    space = SPACES[tag]
    L = KLinearMap.product(3, space)
    args = list(rng.standard_normal((3, 500, space.dim)))
    lhs = space.norm(L.eval_coords(args))
    rhs = L.bound_K * np.prod([space.norm(a) for a in args], axis=0)
    assert np.all(lhs <= rhs * (1 + 1e-9))


def test_estimate_bound_is_a_floor(rng):
    m = MatrixAlgebra(2)
    T = rng.standard_normal((4, 4, 4))
    K = estimate_bound(KLinearMap.dense(T, m, bound_K=1.0))
    # crude upper bound: Frobenius norm of the tensor
    assert 0 < K <= np.linalg.norm(T) + 1e-12


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
def test_scalar_derivative_coefficient(k):
    u, hs = el(SCALAR, 1.3), [el(SCALAR, v) for v in (0.4, -0.9, 2.1, 0.5, 1.1)]
    M = Monomial(KLinearMap.product(k, SCALAR))
    for n in range(1, k + 1):
        want = math.factorial(k) / math.factorial(k - n) * 1.3 ** (k - n) * np.prod(
            [h.coords[0] for h in hs[:n]])
        assert frechet_derivative(M, u, n, hs[:n]).coords[0] == pytest.approx(want, rel=1e-13)


def test_matrix_square_derivative(rng):
    m = MatrixAlgebra(2)
    u, h = (el(m, v) for v in rng.standard_normal((2, 4)))
    D = frechet_derivative(Monomial(KLinearMap.product(2, m)), u, 1, [h])
    assert D.allclose(h * u + u * h, rtol=1e-14, atol=1e-14)


def test_order_k_plus_one(grid, rng):
    M = Monomial(KLinearMap.product(2, grid))
    u, h = (el(grid, v) for v in rng.standard_normal((2, grid.dim)))
    assert not np.any(frechet_derivative(M, u, 3, [h] * 3).coords)
    with pytest.raises(ValueError):
        frechet_derivative(M, u, 4, [h] * 4)
    fd = finite_difference_derivative(M, u, 3, [h] * 3, h_step=1e-2)
    assert np.max(np.abs(fd.coords)) < 1e-6


def test_fd_exact_on_linear(grid, rng):
    M = Monomial(KLinearMap.product(1, grid, rng.standard_normal((grid.dim, grid.dim))))
    u, h = (el(grid, v) for v in rng.standard_normal((2, grid.dim)))
    fd = finite_difference_derivative(M, u, 1, [h])
    assert fd.allclose(frechet_derivative(M, u, 1, [h]), rtol=1e-9, atol=1e-11)


@pytest.mark.parametrize("tag", ["grid", "matrix"])
def test_fd_second_order_rate(tag, rng):
    space = SPACES[tag]
    M = Monomial(KLinearMap.product(4, space))
    u = el(space, 1 + 0.3 * rng.standard_normal(space.dim))
    hs = [el(space, v) for v in rng.standard_normal((2, space.dim))]
    for n in (1, 2):
        exact = frechet_derivative(M, u, n, hs[:n]).coords
        errs = [np.abs(finite_difference_derivative(M, u, n, hs[:n], h).coords - exact).max()
                for h in (1e-2, 5e-3, 2.5e-3)]
        assert 3.5 < errs[0] / errs[1] < 4.5 and 3.5 < errs[1] / errs[2] < 4.5


def test_commutative_coefficient_exact(grid, rng):
    u, h = (el(grid, v) for v in rng.standard_normal((2, grid.dim)))
    L = KLinearMap.product(4, grid)
    for n in range(1, 5):
        got = frechet_derivative(Monomial(L), u, n, [h] * n).coords
        term = L.eval_coords([u.coords] * (4 - n) + [h.coords] * n)
        assert np.array_equal(got, math.factorial(4) // math.factorial(4 - n) * term)


def test_dense_derivative_symmetry(rng):
    m = MatrixAlgebra(2)
    M = Monomial(KLinearMap.dense(rng.standard_normal((4,) * 5), m, bound_K=1.0))
    u = el(m, rng.standard_normal(4))
    hs = [el(m, v) for v in rng.standard_normal((3, 4))]
    base = frechet_derivative(M, u, 3, hs).coords
    for perm in itertools.permutations(hs):
        assert np.array_equal(frechet_derivative(M, u, 3, list(perm)).coords, base)


def test_lipschitz_examples(grid, rng):
    M = Monomial(KLinearMap.product(2, SCALAR))
    assert lipschitz_witness(M, el(SCALAR, 2.0), el(SCALAR, 2.0)) == (0.0, 0.0)
    lhs, rhs = lipschitz_witness(M, el(SCALAR, 2.0), el(SCALAR, 1.0))
    assert (lhs, rhs) == (3.0, 3.0)
    for k in range(1, 5):
        Mk = Monomial(KLinearMap.product(k, grid))
        for _ in range(250):
            x, y = (el(grid, v) for v in rng.standard_normal((2, grid.dim)))
            lhs, rhs = lipschitz_witness(Mk, x, y)
            assert lhs <= rhs * (1 + 1e-9)


@given(st.integers(0, 15))
def test_form_identity_is_coordinate_functional(i):
    grid = SPACES["grid"]
    e = np.zeros(grid.dim)
    e[i] = 1.0
    z = el(grid, e / grid.norm(e))
    F = form_from_monomial(Monomial(KLinearMap.product(1, grid)), z)
    x = np.random.default_rng(i).standard_normal(grid.dim)
    assert F(el(grid, x)) == pytest.approx(float(grid.geometry.inner(x, z.coords)), rel=1e-12)


def test_norm_square_form(grid, rng):
    F = inner_product_form(grid, 1)
    for x in rng.standard_normal((20, grid.dim)):
        assert F.monomial(el(grid, x)) == pytest.approx(grid.norm(x) ** 2, rel=1e-12)


def test_zero_monomial_form_and_lattice_rejection(grid):
    z = el(grid, np.ones(grid.dim) / grid.norm(np.ones(grid.dim)))
    M0 = Monomial(KLinearMap.dense(np.zeros((grid.dim,) * 3), grid, bound_K=0.0))
    assert not np.any(form_from_monomial(M0, z).tensor)
    lat = LatticeAlgebra(3)
    with pytest.raises(ValueError):
        form_from_monomial(Monomial(KLinearMap.product(1, lat)), el(lat, lat.delta(0)))
    with pytest.raises(ValueError):
        form_from_monomial(Monomial(KLinearMap.product(1, grid)), el(grid, np.ones(grid.dim)))


def test_map_arithmetic(rng):
    m = MatrixAlgebra(2)
    A, B = KLinearMap.product(2, m), KLinearMap.dense(rng.standard_normal((4, 4, 4)), m, 1.0)
    args = list(rng.standard_normal((2, 4)))
    got = (A.scale(2.0) + B).eval_coords(args)
    assert np.allclose(got, 2 * A.eval_coords(args) + B.eval_coords(args), atol=1e-12)
