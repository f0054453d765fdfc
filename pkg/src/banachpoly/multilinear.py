"""Bounded k-linear maps, their monomials and Frechet derivatives."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .algebra import GRID, LATTICE, AlgebraElement, zero

DENSE_CAP = 2**24


@dataclass(frozen=True, eq=False)
class DenseTensor:
    """Coefficient tensor ``T[o, i_1, ..., i_k]``."""

    tensor: np.ndarray

    def to_json(self) -> dict:
        return {"shape": list(self.tensor.shape), "data": self.tensor.ravel().tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> DenseTensor:
        return cls(np.asarray(obj["data"], dtype=float).reshape(obj["shape"]))


@dataclass(frozen=True, eq=False)
class ProductMap:
    """``(x_1, ..., x_k) -> P(x_1 x_2 ... x_k)`` with an optional linear post-map."""

    post: np.ndarray | None = None


def structure_tensor(space) -> np.ndarray:
    """``S[o, p, q]`` such that ``(x y)_o = sum S[o, p, q] x_p y_q``."""
    n = space.dim
    E = np.eye(n)
    prods = space.mul(E[:, None, :], E[None, :, :])  # (p, q, o)
    return np.moveaxis(prods, -1, 0)


def operator_norm(space, P: np.ndarray) -> float:
    """Operator norm of a linear map in the space's own norm."""
    if space.tag == LATTICE:
        return float(np.max(np.sum(np.abs(P), axis=0)))
    G = space.gram
    top = scipy.linalg.eigh(P.T @ G @ P, G, eigvals_only=True)[-1]
    return float(math.sqrt(max(top, 0.0)))


def _check_dense_size(dim: int, order: int):
    if dim**order > DENSE_CAP:
        raise ValueError(
            f"dense tensor with {dim}^{order} coefficients exceeds cap 2^24; "
            "use a ProductMap representation"
        )


def _contract(T: np.ndarray, xs: list[np.ndarray]) -> np.ndarray:
    """Contract trailing axes of ``T`` with batched vectors (last slot first)."""
    batch = np.broadcast_shapes(*(x.shape[:-1] for x in xs))
    flat = [np.broadcast_to(x, batch + x.shape[-1:]).reshape(-1, x.shape[-1]) for x in xs]
    res = np.einsum("...i,bi->b...", T, flat[-1])
    for x in reversed(flat[:-1]):
        res = np.einsum("b...i,bi->b...", res, x)
    return res.reshape(batch + T.shape[: T.ndim - len(xs)])


class KLinearMap:
    """A bounded k-linear map ``B^k -> B`` on one of the algebra spaces."""

    def __init__(self, k: int, space, rep: DenseTensor | ProductMap, bound_K: float | None = None):
        if k < 1:
            raise ValueError("arity must be >= 1")
        self.k = int(k)
        self.space = space
        self.rep = rep
        if isinstance(rep, DenseTensor):
            expected = (space.dim,) * (k + 1)
            if rep.tensor.shape != expected:
                raise ValueError(f"tensor shape {rep.tensor.shape} != {expected}")
            _check_dense_size(space.dim, k + 1)
        elif rep.post is not None and rep.post.shape != (space.dim, space.dim):
            raise ValueError("post-map must be a dim x dim matrix")
        if bound_K is None:
            if isinstance(rep, ProductMap):
                bound_K = 1.0 if rep.post is None else operator_norm(space, rep.post)
            else:
                bound_K = estimate_bound(self)
        self.bound_K = float(bound_K)

    @classmethod
    def product(cls, k: int, space, post: np.ndarray | None = None) -> KLinearMap:
        return cls(k, space, ProductMap(post))

    @classmethod
    def dense(cls, tensor, space, bound_K: float | None = None) -> KLinearMap:
        tensor = np.asarray(tensor, dtype=float)
        return cls(tensor.ndim - 1, space, DenseTensor(tensor), bound_K)

    @property
    def is_dense(self) -> bool:
        return isinstance(self.rep, DenseTensor)

    def eval_coords(self, args) -> np.ndarray:
        """Evaluate on raw coordinate arrays; leading batch axes broadcast."""
        if len(args) != self.k:
            raise ValueError(f"expected {self.k} arguments, got {len(args)}")
        xs = [np.asarray(a, dtype=float) for a in args]
        if any(x.shape[-1] != self.space.dim for x in xs):
            raise ValueError("argument dimension does not match the space")
        if self.is_dense:
            return _contract(self.rep.tensor, xs)
        if self.space.tag == GRID:
            # pointwise product: sort factors per node so rounding is order-independent
            stacked = np.sort(np.stack(np.broadcast_arrays(*xs)), axis=0)
            res = stacked[0]
            for x in stacked[1:]:
                res = self.space.mul(res, x)
        else:
            res = xs[0]
            for x in xs[1:]:
                res = self.space.mul(res, x)
        if self.rep.post is not None:
            res = res @ self.rep.post.T
        return res

    def __call__(self, *args: AlgebraElement) -> AlgebraElement:
        for a in args:
            if a.space != self.space:
                raise ValueError("argument lives in a different algebra")
        return AlgebraElement(self.eval_coords([a.coords for a in args]), self.space)

    def to_dense(self) -> KLinearMap:
        if self.is_dense:
            return self
        _check_dense_size(self.space.dim, self.k + 1)
        S = structure_tensor(self.space)
        T = np.eye(self.space.dim)
        for _ in range(self.k - 1):
            # T[p, i_1..i_j] -> sum_p S[o, p, q] T[p, ...] with q appended last
            T = np.moveaxis(np.tensordot(S, T, axes=([1], [0])), 1, -1)
        if self.rep.post is not None:
            T = np.tensordot(self.rep.post, T, axes=([1], [0]))
        return KLinearMap(self.k, self.space, DenseTensor(T), self.bound_K)

    def __add__(self, other: KLinearMap) -> KLinearMap:
        a, b = self.to_dense(), other.to_dense()
        return KLinearMap(self.k, self.space, DenseTensor(a.rep.tensor + b.rep.tensor),
                          self.bound_K + other.bound_K)

    def scale(self, c: float) -> KLinearMap:
        if self.is_dense:
            return KLinearMap(self.k, self.space, DenseTensor(c * self.rep.tensor),
                              abs(c) * self.bound_K)
        post = c * (np.eye(self.space.dim) if self.rep.post is None else self.rep.post)
        return KLinearMap(self.k, self.space, ProductMap(post), abs(c) * self.bound_K)


def estimate_bound(L: KLinearMap, n_draws: int = 10_000, seed: int = 0) -> float:
    """Sampled lower bound for ``sup ||L(x_1..x_k)|| / prod ||x_i||``."""
    rng = np.random.default_rng(seed)
    space = L.space
    xs = []
    for _ in range(L.k):
        x = rng.standard_normal((n_draws, space.dim))
        xs.append(x / space.norm(x)[:, None])
    chunk, best = 1000, 0.0
    for lo in range(0, n_draws, chunk):
        vals = L.eval_coords([x[lo : lo + chunk] for x in xs])
        best = max(best, float(np.max(space.norm(vals))))
    return best


class Monomial:
    """``M_k(x) = L(x, ..., x)``."""

    def __init__(self, base: KLinearMap):
        self.base = base

    @property
    def k(self) -> int:
        return self.base.k

    @property
    def space(self):
        return self.base.space

    def eval_coords(self, x) -> np.ndarray:
        return self.base.eval_coords([x] * self.k)

    def __call__(self, x: AlgebraElement) -> AlgebraElement:
        return self.base(*([x] * self.k))


def _fsum_rows(terms: list[np.ndarray]) -> np.ndarray:
    """Correctly rounded sum; independent of term order."""
    stack = np.stack(terms)
    flat = stack.reshape(len(terms), -1)
    out = np.array([math.fsum(col) for col in flat.T])
    return out.reshape(stack.shape[1:])


def frechet_derivative(M: Monomial, u: AlgebraElement, n: int, dirs) -> AlgebraElement:
    """n-th Frechet derivative of ``M`` at ``u`` applied to ``dirs``.

    Sums ``L(x_1..x_k)`` over all placements of the ``n`` directions into
    distinct slots, the remaining slots holding ``u``.
    """
    k = M.k
    if n < 1:
        raise ValueError("derivative order must be >= 1")
    if n > k + 1:
        raise ValueError(f"order {n} exceeds k+1={k + 1}; the derivative is identically zero")
    if len(dirs) != n:
        raise ValueError(f"expected {n} directions, got {len(dirs)}")
    if n == k + 1:
        return zero(M.space)
    terms = []
    for slots in itertools.permutations(range(k), n):
        args = [u.coords] * k
        for h, slot in zip(dirs, slots):
            args[slot] = h.coords
        terms.append(M.base.eval_coords(args))
    return AlgebraElement(_fsum_rows(terms), M.space)


def finite_difference_derivative(M: Monomial, u: AlgebraElement, n: int, dirs,
                                 h_step: float = 1e-3) -> AlgebraElement:
    """Central mixed finite difference of order ``n`` along ``dirs``."""
    if h_step <= 0:
        raise ValueError("h_step must be positive")
    if len(dirs) != n:
        raise ValueError(f"expected {n} directions, got {len(dirs)}")
    H = np.stack([h.coords for h in dirs])
    signs = np.array(list(itertools.product((1.0, -1.0), repeat=n)))
    points = u.coords + h_step * signs @ H
    vals = M.eval_coords(points)
    weights = np.prod(signs, axis=1)
    return AlgebraElement(weights @ vals / (2.0 * h_step) ** n, M.space)


def lipschitz_witness(M: Monomial, x: AlgebraElement, y: AlgebraElement) -> tuple[float, float]:
    """``(||M(x) - M(y)||, K sum_i ||x||^(k-i) ||y||^(i-1) ||x - y||)``."""
    k, K = M.k, M.base.bound_K
    lhs = (M(x) - M(y)).norm()
    nx, ny, nd = x.norm(), y.norm(), (x - y).norm()
    rhs = K * sum(nx ** (k - i) * ny ** (i - 1) for i in range(1, k + 1)) * nd
    return lhs, rhs


class MultilinearForm:
    """Scalar-valued k-linear form with dense tensor ``F[i_1, ..., i_k]``."""

    def __init__(self, tensor, space):
        tensor = np.asarray(tensor, dtype=float)
        if tensor.shape != (space.dim,) * tensor.ndim:
            raise ValueError("form tensor must have shape (dim,)*k")
        _check_dense_size(space.dim, tensor.ndim)
        self.tensor = tensor
        self.space = space

    @property
    def k(self) -> int:
        return self.tensor.ndim

    def eval_coords(self, args) -> np.ndarray:
        if len(args) != self.k:
            raise ValueError(f"expected {self.k} arguments, got {len(args)}")
        return _contract(self.tensor, [np.asarray(a, dtype=float) for a in args])

    def __call__(self, *args: AlgebraElement) -> float:
        return float(self.eval_coords([a.coords for a in args]))

    def monomial(self, x: AlgebraElement) -> float:
        return self(*([x] * self.k))


def _require_inner_product(space):
    if space.tag == LATTICE:
        raise ValueError("the total-variation lattice norm carries no inner product")
    return space.gram


def form_from_monomial(M: Monomial, z: AlgebraElement) -> MultilinearForm:
    """The scalar form ``(x_1..x_k) -> <L(x_1..x_k), z>`` for a unit vector ``z``."""
    G = _require_inner_product(M.space)
    if not math.isclose(z.norm(), 1.0, rel_tol=1e-9):
        raise ValueError(f"z must have unit norm, got {z.norm():.6g}")
    T = M.base.to_dense().rep.tensor
    return MultilinearForm(np.tensordot(G @ z.coords, T, axes=([0], [0])), M.space)


def inner_product_form(space, pairs: int) -> MultilinearForm:
    """``<x_1, y_1> ... <x_p, y_p>`` as a ``2p``-form."""
    G = _require_inner_product(space)
    T = G
    for _ in range(pairs - 1):
        T = np.multiply.outer(T, G)
    return MultilinearForm(T, space)
