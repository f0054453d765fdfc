"""Concrete Banach algebras on finite coordinate vectors.

Three instances are provided:

* ``GridAlgebra`` -- forward curves sampled on a uniform maturity grid,
  pointwise product, discretized Filipovic norm.
* ``MatrixAlgebra`` -- ``d x d`` real matrices (row-major coordinates),
  matrix product, Frobenius norm.
* ``LatticeAlgebra`` -- signed measures on ``{0, ..., m}``, truncated
  convolution, total-variation norm.

Every space exposes vectorized ``mul`` / ``norm`` on raw coordinate arrays
with arbitrary leading batch axes; ``AlgebraElement`` wraps a single
coordinate vector together with its space.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

GRID = "grid-pointwise"
MATRIX = "matrix"
LATTICE = "lattice-measure"


class ExtrapolationWarning(UserWarning):
    """Evaluation requested beyond the truncated maturity domain."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform maturity grid ``0 = x_0 < ... < x_{n-1} = x_max``.

    The Filipovic weight is ``w(x) = exp(alpha * x)``.
    """

    x_max: float = 4.0
    n_points: int = 16
    alpha: float = 1.0

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValueError(f"n_points must be an integer >= 2, got {self.n_points}")
        if not self.x_max > 0:
            raise ValueError(f"x_max must be positive, got {self.x_max}")
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0 so that 1/w is integrable")

    @property
    def dx(self) -> float:
        return self.x_max / (self.n_points - 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.dx * np.arange(self.n_points)

    def weight(self, x):
        return np.exp(self.alpha * np.asarray(x, dtype=float))

    def to_dict(self) -> dict:
        return {"x_max": self.x_max, "n_points": self.n_points, "alpha": self.alpha}


class FilipovicGeometry:
    """Discretized Filipovic space H_w on a ``GridSpec``.

    Inner product ``c^2 (g(0) h(0) + sum_i q_i w(x_i) g'(x_i) h'(x_i))`` where
    ``q_i`` are trapezoid weights and ``g'`` is taken by central differences
    (one-sided at the two boundary nodes).
    """

    def __init__(self, grid: GridSpec):
        self.grid = grid
        # closed form of int_0^inf exp(-alpha x) dx
        self.inv_weight_integral = 1.0 / grid.alpha
        self.c_norm = math.sqrt(1.0 + 8.0 * (1.0 + self.inv_weight_integral))
        q = np.full(grid.n_points, grid.dx)
        q[0] = q[-1] = grid.dx / 2
        self.quadrature_weights = q
        self.weights = grid.weight(grid.nodes)

    def __eq__(self, other):
        return isinstance(other, FilipovicGeometry) and self.grid == other.grid

    def __hash__(self):
        return hash(self.grid)

    def derivative(self, g: np.ndarray) -> np.ndarray:
        return np.gradient(g, self.grid.dx, axis=-1, edge_order=1)

    @cached_property
    def derivative_matrix(self) -> np.ndarray:
        return self.derivative(np.eye(self.grid.n_points))

    @cached_property
    def gram(self) -> np.ndarray:
        """Gram matrix of the c-rescaled inner product in grid coordinates."""
        n = self.grid.n_points
        e0 = np.zeros(n)
        e0[0] = 1.0
        D = self.derivative_matrix.T  # rows: derivative functionals at nodes
        W = self.quadrature_weights * self.weights
        G = np.outer(e0, e0) + D.T @ (W[:, None] * D)
        return self.c_norm**2 * G

    @cached_property
    def orthonormal_factor(self) -> np.ndarray:
        """Lower-triangular ``L`` with ``gram = L L^T``; ``L^T g`` are coordinates
        of ``g`` in an orthonormal basis."""
        return np.linalg.cholesky(self.gram)

    def inner(self, g, h) -> np.ndarray:
        gp, hp = self.derivative(g), self.derivative(h)
        W = self.quadrature_weights * self.weights
        raw = g[..., 0] * h[..., 0] + np.sum(W * gp * hp, axis=-1)
        return self.c_norm**2 * raw

    def norm(self, g) -> np.ndarray:
        return np.sqrt(np.abs(self.inner(g, g)))


@dataclass(frozen=True, eq=False)
class GridAlgebra:
    """Pointwise-product algebra of grid functions with the Filipovic norm."""

    geometry: FilipovicGeometry
    max_extrapolation: float = 1.0
    tag: str = field(default=GRID, init=False)
    commutative: bool = field(default=True, init=False)

    @classmethod
    def default(cls, **grid_kwargs) -> GridAlgebra:
        return cls(FilipovicGeometry(GridSpec(**grid_kwargs)))

    def __eq__(self, other):
        return isinstance(other, GridAlgebra) and self.geometry == other.geometry

    def __hash__(self):
        return hash(self.geometry)

    @property
    def grid(self) -> GridSpec:
        return self.geometry.grid

    @property
    def dim(self) -> int:
        return self.grid.n_points

    def mul(self, a, b):
        return np.multiply(a, b)

    def norm(self, a):
        return self.geometry.norm(np.asarray(a, dtype=float))

    def identity(self) -> np.ndarray:
        return np.ones(self.dim)

    @property
    def gram(self) -> np.ndarray:
        return self.geometry.gram

    # evaluation and transport -------------------------------------------------

    def _check_reach(self, x, what):
        x = np.asarray(x, dtype=float)
        x_max = self.grid.x_max
        if np.any(x < 0):
            raise ValueError(f"{what} must be nonnegative")
        if np.any(x > x_max + self.max_extrapolation + 1e-12):
            raise ValueError(
                f"{what}={np.max(x):.6g} exceeds domain x_max={x_max} plus "
                f"allowed extrapolation {self.max_extrapolation}"
            )
        if np.any(x > x_max + 1e-12):
            warnings.warn(
                f"{what}={np.max(x):.6g} beyond x_max={x_max}; using constant "
                "extrapolation",
                ExtrapolationWarning,
                stacklevel=3,
            )

    def interpolation_weights(self, x: float) -> np.ndarray:
        """Row vector ``w`` with ``w @ g`` equal to the linear interpolant at ``x``."""
        n, dx = self.dim, self.grid.dx
        pos = min(max(float(x), 0.0) / dx, n - 1.0)
        i = min(int(math.floor(pos)), n - 2)
        theta = pos - i
        w = np.zeros(n)
        w[i] = 1.0 - theta
        w[i + 1] += theta
        return w

    def eval_delta(self, x: float, g) -> np.ndarray:
        self._check_reach(x, "evaluation point")
        return np.asarray(g, dtype=float) @ self.interpolation_weights(x)

    def shift_matrix(self, t: float) -> np.ndarray:
        """Matrix of ``g -> g(. + t)`` with linear interpolation and constant
        extrapolation past ``x_max``."""
        if t < 0:
            raise ValueError(f"shift time must be >= 0, got {t}")
        n, dx = self.dim, self.grid.dx
        pos = np.minimum(np.arange(n) + t / dx, n - 1.0)
        # snap float noise so grid-multiple shifts are exact selections
        snapped = np.round(pos)
        pos = np.where(np.abs(pos - snapped) < 1e-9, snapped, pos)
        lo = np.minimum(np.floor(pos).astype(int), n - 2)
        theta = pos - lo
        S = np.zeros((n, n))
        rows = np.arange(n)
        S[rows, lo] = 1.0 - theta
        S[rows, lo + 1] += theta
        return S

    def shift(self, t: float, g) -> np.ndarray:
        return np.asarray(g, dtype=float) @ self.shift_matrix(t).T


@dataclass(frozen=True)
class MatrixAlgebra:
    """``d x d`` real matrices with the Frobenius norm (submultiplicative)."""

    d: int = 2
    tag: str = field(default=MATRIX, init=False)
    commutative: bool = field(default=False, init=False)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("matrix dimension must be >= 1")

    @property
    def dim(self) -> int:
        return self.d * self.d

    def as_matrix(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        return a.reshape(a.shape[:-1] + (self.d, self.d))

    def mul(self, a, b):
        prod = np.matmul(self.as_matrix(a), self.as_matrix(b))
        return prod.reshape(prod.shape[:-2] + (self.dim,))

    def norm(self, a):
        return np.sqrt(np.sum(np.square(a), axis=-1))

    def identity(self) -> np.ndarray:
        return np.eye(self.d).ravel()

    @property
    def gram(self) -> np.ndarray:
        return np.eye(self.dim)

    def basis(self, i: int, j: int) -> np.ndarray:
        """Matrix unit ``e_ij`` with 1-based indices, as coordinates."""
        e = np.zeros((self.d, self.d))
        e[i - 1, j - 1] = 1.0
        return e.ravel()


@dataclass(frozen=True)
class LatticeAlgebra:
    """Signed measures on ``{0, ..., m}`` under convolution.

    Mass that would land beyond site ``m`` accumulates at ``m``; this keeps the
    product associative, commutative and TV-submultiplicative.
    """

    m: int = 8
    tag: str = field(default=LATTICE, init=False)
    commutative: bool = field(default=True, init=False)

    @property
    def dim(self) -> int:
        return self.m + 1

    def mul(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        n = self.dim
        P = (a[..., :, None] * b[..., None, :]).reshape(
            np.broadcast_shapes(a.shape[:-1], b.shape[:-1]) + (n * n,))
        # each site sums a fixed multiset of products in sorted order, so a*b == b*a exactly
        out = np.empty(P.shape[:-1] + (n,))
        for site, idx in enumerate(self._site_indices()):
            out[..., site] = np.sort(P[..., idx], axis=-1).sum(axis=-1)
        return out

    def _site_indices(self):
        n = self.dim
        i, j = np.divmod(np.arange(n * n), n)
        total = np.minimum(i + j, n - 1)
        return [np.flatnonzero(total == site) for site in range(n)]

    def norm(self, a):
        return np.sum(np.abs(a), axis=-1)

    def identity(self) -> np.ndarray:
        return self.delta(0)

    def delta(self, site: int) -> np.ndarray:
        e = np.zeros(self.dim)
        e[site] = 1.0
        return e


Space = GridAlgebra | MatrixAlgebra | LatticeAlgebra


class AlgebraElement:
    """An immutable coordinate vector interpreted in a given algebra."""

    __slots__ = ("coords", "space")

    def __init__(self, coords, space):
        c = np.array(coords, dtype=float).ravel()
        if c.shape[0] != space.dim:
            raise ValueError(
                f"{space.tag} element needs {space.dim} coordinates, got {c.shape[0]}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "space", space)

    def __setattr__(self, name, value):
        raise AttributeError("AlgebraElement is immutable")

    @property
    def algebra_tag(self) -> str:
        return self.space.tag

    def _check(self, other: AlgebraElement):
        if not isinstance(other, AlgebraElement):
            raise TypeError(f"expected AlgebraElement, got {type(other).__name__}")
        if other.space != self.space:
            raise ValueError(
                f"algebra mismatch: {self.space.tag}[{self.space.dim}] vs "
                f"{other.space.tag}[{other.space.dim}]"
            )

    def __add__(self, other):
        self._check(other)
        return AlgebraElement(self.coords + other.coords, self.space)

    def __sub__(self, other):
        self._check(other)
        return AlgebraElement(self.coords - other.coords, self.space)

    def __neg__(self):
        return AlgebraElement(-self.coords, self.space)

    def __mul__(self, other):
        if isinstance(other, AlgebraElement):
            return mul(self, other)
        return AlgebraElement(self.coords * float(other), self.space)

    def __rmul__(self, other):
        return AlgebraElement(self.coords * float(other), self.space)

    def __pow__(self, n: int):
        if int(n) != n or n < 0:
            raise ValueError("only nonnegative integer powers are defined")
        out = AlgebraElement(self.space.identity(), self.space)
        for _ in range(int(n)):
            out = out * self
        return out

    def norm(self) -> float:
        return float(self.space.norm(self.coords))

    def allclose(self, other, **kw) -> bool:
        self._check(other)
        return bool(np.allclose(self.coords, other.coords, **kw))

    def __repr__(self):
        return f"AlgebraElement({self.space.tag}, {np.array2string(self.coords, precision=4)})"


def zero(space) -> AlgebraElement:
    return AlgebraElement(np.zeros(space.dim), space)


def mul(a: AlgebraElement, b: AlgebraElement) -> AlgebraElement:
    """Algebra product of two elements of the same space."""
    a._check(b)
    return AlgebraElement(a.space.mul(a.coords, b.coords), a.space)


def norm(a: AlgebraElement) -> float:
    return a.norm()


def eval_delta(x: float, g: AlgebraElement) -> float:
    """Evaluate a grid function at maturity ``x`` (linear interpolation)."""
    if g.algebra_tag != GRID:
        raise ValueError("eval_delta is defined for grid functions only")
    return float(g.space.eval_delta(x, g.coords))


def shift(t: float, g: AlgebraElement) -> AlgebraElement:
    """Shift semigroup ``g -> g(. + t)`` on the grid."""
    if g.algebra_tag != GRID:
        raise ValueError("shift is defined for grid functions only")
    return AlgebraElement(g.space.shift(t, g.coords), g.space)


def grid_function(space: GridAlgebra, f) -> AlgebraElement:
    """Sample a callable on the grid nodes."""
    return AlgebraElement(f(space.grid.nodes), space)
