"""Independent-increment processes and their exact Gaussian laws.

Two instances:

* ``OUProcess`` -- the stochastic convolution ``X(t) = S_t X(0) + int_0^t S_{t-u} dW(u)``
  on the grid algebra with the shift semigroup;
* ``MatrixLevyProcess`` -- ``d x d`` matrices of i.i.d. Brownian-with-drift entries.

Both split ``X(t) = X_perp(s;t) + X_par(s;t)`` via ``decompose``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .algebra import AlgebraElement, GridAlgebra, MatrixAlgebra

SYM_TOL = 1e-12
PSD_CLIP = 1e-10


def make_rng(stream) -> np.random.Generator:
    """Accept an int seed, a SeedSequence or a ready Generator."""
    if isinstance(stream, np.random.Generator):
        return stream
    return np.random.default_rng(stream)


def double_factorial(n: int) -> int:
    return math.prod(range(n, 0, -2)) if n > 0 else 1


def gaussian_raw_moment(m: int, mean, var):
    """``E[Z^m]`` for ``Z ~ N(mean, var)``, elementwise over arrays."""
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    total = np.zeros(np.broadcast_shapes(mean.shape, var.shape))
    for j in range(0, m + 1, 2):
        total = total + math.comb(m, j) * double_factorial(j - 1) * var ** (j // 2) * mean ** (m - j)
    return total


class GaussianLaw:
    """Multivariate normal law of a coordinate vector."""

    def __init__(self, mean, cov):
        mean = np.array(mean, dtype=float).ravel()
        cov = np.array(cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"cov shape {cov.shape} incompatible with mean of size {mean.size}")
        scale = max(1.0, float(np.max(np.abs(cov)))) if cov.size else 1.0
        if np.max(np.abs(cov - cov.T), initial=0.0) > SYM_TOL * scale:
            raise ValueError("covariance is not symmetric")
        cov = 0.5 * (cov + cov.T)
        evals, evecs = np.linalg.eigh(cov)
        if evals.size and evals[0] < -PSD_CLIP * scale:
            raise ValueError(f"covariance is not PSD (min eigenvalue {evals[0]:.3g})")
        evals = np.clip(evals, 0.0, None)
        self.mean = mean
        self.cov = cov
        self._factor = evecs * np.sqrt(evals)
        for a in (self.mean, self.cov, self._factor):
            a.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.mean.size

    @classmethod
    def degenerate(cls, point) -> GaussianLaw:
        point = np.asarray(point, dtype=float)
        return cls(point, np.zeros((point.size, point.size)))

    def sample(self, rng_stream, n: int | None = None) -> np.ndarray:
        """Draw ``n`` samples (rows), or a single vector if ``n`` is None."""
        rng = make_rng(rng_stream)
        shape = (self.dim,) if n is None else (n, self.dim)
        z = rng.standard_normal(shape)
        return self.mean + z @ self._factor.T

    def shifted(self, offset) -> GaussianLaw:
        return GaussianLaw(self.mean + np.asarray(offset, dtype=float), self.cov)

    def linear_image(self, A) -> GaussianLaw:
        A = np.atleast_2d(np.asarray(A, dtype=float))
        return GaussianLaw(A @ self.mean, A @ self.cov @ A.T)

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> GaussianLaw:
        return cls(obj["mean"], obj["cov"])


def sample_perp(law: GaussianLaw, rng_stream, n: int | None = None) -> np.ndarray:
    return law.sample(rng_stream, n)


@dataclass(frozen=True, eq=False)
class Path:
    """A realized path: ``values[j]`` is the state at ``times[j]``."""

    times: np.ndarray
    values: np.ndarray
    space: object

    def at(self, s: float) -> AlgebraElement:
        idx = np.flatnonzero(np.isclose(self.times, s, rtol=0, atol=1e-12))
        if idx.size == 0:
            raise ValueError(f"path not realized at time {s}")
        return AlgebraElement(self.values[idx[-1]], self.space)

    @property
    def end(self) -> float:
        return float(self.times[-1])

    @classmethod
    def constant(cls, s: float, value: AlgebraElement) -> Path:
        """A path known only through its state at time ``s``."""
        return cls(np.array([float(s)]), value.coords[None, :].copy(), value.space)


@dataclass(frozen=True, eq=False)
class Decomposition:
    """``X(t) = X_perp(s;t) + X_par(s;t)`` with the parallel part realized."""

    parallel: AlgebraElement
    perp_law: GaussianLaw
    s: float
    t: float

    @property
    def space(self):
        return self.parallel.space


def exponential_kernel(nodes, sigma: float = 0.1, gamma: float = 1.0) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=float)
    return sigma**2 * np.exp(-gamma * np.abs(nodes[:, None] - nodes[None, :]))


@dataclass(eq=False)
class OUProcess:
    """Shift-semigroup Ornstein-Uhlenbeck process on the grid algebra."""

    space: GridAlgebra
    noise_cov_Q: np.ndarray
    dt_quadrature: float = 1e-3
    _cov_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        Q = np.asarray(self.noise_cov_Q, dtype=float)
        if Q.shape != (self.space.dim, self.space.dim):
            raise ValueError("noise covariance must be dim x dim")
        GaussianLaw(np.zeros(self.space.dim), Q)  # symmetric / PSD validation
        self.noise_cov_Q = Q
        if self.dt_quadrature <= 0:
            raise ValueError("dt_quadrature must be positive")

    @classmethod
    def default(cls, sigma: float = 0.1, gamma: float = 1.0, dt_quadrature: float = 1e-3,
                **grid_kwargs) -> OUProcess:
        space = GridAlgebra.default(**grid_kwargs)
        return cls(space, exponential_kernel(space.grid.nodes, sigma, gamma), dt_quadrature)

    @property
    def geometry(self):
        return self.space.geometry

    @property
    def shift_matrix_step(self) -> np.ndarray:
        return self.space.shift_matrix(self.space.grid.dx)

    def perp_covariance(self, tau: float) -> np.ndarray:
        """``int_0^tau S_u Q S_u^T du`` by the trapezoid rule."""
        if tau < 0:
            raise ValueError("time increment must be >= 0")
        key = round(tau, 12)
        if key in self._cov_cache:
            return self._cov_cache[key]
        n = self.space.dim
        if tau == 0:
            cov = np.zeros((n, n))
        else:
            steps = max(1, math.ceil(tau / self.dt_quadrature - 1e-9))
            us = np.linspace(0.0, tau, steps + 1)
            S = np.stack([self.space.shift_matrix(u) for u in us])
            integrand = S @ self.noise_cov_Q @ np.swapaxes(S, 1, 2)
            w = np.full(steps + 1, tau / steps)
            w[0] = w[-1] = tau / steps / 2
            cov = np.tensordot(w, integrand, axes=1)
            cov = 0.5 * (cov + cov.T)
        cov.setflags(write=False)
        self._cov_cache[key] = cov
        return cov

    def decompose(self, path: Path, s: float, t: float) -> Decomposition:
        if t < s:
            raise ValueError(f"need s <= t, got s={s}, t={t}")
        x_s = path.at(s)
        parallel = AlgebraElement(self.space.shift(t - s, x_s.coords), self.space)
        return Decomposition(parallel, ou_perp_covariance(self, s, t), s, t)

    def simulate_path(self, t_end: float, dt: float, rng_stream, x0=None) -> Path:
        """Exact-in-law stepping ``X(t+dt) = S_dt X(t) + G``."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        rng = make_rng(rng_stream)
        n_steps = max(0, math.ceil(t_end / dt - 1e-9))
        times = np.minimum(dt * np.arange(n_steps + 1), t_end)
        x = np.zeros(self.space.dim) if x0 is None else np.asarray(
            getattr(x0, "coords", x0), dtype=float)
        values = [x]
        for j in range(n_steps):
            h = times[j + 1] - times[j]
            law = GaussianLaw(np.zeros(self.space.dim), self.perp_covariance(h))
            x = self.space.shift(h, x) + law.sample(rng)
            values.append(x)
        return Path(times, np.array(values), self.space)


def ou_perp_covariance(p: OUProcess, s: float, t: float) -> GaussianLaw:
    """Zero-mean law of ``X_perp(s;t) = int_s^t S_{t-u} dW(u)``."""
    if s > t:
        raise ValueError(f"need s <= t, got s={s}, t={t}")
    return GaussianLaw(np.zeros(p.space.dim), p.perp_covariance(t - s))


@dataclass(eq=False)
class MatrixLevyProcess:
    """``d x d`` matrix of i.i.d. Brownian motions with drift ``mu`` and
    variance rate ``sigma2``."""

    d: int = 2
    mu: float = 0.0
    sigma2: float = 1.0
    space: MatrixAlgebra = field(init=False)

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValueError("variance rate must be >= 0")
        self.space = MatrixAlgebra(self.d)

    def increment_law(self, tau: float) -> GaussianLaw:
        if tau < 0:
            raise ValueError("time increment must be >= 0")
        n = self.space.dim
        return GaussianLaw(np.full(n, self.mu * tau), self.sigma2 * tau * np.eye(n))

    def entry_moments(self, tau: float = 1.0, order: int = 6) -> list[float]:
        """Raw moments ``m_1..m_order`` of one entry increment over ``tau``."""
        return [float(gaussian_raw_moment(j, self.mu * tau, self.sigma2 * tau))
                for j in range(1, order + 1)]

    def decompose(self, path: Path, s: float, t: float) -> Decomposition:
        if t < s:
            raise ValueError(f"need s <= t, got s={s}, t={t}")
        return Decomposition(path.at(s), self.increment_law(t - s), s, t)

    def simulate_path(self, t_end: float, dt: float, rng_stream, x0=None) -> Path:
        if dt <= 0:
            raise ValueError("dt must be positive")
        rng = make_rng(rng_stream)
        n_steps = max(0, math.ceil(t_end / dt - 1e-9))
        times = np.minimum(dt * np.arange(n_steps + 1), t_end)
        x = np.zeros(self.space.dim) if x0 is None else np.asarray(
            getattr(x0, "coords", x0), dtype=float)
        values = [x]
        for j in range(n_steps):
            x = x + self.increment_law(times[j + 1] - times[j]).sample(rng)
            values.append(x)
        return Path(times, np.array(values), self.space)


def decompose(p, path_to_s: Path, s: float, t: float) -> Decomposition:
    return p.decompose(path_to_s, s, t)


def simulate_path(p, t_end: float, dt: float, rng_stream, x0=None) -> Path:
    return p.simulate_path(t_end, dt, rng_stream, x0)
