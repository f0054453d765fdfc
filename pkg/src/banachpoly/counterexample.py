"""Matrix-algebra obstructions to the (generalized) polynomial property.

For a matrix of i.i.d. Levy entries the sandwich ``y -> E[D y D]`` (``D`` the
increment) is a bounded operator that is not a left multiplication, and the
quadratic ``y -> E[D y D y D]`` cannot be written as ``L2(y^2) + L1(y) + b``
once the entries have nonzero mean.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .process import GaussianLaw, gaussian_raw_moment, make_rng

INCONSISTENT = "INCONSISTENT"
SOLVABLE = "SOLVABLE"
CONTRADICTION = "CONTRADICTION"
CONSISTENT = "CONSISTENT"


@dataclass(frozen=True)
class EntryMoments:
    """Raw moments of one scalar entry increment."""

    m1: float
    m2: float
    m3: float

    def __post_init__(self):
        if self.m2 < self.m1**2 - 1e-12:
            raise ValueError("second moment below squared mean")

    @classmethod
    def gaussian(cls, mu: float, var: float) -> EntryMoments:
        return cls(*(float(gaussian_raw_moment(j, mu, var)) for j in (1, 2, 3)))

    @property
    def variance(self) -> float:
        return self.m2 - self.m1**2


def _as_square(h, d=None) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.ndim == 1:
        n = math.isqrt(h.size)
        h = h.reshape(n, n)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("expected a square matrix")
    if d is not None and h.shape[0] != d:
        raise ValueError(f"expected a {d}x{d} matrix, got {h.shape}")
    return h


def operator_L(h, em: EntryMoments, d: int = 2) -> np.ndarray:
    """``E[D h D]`` in closed form:
    ``(Lh)_ij = sum_pq E[D_ip D_qj] h_pq`` with ``E[D_ip D_qj] = m2`` when
    ``(i,p) = (q,j)`` and ``m1^2`` otherwise."""
    h = _as_square(h, d)
    out = em.m1**2 * np.full((d, d), h.sum())
    # (i,p) == (q,j) forces p = j, q = i: the term h_{ji}
    out += (em.m2 - em.m1**2) * h.T
    return out


def sandwich3(h1, h2, em: EntryMoments) -> np.ndarray:
    """``E[D h1 D h2 D]`` by enumerating coincidences of the three entries."""
    h1, h2 = _as_square(h1), _as_square(h2)
    d = h1.shape[0]
    out = np.zeros((d, d))
    for i, j, a, b, c, e in np.ndindex(d, d, d, d, d, d):
        w = h1[a, b] * h2[c, e]
        if w == 0.0:
            continue
        keys = [(i, a), (b, c), (e, j)]
        distinct = len(set(keys))
        out[i, j] += w * {3: em.m1**3, 2: em.m2 * em.m1, 1: em.m3}[distinct]
    return out


@dataclass(frozen=True)
class LeftMultiplierVerdict:
    status: str
    residual: float
    solution: np.ndarray | None


def assert_no_left_multiplier(h, g, tol: float = 1e-9) -> LeftMultiplierVerdict:
    """Solve ``a h = g`` for ``a``; report INCONSISTENT with the least-squares
    residual if no solution exists."""
    h, g = _as_square(h), _as_square(g)
    d = h.shape[0]
    # row-major vec: vec(a h) = (I kron h^T) vec(a)
    A = np.kron(np.eye(d), h.T)
    sol, *_ = np.linalg.lstsq(A, g.ravel(), rcond=None)
    a = sol.reshape(d, d)
    residual = float(np.linalg.norm(a @ h - g))
    scale = max(1.0, float(np.linalg.norm(g)))
    if residual > tol * scale:
        return LeftMultiplierVerdict(INCONSISTENT, residual, None)
    return LeftMultiplierVerdict(SOLVABLE, residual, a)


@dataclass(frozen=True)
class D2Verdict:
    status: str
    lhs: np.ndarray
    rhs_is_zero: bool
    h1: np.ndarray
    h2: np.ndarray

    def to_json(self) -> dict:
        return {"status": self.status, "lhs": self.lhs.tolist(), "rhs_is_zero": self.rhs_is_zero}


def d2_entries(em: EntryMoments) -> np.ndarray:
    """Entries of ``D^2 f(y)(e11, e22)`` written out for ``d = 2``."""
    diag = 2 * em.m1**3
    off = em.m1**3 + em.m2 * em.m1
    return np.array([[diag, off], [off, diag]])


def d2_mismatch(em: EntryMoments, tol: float = 1e-12) -> D2Verdict:
    """Second derivative of ``y -> E[D y D y D]`` at directions ``e11, e22``
    against that of any generalized quadratic ``L2(y^2) + L1(y) + b``.

    The latter equals ``L2(h1 h2) + L2(h2 h1)``, which vanishes because
    ``h1 h2 = h2 h1 = 0``.
    """
    h1 = np.array([[1.0, 0.0], [0.0, 0.0]])
    h2 = np.array([[0.0, 0.0], [0.0, 1.0]])
    lhs = sandwich3(h1, h2, em) + sandwich3(h2, h1, em)
    rhs_is_zero = not np.any(h1 @ h2) and not np.any(h2 @ h1)
    contradiction = rhs_is_zero and np.max(np.abs(lhs)) > tol
    return D2Verdict(CONTRADICTION if contradiction else CONSISTENT, lhs, rhs_is_zero, h1, h2)


def increment_law(mu: float, var: float, d: int = 2) -> GaussianLaw:
    return GaussianLaw(np.full(d * d, mu), var * np.eye(d * d))


def mc_sandwich(h, law: GaussianLaw, n: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo ``E[D h D]`` with entrywise standard errors."""
    h = _as_square(h)
    d = h.shape[0]
    D = law.sample(make_rng(seed), n).reshape(n, d, d)
    vals = D @ h @ D
    return vals.mean(axis=0), vals.std(axis=0, ddof=1) / math.sqrt(n)


def mc_d2(law: GaussianLaw, n: int, seed, y=None, eps: float = 0.5):
    """Mixed central difference of ``f(y) = E[D y D y D]`` along ``e11, e22``
    with common random numbers; exact for a quadratic, so only MC error remains."""
    h1 = np.array([[1.0, 0.0], [0.0, 0.0]])
    h2 = np.array([[0.0, 0.0], [0.0, 1.0]])
    y = np.zeros((2, 2)) if y is None else _as_square(y, 2)
    D = law.sample(make_rng(seed), n).reshape(n, 2, 2)

    def f(z):
        return D @ z @ D @ z @ D

    vals = (f(y + eps * h1 + eps * h2) - f(y + eps * h1 - eps * h2)
            - f(y - eps * h1 + eps * h2) + f(y - eps * h1 - eps * h2)) / (4 * eps**2)
    return vals.mean(axis=0), vals.std(axis=0, ddof=1) / math.sqrt(n)


def commutative_sandwich(h, law: GaussianLaw) -> np.ndarray:
    """``E[D * h * D]`` for the pointwise product: a multiplication by ``E[D*D]``."""
    second = np.diag(law.cov) + law.mean**2
    return second * np.asarray(h, dtype=float)


def report(em_part1: EntryMoments | None = None, em_part2: EntryMoments | None = None) -> dict:
    """Both verdicts with their certificates."""
    em1 = em_part1 or EntryMoments.gaussian(0.0, 1.0)
    em2 = em_part2 or EntryMoments.gaussian(1.0, 1.0)
    e12 = np.array([[0.0, 1.0], [0.0, 0.0]])
    g = operator_L(e12, em1)
    part1 = assert_no_left_multiplier(e12, g)
    part2 = d2_mismatch(em2)
    return {
        "part1": {"h": e12.tolist(), "L(h)": g.tolist(), "status": part1.status,
                  "residual": part1.residual},
        "part2": part2.to_json() | {"m1": em2.m1, "m2": em2.m2},
    }
