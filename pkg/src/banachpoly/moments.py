"""Conditional moments of independent-increment processes.

Closed forms:

* binomial formula in commutative algebras,
* the shift-homomorphism form for the grid OU process,
* the ``2^k`` word expansion for arbitrary (non-commutative) k-linear maps,
* Isserlis-Wick moment tensors and even/odd moments of the Hilbert norm.
"""
from __future__ import annotations

import contextlib
import itertools
import math
import string
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

from .algebra import GRID, AlgebraElement
from .multilinear import DENSE_CAP, KLinearMap
from .process import (Decomposition, GaussianLaw, OUProcess, gaussian_raw_moment, make_rng,
                      ou_perp_covariance)

PERP = "PERP"
PAR = "PAR"
MAX_TENSOR_ORDER = 8
MAX_WORD_ARITY = 5

# Sign applied to odd-n binomial terms. Only ever changed by ``flip_binomial_signs``.
_ODD_TERM_SIGN = 1


@contextlib.contextmanager
def flip_binomial_signs():
    """Test-only mutation: negate the odd binomial terms of the commutative formula."""
    global _ODD_TERM_SIGN
    _ODD_TERM_SIGN = -1
    try:
        yield
    finally:
        _ODD_TERM_SIGN = 1


def binomial_weight(k: int, n: int) -> float:
    return math.comb(k, n) * (_ODD_TERM_SIGN if n % 2 else 1)


# ---------------------------------------------------------------------------
# Isserlis-Wick
# ---------------------------------------------------------------------------

def partial_matchings(slots):
    """Yield ``(pairs, singles)`` over all partial matchings of ``slots``."""
    slots = tuple(slots)
    if not slots:
        yield (), ()
        return
    first, rest = slots[0], slots[1:]
    for pairs, singles in partial_matchings(rest):
        yield pairs, (first,) + singles
    for i, other in enumerate(rest):
        remaining = rest[:i] + rest[i + 1:]
        for pairs, singles in partial_matchings(remaining):
            yield ((first, other),) + pairs, singles


@dataclass(frozen=True, eq=False)
class MomentTensor:
    """``tensor[i_1, ..., i_m] = E[X_{i_1} ... X_{i_m}]``."""

    order: int
    tensor: np.ndarray


def gaussian_moment_tensor(law: GaussianLaw, m: int) -> MomentTensor:
    """Mixed moments of order ``m`` by summing over (partial) pairings."""
    if m < 0 or m > MAX_TENSOR_ORDER:
        raise ValueError(f"moment order must be in [0, {MAX_TENSOR_ORDER}], got {m}")
    n = law.dim
    if n**m > DENSE_CAP:
        raise ValueError(f"{n}^{m} moment entries exceed the dense cap")
    if m == 0:
        return MomentTensor(0, np.array(1.0))
    centered = not np.any(law.mean)
    letters = string.ascii_letters[:m]
    total = np.zeros((n,) * m)
    for pairs, singles in partial_matchings(range(m)):
        if centered and singles:
            continue
        subs = [letters[i] + letters[j] for i, j in pairs] + [letters[i] for i in singles]
        ops = [law.cov] * len(pairs) + [law.mean] * len(singles)
        total += np.einsum(",".join(subs) + "->" + letters, *ops)
    return MomentTensor(m, total)


def expected_monomial(L: KLinearMap, law: GaussianLaw) -> np.ndarray:
    """``E[L(X, ..., X)]`` for Gaussian ``X`` by tensor contraction."""
    T = L.to_dense().rep.tensor
    mt = gaussian_moment_tensor(law, L.k).tensor
    return np.tensordot(T, mt, axes=L.k)


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------

@dataclass
class ConditionalMomentResult:
    """``value = sum_j contribution_j`` with ``contribution_j`` of order ``j`` in
    the parallel part."""

    order_k: int
    value: AlgebraElement
    contributions: list[tuple[int, AlgebraElement]]
    method: str = "exact"
    se: np.ndarray | None = None
    contribution_se: dict[int, np.ndarray] = field(default_factory=dict)

    def orders(self) -> list[int]:
        return [j for j, _ in self.contributions]

    def to_json(self) -> dict:
        out = {
            "order_k": self.order_k,
            "value": self.value.coords.tolist(),
            "contributions": [{"j": j, "value": c.coords.tolist()} for j, c in self.contributions],
            "method": self.method,
        }
        if self.se is not None:
            out["se"] = np.asarray(self.se).tolist()
        return out


def _assemble(k, space, contribs, **kw) -> ConditionalMomentResult:
    contribs = sorted(contribs.items())
    value = np.sum([c for _, c in contribs], axis=0)
    return ConditionalMomentResult(
        k, AlgebraElement(value, space),
        [(j, AlgebraElement(c, space)) for j, c in contribs], **kw)


# ---------------------------------------------------------------------------
# commutative binomial formula
# ---------------------------------------------------------------------------

def perp_power_moment(d: Decomposition, m: int) -> np.ndarray:
    """``E[(X_perp)^m]`` in a commutative algebra (power taken in the algebra)."""
    space = d.space
    if m == 0:
        return space.identity()
    law = d.perp_law
    if space.tag == GRID:
        return gaussian_raw_moment(m, law.mean, np.diag(law.cov))
    return expected_monomial(KLinearMap.product(m, space), law)


def _power(space, x: np.ndarray, n: int) -> np.ndarray:
    out = space.identity()
    for _ in range(n):
        out = space.mul(out, x)
    return out


def cond_moment_commutative(k: int, d: Decomposition) -> ConditionalMomentResult:
    """``E[X(t)^k | F_s] = sum_n C(k,n) E[X_perp^(k-n)] X_par^n``."""
    space = d.space
    if not space.commutative:
        raise ValueError(
            "binomial formula requires a commutative algebra; use cond_expectation_words")
    if k < 0:
        raise ValueError("order must be >= 0")
    x_par = d.parallel.coords
    contribs = {}
    for n in range(k + 1):
        moment = perp_power_moment(d, k - n)
        contribs[n] = binomial_weight(k, n) * space.mul(moment, _power(space, x_par, n))
    return _assemble(k, space, contribs)


def cond_moment_ou(k: int, f_s: AlgebraElement, s: float, t: float,
                   p: OUProcess) -> ConditionalMomentResult:
    """Conditional moment expressed through powers of ``X(s)`` itself:
    ``sum_n C(k,n) E[X_perp^(k-n)] S_{t-s}(X(s)^n)``."""
    if t < s:
        raise ValueError(f"need s <= t, got s={s}, t={t}")
    space = p.space
    if f_s.space != space:
        raise ValueError("curve does not live on the process grid")
    law = ou_perp_covariance(p, s, t)
    var = np.diag(law.cov)
    contribs = {}
    for n in range(k + 1):
        moment = gaussian_raw_moment(k - n, law.mean, var)
        transported = space.shift(t - s, _power(space, f_s.coords, n))
        contribs[n] = binomial_weight(k, n) * moment * transported
    return _assemble(k, space, contribs)


# ---------------------------------------------------------------------------
# word expansion
# ---------------------------------------------------------------------------

def words(k: int):
    return list(itertools.product((PERP, PAR), repeat=k))


def word_counts(k: int) -> dict[int, int]:
    counts = {n: 0 for n in range(k + 1)}
    for w in words(k):
        counts[w.count(PAR)] += 1
    return counts


def _word_exact(T: np.ndarray, word, x_par, moment_tensors) -> np.ndarray:
    k = len(word)
    letters = string.ascii_letters[:k]
    subs, ops = ["z" + letters], [T]
    perp_letters = ""
    for letter, w in zip(letters, word):
        if w == PAR:
            subs.append(letter)
            ops.append(x_par)
        else:
            perp_letters += letter
    r = len(perp_letters)
    if r:
        subs.append(perp_letters)
        ops.append(moment_tensors[r])
    return np.einsum(",".join(subs) + "->z", *ops, optimize=True)


def cond_expectation_words(L: KLinearMap, d: Decomposition, n_mc: int = 200_000,
                           seed=0, chunk: int = 20_000) -> ConditionalMomentResult:
    """``E[L(X,...,X) | F_s]`` via the ``2^k`` PERP/PAR word expansion.

    Dense maps with a Gaussian perpendicular law are contracted exactly against
    moment tensors; product maps fall back to Monte Carlo over ``X_perp`` with
    the parallel part frozen.
    """
    k = L.k
    if k > MAX_WORD_ARITY:
        raise ValueError(f"word expansion limited to k <= {MAX_WORD_ARITY}")
    if L.space != d.space:
        raise ValueError("map and decomposition live in different algebras")
    x_par = d.parallel.coords
    space = d.space
    if L.is_dense:
        T = L.rep.tensor
        moments = {r: gaussian_moment_tensor(d.perp_law, r).tensor for r in range(1, k + 1)}
        contribs = {j: np.zeros(space.dim) for j in range(k + 1)}
        for w in words(k):
            contribs[w.count(PAR)] += _word_exact(T, w, x_par, moments)
        return _assemble(k, space, contribs, method="exact")

    seeds = np.random.SeedSequence(seed).spawn(math.ceil(n_mc / chunk))
    chunk_stats = []
    for i, ss in enumerate(seeds):
        size = min(chunk, n_mc - i * chunk)
        xp = d.perp_law.sample(make_rng(ss), size)
        per_j = np.zeros((k + 1, size, space.dim))
        for w in words(k):
            args = [x_par if letter == PAR else xp for letter in w]
            per_j[w.count(PAR)] += np.broadcast_to(L.eval_coords(args), (size, space.dim))
        total = per_j.sum(axis=0)
        chunk_stats.append((per_j.sum(axis=1), np.square(per_j).sum(axis=1),
                            total.sum(axis=0), np.square(total).sum(axis=0)))
    sums = np.sum([c[0] for c in chunk_stats], axis=0)
    sumsq = np.sum([c[1] for c in chunk_stats], axis=0)
    tot_sum = np.sum([c[2] for c in chunk_stats], axis=0)
    tot_sq = np.sum([c[3] for c in chunk_stats], axis=0)

    def _se(s1, s2):
        var = np.maximum(s2 / n_mc - (s1 / n_mc) ** 2, 0.0) * n_mc / (n_mc - 1)
        return np.sqrt(var / n_mc)

    contribs = {j: sums[j] / n_mc for j in range(k + 1)}
    return _assemble(k, space, contribs, method="mc", se=_se(tot_sum, tot_sq),
                     contribution_se={j: _se(sums[j], sumsq[j]) for j in range(k + 1)})


# ---------------------------------------------------------------------------
# norm moments
# ---------------------------------------------------------------------------

def _orthonormal_law(law: GaussianLaw, space) -> tuple[np.ndarray, np.ndarray]:
    if space.tag == GRID:
        Lf = space.geometry.orthonormal_factor
    else:
        Lf = np.linalg.cholesky(space.gram)
    return Lf.T @ law.mean, Lf.T @ law.cov @ Lf


def _pairing_value(k, pairs, singles, trace_pow, quad_pow) -> float:
    """Isserlis term for ``E[prod_j y_{i_j}^2]`` summed over indices.

    Slots ``2j, 2j+1`` share index ``i_j``. Components of the slot graph are
    cycles (``tr C^c``) or mean-terminated paths (``m^T C^c m``).
    """
    partner = {}
    for a, b in pairs:
        partner[a], partner[b] = b, a
    seen = set()
    value = 1.0
    for start in singles:
        if start in seen:
            continue
        node, c = start, 0
        while True:
            seen.add(node)
            node = node ^ 1  # same-index partner slot
            seen.add(node)
            if node not in partner:
                break
            node = partner[node]
            c += 1
        value *= quad_pow[c]
    for start in range(2 * k):
        if start in seen:
            continue
        node, c = start, 0
        while node not in seen:
            seen.add(node)
            node = node ^ 1
            seen.add(node)
            node = partner[node]
            c += 1
        value *= trace_pow[c]
    return value


def norm_even_moment(k: int, law: GaussianLaw, space) -> float:
    """``E||X||^(2k)`` for Gaussian ``X`` by Isserlis pairing in an orthonormal basis."""
    if 2 * k > MAX_TENSOR_ORDER:
        raise ValueError(f"2k must be <= {MAX_TENSOR_ORDER}")
    if k == 0:
        return 1.0
    m, C = _orthonormal_law(law, space)
    powers = [np.eye(C.shape[0])]
    for _ in range(k):
        powers.append(powers[-1] @ C)
    trace_pow = [float(np.trace(P)) for P in powers]
    quad_pow = [float(m @ P @ m) for P in powers]
    return math.fsum(_pairing_value(k, pairs, singles, trace_pow, quad_pow)
                     for pairs, singles in partial_matchings(range(2 * k)))


@dataclass(frozen=True)
class QuadSpec:
    """Controls for the fractional odd-moment integral."""

    x_small: float = 1e-6
    epsabs: float = 1e-8
    epsrel: float = 1e-8
    limit: int = 200


def norm_odd_moment(k: int, laplace_estimator, quad_spec: QuadSpec | None = None) -> float:
    """``E||X||^(2k+1)`` from ``phi(x) = E[exp(-x ||X||^(2k+2))]``.

    ``E||X||^(2k+1) = a/Gamma(1-a) int_0^inf (1 - phi(x)) x^(-1-a) dx`` with
    ``a = (2k+1)/(2k+2)``, evaluated after ``x = u/(1-u)``.
    """
    q = quad_spec or QuadSpec()
    a = (2 * k + 1) / (2 * k + 2)
    one_minus = getattr(laplace_estimator, "one_minus", None)

    def gap(x):
        if one_minus is not None:
            val = float(one_minus(x))
            phi = 1.0 - val
        else:
            phi = float(laplace_estimator(x))
            val = 1.0 - phi
        if not (-1e-12 <= phi <= 1.0 + 1e-12) or math.isnan(phi):
            raise ValueError(f"Laplace estimate {phi!r} at x={x} lies outside [0, 1]")
        return min(max(val, 0.0), 1.0)

    slope = gap(q.x_small) / q.x_small

    def head(u):  # (1 - phi(x))/x * (1-u)^(a-2), weight u^(-a)
        x = u / (1.0 - u)
        ratio = slope if x < q.x_small else gap(x) / x
        return ratio * (1.0 - u) ** (a - 2.0)

    def tail(u):  # (1 - phi(x)) * u^(-1-a), weight (1-u)^(a-1)
        x = u / (1.0 - u) if u < 1.0 else 1e300
        return gap(x) * u ** (-1.0 - a)

    opts = dict(epsabs=q.epsabs, epsrel=q.epsrel, limit=q.limit)
    lo, _ = integrate.quad(head, 0.0, 0.5, weight="alg", wvar=(-a, 0.0), **opts)
    hi, _ = integrate.quad(tail, 0.5, 1.0, weight="alg", wvar=(0.0, a - 1.0), **opts)
    return a / gamma_fn(1.0 - a) * (lo + hi)
