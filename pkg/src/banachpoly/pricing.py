"""European options on commodity forwards via polynomial payoff expansion.

The payoff is replaced by its Bernstein polynomial on ``[0, M]``; with the
monomial coefficients ``h_i`` the price at ``s`` of ``h(f(t, x))`` is

    sum_i h_i sum_k C(i, k) E[(delta_x X_perp)^(i-k)] f(s, x+t-s)^k

which for the centered Gaussian OU driver only needs the variance of the
evaluated perpendicular part.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.stats import norm as normal_dist

from .algebra import AlgebraElement, ExtrapolationWarning
from .oracle import FrozenScenario, MCEstimate, conditional_mc
from .process import OUProcess, Path, gaussian_raw_moment, ou_perp_covariance

MAX_DEGREE = 20
TRUST_EXIT_PROB = 1e-3


@dataclass(frozen=True, eq=False)
class PayoffPolynomial:
    """Degree-``n`` Bernstein approximation of a payoff on ``[0, domain_M]``."""

    degree: int
    bernstein_coeffs: np.ndarray
    monomial_coeffs: np.ndarray
    domain_M: float
    payoff: object = None
    kind: str = "custom"
    strike: float | None = None

    def eval_bernstein(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        n, u = self.degree, z / self.domain_M
        basis = [math.comb(n, k) * u**k * (1 - u) ** (n - k) for k in range(n + 1)]
        return np.tensordot(self.bernstein_coeffs, np.array(basis), axes=1)

    def eval_monomial(self, z) -> np.ndarray:
        return np.polynomial.polynomial.polyval(np.asarray(z, dtype=float), self.monomial_coeffs)

    def basis_residual(self, n_grid: int = 1001) -> float:
        """Sup-norm gap between the two bases on ``[0, M]``, relative to ``sup|p|``."""
        z = np.linspace(0.0, self.domain_M, n_grid)
        b = self.eval_bernstein(z)
        return float(np.max(np.abs(b - self.eval_monomial(z))) / max(np.max(np.abs(b)), 1e-300))

    def sup_error(self, n_grid: int = 1001) -> float:
        if self.payoff is None:
            raise ValueError("no exact payoff attached")
        z = np.linspace(0.0, self.domain_M, n_grid)
        return float(np.max(np.abs(self.eval_bernstein(z) - self.payoff(z))))


def bernstein_to_monomial(coeffs, domain_M: float) -> np.ndarray:
    """Exact conversion ``h_j = C(n, j) Delta^j b_0 / M^j`` in rational arithmetic."""
    b = [Fraction(float(c)) for c in coeffs]
    n = len(b) - 1
    M = Fraction(float(domain_M))
    out, diffs = [], list(b)
    for j in range(n + 1):
        out.append(float(math.comb(n, j) * diffs[0] / M**j))
        diffs = [diffs[i + 1] - diffs[i] for i in range(len(diffs) - 1)]
    return np.array(out)


def bernstein_expand(h, n: int, M: float, kind: str = "custom",
                     strike: float | None = None) -> PayoffPolynomial:
    if n < 1 or n > MAX_DEGREE:
        raise ValueError(f"degree must be in [1, {MAX_DEGREE}], got {n}")
    if not M > 0:
        raise ValueError("domain bound M must be positive")
    nodes = M * np.arange(n + 1) / n
    b = np.asarray(h(nodes), dtype=float)
    return PayoffPolynomial(n, b, bernstein_to_monomial(b, M), float(M), h, kind, strike)


def call_payoff(strike: float):
    return lambda z: np.maximum(np.asarray(z, dtype=float) - strike, 0.0)


def put_payoff(strike: float):
    return lambda z: np.maximum(strike - np.asarray(z, dtype=float), 0.0)


def forward_payoff(strike: float):
    return lambda z: np.asarray(z, dtype=float) - strike


PAYOFFS = {"call": call_payoff, "put": put_payoff, "forward": forward_payoff}


def payoff_from_dict(obj: dict, forward_level: float) -> PayoffPolynomial:
    """Build the payoff polynomial from a request's ``payoff`` object."""
    kind = obj.get("kind", "call")
    degree = int(obj.get("degree", 16))
    M = obj.get("domain_M") or 4.0 * forward_level
    if kind == "custom":
        coeffs = np.asarray(obj["bernstein_coeffs"], dtype=float)
        if coeffs.size != degree + 1:
            raise ValueError("custom payoff needs degree+1 Bernstein coefficients")
        return PayoffPolynomial(degree, coeffs, bernstein_to_monomial(coeffs, M), float(M))
    if kind not in PAYOFFS:
        raise ValueError(f"unknown payoff kind {kind!r}")
    strike = float(obj["strike"])
    return bernstein_expand(PAYOFFS[kind](strike), degree, M, kind, strike)


@dataclass(frozen=True, eq=False)
class PricingRequest:
    payoff: PayoffPolynomial
    s: float
    t: float
    x: float
    f_s: AlgebraElement

    def __post_init__(self):
        if not 0 <= self.s <= self.t:
            raise ValueError(f"need 0 <= s <= t, got s={self.s}, t={self.t}")
        if self.x < 0:
            raise ValueError("delivery offset x must be >= 0")


@dataclass
class PriceResult:
    price: float
    se: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"price": self.price, "diagnostics": self.diagnostics}
        if self.se is not None:
            out["se"] = self.se
        return out


def _evaluated_perp(req: PricingRequest, p: OUProcess) -> tuple[float, float]:
    law = ou_perp_covariance(p, req.s, req.t)
    w = p.space.interpolation_weights(req.x)
    return float(w @ law.mean), float(w @ law.cov @ w)


def price_option(req: PricingRequest, p: OUProcess) -> PriceResult:
    """Closed-form price of the Bernstein payoff."""
    space = p.space
    if req.f_s.space != space:
        raise ValueError("forward curve does not live on the process grid")
    tau = req.t - req.s
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ExtrapolationWarning)
        space.eval_delta(req.x, req.f_s.coords)
        forward = float(space.eval_delta(req.x + tau, req.f_s.coords))
    extrapolated = any(issubclass(c.category, ExtrapolationWarning) for c in caught)
    mean, var = _evaluated_perp(req, p)
    h = req.payoff.monomial_coeffs
    perp_moments = [float(gaussian_raw_moment(m, mean, var)) for m in range(len(h))]
    terms = []
    for i, hi in enumerate(h):
        inner = math.fsum(math.comb(i, k) * perp_moments[i - k] * forward**k for k in range(i + 1))
        terms.append(hi * inner)
    price = math.fsum(terms)

    M, sd = req.payoff.domain_M, math.sqrt(var)
    centre = forward + mean
    if sd > 0:
        exit_prob = float(normal_dist.cdf(-centre / sd) + normal_dist.sf((M - centre) / sd))
    else:
        exit_prob = float(not 0.0 <= centre <= M)
    frozen = float(space.eval_delta(req.x, space.shift(tau, req.f_s.coords)))
    diagnostics = {
        "method": "closed-form",
        "forward": forward,
        "perp_sd": sd,
        "domain_exit_prob": exit_prob,
        "trusted": exit_prob <= TRUST_EXIT_PROB,
        "basis_residual": req.payoff.basis_residual(),
        "semigroup_eval_gap": abs(frozen - forward),
        "extrapolated": extrapolated,
    }
    if req.payoff.payoff is not None:
        diagnostics["bernstein_sup_error"] = req.payoff.sup_error()
    return PriceResult(price, None, diagnostics)


def price_mc(req: PricingRequest, p: OUProcess, n_paths: int = 200_000,
             seed: int = 0) -> PriceResult:
    """Frozen-path Monte Carlo price of the exact payoff."""
    if req.payoff.payoff is None:
        raise ValueError("Monte Carlo pricing needs the exact payoff function")
    space = p.space
    w = space.interpolation_weights(req.x)
    payoff = req.payoff.payoff
    scenario = FrozenScenario(p, Path.constant(req.s, req.f_s), req.s, seed)
    est: MCEstimate = conditional_mc(scenario, lambda X: payoff(X @ w), req.t, n_paths)
    return PriceResult(float(est.mean), float(est.se),
                       {"method": "mc", "n_paths": est.n})
