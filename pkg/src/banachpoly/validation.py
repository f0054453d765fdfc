"""The oracle gate suite behind ``banachpoly validate``.

Each group checks one family of closed forms against the frozen-path Monte
Carlo oracle or against an exact identity. Seeds are derived per gate from the
run seed and the gate name, so adding a gate never perturbs the others.
"""
from __future__ import annotations

import contextlib
import math
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import counterexample as cx
from .algebra import AlgebraElement, GridAlgebra, MatrixAlgebra, grid_function
from .config import RunConfig
from .moments import (cond_expectation_words, cond_moment_commutative, cond_moment_ou,
                      flip_binomial_signs, norm_even_moment, norm_odd_moment, word_counts)
from .multilinear import KLinearMap, Monomial, finite_difference_derivative, frechet_derivative
from .oracle import (FrozenScenario, GateResult, MCEstimate, combined_gate, conditional_mc,
                     laplace_estimator, tolerance_gate)
from .pricing import PricingRequest, bernstein_expand, call_payoff, price_mc, price_option
from .process import MatrixLevyProcess, OUProcess, Path, make_rng

PATH_DT = 0.125
FD_LADDER = (1e-2, 5e-3, 2.5e-3)
EXACT_TOL = 1e-10


def derive_seed(seed: int, name: str) -> int:
    """A 63-bit stream id from the run seed and a gate name."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass
class SuiteReport:
    groups: dict[str, list[GateResult]]
    meta: dict = field(default_factory=dict)
    elapsed: float = 0.0

    @property
    def results(self) -> list[GateResult]:
        return [r for rs in self.groups.values() for r in rs]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def group_passed(self, name: str) -> bool:
        return all(r.passed for r in self.groups[name])

    def table(self) -> str:
        lines = []
        for g, rs in self.groups.items():
            verdict = "PASS" if all(r.passed for r in rs) else "FAIL"
            lines.append(f"{g:<22} {verdict}  ({sum(r.passed for r in rs)}/{len(rs)})")
            lines.extend("    " + r.line() for r in rs if not r.passed)
        lines.append(f"{'total':<22} {'PASS' if self.passed else 'FAIL'}  {self.elapsed:.1f}s")
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {"meta": self.meta, "passed": self.passed, "elapsed_s": self.elapsed,
                "groups": {g: [r.to_json() for r in rs] for g, rs in self.groups.items()}}


def _exact_gate(name, got, want, tol=EXACT_TOL) -> GateResult:
    got, want = np.asarray(got, dtype=float), np.asarray(want, dtype=float)
    err = float(np.max(np.abs(got - want))) if got.size else 0.0
    scale = max(1.0, float(np.max(np.abs(want)))) if want.size else 1.0
    return GateResult(name, err <= tol * scale, {"max_abs_err": err, "tol": tol * scale})


# ---------------------------------------------------------------------------
# shared scenarios
# ---------------------------------------------------------------------------

def ou_process(cfg: RunConfig, sigma: float | None = None) -> OUProcess:
    return OUProcess.default(sigma=cfg.noise.sigma if sigma is None else sigma,
                             gamma=cfg.noise.gamma, dt_quadrature=cfg.noise.dt_quadrature,
                             x_max=cfg.grid.x_max, n_points=cfg.grid.n_points,
                             alpha=cfg.grid.alpha)


def initial_curve(cfg: RunConfig, space: GridAlgebra) -> AlgebraElement:
    return grid_function(space, lambda x: cfg.curve.level + cfg.curve.slope * x)


def ou_path(cfg: RunConfig, p: OUProcess, s: float, seed: int) -> Path:
    """Realized OU path from the configured initial curve up to time ``s``."""
    x0 = initial_curve(cfg, p.space)
    if s == 0:
        return Path.constant(0.0, x0)
    return p.simulate_path(s, min(PATH_DT, s), derive_seed(seed, "path"), x0)


def matrix_path(lp: MatrixLevyProcess, s: float, seed: int) -> Path:
    return lp.simulate_path(s, min(PATH_DT, s), derive_seed(seed, "matrix-path"),
                            lp.space.identity())


# ---------------------------------------------------------------------------
# gate groups
# ---------------------------------------------------------------------------

def gates_binomial(cfg, seed, p, path) -> list[GateResult]:
    s, t = cfg.moments.s, cfg.moments.t
    scen = FrozenScenario(p, path, s, derive_seed(seed, "binomial"))
    d = scen.decomposition(t)
    out = []
    for k in range(1, cfg.moments.k_max + 1):
        closed = cond_moment_commutative(k, d).value.coords
        est = conditional_mc(scen, lambda X, k=k: X**k, t, cfg.mc.n_paths)
        out.append(tolerance_gate(est, closed, cfg.mc.k_sigma, f"binomial-moment k={k}"))
    return out


def gates_words(cfg, seed, p, path) -> list[GateResult]:
    s, t = cfg.moments.s, cfg.moments.t
    d = p.decompose(path, s, t)
    out = []
    for k in range(1, cfg.moments.k_max + 1):
        closed = cond_moment_commutative(k, d).value.coords
        res = cond_expectation_words(KLinearMap.product(k, p.space), d, cfg.mc.n_paths,
                                     derive_seed(seed, f"words-{k}"))
        est = MCEstimate(res.value.coords, res.se, cfg.mc.n_paths)
        out.append(tolerance_gate(est, closed, cfg.mc.k_sigma, f"words-product-grid k={k}"))
    for k in range(1, 6):
        counts = word_counts(k)
        ok = all(counts[n] == math.comb(k, n) for n in range(k + 1))
        out.append(GateResult(f"word-count k={k}", ok, {"counts": str(counts)}))
    # exact contraction of the dense form of the grid product map
    for k in (2, 3):
        dense = KLinearMap.product(k, p.space).to_dense()
        exact = cond_expectation_words(dense, d).value.coords
        out.append(_exact_gate(f"words-dense-grid k={k}", exact,
                               cond_moment_commutative(k, d).value.coords, 1e-9))
    # non-commutative: a random dense 3-linear map on 2x2 matrices against the oracle
    lp = MatrixLevyProcess(2, mu=0.3, sigma2=0.5)
    mpath = matrix_path(lp, 0.5, seed)
    rng = make_rng(derive_seed(seed, "words-matrix-tensor"))
    L = KLinearMap.dense(rng.standard_normal((4,) * 4), lp.space, bound_K=1.0)
    exact = cond_expectation_words(L, lp.decompose(mpath, 0.5, 1.0)).value.coords
    scen = FrozenScenario(lp, mpath, 0.5, derive_seed(seed, "words-matrix"))
    est = conditional_mc(scen, lambda X: L.eval_coords([X, X, X]), 1.0, cfg.mc.n_paths)
    out.append(tolerance_gate(est, exact, cfg.mc.k_sigma, "words-dense-matrix k=3"))
    return out


def gates_ou_shift(cfg, seed, p, path) -> list[GateResult]:
    s = cfg.moments.s
    t = s + 3 * p.space.grid.dx  # grid multiple: the shift is an exact homomorphism
    f_s = path.at(s)
    d = p.decompose(path, s, t)
    return [_exact_gate(f"ou-shift-form k={k}", cond_moment_ou(k, f_s, s, t, p).value.coords,
                        cond_moment_commutative(k, d).value.coords)
            for k in range(1, 6)]


def gates_counter_part1(cfg, seed) -> list[GateResult]:
    em = cx.EntryMoments.gaussian(0.0, 1.0)
    e12 = np.array([[0.0, 1.0], [0.0, 0.0]])
    e21 = e12.T.copy()
    g = cx.operator_L(e12, em)
    out = [GateResult("sandwich L(e12) = e21", bool(np.array_equal(g, e21)),
                      {"L(e12)": g.tolist()})]
    v = cx.assert_no_left_multiplier(e12, e21)
    out.append(GateResult("no left multiplier for e12 -> e21",
                          v.status == cx.INCONSISTENT and v.residual >= 1.0,
                          {"status": v.status, "residual": v.residual}))
    mean, se = cx.mc_sandwich(e12, cx.increment_law(0.0, 1.0), cfg.mc.n_paths,
                              derive_seed(seed, "sandwich"))
    out.append(tolerance_gate(MCEstimate(mean, se, cfg.mc.n_paths), g, cfg.mc.k_sigma,
                              "sandwich mc"))
    return out


def gates_counter_part2(cfg, seed) -> list[GateResult]:
    em = cx.EntryMoments.gaussian(1.0, 1.0)
    v = cx.d2_mismatch(em)
    want = np.array([[2.0, 3.0], [3.0, 2.0]])
    out = [GateResult("second derivative entries", bool(np.array_equal(v.lhs, want))
                      and bool(np.array_equal(cx.d2_entries(em), want)), {"lhs": v.lhs.tolist()}),
           GateResult("quadratic-ansatz contradiction", v.status == cx.CONTRADICTION
                      and v.rhs_is_zero, {"status": v.status})]
    mean, se = cx.mc_d2(cx.increment_law(1.0, 1.0), cfg.mc.n_paths, derive_seed(seed, "d2"))
    out.append(tolerance_gate(MCEstimate(mean, se, cfg.mc.n_paths), want, cfg.mc.k_sigma,
                              "second derivative mc"))
    return out


def _fd_ladder(name, M, u, dirs) -> GateResult:
    n = len(dirs)
    exact = frechet_derivative(M, u, n, dirs).coords
    errs = [float(np.max(np.abs(finite_difference_derivative(M, u, n, dirs, h).coords - exact)))
            for h in FD_LADDER]
    ratios = [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]
    ok = all(3.0 <= r <= 5.0 for r in ratios) and errs[-1] < 1e-3 * max(1.0, np.abs(exact).max())
    return GateResult(name, ok, {"errors": str([f"{e:.3g}" for e in errs]),
                                 "ratios": str([f"{r:.3f}" for r in ratios])})


def gates_frechet(cfg, seed, p) -> list[GateResult]:
    rng = make_rng(derive_seed(seed, "frechet"))
    out = []
    spaces = {"grid": p.space, "matrix": MatrixAlgebra(2)}
    for label, space in spaces.items():
        M = Monomial(KLinearMap.product(4, space))
        u = AlgebraElement(1.0 + 0.5 * rng.standard_normal(space.dim), space)
        hs = [AlgebraElement(rng.standard_normal(space.dim), space) for _ in range(2)]
        for n in (1, 2):
            out.append(_fd_ladder(f"fd-ladder {label} k=4 n={n}", M, u, hs[:n]))
    # commutative coefficient k!/(k-n)! and vanishing of order k+1
    space = p.space
    u = AlgebraElement(1.0 + 0.3 * rng.standard_normal(space.dim), space)
    h = AlgebraElement(rng.standard_normal(space.dim), space)
    for k in (2, 3, 4):
        L = KLinearMap.product(k, space)
        M = Monomial(L)
        for n in range(1, k + 1):
            got = frechet_derivative(M, u, n, [h] * n).coords
            term = L.eval_coords([u.coords] * (k - n) + [h.coords] * n)
            coef = math.factorial(k) // math.factorial(k - n)
            out.append(GateResult(f"commutative coefficient k={k} n={n}",
                                  bool(np.array_equal(got, coef * term)), {"coef": coef}))
        top = frechet_derivative(M, u, k + 1, [h] * (k + 1)).coords
        out.append(GateResult(f"order k+1 vanishes k={k}", not np.any(top), {}))
    # symmetry for a dense non-symmetric map on matrices
    mspace = MatrixAlgebra(2)
    L = KLinearMap.dense(rng.standard_normal((4,) * 4), mspace, bound_K=1.0)
    M = Monomial(L)
    u, h1, h2, h3 = (AlgebraElement(rng.standard_normal(4), mspace) for _ in range(4))
    a = frechet_derivative(M, u, 2, [h1, h2]).coords
    b = frechet_derivative(M, u, 2, [h2, h1]).coords
    c = frechet_derivative(M, u, 3, [h1, h2, h3]).coords
    e = frechet_derivative(M, u, 3, [h3, h1, h2]).coords
    out.append(GateResult("dense derivative symmetry", bool(np.array_equal(a, b))
                          and bool(np.array_equal(c, e)), {}))
    return out


def gates_norm_moments(cfg, seed, p, path) -> list[GateResult]:
    s, t = cfg.moments.s, cfg.moments.t
    space = p.space
    scen = FrozenScenario(p, path, s, derive_seed(seed, "norm-even"))
    d = scen.decomposition(t)
    G = space.gram
    # centered identity through traces, independent of the pairing engine
    GC = G @ d.perp_law.cov
    want = np.trace(GC) ** 2 + 2 * np.trace(GC @ GC)
    got = norm_even_moment(2, d.perp_law, space)
    out = [_exact_gate("norm4 centered trace identity", got, want, 1e-10)]
    full = d.perp_law.shifted(d.parallel.coords)
    est = conditional_mc(scen, lambda X: space.norm(X) ** 4, t, cfg.mc.n_paths)
    out.append(tolerance_gate(est, norm_even_moment(2, full, space), cfg.mc.k_sigma,
                              "norm4 vs mc"))
    est6 = conditional_mc(scen, lambda X: space.norm(X) ** 6, t, cfg.mc.n_paths)
    out.append(tolerance_gate(est6, norm_even_moment(3, full, space), cfg.mc.k_sigma,
                              "norm6 vs mc"))

    class GaussLaplace:
        def __call__(self, x):
            return (1 + 2 * x) ** -0.5

        def one_minus(self, x):
            return -math.expm1(-0.5 * math.log1p(2 * x))

    val = norm_odd_moment(0, GaussLaplace())
    out.append(_exact_gate("odd moment E|N(0,1)|", val, math.sqrt(2 / math.pi), 1e-4))
    for k in (0, 1):
        lap_scen = FrozenScenario(p, path, s, derive_seed(seed, f"laplace-{k}"))
        lap = laplace_estimator(lap_scen, t, 2 * k + 2, cfg.mc.n_paths)
        odd = norm_odd_moment(k, lap)
        direct = conditional_mc(FrozenScenario(p, path, s, derive_seed(seed, f"direct-{k}")),
                                lambda X, k=k: space.norm(X) ** (2 * k + 1), t, cfg.mc.n_paths)
        out.append(combined_gate(odd, lap.moment_se(2 * k + 1), direct.mean, direct.se,
                                 cfg.mc.k_sigma, f"odd moment order {2 * k + 1} vs mc"))
    return out


def gates_pricing(cfg, seed, p) -> list[GateResult]:
    pc = cfg.pricing
    f_s = initial_curve(cfg, p.space)
    forward_level = float(p.space.eval_delta(pc.x + pc.t - pc.s, f_s.coords))
    M = pc.domain_M or 4.0 * forward_level
    poly = bernstein_expand(call_payoff(pc.strike), pc.degree, M, "call", pc.strike)
    req = PricingRequest(poly, pc.s, pc.t, pc.x, f_s)
    closed = price_option(req, p)
    mc = price_mc(req, p, cfg.mc.n_paths, derive_seed(seed, "price"))
    sup_err = poly.sup_error()
    tol = max(cfg.mc.k_sigma * mc.se, sup_err)
    dev = abs(closed.price - mc.price)
    out = [GateResult("call closed form vs exact-payoff mc", dev <= tol,
                      {"closed": closed.price, "mc": mc.price, "se": mc.se, "sup_error": sup_err,
                       "deviation": dev})]
    # the same polynomial priced by the oracle isolates the moment formula from the kink error
    w = p.space.interpolation_weights(pc.x)
    scen = FrozenScenario(p, Path.constant(pc.s, f_s), pc.s, derive_seed(seed, "price-poly"))
    est = conditional_mc(scen, lambda X: poly.eval_monomial(X @ w), pc.t, cfg.mc.n_paths)
    out.append(tolerance_gate(est, closed.price, cfg.mc.k_sigma, "polynomial payoff vs mc"))
    # zero noise
    p0 = ou_process(cfg, sigma=0.0)
    z0 = price_option(req, p0)
    out.append(_exact_gate("zero noise call = Bernstein intrinsic", z0.price,
                           float(poly.eval_bernstein(z0.diagnostics["forward"])), 1e-9))
    lin = bernstein_expand(lambda z: np.asarray(z) - pc.strike, 1, M, "forward", pc.strike)
    z1 = price_option(PricingRequest(lin, pc.s, pc.t, pc.x, f_s), p0)
    out.append(GateResult("zero noise forward = f - K",
                          abs(z1.price - (z1.diagnostics["forward"] - pc.strike)) <= 1e-12,
                          {"price": z1.price}))
    ident = bernstein_expand(lambda z: np.asarray(z, dtype=float), 1, M, "custom")
    r = price_option(PricingRequest(ident, pc.s, pc.t, pc.x, f_s), p)
    out.append(GateResult("linear payoff = forward",
                          abs(r.price - r.diagnostics["forward"]) <= 1e-12, {"price": r.price}))
    return out


def gates_laws(cfg, seed, p, path) -> list[GateResult]:
    s, t, n, ks = cfg.moments.s, cfg.moments.t, cfg.mc.n_paths, cfg.mc.k_sigma
    out = []
    scen = FrozenScenario(p, path, s, derive_seed(seed, "law-operator"))
    d = scen.decomposition(t)
    A = make_rng(derive_seed(seed, "law-operator-matrix")).standard_normal((p.space.dim,) * 2)
    est = conditional_mc(scen, lambda X: X @ A.T, t, n)
    out.append(tolerance_gate(est, A @ d.parallel.coords, ks, "law operator exchange"))

    scen = FrozenScenario(p, path, s, derive_seed(seed, "law-independence"))
    x_par = d.parallel.coords
    est = conditional_mc(scen, lambda X: X - x_par, t, n)
    out.append(tolerance_gate(est, np.zeros(p.space.dim), ks, "law independence"))

    g = np.cos(p.space.grid.nodes) + 1.5
    scen = FrozenScenario(p, path, s, derive_seed(seed, "law-bochner"))
    est = conditional_mc(scen, lambda X: g * X, t, n)
    out.append(tolerance_gate(est, g * x_par, ks, "law Bochner factorization"))

    lp = MatrixLevyProcess(2, mu=0.3, sigma2=0.5)
    mpath = matrix_path(lp, s, seed)
    Y = lp.space.as_matrix(mpath.at(s).coords)
    md = lp.decompose(mpath, s, t)
    mean_t = lp.space.as_matrix(md.parallel.coords + md.perp_law.mean)
    scen = FrozenScenario(lp, mpath, s, derive_seed(seed, "law-two-sided"))
    est = conditional_mc(scen, lambda X: (Y @ X.reshape(-1, 2, 2)).reshape(len(X), 4), t, n)
    out.append(tolerance_gate(est, (Y @ mean_t).ravel(), ks, "law left factorization"))
    est = conditional_mc(scen, lambda X: (X.reshape(-1, 2, 2) @ Y).reshape(len(X), 4), t, n)
    out.append(tolerance_gate(est, (mean_t @ Y).ravel(), ks, "law right factorization"))

    scen = FrozenScenario(lp, mpath, s, derive_seed(seed, "law-freezing"))

    def xyx(X):
        D = X.reshape(-1, 2, 2) - Y
        return (D @ Y @ D).reshape(len(X), 4)

    em = cx.EntryMoments.gaussian(lp.mu * (t - s), lp.sigma2 * (t - s))
    est = conditional_mc(scen, xyx, t, n)
    out.append(tolerance_gate(est, cx.operator_L(Y, em).ravel(), ks, "law freezing xyx"))
    return out


def gates_extras(cfg, seed, p, path) -> list[GateResult]:
    """Tower property and the semigroup composition of the perp covariance."""
    s = cfg.moments.s
    out = []
    dx = p.space.grid.dx
    C1, C2 = p.perp_covariance(2 * dx), p.perp_covariance(dx)
    S = p.space.shift_matrix(dx)
    out.append(_exact_gate("perp covariance composition", p.perp_covariance(3 * dx),
                           S @ C1 @ S.T + C2, 1e-5))
    # grid-multiple horizons so that S_{t-u} S_{u-s} = S_{t-s} holds exactly
    u, t2 = s + dx, s + 2 * dx
    target = cond_moment_commutative(2, p.decompose(path, s, t2)).value.coords
    var_ut = np.diag(p.perp_covariance(t2 - u))
    scen = FrozenScenario(p, path, s, derive_seed(seed, "tower"))
    est = conditional_mc(scen, lambda X: (X @ S.T) ** 2 + var_ut, u, cfg.mc.n_paths)
    out.append(tolerance_gate(est, target, cfg.mc.k_sigma, "tower property k=2"))
    return out


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

GROUPS = ("binomial-moments", "word-expansion", "ou-shift-form", "sandwich-operator",
          "quadratic-obstruction", "frechet", "norm-moments", "pricing", "conditional-laws",
          "consistency")


def run_suite(cfg: RunConfig | None = None, seed: int | None = None, mutate: bool = False,
              only: tuple[str, ...] | None = None) -> SuiteReport:
    """Run every gate group (or the ``only`` subset) under ``seed``.

    ``mutate`` turns on the test-only binomial sign flip.
    """
    cfg = cfg or RunConfig()
    seed = cfg.mc.seed if seed is None else int(seed)
    t0 = time.perf_counter()
    p = ou_process(cfg)
    path = ou_path(cfg, p, cfg.moments.s, seed)
    plan = {
        "binomial-moments": lambda: gates_binomial(cfg, seed, p, path),
        "word-expansion": lambda: gates_words(cfg, seed, p, path),
        "ou-shift-form": lambda: gates_ou_shift(cfg, seed, p, path),
        "sandwich-operator": lambda: gates_counter_part1(cfg, seed),
        "quadratic-obstruction": lambda: gates_counter_part2(cfg, seed),
        "frechet": lambda: gates_frechet(cfg, seed, p),
        "norm-moments": lambda: gates_norm_moments(cfg, seed, p, path),
        "pricing": lambda: gates_pricing(cfg, seed, p),
        "conditional-laws": lambda: gates_laws(cfg, seed, p, path),
        "consistency": lambda: gates_extras(cfg, seed, p, path),
    }
    groups = {}
    ctx = flip_binomial_signs() if mutate else contextlib.nullcontext()
    with ctx:
        for name in only or GROUPS:
            groups[name] = plan[name]()
    meta = {"seed": seed, "config_digest": cfg.digest(), "mutated": mutate}
    return SuiteReport(groups, meta, time.perf_counter() - t0)

