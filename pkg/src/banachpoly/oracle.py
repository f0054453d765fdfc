"""Frozen-path Monte Carlo conditional expectations and tolerance gates.

``E[F(X(t)) | F_s]`` is estimated by freezing the realized path up to ``s``
(hence ``X_par(s;t)``) and averaging ``F(X_par + X_perp)`` over independent
draws of ``X_perp(s;t)``.
"""
from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .process import Path, make_rng

MIN_SAMPLES = 100
DEFAULT_K_SIGMA = 5.0


class NonFiniteFunctionalError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class FrozenScenario:
    process: object
    path_to_s: Path
    s: float
    seed_base: int = 0

    def decomposition(self, t: float):
        return self.process.decompose(self.path_to_s, self.s, t)


@dataclass(frozen=True)
class MCEstimate:
    mean: np.ndarray | float
    se: np.ndarray | float
    n: int

    def to_json(self) -> dict:
        return {"mean": np.asarray(self.mean).tolist(), "se": np.asarray(self.se).tolist(),
                "n": self.n}


def _chunk_moments(decomp, functional, size, ss):
    draws = decomp.parallel.coords + decomp.perp_law.sample(make_rng(ss), size)
    vals = np.asarray(functional(draws), dtype=float)
    if vals.shape[0] != size:
        raise ValueError("functional must return one value per sample along axis 0")
    bad = int(np.size(vals) - np.count_nonzero(np.isfinite(vals)))
    mean = vals.mean(axis=0)
    m2 = np.sum(np.square(vals - mean), axis=0)
    return size, mean, m2, bad


def _combine(parts):
    """Chan et al. pairwise merge of (n, mean, M2) in a fixed order."""
    while len(parts) > 1:
        merged = []
        for i in range(0, len(parts) - 1, 2):
            (na, ma, sa), (nb, mb, sb) = parts[i], parts[i + 1]
            n = na + nb
            delta = mb - ma
            merged.append((n, ma + delta * nb / n, sa + sb + delta**2 * na * nb / n))
        if len(parts) % 2:
            merged.append(parts[-1])
        parts = merged
    return parts[0]


def conditional_mc(scenario: FrozenScenario, functional, t: float, n: int,
                   chunk: int = 20_000, workers: int = 1) -> MCEstimate:
    """Estimate ``E[functional(X(t)) | F_s]``.

    ``functional`` maps a ``(batch, dim)`` array of coordinates to a
    ``(batch, ...)`` array of values. Chunks use streams spawned from
    ``scenario.seed_base``, so the estimate does not depend on ``workers``.
    """
    if n < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {n}")
    if t < scenario.s:
        raise ValueError("t must be >= s")
    decomp = scenario.decomposition(t)
    n_chunks = math.ceil(n / chunk)
    seeds = np.random.SeedSequence(scenario.seed_base).spawn(n_chunks)
    sizes = [min(chunk, n - i * chunk) for i in range(n_chunks)]
    jobs = list(zip(sizes, seeds))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda a: _chunk_moments(decomp, functional, *a), jobs))
    else:
        results = [_chunk_moments(decomp, functional, *a) for a in jobs]
    bad = sum(r[3] for r in results)
    if bad:
        raise NonFiniteFunctionalError(f"{bad} non-finite functional values out of {n}")
    total, mean, m2 = _combine([r[:3] for r in results])
    se = np.sqrt(m2 / (total - 1) / total)
    if np.ndim(mean) == 0:
        mean, se = float(mean), float(se)
    return MCEstimate(mean, se, total)


class LaplaceEstimator:
    """``x -> mean(exp(-x P_i))`` over one pooled sample ``P_i = ||X_i||^power``."""

    def __init__(self, norms: np.ndarray, power: int):
        self.norms = np.asarray(norms, dtype=float)
        self.power = power
        self.pool = self.norms**power

    def __call__(self, x: float) -> float:
        if x == 0:
            return 1.0
        return float(np.mean(np.exp(-x * self.pool)))

    def one_minus(self, x: float) -> float:
        return float(np.mean(-np.expm1(-x * self.pool)))

    def se(self, x: float) -> float:
        vals = np.exp(-x * self.pool)
        return float(vals.std(ddof=1) / math.sqrt(vals.size))

    def moment_se(self, order: int) -> float:
        """Standard error of the plain sample mean of ``||X||^order``; the
        odd-moment integral is linear in the empirical law, so it shares it."""
        vals = self.norms**order
        return float(vals.std(ddof=1) / math.sqrt(vals.size))


def laplace_estimator(scenario: FrozenScenario, t: float, power: int, n: int,
                      chunk: int = 20_000) -> LaplaceEstimator:
    if n < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {n}")
    decomp = scenario.decomposition(t)
    space = decomp.space
    seeds = np.random.SeedSequence(scenario.seed_base).spawn(math.ceil(n / chunk))
    norms = []
    for i, ss in enumerate(seeds):
        size = min(chunk, n - i * chunk)
        draws = decomp.parallel.coords + decomp.perp_law.sample(make_rng(ss), size)
        norms.append(space.norm(draws))
    norms = np.concatenate(norms)
    if not np.all(np.isfinite(norms)):
        raise NonFiniteFunctionalError("non-finite norms in the Laplace pool")
    return LaplaceEstimator(norms, power)


@dataclass
class GateResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def line(self) -> str:
        extra = ", ".join(f"{k}={_fmt(v)}" for k, v in self.detail.items())
        return f"[{self.verdict}] {self.name}" + (f" ({extra})" if extra else "")

    def to_json(self) -> dict:
        return {"name": self.name, "verdict": self.verdict,
                "detail": {k: _jsonable(v) for k, v in self.detail.items()}}


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    return v


def tolerance_gate(estimate: MCEstimate, claim, k_sigma: float = DEFAULT_K_SIGMA,
                   name: str = "mc-gate", abs_floor: float = 1e-12) -> GateResult:
    """PASS iff ``|mean - claim| <= k_sigma * se`` in every component.

    ``abs_floor`` absorbs rounding when the standard error is exactly zero.
    """
    mean = np.asarray(estimate.mean, dtype=float)
    claim = np.broadcast_to(np.asarray(claim, dtype=float), mean.shape)
    se = np.asarray(estimate.se, dtype=float)
    dev = np.abs(mean - claim)
    ok = dev <= k_sigma * se + abs_floor * np.maximum(1.0, np.abs(claim))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, dev / se, np.where(dev > 0, np.inf, 0.0))
    return GateResult(name, bool(np.all(ok)), {"max_z": float(np.max(z)),
                                               "k_sigma": k_sigma, "n": estimate.n})


def combined_gate(mean_a, se_a, mean_b, se_b, k_sigma: float = DEFAULT_K_SIGMA,
                  name: str = "two-estimator") -> GateResult:
    """Agreement of two independent estimators within ``k_sigma`` combined SE."""
    se = math.sqrt(se_a**2 + se_b**2)
    dev = abs(mean_a - mean_b)
    return GateResult(name, dev <= k_sigma * se, {"deviation": dev, "combined_se": se})


def reports_to_json(results: list[GateResult], meta: dict | None = None) -> str:
    return json.dumps({"meta": meta or {}, "gates": [r.to_json() for r in results],
                       "passed": all(r.passed for r in results)}, indent=2)


def reports_to_junit(results: list[GateResult], suite: str = "banachpoly") -> str:
    root = ET.Element("testsuite", name=suite, tests=str(len(results)),
                      failures=str(sum(not r.passed for r in results)))
    for r in results:
        case = ET.SubElement(root, "testcase", classname=suite, name=r.name)
        if not r.passed:
            ET.SubElement(case, "failure", message=r.line())
        else:
            ET.SubElement(case, "system-out").text = r.line()
    return ET.tostring(root, encoding="unicode")
