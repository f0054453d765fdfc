"""Conditional moments, norm moments and option prices for independent-increment
processes in discretized Banach algebras, with a Monte Carlo oracle."""
from .algebra import (GRID, LATTICE, MATRIX, AlgebraElement, ExtrapolationWarning,
                      FilipovicGeometry, GridAlgebra, GridSpec, LatticeAlgebra, MatrixAlgebra,
                      eval_delta, grid_function, mul, norm, shift, zero)
from .moments import (PAR, PERP, ConditionalMomentResult, QuadSpec, cond_expectation_words,
                      cond_moment_commutative, cond_moment_ou, gaussian_moment_tensor,
                      norm_even_moment, norm_odd_moment, word_counts, words)
from .multilinear import (DenseTensor, KLinearMap, Monomial, MultilinearForm, ProductMap,
                          finite_difference_derivative, form_from_monomial, frechet_derivative)
from .oracle import (FrozenScenario, GateResult, MCEstimate, conditional_mc, laplace_estimator,
                     tolerance_gate)
from .pricing import (PayoffPolynomial, PricingRequest, bernstein_expand, price_mc,
                      price_option)
from .process import (Decomposition, GaussianLaw, MatrixLevyProcess, OUProcess, Path,
                      decompose, ou_perp_covariance, simulate_path)

__version__ = "0.1.0"

__all__ = [
    "GRID",
    "LATTICE",
    "MATRIX",
    "AlgebraElement",
    "ExtrapolationWarning",
    "FilipovicGeometry",
    "GridAlgebra",
    "GridSpec",
    "LatticeAlgebra",
    "MatrixAlgebra",
    "eval_delta",
    "grid_function",
    "mul",
    "norm",
    "shift",
    "zero",
    "PAR",
    "PERP",
    "ConditionalMomentResult",
    "QuadSpec",
    "cond_expectation_words",
    "cond_moment_commutative",
    "cond_moment_ou",
    "gaussian_moment_tensor",
    "norm_even_moment",
    "norm_odd_moment",
    "word_counts",
    "words",
    "DenseTensor",
    "KLinearMap",
    "Monomial",
    "MultilinearForm",
    "ProductMap",
    "finite_difference_derivative",
    "form_from_monomial",
    "frechet_derivative",
    "FrozenScenario",
    "GateResult",
    "MCEstimate",
    "conditional_mc",
    "laplace_estimator",
    "tolerance_gate",
    "PayoffPolynomial",
    "PricingRequest",
    "bernstein_expand",
    "price_mc",
    "price_option",
    "Decomposition",
    "GaussianLaw",
    "MatrixLevyProcess",
    "OUProcess",
    "Path",
    "decompose",
    "ou_perp_covariance",
    "simulate_path",
]
