"""
Policy Distribution
Factorized Beta distribution pushed through a = c_b * (2u - 1) onto the action box.

Arrays carry the action dimension last; any leading axes are batch axes.
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from a0c.core.special import digamma, log_beta, trigamma
from a0c.exceptions import DimensionError, DomainError


@dataclass(frozen=True)
class BetaPolicyParams:
    """Per-dimension (alpha, beta) pairs, shape (..., n_a)"""
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.float64)
        beta = np.asarray(self.beta, dtype=np.float64)
        if alpha.ndim == 0:
            alpha = alpha.reshape(1)
        if beta.ndim == 0:
            beta = beta.reshape(1)
        if alpha.shape != beta.shape:
            raise DimensionError("alpha/beta shape mismatch", f"{alpha.shape} vs {beta.shape}")
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta))):
            raise DomainError("Beta parameters must be finite")
        if np.any(alpha < 1.0) or np.any(beta < 1.0):
            raise DomainError("Beta parameters must be >= 1", f"alpha={alpha}, beta={beta}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def n_a(self) -> int:
        return self.alpha.shape[-1]

    def row(self, index: int) -> "BetaPolicyParams":
        """Parameters of one batch element"""
        return BetaPolicyParams(alpha=self.alpha[index], beta=self.beta[index])


def transform(u: np.ndarray, c_b: float) -> np.ndarray:
    """
    Map u in [0, 1]^n_a to a in [-c_b, c_b]^n_a.

    Raises:
        DomainError: any component of u outside [0, 1]
    """
    u = np.asarray(u, dtype=np.float64)
    if np.any(u < 0.0) or np.any(u > 1.0) or not np.all(np.isfinite(u)):
        raise DomainError("transform requires u in [0, 1]", f"got {u}")
    return c_b * (2.0 * u - 1.0)


def inverse_transform(a: np.ndarray, c_b: float) -> np.ndarray:
    return (np.asarray(a, dtype=np.float64) / c_b + 1.0) / 2.0


def beta_log_pdf(u: np.ndarray, alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Elementwise log Beta(u; alpha, beta); -inf outside the support"""
    u = np.asarray(u, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        left = np.where(alpha == 1.0, 0.0, (alpha - 1.0) * np.log(u))
        right = np.where(beta == 1.0, 0.0, (beta - 1.0) * np.log1p(-u))
    out = left + right - log_beta(alpha, beta)
    outside = (u < 0.0) | (u > 1.0)
    return np.where(outside, -np.inf, out)


def log_density(params: BetaPolicyParams, a: np.ndarray, c_b: float) -> np.ndarray:
    """
    log pi(a) = sum_i log Beta(u_i) - n_a * log(2 c_b), u = inverse_transform(a).

    Returns -inf where the density is zero (boundary with alpha or beta > 1,
    or outside the box); callers treat that as a rejected point.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1:] != params.alpha.shape[-1:]:
        raise DimensionError("action dimension mismatch", f"{a.shape} vs {params.alpha.shape}")
    u = inverse_transform(a, c_b)
    per_dim = beta_log_pdf(u, params.alpha, params.beta)
    return per_dim.sum(axis=-1) - params.n_a * math.log(2.0 * c_b)


def log_density_grad(params: BetaPolicyParams, a: np.ndarray, c_b: float) -> Tuple[np.ndarray, np.ndarray]:
    """Partial derivatives of log_density with respect to alpha and beta, shape (..., n_a)"""
    u = inverse_transform(a, c_b)
    shared = digamma(params.alpha + params.beta)
    with np.errstate(divide="ignore"):
        d_alpha = np.log(u) - digamma(params.alpha) + shared
        d_beta = np.log1p(-u) - digamma(params.beta) + shared
    return d_alpha, d_beta


def sample(params: BetaPolicyParams, c_b: float, rng: np.random.Generator) -> np.ndarray:
    """Draw a ~ pi via u = X / (X + Y), X ~ Gamma(alpha), Y ~ Gamma(beta)"""
    x = rng.gamma(params.alpha)
    y = rng.gamma(params.beta)
    u = np.clip(x / (x + y), 0.0, 1.0)
    return transform(u, c_b)


def entropy(params: BetaPolicyParams) -> np.ndarray:
    """
    Differential entropy of the base Beta distribution on [0, 1]^n_a, summed
    over action dimensions. The constant n_a * log(2 c_b) of the affine map
    is left out since it carries no gradient; see transformed_entropy.
    """
    a, b = params.alpha, params.beta
    per_dim = (
        log_beta(a, b)
        - (a - 1.0) * digamma(a)
        - (b - 1.0) * digamma(b)
        + (a + b - 2.0) * digamma(a + b)
    )
    return np.sum(per_dim, axis=-1)


def entropy_grad(params: BetaPolicyParams) -> Tuple[np.ndarray, np.ndarray]:
    """dH/dalpha and dH/dbeta, shape (..., n_a)"""
    a, b = params.alpha, params.beta
    shared = (a + b - 2.0) * trigamma(a + b)
    return -(a - 1.0) * trigamma(a) + shared, -(b - 1.0) * trigamma(b) + shared


def transformed_entropy(params: BetaPolicyParams, c_b: float) -> np.ndarray:
    """Entropy of the density over the action box, for reporting"""
    return entropy(params) + params.n_a * math.log(2.0 * c_b)

