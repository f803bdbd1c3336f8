"""Seedable randomness and the base differentially private mechanisms.

All logarithms are natural logarithms throughout the package.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


class ParameterError(ValueError):
    """Raised when an operation receives parameters outside its contract."""


@dataclass(frozen=True)
class PrivacyBudget:
    """An (epsilon, delta) differential-privacy budget."""

    epsilon: float
    delta: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise ParameterError(f"epsilon must be a finite positive real, got {self.epsilon}")
        if not (math.isfinite(self.delta) and 0 < self.delta <= 1):
            raise ParameterError(f"delta must lie in (0, 1], got {self.delta}")

    def split(self, eps_factor: float, delta_factor: float) -> "PrivacyBudget":
        """Return a scaled-down budget (epsilon*eps_factor, delta*delta_factor)."""
        return PrivacyBudget(self.epsilon * eps_factor, self.delta * delta_factor)


class NoiseMode(enum.Enum):
    PRIVATE = "private"
    ZERO_NOISE = "zero-noise"


@dataclass
class RandomStream:
    """A splittable, reproducible randomness source.

    The same (seed, stream_id) pair always reproduces the same draw sequence;
    distinct stream ids give independent sequences. Child streams are derived
    deterministically so parallel trials never share state.
    """

    seed: int
    stream_id: int = 0
    noise_mode: NoiseMode = NoiseMode.PRIVATE
    _generator: np.random.Generator | None = field(default=None, repr=False, compare=False)

    @property
    def generator(self) -> np.random.Generator:
        if self._generator is None:
            ss = np.random.SeedSequence((int(self.seed) & (2**64 - 1), int(self.stream_id) & (2**64 - 1)))
            self._generator = np.random.Generator(np.random.Philox(ss))
        return self._generator

    @property
    def zero_noise(self) -> bool:
        return self.noise_mode is NoiseMode.ZERO_NOISE

    def split(self, child_id: int) -> "RandomStream":
        """Derive an independent child stream with a fresh stream id."""
        mixed = (self.stream_id * 0x9E3779B97F4A7C15 + child_id + 1) & (2**64 - 1)
        return RandomStream(self.seed, mixed, self.noise_mode)

    def warn_if_zero_noise(self, where: str) -> None:
        if self.zero_noise:
            logger.warning("%s running in ZeroNoise mode: output carries no privacy semantics", where)


def laplace_noise(scale: float, rng: RandomStream) -> float:
    """One draw from the Laplace density with the given scale (inverse-CDF sampling)."""
    if not (math.isfinite(scale) and scale > 0):
        raise ParameterError(f"Laplace scale must be a finite positive real, got {scale}")
    if rng.zero_noise:
        return 0.0
    u = rng.generator.uniform(-0.5, 0.5)
    return float(-scale * math.copysign(1.0, u) * math.log1p(-2.0 * abs(u)))


def laplace_noise_vec(scale: float, n: int, rng: RandomStream) -> np.ndarray:
    """n independent Laplace draws with the given scale."""
    if not (math.isfinite(scale) and scale > 0):
        raise ParameterError(f"Laplace scale must be a finite positive real, got {scale}")
    if n < 0:
        raise ParameterError("n must be nonnegative")
    if rng.zero_noise:
        return np.zeros(n)
    u = rng.generator.uniform(-0.5, 0.5, size=n)
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def gaussian_noise_vec(sigma: float, d: int, rng: RandomStream) -> np.ndarray:
    """d independent draws from N(0, sigma^2)."""
    if d < 1:
        raise ParameterError(f"dimension must be >= 1, got {d}")
    if not (math.isfinite(sigma) and sigma >= 0):
        raise ParameterError(f"sigma must be a finite nonnegative real, got {sigma}")
    if sigma == 0 or rng.zero_noise:
        return np.zeros(d)
    return rng.generator.normal(0.0, sigma, size=d)


def gaussian_sigma_for(budget: PrivacyBudget, l2_sensitivity: float) -> float:
    """The Gaussian-mechanism standard deviation (lam/eps) * sqrt(2 ln(1.25/delta)).

    Valid only for epsilon < 1; callers with larger budgets must split.
    """
    if not (math.isfinite(l2_sensitivity) and l2_sensitivity >= 0):
        raise ParameterError(f"l2 sensitivity must be a finite nonnegative real, got {l2_sensitivity}")
    if l2_sensitivity == 0:
        return 0.0
    if budget.epsilon >= 1:
        raise ParameterError(
            f"the Gaussian mechanism requires epsilon < 1, got {budget.epsilon}; split the budget first"
        )
    return (l2_sensitivity / budget.epsilon) * math.sqrt(2.0 * math.log(1.25 / budget.delta))


def choice_from_log_weights(log_weights: np.ndarray, rng: RandomStream) -> int:
    """Sample an index with probability proportional to exp(log_weights[i]).

    Computed with max-shift for overflow safety. In ZeroNoise mode returns the
    lowest argmax index.
    """
    log_weights = np.asarray(log_weights, dtype=float)
    if log_weights.size == 0:
        raise ParameterError("empty weight list")
    # -inf encodes a zero-probability candidate; NaN and +inf are invalid.
    if np.any(np.isnan(log_weights)) or np.any(log_weights == np.inf):
        raise ParameterError("log weights must not contain NaN or +inf")
    if np.all(log_weights == -np.inf):
        raise ParameterError("all candidates have zero weight")
    if rng.zero_noise:
        return int(np.argmax(log_weights))
    shifted = log_weights - np.max(log_weights)
    probs = np.exp(shifted)
    probs /= probs.sum()
    return int(rng.generator.choice(len(probs), p=probs))


def exponential_choice(qualities, epsilon: float, rng: RandomStream) -> int:
    """The exponential mechanism: index i with probability proportional to exp(eps*q_i/2)."""
    q = np.asarray(qualities, dtype=float)
    if q.size == 0:
        raise ParameterError("empty quality list")
    if not np.all(np.isfinite(q)):
        raise ParameterError("qualities must be finite")
    if not (math.isfinite(epsilon) and epsilon > 0):
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    return choice_from_log_weights(epsilon * q / 2.0, rng)
