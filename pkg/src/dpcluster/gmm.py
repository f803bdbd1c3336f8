"""Separated Gaussian-mixture learning: mixture model, labeler and learner
defaults, per-chunk empirical-mean tuples, and the private pipeline.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .averaging import DomainBounds, private_average_rd
from .kmeans import kmeans_plusplus
from .primitives import (
    ParameterError,
    PrivacyBudget,
    RandomStream,
    gaussian_noise_vec,
    gaussian_sigma_for,
    laplace_noise,
)
from .tuples import (
    STATUS_FAILURE,
    STATUS_SUCCESS,
    TupleDatabase,
    nearest_center_labels,
    private_k_noisy_centers,
)


@dataclass(frozen=True)
class MixtureBounds:
    """(R, sigma_max, sigma_min, w_min) boundedness parameters."""

    r: float
    sigma_max: float
    sigma_min: float
    w_min: float

    def __post_init__(self) -> None:
        if self.r <= 0 or self.sigma_max <= 0 or not (0 <= self.sigma_min <= self.sigma_max):
            raise ParameterError("bounds require r > 0 and 0 <= sigma_min <= sigma_max")
        if not (0 < self.w_min <= 1):
            raise ParameterError(f"w_min must lie in (0, 1], got {self.w_min}")


@dataclass(frozen=True)
class MixtureParams:
    """A bounded k-component Gaussian mixture with diagonal covariances.

    `sigmas` holds per-coordinate standard deviations, shape (k, d); spherical
    components simply repeat one value across coordinates.
    """

    weights: np.ndarray
    means: np.ndarray
    sigmas: np.ndarray
    bounds: MixtureBounds

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        sg = np.atleast_2d(np.asarray(self.sigmas, dtype=float))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "sigmas", sg)
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ParameterError(f"weights must sum to 1 within 1e-12, got {w.sum()}")
        if np.any(w < self.bounds.w_min - 1e-12):
            raise ParameterError("all weights must be at least w_min")
        if mu.shape[0] != w.size or sg.shape != mu.shape:
            raise ParameterError("weights, means, and sigmas must agree on k and d")
        if float(np.max(np.linalg.norm(mu, axis=1))) > self.bounds.r + 1e-9:
            raise ParameterError("all means must lie within the R bound")
        if np.any(sg < self.bounds.sigma_min - 1e-12) or np.any(sg > self.bounds.sigma_max + 1e-12):
            raise ParameterError("all sigmas must lie in [sigma_min, sigma_max]")

    @property
    def k(self) -> int:
        return self.weights.size

    @property
    def d(self) -> int:
        return self.means.shape[1]

    @classmethod
    def spherical(cls, weights, means, sigma, bounds: MixtureBounds) -> "MixtureParams":
        means = np.atleast_2d(np.asarray(means, dtype=float))
        sigmas = np.full(means.shape, float(sigma))
        return cls(np.asarray(weights, dtype=float), means, sigmas, bounds)

    def separation(self) -> float:
        """Minimal pairwise mean distance in units of the largest sigma."""
        if self.k < 2:
            return math.inf
        diff = self.means[:, None, :] - self.means[None, :, :]
        dist = np.linalg.norm(diff, axis=2)
        np.fill_diagonal(dist, np.inf)
        return float(dist.min() / np.max(self.sigmas))

    def log_density(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        parts = np.empty((points.shape[0], self.k))
        for i in range(self.k):
            var = self.sigmas[i] ** 2
            z = (points - self.means[i]) ** 2 / var
            parts[:, i] = (
                math.log(self.weights[i])
                - 0.5 * float(np.sum(np.log(2.0 * math.pi * var)))
                - 0.5 * z.sum(axis=1)
            )
        m = parts.max(axis=1)
        return m + np.log(np.sum(np.exp(parts - m[:, None]), axis=1))


@dataclass(frozen=True)
class MixtureEstimate:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray  # diagonal, (k, d)

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-12:
            raise ParameterError("estimate weights must be nonnegative and sum to 1 within 1e-12")

    @property
    def k(self) -> int:
        return np.asarray(self.weights).size


@dataclass(frozen=True)
class GmmResult:
    status: str
    estimate: MixtureEstimate | None
    info: dict = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return self.status == STATUS_SUCCESS


def sample_mixture(params: MixtureParams, n: int, rng: RandomStream):
    """n i.i.d. draws with ground-truth component labels."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    gen = rng.generator
    labels = gen.choice(params.k, size=n, p=params.weights)
    points = params.means[labels] + gen.standard_normal((n, params.d)) * params.sigmas[labels]
    return points, labels


def nearest_mean_labeler(s, k: int, rng: RandomStream) -> np.ndarray:
    """Default labeling algorithm: k-means++ with Lloyd refinement, then
    nearest-center labels."""
    s = np.atleast_2d(np.asarray(s, dtype=float))
    if s.shape[0] < k:
        raise ParameterError(f"labeling requires at least k={k} points, got {s.shape[0]}")
    centers = kmeans_plusplus(s, k, lloyd_iters=10, rng=rng)
    return nearest_center_labels(s, centers)


def gen_empirical_means(p_prime, k: int, s: int, t: int, labeler, rng: RandomStream) -> TupleDatabase:
    """t tuples of per-label empirical means over positional chunks of size s.

    A chunk whose labeling leaves some label empty is flagged degraded and the
    empty slot reuses the chunk's global mean so the pipeline stays total; the
    flags are exposed as the returned database's `degraded` attribute.
    """
    p_prime = np.atleast_2d(np.asarray(p_prime, dtype=float))
    if p_prime.shape[0] < s * t:
        raise ParameterError(f"need at least s*t = {s * t} points, got {p_prime.shape[0]}")
    d = p_prime.shape[1]
    tuples = np.empty((t, k, d))
    degraded = []
    for j in range(t):
        chunk = p_prime[j * s : (j + 1) * s]
        labels = labeler(chunk, k, rng.split(j))
        bad = False
        for i in range(k):
            block = chunk[labels == i]
            if block.shape[0] == 0:
                bad = True
                tuples[j, i] = chunk.mean(axis=0)
            else:
                tuples[j, i] = block.mean(axis=0)
        degraded.append(bad)
    db = TupleDatabase(tuples)
    db.degraded = degraded
    return db


def naive_gaussian_learner(
    s,
    budget: PrivacyBudget | None,
    rng: RandomStream,
    bounds: MixtureBounds | None = None,
    r_min: float = 0.1,
):
    """Empirical mean and diagonal variance of a single Gaussian.

    With a budget, the mean is privatized by the bounded-domain averager at
    (eps/2, delta/2) and the diagonal second moments by the Gaussian mechanism
    at (eps/2, delta/2) on deviations clipped at 4*sigma_max; variances are
    clamped to [sigma_min^2, sigma_max^2] when bounds are given.
    """
    s = np.atleast_2d(np.asarray(s, dtype=float))
    if s.shape[0] < 2:
        raise ParameterError(f"the learner needs at least 2 points, got {s.shape[0]}")
    d = s.shape[1]

    if budget is None:
        mean = s.mean(axis=0)
        var = s.var(axis=0)
    else:
        if bounds is None:
            raise ParameterError("the privatized learner requires mixture bounds")
        lam = bounds.r + 4.0 * bounds.sigma_max * math.sqrt(d)
        norms = np.linalg.norm(s, axis=1)
        scale = np.minimum(1.0, lam / np.maximum(norms, 1e-300))
        clipped = s * scale[:, None]
        half = PrivacyBudget(budget.epsilon / 2.0, budget.delta / 2.0)
        dom = DomainBounds(lam, min(r_min, lam), min(r_min, lam))
        mean = private_average_rd(clipped, dom, half, beta=0.05, rng=rng.split(0))

        cap = 4.0 * bounds.sigma_max
        dev2 = np.minimum(np.abs(clipped - mean), cap) ** 2
        sens = math.sqrt(d) * cap**2 / s.shape[0]
        sigma = gaussian_sigma_for(half, sens)
        var = dev2.mean(axis=0) + gaussian_noise_vec(sigma, d, rng.split(1))

    if bounds is not None:
        var = np.clip(var, bounds.sigma_min**2, bounds.sigma_max**2)
    else:
        var = np.maximum(var, 0.0)
    return mean, var


def default_tuple_clusterer(lambda_bound: float, delta_sep: float, beta: float):
    """The pipeline's default tuple stage: noisy centers at the full budget."""

    def clusterer(db: TupleDatabase, budget: PrivacyBudget, stream: RandomStream):
        return private_k_noisy_centers(db, budget, beta, delta_sep, stream, lambda_bound=lambda_bound)

    return clusterer


def private_k_gmm(
    p,
    k: int,
    s: int,
    t: int,
    budget: PrivacyBudget,
    rng: RandomStream,
    bounds: MixtureBounds,
    labeler=None,
    learner=None,
    tuple_clusterer=None,
    lambda_bound: float | None = None,
    delta_sep: float | None = None,
    beta: float = 0.05,
) -> GmmResult:
    """The private mixture-learning pipeline over a database of 2n points.

    The first n points feed the per-chunk empirical-mean tuples and the tuple
    clustering stage at the full (eps, delta); the last n points are
    partitioned by the resulting centers, each part fitted by the learner at
    (eps/4, delta/2), with Laplace(4/eps) noisy counts normalized into weights.
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    if p.shape[0] % 2 != 0:
        raise ParameterError("the pipeline needs an even number of points (2n)")
    n = p.shape[0] // 2
    if n < s * t:
        raise ParameterError(f"need n >= s*t = {s * t}, got n = {n}")
    rng.warn_if_zero_noise("private_k_gmm")
    d = p.shape[1]

    if labeler is None:
        labeler = nearest_mean_labeler
    if lambda_bound is None:
        lambda_bound = bounds.r + 4.0 * bounds.sigma_max * math.sqrt(d)
    if delta_sep is None:
        delta_sep = (10.0 / budget.epsilon) * k * math.log(k / budget.delta) * math.sqrt(
            math.log(k / beta)
        ) if k > 1 else 8.0
    if tuple_clusterer is None:
        tuple_clusterer = default_tuple_clusterer(lambda_bound, delta_sep, beta)

    p_prime, p_second = p[:n], p[n:]
    tuples = gen_empirical_means(p_prime, k, s, t, labeler, rng.split(0))

    # Wrapper guaranteeing bounded inputs to the tuple stage: any tuple with a
    # point outside B(0, lambda) is replaced by the all-zeros tuple.
    norms = np.linalg.norm(tuples.data, axis=2)
    bad = np.any(norms > lambda_bound, axis=1)
    replaced = int(np.sum(bad))
    if replaced:
        data = tuples.data.copy()
        data[bad] = 0.0
        tuples = TupleDatabase(data)

    stage = tuple_clusterer(tuples, budget, rng.split(1))
    info = {
        "replaced_tuples": replaced,
        "degraded_tuples": int(np.sum(tuples.degraded)) if hasattr(tuples, "degraded") else 0,
        "delta_sep": delta_sep,
        "tuple_stage": stage.info,
    }
    if not stage.success:
        return GmmResult(STATUS_FAILURE, None, info)

    anchors = stage.centers
    labels = nearest_center_labels(p_second, anchors)
    learner_budget = PrivacyBudget(budget.epsilon / 4.0, budget.delta / 2.0)

    means = np.empty((k, d))
    variances = np.empty((k, d))
    counts = np.empty(k)
    for i in range(k):
        block = p_second[labels == i]
        if learner is None:
            if block.shape[0] < 2:
                mean, var = anchors[i], np.full(d, bounds.sigma_min**2)
            else:
                mean, var = naive_gaussian_learner(block, learner_budget, rng.split(2 + i), bounds=bounds)
        else:
            mean, var = learner(block, learner_budget, rng.split(2 + i))
        means[i], variances[i] = mean, var
        counts[i] = block.shape[0] + laplace_noise(4.0 / budget.epsilon, rng.split(2 + k + i))

    counts = np.maximum(counts, 0.0)
    total = counts.sum()
    weights = counts / total if total > 0 else np.full(k, 1.0 / k)
    weights = weights / weights.sum()
    estimate = MixtureEstimate(weights, means, variances)
    return GmmResult(STATUS_SUCCESS, estimate, info)


def gmm_sample_bounds(
    d: int,
    k: int,
    t: int,
    gamma: float,
    h: float,
    w_min: float,
    beta: float,
    upsilon: int,
    epsilon: float,
    eta: float,
):
    """The utility theorem's chunk-size and sample-count lower bounds (s_min, n_min)
    with Delta = 8 + 12/gamma.
    """
    if min(d, k, t, upsilon) < 1 or min(gamma, h, w_min, beta, epsilon, eta) <= 0:
        raise ParameterError("all sample-bound parameters must be positive")
    big_delta = 8.0 + 12.0 / gamma
    s_min = (4.0 / w_min) * max(
        math.log(8.0 * k * t / beta),
        big_delta**2 * (d + 2.0 * math.log(16.0 * k * t / beta)) / ((1.0 + gamma**2) * h**2),
    )
    n_min = max(
        s_min * t,
        (2.0 * upsilon + math.log(16.0 * k / beta)) / w_min,
        (4.0 * k**2 / (epsilon * eta)) * math.log(8.0 * k / beta),
    )
    return s_min, n_min


@dataclass(frozen=True)
class MixtureErrorReport:
    matching: tuple
    mean_errors: np.ndarray
    weight_errors: np.ndarray
    scale_errors: np.ndarray

    @property
    def max_mean_error(self) -> float:
        return float(np.max(self.mean_errors))

    @property
    def max_weight_error(self) -> float:
        return float(np.max(self.weight_errors))


def mixture_param_error(truth: MixtureParams, est: MixtureEstimate) -> MixtureErrorReport:
    """Per-component errors under the bijective matching minimizing total mean
    distance (exhaustive for k <= 8, greedy beyond)."""
    if truth.k != est.k:
        raise ParameterError(f"component count mismatch: {truth.k} vs {est.k}")
    k = truth.k
    est_means = np.atleast_2d(np.asarray(est.means, dtype=float))
    dist = np.linalg.norm(truth.means[:, None, :] - est_means[None, :, :], axis=2)

    if k <= 8:
        best, best_cost = None, math.inf
        for perm in itertools.permutations(range(k)):
            cost = float(sum(dist[i, perm[i]] for i in range(k)))
            if cost < best_cost:
                best, best_cost = perm, cost
        matching = best
    else:
        taken = np.zeros(k, dtype=bool)
        matching = []
        for i in range(k):
            row = dist[i].copy()
            row[taken] = math.inf
            j = int(np.argmin(row))
            taken[j] = True
            matching.append(j)
        matching = tuple(matching)

    mean_err = np.array([dist[i, matching[i]] for i in range(k)])
    est_w = np.asarray(est.weights, dtype=float)
    weight_err = np.array([abs(truth.weights[i] - est_w[matching[i]]) for i in range(k)])
    est_var = np.atleast_2d(np.asarray(est.variances, dtype=float))
    scale_err = np.array(
        [float(np.max(np.abs(truth.sigmas[i] ** 2 - est_var[matching[i]]))) for i in range(k)]
    )
    return MixtureErrorReport(matching, mean_err, weight_err, scale_err)
