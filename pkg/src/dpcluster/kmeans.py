"""Stable k-means: non-private solver, sampled center generation, and the
private pipeline that aggregates the generated center tuples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .primitives import ParameterError, PrivacyBudget, RandomStream, gaussian_noise_vec, gaussian_sigma_for
from .tuples import (
    STATUS_FAILURE,
    STATUS_SUCCESS,
    CentersResult,
    TupleDatabase,
    canonical_tuple,
    nearest_center_labels,
    private_k_averages,
)


@dataclass(frozen=True)
class KMeansConfig:
    k: int
    s: int
    t: int
    gamma: float
    lambda_bound: float
    budget: PrivacyBudget
    beta: float

    def __post_init__(self) -> None:
        if self.k < 1 or self.s < 1 or self.t < 1:
            raise ParameterError("k, s, t must be positive integers")
        if not (0 < self.gamma <= 1.0 / 16.0):
            raise ParameterError(f"gamma must lie in (0, 1/16], got {self.gamma}")
        if not (0 < self.beta <= 1):
            raise ParameterError(f"beta must lie in (0, 1], got {self.beta}")
        if self.lambda_bound <= 0:
            raise ParameterError("lambda_bound must be positive")


def _nearest_sq_dists(p: np.ndarray, c: np.ndarray) -> np.ndarray:
    sq = np.sum(p**2, axis=1)[:, None] - 2.0 * (p @ c.T) + np.sum(c**2, axis=1)[None, :]
    return np.maximum(sq.min(axis=1), 0.0)


def kmeans_cost(p, c) -> float:
    """COST_P(C) = sum over points of the squared distance to the nearest center."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    c = np.atleast_2d(np.asarray(c, dtype=float))
    if c.shape[0] < 1:
        raise ParameterError("center set must be nonempty")
    if p.shape[1] != c.shape[1]:
        raise ParameterError(f"dimension mismatch: points are {p.shape[1]}-d, centers {c.shape[1]}-d")
    return float(np.sum(_nearest_sq_dists(p, c)))


def _partition_costs(p: np.ndarray, labels: np.ndarray, k: int) -> float:
    cost = 0.0
    for i in range(k):
        block = p[labels == i]
        if block.shape[0]:
            cost += float(np.sum((block - block.mean(axis=0)) ** 2))
    return cost


def opt_bruteforce(p, k: int, cap: int = 12):
    """Exact k-means optimum by exhaustive set-partition enumeration.

    Desk-scale oracle only: refuses inputs with more than `cap` points.
    Per-cluster centroids are optimal for a fixed partition, so enumerating
    restricted-growth strings with at most k blocks is exhaustive.
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    n = p.shape[0]
    if n > cap:
        raise ParameterError(f"opt_bruteforce is capped at {cap} points, got {n}")
    if k < 1:
        raise ParameterError("k must be >= 1")
    if k >= n:
        return p.copy(), 0.0

    best_cost = math.inf
    best_labels = None
    labels = np.zeros(n, dtype=int)

    def rec(i: int, used: int) -> None:
        nonlocal best_cost, best_labels
        if i == n:
            cost = _partition_costs(p, labels, used)
            if cost < best_cost:
                best_cost = cost
                best_labels = labels.copy()
            return
        for b in range(min(used + 1, k)):
            labels[i] = b
            rec(i + 1, max(used, b + 1))

    rec(0, 0)
    centers = []
    for b in range(k):
        block = p[best_labels == b]
        if block.shape[0]:
            centers.append(block.mean(axis=0))
    return np.asarray(centers), float(best_cost)


def lloyd_step(p, c) -> np.ndarray:
    """One Lloyd round: assign to nearest center, return per-cluster centroids.

    Empty clusters keep their previous center; the cost never increases.
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    c = np.atleast_2d(np.asarray(c, dtype=float))
    labels = nearest_center_labels(p, c)
    out = c.copy()
    for i in range(c.shape[0]):
        block = p[labels == i]
        if block.shape[0]:
            out[i] = block.mean(axis=0)
    return out


def kmeans_plusplus(p, k: int, lloyd_iters: int, rng: RandomStream) -> np.ndarray:
    """D^2-weighted seeding followed by `lloyd_iters` Lloyd rounds."""
    return kmeans_plusplus_gen(p, k, lloyd_iters, rng.generator)


def kmeans_plusplus_gen(p, k: int, lloyd_iters: int, gen: np.random.Generator) -> np.ndarray:
    """kmeans_plusplus against a raw generator, for callers running it in bulk."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    n = p.shape[0]
    if n < k:
        raise ParameterError(f"k-means++ requires at least k={k} points, got {n}")
    centers = np.empty((k, p.shape[1]))
    centers[0] = p[gen.integers(0, n)]
    if k > 1:
        d2 = np.maximum(np.sum((p - centers[0]) ** 2, axis=1), 0.0)
        for i in range(1, k):
            total = d2.sum()
            if total <= 0:
                idx = gen.integers(0, n)
            else:
                idx = gen.choice(n, p=d2 / total)
            centers[i] = p[idx]
            d2 = np.minimum(d2, np.maximum(np.sum((p - centers[i]) ** 2, axis=1), 0.0))
    for _ in range(lloyd_iters):
        centers = lloyd_step(p, centers)
    return centers


def default_solver(points: np.ndarray, k: int, rng: RandomStream, lloyd_iters: int = 5) -> np.ndarray:
    return kmeans_plusplus(points, k, lloyd_iters, rng)


def gen_centers(p, cfg: KMeansConfig, solver, rng: RandomStream) -> TupleDatabase:
    """t tuples of k centers, each from a fresh s-sample of P (with replacement)."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    if p.shape[0] < 1:
        raise ParameterError("point set must be nonempty")
    tuples = np.empty((cfg.t, cfg.k, p.shape[1]))
    for j in range(cfg.t):
        child = rng.split(j)
        idx = child.generator.integers(0, p.shape[0], size=cfg.s)
        tuples[j] = solver(p[idx], cfg.k, child.split(0))
    return TupleDatabase(tuples)


def zeta_gaussian_averager(d: int, lambda_bound: float, k: int, beta: float, budget: PrivacyBudget) -> float:
    """The additive-error scale zeta of the clipped-mean Gaussian averager:
    an averager run on m points errs by at most zeta/m with probability
    1 - beta/(2k).
    """
    sigma_unit = gaussian_sigma_for(budget, 2.0 * lambda_bound)  # sensitivity * m
    return sigma_unit * (math.sqrt(d) + math.sqrt(2.0 * math.log(2.0 * k / beta)))


def gaussian_mechanism_averager(points: np.ndarray, lambda_bound: float, budget: PrivacyBudget, rng: RandomStream):
    """Clipped mean plus Gaussian noise at sensitivity 2*lam/|S|; None when empty."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 0:
        return None
    norms = np.linalg.norm(points, axis=1)
    scale = np.minimum(1.0, lambda_bound / np.maximum(norms, 1e-300))
    clipped = points * scale[:, None]
    sens = 2.0 * lambda_bound / points.shape[0]
    sigma = gaussian_sigma_for(budget, sens)
    return clipped.mean(axis=0) + gaussian_noise_vec(sigma, points.shape[1], rng)


def private_k_means(
    p,
    cfg: KMeansConfig,
    rng: RandomStream,
    solver=None,
    averager=None,
    tuple_clusterer=None,
) -> CentersResult:
    """The private k-means pipeline: generate center tuples from samples,
    cluster the tuples privately at (eps/6, delta/(4 e^eps)), then take one
    noisy Lloyd step with a private averager at (eps/12, delta/(8 e^eps)).
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    n = p.shape[0]
    if n < 2 * cfg.s * cfg.t:
        raise ParameterError(f"privacy requires n >= 2*s*t = {2 * cfg.s * cfg.t}, got {n}")
    rng.warn_if_zero_noise("private_k_means")

    eps, delta = cfg.budget.epsilon, cfg.budget.delta
    tuple_budget = PrivacyBudget(eps / 6.0, delta / (4.0 * math.exp(eps)))
    avg_budget = PrivacyBudget(eps / 12.0, delta / (8.0 * math.exp(eps)))

    if solver is None:
        solver = default_solver
    tuples = gen_centers(p, cfg, solver, rng.split(0))

    if tuple_clusterer is None:
        def tuple_clusterer(db, budget, stream):
            return private_k_averages(
                db, budget, cfg.beta, r_min=cfg.gamma / n, lambda_bound=cfg.lambda_bound, rng=stream
            )

    stage = tuple_clusterer(tuples, tuple_budget, rng.split(1))
    zeta = zeta_gaussian_averager(p.shape[1], cfg.lambda_bound, cfg.k, cfg.beta, avg_budget)
    info = {"zeta": zeta, "tuple_stage": stage.info, "degraded": False}
    if not stage.success:
        return CentersResult(STATUS_FAILURE, None, info)

    anchors = stage.centers
    labels = nearest_center_labels(p, anchors)
    centers = np.empty_like(anchors)
    for i in range(cfg.k):
        block = p[labels == i]
        if averager is None:
            est = gaussian_mechanism_averager(block, cfg.lambda_bound, avg_budget, rng.split(2 + i))
        else:
            est = averager(block, avg_budget, rng.split(2 + i))
        if est is None:  # empty downstream cluster: keep the tuple-stage anchor
            info["degraded"] = True
            est = anchors[i]
        centers[i] = est
    return CentersResult(STATUS_SUCCESS, canonical_tuple(centers), info)


def xi_bound(s: int, beta: float, n: int, k: int, d: int, lambda_bound: float, omega: float, opt_k: float) -> float:
    """The additive separation slack xi(s, beta) = 4(M + sqrt(M * omega * OPT_k))
    with M = 25 lam^2 k d ln(2nd/beta) n / s.
    """
    m_val = 25.0 * lambda_bound**2 * k * d * math.log(2.0 * n * d / beta) * n / s
    return 4.0 * (m_val + math.sqrt(m_val * omega * opt_k))


def is_phi_xi_separated(p, k: int, phi: float, xi: float, approximate: bool = False, rng: RandomStream | None = None) -> bool:
    """OPT_k(P) + xi <= phi^2 * OPT_{k-1}(P), exact at desk scale.

    Beyond the brute-force cap the check refuses unless approximate=True, in
    which case best-of-20 k-means++ costs are used as upper-bound surrogates.
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    if not (0 < phi < 1):
        raise ParameterError(f"phi must lie in (0, 1), got {phi}")
    if k < 2:
        raise ParameterError("separation requires k >= 2")
    if p.shape[0] <= 12:
        _, opt_k = opt_bruteforce(p, k)
        _, opt_k1 = opt_bruteforce(p, k - 1)
    elif approximate:
        if rng is None:
            rng = RandomStream(0)
        opt_k = min(kmeans_cost(p, kmeans_plusplus(p, k, 10, rng.split(i))) for i in range(20))
        opt_k1 = min(kmeans_cost(p, kmeans_plusplus(p, k - 1, 10, rng.split(100 + i))) for i in range(20))
    else:
        raise ParameterError("input exceeds the exact-oracle cap; pass approximate=True for the heuristic check")
    return opt_k + xi <= phi**2 * opt_k1


@dataclass(frozen=True)
class OstrovskyResult:
    ok: bool
    in_hypothesis: bool
    radii: list = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def ostrovsky_closeness_check(c_opt, c, nu: float, phi: float) -> OstrovskyResult:
    """Check that every center is within 2(nu+phi)/(1-phi) * D_i of a distinct
    optimal center, D_i the optimum's nearest-neighbor distance.

    The theorem hypothesis (nu + phi^2)/(1 - phi^2) < 1/16 is reported, not
    enforced: out-of-hypothesis results are labeled as such.
    """
    c_opt = np.atleast_2d(np.asarray(c_opt, dtype=float))
    c = np.atleast_2d(np.asarray(c, dtype=float))
    if c_opt.shape != c.shape:
        raise ParameterError("center sets must have matching shapes")
    k = c_opt.shape[0]
    in_hyp = (nu + phi**2) / (1.0 - phi**2) < 1.0 / 16.0
    if k == 1:
        d_i = np.array([math.inf])
    else:
        diff = c_opt[:, None, :] - c_opt[None, :, :]
        dist = np.linalg.norm(diff, axis=2)
        np.fill_diagonal(dist, np.inf)
        d_i = dist.min(axis=1)
    radius = 2.0 * (nu + phi) / (1.0 - phi) * d_i

    taken = np.zeros(k, dtype=bool)
    ok = True
    for i in range(k):
        dists = np.linalg.norm(c_opt - c[i], axis=1)
        dists[taken] = np.inf
        j = int(np.argmin(dists))
        if not np.isfinite(dists[j]) or dists[j] > radius[j]:
            ok = False
            break
        taken[j] = True
    return OstrovskyResult(ok=ok, in_hypothesis=in_hyp, radii=radius.tolist())


def verify_event_ec_gamma(t: TupleDatabase, reference_centers, gamma: float) -> bool:
    """The stability event: every tuple has a center within gamma * D_i of each
    reference center c_i, D_i the reference's nearest-neighbor distance.
    """
    c = np.atleast_2d(np.asarray(reference_centers, dtype=float))
    k = c.shape[0]
    if k < 2:
        raise ParameterError("the stability event needs k >= 2 reference centers")
    diff = c[:, None, :] - c[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    np.fill_diagonal(dist, np.inf)
    d_i = dist.min(axis=1)
    # (n, k_tuple, k_ref) distances from tuple centers to reference centers
    delta = t.data[:, :, None, :] - c[None, None, :, :]
    dd = np.linalg.norm(delta, axis=3)
    nearest = dd.min(axis=1)  # (n, k_ref)
    return bool(np.all(nearest <= gamma * d_i[None, :]))
