"""Synthetic separation experiments, the naive baseline, sweep machinery, and
CSV/JSON reporting.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .gmm import MixtureBounds, MixtureEstimate, MixtureParams, mixture_param_error, sample_mixture
from .kmeans import kmeans_plusplus_gen
from .primitives import ParameterError, PrivacyBudget, RandomStream
from .tuples import (
    TupleDatabase,
    nearest_center_labels,
    private_k_averages,
    private_k_noisy_centers,
)

CSV_COLUMNS = [
    "trial",
    "algorithm",
    "test_id",
    "k",
    "d",
    "r_scale",
    "tuples",
    "samples_per_tuple",
    "epsilon",
    "delta",
    "beta",
    "delta_sep",
    "lambda_bound",
    "r_min",
    "seed",
    "status",
    "success",
    "mean_error",
]


def default_delta_sep(k: int, epsilon: float, delta: float, beta: float) -> float:
    """The experiments' separation-parameter rule (10/eps) k ln(k/delta) sqrt(ln(k/beta))."""
    return (10.0 / epsilon) * k * math.log(k / delta) * math.sqrt(math.log(k / beta))


def default_lambda_bound(k: int, d: int) -> float:
    """The experiments' domain-bound rule 2^10 * k * sqrt(d)."""
    return 2.0**10 * k * math.sqrt(d)


@dataclass(frozen=True)
class ExperimentConfig:
    test_id: str  # test1 | test2 | test3 | custom
    algorithm: str  # averages | noisy-centers | baseline
    k: int
    d: int
    r_scale: float
    tuples: int
    trials: int
    seed: int
    epsilon: float = 1.0
    delta: float = math.exp(-28.0)
    beta: float = 0.05
    delta_sep: float | None = None
    lambda_bound: float | None = None
    r_min: float = 0.1
    samples_per_tuple: int | None = None
    held_out: int = 10_000
    zero_noise: bool = False

    def resolved(self) -> "ExperimentConfig":
        """Fill in the rule-based defaults so every report row is explicit."""
        out = self
        if out.delta_sep is None:
            out = replace(out, delta_sep=default_delta_sep(out.k, out.epsilon, out.delta, out.beta))
        if out.lambda_bound is None:
            out = replace(out, lambda_bound=default_lambda_bound(out.k, out.d))
        if out.samples_per_tuple is None:
            out = replace(out, samples_per_tuple=15 * out.k)
        return out

    @property
    def budget(self) -> PrivacyBudget:
        return PrivacyBudget(self.epsilon, self.delta)


@dataclass
class TrialReport:
    config: dict
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    timings: list = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS, extrasaction="ignore")
            writer.writeheader()
            for row in self.rows:
                writer.writerow(row)

    def write_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump({"config": self.config, "summary": self.summary, "timings": self.timings},
                      f, indent=2, sort_keys=True)
            f.write("\n")


def make_test_mixture(test_id: str, k: int | None = None, d: int | None = None,
                      r_scale: float | None = None) -> MixtureParams:
    """The synthetic benchmark mixtures: uniform spherical unit-variance
    Gaussians with means at +/- R e_i.

    test1: d=1, k=2, R = r_scale; test2: d=4, R = 512k; test3: k=2, R = 256 sqrt(d).
    """
    if test_id == "test1":
        k, d = 2, 1
        if r_scale is None:
            raise ParameterError("test1 requires r_scale (the paper sweeps R in {2^5..2^9})")
        r = float(r_scale)
    elif test_id == "test2":
        d = 4
        if k is None:
            raise ParameterError("test2 requires k")
        r = 512.0 * k
    elif test_id == "test3":
        k = 2
        if d is None:
            raise ParameterError("test3 requires d")
        r = 256.0 * math.sqrt(d)
    elif test_id == "custom":
        if k is None or d is None or r_scale is None:
            raise ParameterError("custom mixtures require k, d, and r_scale")
        r = float(r_scale)
    else:
        raise ParameterError(f"unknown test id {test_id!r}")

    means = np.zeros((k, d))
    if k == 1:
        means[0, 0] = r
    else:
        if k % 2 != 0:
            raise ParameterError(f"the +/- e_i layout requires even k, got {k}")
        if k // 2 > d:
            raise ParameterError(f"layout infeasible: k/2 = {k // 2} axes exceed d = {d}")
        for i in range(k // 2):
            means[2 * i, i] = r
            means[2 * i + 1, i] = -r
    bounds = MixtureBounds(r=max(r, 1.0), sigma_max=1.0, sigma_min=1e-6, w_min=1.0 / k)
    return MixtureParams.spherical(np.full(k, 1.0 / k), means, 1.0, bounds)


def generate_tuple_db(mixture: MixtureParams, n_tuples: int, samples_per_tuple: int,
                      rng: RandomStream, lloyd_iters: int = 5) -> TupleDatabase:
    """n_tuples k-tuples, each the k-means++ centers of fresh mixture samples."""
    if n_tuples < 1:
        raise ParameterError("need at least one tuple")
    gen = rng.generator
    k, d = mixture.k, mixture.d
    tuples = np.empty((n_tuples, k, d))
    block = max(1, int(2e6) // max(1, samples_per_tuple * d))
    for start in range(0, n_tuples, block):
        count = min(block, n_tuples - start)
        labels = gen.choice(k, size=(count, samples_per_tuple), p=mixture.weights)
        pts = mixture.means[labels] + gen.standard_normal((count, samples_per_tuple, d)) * mixture.sigmas[labels]
        for j in range(count):
            tuples[start + j] = kmeans_plusplus_gen(pts[j], k, lloyd_iters, gen)
    return TupleDatabase(tuples)


def classification_success(centers, points, labels, k: int) -> bool:
    """The experiments' success bit: every held-out sample of component i is
    nearest to one fixed candidate center y_i, and the map i -> y_i is a
    bijection.
    """
    if centers is None:
        return False
    assigned = nearest_center_labels(np.atleast_2d(np.asarray(points, dtype=float)),
                                     np.atleast_2d(np.asarray(centers, dtype=float)))
    chosen = []
    for i in range(k):
        vals = np.unique(assigned[labels == i])
        if vals.size != 1:
            return False
        chosen.append(int(vals[0]))
    return len(set(chosen)) == k


def _run_algorithm(cfg: ExperimentConfig, db: TupleDatabase, rng: RandomStream):
    if cfg.algorithm == "averages":
        return private_k_averages(db, cfg.budget, cfg.beta, cfg.r_min, cfg.lambda_bound, rng)
    if cfg.algorithm == "noisy-centers":
        return private_k_noisy_centers(db, cfg.budget, cfg.beta, cfg.delta_sep, rng,
                                       lambda_bound=cfg.lambda_bound)
    raise ParameterError(f"unknown algorithm {cfg.algorithm!r}")


def _base_row(cfg: ExperimentConfig, trial: int) -> dict:
    return {
        "trial": trial,
        "algorithm": cfg.algorithm,
        "test_id": cfg.test_id,
        "k": cfg.k,
        "d": cfg.d,
        "r_scale": cfg.r_scale,
        "tuples": cfg.tuples,
        "samples_per_tuple": cfg.samples_per_tuple,
        "epsilon": cfg.epsilon,
        "delta": cfg.delta,
        "beta": cfg.beta,
        "delta_sep": cfg.delta_sep,
        "lambda_bound": cfg.lambda_bound,
        "r_min": cfg.r_min,
        "seed": cfg.seed,
    }


def _matched_mean_error(mixture: MixtureParams, centers) -> float:
    if centers is None:
        return math.inf
    est = MixtureEstimate(
        np.full(mixture.k, 1.0 / mixture.k),
        np.atleast_2d(np.asarray(centers, dtype=float)),
        np.ones((mixture.k, mixture.d)),
    )
    return float(mixture_param_error(mixture, est).max_mean_error)


def run_separation_test(cfg: ExperimentConfig, rng: RandomStream | None = None,
                        tuple_pool: TupleDatabase | None = None) -> TrialReport:
    """Fixed-tuple-count experiment: per trial, generate tuples from the test
    mixture, run the configured algorithm, and score classification on fresh
    held-out labeled samples.

    A tuple_pool (pregenerated database) may be supplied to amortize tuple
    generation across trials; each trial then uses the full pool.
    """
    cfg = cfg.resolved()
    if rng is None:
        from .primitives import NoiseMode

        rng = RandomStream(cfg.seed, 0,
                           NoiseMode.ZERO_NOISE if cfg.zero_noise else NoiseMode.PRIVATE)
    mixture = make_test_mixture(cfg.test_id, cfg.k, cfg.d, cfg.r_scale)
    report = TrialReport(config=_base_row(cfg, -1))

    successes = 0
    for trial in range(cfg.trials):
        t0 = time.perf_counter()
        child = rng.split(trial)
        if tuple_pool is not None:
            db = tuple_pool
        else:
            db = generate_tuple_db(mixture, cfg.tuples, cfg.samples_per_tuple, child.split(0))
        result = _run_algorithm(cfg, db, child.split(1))
        held, held_labels = sample_mixture(mixture, cfg.held_out, child.split(2))
        ok = result.success and classification_success(result.centers, held, held_labels, cfg.k)
        successes += int(ok)
        row = _base_row(cfg, trial)
        row.update({
            "status": result.status,
            "success": int(ok),
            "mean_error": _matched_mean_error(mixture, result.centers),
        })
        report.rows.append(row)
        report.timings.append(time.perf_counter() - t0)

    rate = successes / cfg.trials
    se = math.sqrt(max(rate * (1 - rate), 1e-12) / cfg.trials)
    report.summary = {
        "trials": cfg.trials,
        "successes": successes,
        "success_rate": rate,
        "ci95": [max(0.0, rate - 1.96 * se), min(1.0, rate + 1.96 * se)],
    }
    return report


def baseline_noise_then_fit(cfg: ExperimentConfig, rng: RandomStream | None = None,
                            n_samples: int = 100_000) -> TrialReport:
    """The naive comparator: per-point Gaussian noise at sensitivity lambda,
    then ordinary nearest-mean fitting.

    The noise scale is (lam/eps) sqrt(2 ln(1.25/delta)); at eps >= 1 the
    Gaussian-mechanism theorem no longer applies, but the comparator is
    deliberately naive and extrapolates the formula.
    """
    cfg = cfg.resolved()
    if rng is None:
        from .primitives import NoiseMode

        rng = RandomStream(cfg.seed, 0,
                           NoiseMode.ZERO_NOISE if cfg.zero_noise else NoiseMode.PRIVATE)
    mixture = make_test_mixture(cfg.test_id, cfg.k, cfg.d, cfg.r_scale)
    sigma = (cfg.lambda_bound / cfg.epsilon) * math.sqrt(2.0 * math.log(1.25 / cfg.delta))
    report = TrialReport(config=_base_row(cfg, -1))
    report.config["noise_sigma"] = sigma

    successes = 0
    for trial in range(cfg.trials):
        t0 = time.perf_counter()
        child = rng.split(trial)
        points, _ = sample_mixture(mixture, n_samples, child.split(0))
        if child.zero_noise:
            noisy = points
        else:
            noisy = points + child.generator.normal(0.0, sigma, size=points.shape)
        centers = kmeans_plusplus_gen(noisy, cfg.k, 10, child.split(1).generator)
        mean_err = _matched_mean_error(mixture, centers)
        held, held_labels = sample_mixture(mixture, cfg.held_out, child.split(2))
        ok = classification_success(centers, held, held_labels, cfg.k)
        successes += int(ok)
        row = _base_row(cfg, trial)
        row.update({"status": "Success", "success": int(ok), "mean_error": mean_err})
        report.rows.append(row)
        report.timings.append(time.perf_counter() - t0)

    rate = successes / cfg.trials
    report.summary = {
        "trials": cfg.trials,
        "successes": successes,
        "success_rate": rate,
        "noise_sigma": sigma,
    }
    return report


def doubling_bisection_min(predicate, lo: int = 1, cap: int = 2**22):
    """Minimal n with predicate(n) true, by doubling then bisection (assumes
    monotonicity). Returns (n_star, verified) where verified re-checks that
    predicate(n_star) holds and predicate(n_star // 2) does not.
    """
    hi = max(lo, 1)
    while hi <= cap and not predicate(hi):
        hi *= 2
    if hi > cap:
        raise ParameterError(f"no passing count found below the cap {cap}")
    low = hi // 2
    while low + 1 < hi:
        mid = (low + hi) // 2
        if predicate(mid):
            hi = mid
        else:
            low = mid
    verified = predicate(hi) and (hi // 2 < lo or not predicate(hi // 2))
    return hi, verified


def find_min_tuples(cfg: ExperimentConfig, rng: RandomStream, target_rate: float | None = None,
                    cap: int = 2**20):
    """Sweep: the minimal tuple count at which the configured algorithm reaches
    the target success rate (default 1 - beta) over cfg.trials trials."""
    cfg = cfg.resolved()
    if target_rate is None:
        target_rate = 1.0 - cfg.beta
    counter = {"i": 0}

    def predicate(n: int) -> bool:
        counter["i"] += 1
        probe = replace(cfg, tuples=n, seed=cfg.seed + counter["i"])
        report = run_separation_test(probe, rng.split(counter["i"]))
        return report.summary["success_rate"] >= target_rate

    return doubling_bisection_min(predicate, lo=1, cap=cap)


def _estimate_log_density(est: MixtureEstimate, points: np.ndarray) -> np.ndarray:
    w = np.asarray(est.weights, dtype=float)
    means = np.atleast_2d(np.asarray(est.means, dtype=float))
    var = np.maximum(np.atleast_2d(np.asarray(est.variances, dtype=float)), 1e-300)
    parts = np.full((points.shape[0], w.size), -np.inf)
    for i in range(w.size):
        if w[i] <= 0:
            continue
        z = (points - means[i]) ** 2 / var[i]
        parts[:, i] = math.log(w[i]) - 0.5 * float(np.sum(np.log(2.0 * math.pi * var[i]))) - 0.5 * z.sum(axis=1)
    m = parts.max(axis=1)
    out = m + np.log(np.sum(np.exp(parts - m[:, None]), axis=1))
    out[~np.isfinite(m)] = -np.inf
    return out


def tv_distance_mc(a: MixtureParams, b, n: int, rng: RandomStream):
    """Monte-Carlo total-variation estimate 0.5 E_a |1 - p_b/p_a|; returns
    (estimate, standard_error)."""
    if n < 1:
        raise ParameterError("need at least one sample")
    points, _ = sample_mixture(a, n, rng)
    log_pa = a.log_density(points)
    if isinstance(b, MixtureParams):
        log_pb = b.log_density(points)
    else:
        log_pb = _estimate_log_density(b, points)
    vals = 0.5 * np.abs(1.0 - np.exp(np.clip(log_pb - log_pa, -745, 50)))
    return float(np.mean(vals)), float(np.std(vals) / math.sqrt(n))
