"""k-tuple geometry, the private partition tester, and the two private
k-tuple clustering algorithms.

A k-tuple is an unordered set of k points in R^d, stored in canonical
lexicographic order; a tuple database stacks n such tuples. Neighboring
databases differ in one whole tuple.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .averaging import DomainBounds
from .primitives import (
    ParameterError,
    PrivacyBudget,
    RandomStream,
    gaussian_noise_vec,
    laplace_noise,
)

logger = logging.getLogger(__name__)

STATUS_SUCCESS = "Success"
STATUS_FAILURE = "Failure"


class DatabaseTooSmallError(ParameterError):
    """The tuple database is too small for the requested privacy parameters."""

    def __init__(self, message: str, min_feasible_n: int | None = None):
        super().__init__(message)
        self.min_feasible_n = min_feasible_n


def canonical_tuple(points) -> np.ndarray:
    """Return the (k, d) point array sorted lexicographically by coordinates."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ParameterError(f"a k-tuple must be a (k, d) array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError("tuple coordinates must be finite")
    order = np.lexsort(arr.T[::-1])
    return arr[order]


class TupleDatabase:
    """An immutable list of n unordered k-tuples of d-dimensional points."""

    def __init__(self, tuples):
        arr = np.asarray(tuples, dtype=float)
        if arr.ndim == 2:  # n tuples of scalars
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[0] < 1:
            raise ParameterError(f"a tuple database must be a nonempty (n, k, d) array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ParameterError("tuple coordinates must be finite")
        data = arr.copy()
        for i in range(data.shape[0]):
            data[i] = canonical_tuple(data[i])
        data.setflags(write=False)
        self.data = data

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def k(self) -> int:
        return self.data.shape[1]

    @property
    def d(self) -> int:
        return self.data.shape[2]

    def points(self) -> np.ndarray:
        """Points(T): all n*k points as one (n*k, d) array."""
        return self.data.reshape(-1, self.d)

    def subset(self, indices) -> "TupleDatabase":
        return TupleDatabase(self.data[np.asarray(indices)])

    def max_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.points(), axis=1)))

    def to_jsonl(self, path) -> None:
        with open(path, "w") as f:
            for i in range(self.n):
                f.write(json.dumps(self.data[i].tolist()) + "\n")

    @classmethod
    def from_jsonl(cls, path, lambda_bound: float | None = None) -> "TupleDatabase":
        rows = []
        with open(path) as f:
            for line in f:
                line = line.strip()
                if line:
                    rows.append(json.loads(line))
        if not rows:
            raise ParameterError(f"no tuples found in {path}")
        shapes = {(len(r), len(r[0])) for r in rows}
        if len(shapes) != 1:
            raise ParameterError(f"inhomogeneous tuple shapes in {path}: {sorted(shapes)}")
        db = cls(np.asarray(rows, dtype=float))
        if lambda_bound is not None and db.max_norm() > lambda_bound:
            raise ParameterError(
                f"tuple points exceed the lambda bound {lambda_bound} (max norm {db.max_norm():.6g})"
            )
        return db


@dataclass(frozen=True)
class BallSet:
    """k balls with the separation parameter Delta they claim to satisfy.

    The `empty` flag encodes the tester's "no passing tuple" output: empty
    balls contain nothing, so every tuple counts as unpartitioned.
    """

    centers: np.ndarray  # (k, d)
    radii: np.ndarray  # (k,)
    delta: float
    empty: bool = False

    @classmethod
    def empty_balls(cls, k: int, d: int, delta: float) -> "BallSet":
        return cls(np.zeros((k, d)), np.zeros(k), delta, empty=True)

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def d(self) -> int:
        return self.centers.shape[1]


@dataclass(frozen=True)
class TestOutcome:
    status: str
    balls: BallSet

    @property
    def success(self) -> bool:
        return self.status == STATUS_SUCCESS


@dataclass(frozen=True)
class CentersResult:
    status: str
    centers: np.ndarray | None  # canonical (k, d) tuple on Success
    info: dict = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return self.status == STATUS_SUCCESS


@dataclass(frozen=True)
class TesterParams:
    m: int
    eps1: float
    eps2: float
    ell: float


def _pairwise_min_dists(x: np.ndarray) -> np.ndarray:
    """min_{j != i} ||x_i - x_j|| for each row of a (k, d) array (k >= 2)."""
    diff = x[:, None, :] - x[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    np.fill_diagonal(dist, np.inf)
    return dist.min(axis=1)


def balls_from_tuple(x, delta: float, lambda_bound: float | None = None) -> BallSet:
    """Balls centered at the tuple points with radii (1/Delta) * min_{j!=i} ||x_i - x_j||.

    For k = 1 there is no nearest neighbor; the radius convention 2*lambda_bound
    (covering the whole domain) applies and lambda_bound must be supplied.
    """
    if delta <= 1:
        raise ParameterError(f"delta must exceed 1, got {delta}")
    arr = canonical_tuple(x)
    k = arr.shape[0]
    if k == 1:
        if lambda_bound is None:
            raise ParameterError("k = 1 requires lambda_bound for the radius convention")
        radii = np.array([2.0 * lambda_bound])
    else:
        radii = _pairwise_min_dists(arr) / delta
    return BallSet(arr, radii, delta)


def is_far_balls(b: BallSet, delta: float) -> bool:
    """True iff ||c_i - c_j|| >= delta * max(r_i, r_j) for all i != j (exact)."""
    if b.empty:
        return False
    k = b.k
    if k == 1:
        return True
    diff = b.centers[:, None, :] - b.centers[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    maxr = np.maximum(b.radii[:, None], b.radii[None, :])
    mask = ~np.eye(k, dtype=bool)
    return bool(np.all(dist[mask] >= delta * maxr[mask]))


def tuple_partitioned_by(x, b: BallSet) -> bool:
    """True iff every ball contains exactly one tuple point (boundary inclusive)."""
    if b.empty:
        return False
    arr = canonical_tuple(x)
    if arr.shape != (b.k, b.d):
        raise ParameterError(f"tuple shape {arr.shape} does not match balls ({b.k}, {b.d})")
    dist = np.linalg.norm(arr[:, None, :] - b.centers[None, :, :], axis=2)
    inside = dist <= b.radii[None, :]
    return bool(np.all(inside.sum(axis=0) == 1))


def count_unpartitioned(t: TupleDatabase, b: BallSet) -> int:
    """The number of tuples of T not partitioned by the balls (the l_X statistic)."""
    if b.empty:
        return t.n
    if (t.k, t.d) != (b.k, b.d):
        raise ParameterError(f"database shape ({t.k}, {t.d}) does not match balls ({b.k}, {b.d})")
    # (n, k_points, k_balls) distances, in blocks to bound peak memory.
    unpart = 0
    block = max(1, int(4e6 // max(1, t.k * t.k)))
    for start in range(0, t.n, block):
        chunk = t.data[start : start + block]
        diff = chunk[:, :, None, :] - b.centers[None, None, :, :]
        dist = np.linalg.norm(diff, axis=3)
        inside = dist <= b.radii[None, None, :]
        ok = np.all(inside.sum(axis=1) == 1, axis=1)
        unpart += int(np.sum(~ok))
    return unpart


def nearest_center_labels(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """argmin_j ||x - c_j|| per point, lowest index on ties."""
    points = np.asarray(points, dtype=float)
    centers = np.asarray(centers, dtype=float)
    # ||x - c||^2 = ||x||^2 - 2 x.c + ||c||^2; the ||x||^2 term is constant per row.
    cross = points @ centers.T
    sq = -2.0 * cross + np.sum(centers**2, axis=1)[None, :]
    return np.argmin(sq, axis=1)


def partition_of(t: TupleDatabase, anchor: int = 0) -> np.ndarray:
    """Labels of Points(T) by nearest point of the anchor tuple.

    When T is partitioned by Delta-far balls with Delta > 3 the result is
    independent of the anchor up to cluster renaming; the operation itself is
    total and tolerates arbitrary input.
    """
    return nearest_center_labels(t.points(), t.data[anchor])


def _compute_m_core(n: int, epsilon: float, delta: float, beta: float) -> TesterParams | None:
    rhs_num = 2.0 * math.log(1.0 / delta) + math.log(1.0 / beta)
    for m in range(1, n + 1):
        arg = epsilon * n / (2.0 * m) - 3.0
        if arg <= 1.0:
            break  # eps1 <= 0 here and for all larger m
        eps1 = math.log(arg)
        if m > rhs_num / eps1:
            ell = (2.0 * m / epsilon) * math.log(m / (beta * delta))
            return TesterParams(m=m, eps1=eps1, eps2=epsilon / 2.0, ell=ell)
    return None


def compute_m(n: int, epsilon: float, delta: float, beta: float) -> TesterParams:
    """The tester's subsample size m: the smallest integer with
    m > (1/eps1)(2 ln(1/delta) + ln(1/beta)) where eps1 = ln(eps*n/(2m) - 3) > 0.

    Also fills eps2 = eps/2 and ell = (2m/eps) ln(m/(beta*delta)).
    """
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    if epsilon <= 0 or not (0 < delta <= 1) or not (0 < beta <= 1):
        raise ParameterError("compute_m requires epsilon > 0 and delta, beta in (0, 1]")
    params = _compute_m_core(n, epsilon, delta, beta)
    if params is not None:
        return params
    min_n = _min_feasible_n(epsilon, delta, beta)
    raise DatabaseTooSmallError(
        f"no feasible subsample size m for n={n} at (eps={epsilon}, delta={delta}, beta={beta}); "
        f"smallest workable n is {min_n}",
        min_feasible_n=min_n,
    )


def _m_feasible(n: int, epsilon: float, delta: float, beta: float) -> bool:
    return _compute_m_core(n, epsilon, delta, beta) is not None


def _min_feasible_n(epsilon: float, delta: float, beta: float, cap: int = 10**9) -> int:
    lo, hi = 1, 2
    while hi <= cap and not _m_feasible(hi, epsilon, delta, beta):
        lo, hi = hi, hi * 2
    if hi > cap:
        raise ParameterError("no feasible n found below the search cap")
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if _m_feasible(mid, epsilon, delta, beta):
            hi = mid
        else:
            lo = mid
    return hi


def private_test_close_tuples(
    t1: TupleDatabase,
    t2: TupleDatabase,
    eps1: float,
    eps2: float,
    beta: float,
    delta_sep: float,
    rng: RandomStream,
    lambda_bound: float | None = None,
) -> TestOutcome:
    """The private closeness tester over anchor tuples T1 against database T2.

    For each anchor X in T1, builds the Delta-far balls around X, counts the
    tuples of T2 not partitioned by them, and passes X iff the noisy count is
    at most (m/eps2) ln(m/beta). Succeeds iff the noisy number of passing
    anchors clears m - (1/eps1) ln(1/beta); on success returns the balls of the
    first passing anchor (or empty balls when none passed).
    """
    if delta_sep <= 6:
        raise ParameterError(f"delta_sep must exceed 6, got {delta_sep}")
    if eps1 <= 0 or eps2 <= 0:
        raise ParameterError("eps1 and eps2 must be positive")
    if not (0 < beta <= 1):
        raise ParameterError(f"beta must lie in (0, 1], got {beta}")
    if (t1.k, t1.d) != (t2.k, t2.d):
        raise ParameterError("T1 and T2 must share (k, d)")
    rng.warn_if_zero_noise("private_test_close_tuples")

    m = t1.n
    threshold = (m / eps2) * math.log(m / beta)
    passes = np.zeros(m, dtype=bool)
    ball_sets: list[BallSet] = []
    for i in range(m):
        balls = balls_from_tuple(t1.data[i], delta_sep, lambda_bound=lambda_bound)
        ball_sets.append(balls)
        l_x = count_unpartitioned(t2, balls)
        l_hat = l_x + laplace_noise(m / eps2, rng.split(i))
        passes[i] = l_hat <= threshold

    s = int(np.sum(passes))
    s_hat = s + laplace_noise(1.0 / eps1, rng.split(m))
    if s_hat < m - (1.0 / eps1) * math.log(1.0 / beta):
        return TestOutcome(STATUS_FAILURE, BallSet.empty_balls(t1.k, t1.d, delta_sep))
    first = int(np.argmax(passes)) if s > 0 else None
    if first is None:
        return TestOutcome(STATUS_SUCCESS, BallSet.empty_balls(t1.k, t1.d, delta_sep))
    return TestOutcome(STATUS_SUCCESS, ball_sets[first])


def private_test_partition(
    t: TupleDatabase,
    budget: PrivacyBudget,
    beta: float,
    delta_sep: float,
    rng: RandomStream,
    lambda_bound: float | None = None,
) -> TestOutcome:
    """The private partition tester: subsample m anchors without replacement,
    then run the closeness tester with eps1 from the subsample analysis and
    eps2 = eps/2.
    """
    params = compute_m(t.n, budget.epsilon, budget.delta, beta)
    idx = rng.generator.choice(t.n, size=params.m, replace=False)
    t1 = t.subset(idx)
    return private_test_close_tuples(
        t1, t, params.eps1, params.eps2, beta, delta_sep, rng.split(0), lambda_bound=lambda_bound
    )


def _require_sample_size(n: int, budget: PrivacyBudget, beta: float) -> float:
    """Enforce n >= 2*ell(n, eps/2, delta/4, beta/2) + 2; returns that ell."""
    params = compute_m(n, budget.epsilon / 2.0, budget.delta / 4.0, beta / 2.0)
    if n < 2.0 * params.ell + 2.0:
        raise DatabaseTooSmallError(
            f"privacy requires n >= 2*ell + 2 = {2.0 * params.ell + 2.0:.1f} tuples, got {n}"
        )
    return params.ell


def private_k_averages(
    t: TupleDatabase,
    budget: PrivacyBudget,
    beta: float,
    r_min: float,
    lambda_bound: float,
    rng: RandomStream,
) -> CentersResult:
    """Private k-tuple clustering by noisy cluster averages.

    Runs the partition tester at (eps/2, delta/4, beta/2, Delta=7); on success,
    clusters Points(T) by nearest ball center and estimates each cluster average
    with the bounded-domain averager at the per-cluster split
    eps_hat = eps/(4k(ell+1)), delta_hat = delta/(8k e^{eps/2} (ell+1)),
    beta_hat = beta/(2k).
    """
    if not (0 < r_min <= lambda_bound):
        raise ParameterError(f"r_min must lie in (0, lambda], got {r_min}")
    ell = _require_sample_size(t.n, budget, beta)
    if t.max_norm() > lambda_bound * (1 + 1e-9):
        raise ParameterError("all tuple points must lie inside B(0, lambda)")
    rng.warn_if_zero_noise("private_k_averages")

    outcome = private_test_partition(
        t,
        PrivacyBudget(budget.epsilon / 2.0, budget.delta / 4.0),
        beta / 2.0,
        delta_sep=7.0,
        rng=rng.split(0),
        lambda_bound=lambda_bound,
    )
    if not outcome.success:
        return CentersResult(STATUS_FAILURE, None, {"ell": ell})

    k, d = t.k, t.d
    centers = outcome.balls.centers if not outcome.balls.empty else np.zeros((k, d))
    labels = nearest_center_labels(t.points(), centers)

    eps_hat = budget.epsilon / (4.0 * k * (ell + 1.0))
    delta_hat = budget.delta / (8.0 * k * math.exp(budget.epsilon / 2.0) * (ell + 1.0))
    beta_hat = beta / (2.0 * k)
    bounds = DomainBounds(lambda_bound, r_min, r_min)
    avg_budget = PrivacyBudget(eps_hat, delta_hat)

    from .averaging import private_average_rd

    points = t.points()
    averages = np.empty((k, d))
    for i in range(k):
        averages[i] = private_average_rd(points[labels == i], bounds, avg_budget, beta_hat, rng.split(i + 1))
    return CentersResult(
        STATUS_SUCCESS,
        canonical_tuple(averages),
        {"ell": ell, "eps_hat": eps_hat, "delta_hat": delta_hat, "beta_hat": beta_hat},
    )


def private_k_noisy_centers(
    t: TupleDatabase,
    budget: PrivacyBudget,
    beta: float,
    delta_sep: float,
    rng: RandomStream,
    lambda_bound: float | None = None,
) -> CentersResult:
    """Private k-tuple clustering by Gaussian-perturbed selected centers.

    Runs the partition tester at (eps/2, delta/4, beta/2, delta_sep); on
    success, perturbs each center of the selected tuple's balls by Gaussian
    noise with sigma_i = (4 k lambda_i / eps) sqrt(2 ln(10k/delta)) where
    lambda_i = (2/Delta)(1 + gamma_i) min_{j!=i} ||c_i - c_j|| and gamma_i is a
    noisy scale estimate.
    """
    if budget.delta > 0.5:
        raise ParameterError(f"noisy centers requires delta <= 1/2, got {budget.delta}")
    if delta_sep <= 6:
        raise ParameterError(f"delta_sep must exceed 6, got {delta_sep}")
    # The privacy analysis wants n >= 2*ell + 2; running below the floor is
    # allowed but flagged, so callers reproducing smaller published setups can
    # still execute while seeing the shortfall.
    ell = compute_m(t.n, budget.epsilon / 2.0, budget.delta / 4.0, beta / 2.0).ell
    below_floor = t.n < 2.0 * ell + 2.0
    if below_floor:
        logger.warning(
            "noisy centers running below the privacy sample floor: n=%d < 2*ell+2=%.1f",
            t.n,
            2.0 * ell + 2.0,
        )
    rng.warn_if_zero_noise("private_k_noisy_centers")

    outcome = private_test_partition(
        t,
        PrivacyBudget(budget.epsilon / 2.0, budget.delta / 4.0),
        beta / 2.0,
        delta_sep=delta_sep,
        rng=rng.split(0),
        lambda_bound=lambda_bound,
    )
    if not outcome.success:
        return CentersResult(STATUS_FAILURE, None, {"ell": ell, "below_privacy_floor": below_floor})

    k, d = t.k, t.d
    eps, delta = budget.epsilon, budget.delta
    centers = outcome.balls.centers if not outcome.balls.empty else np.zeros((k, d))
    if k == 1:
        if lambda_bound is None:
            raise ParameterError("k = 1 requires lambda_bound for the distance convention")
        min_dists = np.array([2.0 * lambda_bound * delta_sep])
    else:
        min_dists = _pairwise_min_dists(centers)

    gamma_shift = (4.0 * k / eps) * math.log(4.0 * k / delta) + 1.0
    out = np.empty((k, d))
    sigmas = np.empty(k)
    for i in range(k):
        gamma_i = (4.0 / (delta_sep - 2.0)) * (laplace_noise(4.0 * k / eps, rng.split(i + 1)) + gamma_shift)
        lam_i = (2.0 / delta_sep) * (1.0 + gamma_i) * min_dists[i]
        # The additive shift in gamma_i makes a negative value exponentially
        # unlikely; floor at zero so the noise scale stays well defined.
        sigma_i = max(0.0, (4.0 * k * lam_i / eps) * math.sqrt(2.0 * math.log(10.0 * k / delta)))
        sigmas[i] = sigma_i
        out[i] = centers[i] + gaussian_noise_vec(sigma_i, d, rng.split(k + 1 + i))
    return CentersResult(
        STATUS_SUCCESS,
        canonical_tuple(out),
        {"ell": ell, "sigmas": sigmas.tolist(), "below_privacy_floor": below_floor},
    )


def is_good_solution(y, t: TupleDatabase, alpha: float = 0.0, r_min: float = 0.0, delta_sep: float = 7.0) -> bool:
    """True iff the candidate tuple induces exactly the partition of Points(T).

    The alpha / r_min / delta_sep arguments describe the closeness regime under
    which the classification consequence is guaranteed (alpha < Delta/2 - 1);
    the check itself is the exact partition comparison.
    """
    y = canonical_tuple(y)
    if y.shape != (t.k, t.d):
        raise ParameterError(f"candidate shape {y.shape} does not match database ({t.k}, {t.d})")
    ref = partition_of(t)
    got = nearest_center_labels(t.points(), y)
    mapping: dict[int, int] = {}
    for i in range(t.k):
        members = got[ref == i]
        if members.size == 0:
            return False
        vals = np.unique(members)
        if vals.size != 1:
            return False
        mapping[i] = int(vals[0])
    return len(set(mapping.values())) == t.k


def min_tuples_for_privacy(budget: PrivacyBudget, beta: float, cap: int = 10**7) -> int:
    """The smallest n with n >= 2*ell(n, eps/2, delta/4, beta/2) + 2."""

    def ok(n: int) -> bool:
        try:
            _require_sample_size(n, budget, beta)
            return True
        except DatabaseTooSmallError:
            return False

    hi = 8
    while hi <= cap and not ok(hi):
        hi *= 2
    if hi > cap:
        raise ParameterError(f"no feasible n found below the cap {cap}")
    lo = hi // 2
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    # ell is not perfectly monotone in n (m moves in integer steps); nail the
    # exact minimum with a local backward scan.
    while hi > 1 and ok(hi - 1):
        hi -= 1
    return hi


def alpha_bound(
    n: int,
    d: int,
    k: int,
    budget: PrivacyBudget,
    beta: float,
    lambda_bound: float,
    r_min: float,
    constant: float = 1.0,
) -> float:
    """The utility radius alpha of the k-averages algorithm:
    constant * d k ell sqrt(ln(k ell / delta)) / (eps n)
      * (sqrt(ln(d k ell / delta) ln(d k ell / beta)) + ln(lam d k / (r_min beta))).

    The universal constant is unstated by the analysis; it is exposed as a
    parameter (default 1) rather than guessed.
    """
    eps, delta = budget.epsilon, budget.delta
    ell = compute_m(n, eps / 2.0, delta / 4.0, beta / 2.0).ell
    lead = constant * d * k * ell * math.sqrt(math.log(k * ell / delta)) / (eps * n)
    inner = math.sqrt(math.log(d * k * ell / delta) * math.log(d * k * ell / beta)) + math.log(
        lambda_bound * d * k / (r_min * beta)
    )
    return lead * inner
