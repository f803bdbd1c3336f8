"""Private estimation on bounded domains: interior point, bounding segment,
and one/multi-dimensional private averaging.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .primitives import (
    ParameterError,
    PrivacyBudget,
    RandomStream,
    choice_from_log_weights,
    gaussian_noise_vec,
    gaussian_sigma_for,
)


@dataclass(frozen=True)
class DomainBounds:
    """Bounded-domain parameters: l2 bound lam, radius floor r_min, grid step g."""

    lam: float
    r_min: float
    grid_step: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ParameterError(f"lambda bound must be a finite positive real, got {self.lam}")
        if not (0 <= self.r_min <= self.lam):
            raise ParameterError(f"r_min must lie in [0, lambda], got {self.r_min}")
        if not (0 <= self.grid_step <= self.lam):
            raise ParameterError(f"grid step must lie in [0, lambda], got {self.grid_step}")


@dataclass(frozen=True)
class Segment:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not (self.lo <= self.hi):
            raise ParameterError(f"segment requires lo <= hi, got [{self.lo}, {self.hi}]")

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)


def grid_size(bounds: DomainBounds) -> int:
    """Number of points in the grid G = {-lam, -lam+g, ..., -lam + ceil(2*lam/g)*g}."""
    return int(math.ceil(2.0 * bounds.lam / bounds.grid_step)) + 1


def left_snap_index(x: np.ndarray, bounds: DomainBounds) -> np.ndarray:
    """Index j of left(x) = -lam + floor((x+lam)/g) * g."""
    return np.floor((np.asarray(x, dtype=float) + bounds.lam) / bounds.grid_step).astype(np.int64)


def right_snap_index(x: np.ndarray, bounds: DomainBounds) -> np.ndarray:
    """Index j of right(x) = -lam + ceil((x+lam)/g) * g."""
    return np.ceil((np.asarray(x, dtype=float) + bounds.lam) / bounds.grid_step).astype(np.int64)


def left_snap(x: float, bounds: DomainBounds) -> float:
    return -bounds.lam + float(left_snap_index(np.asarray([x]), bounds)[0]) * bounds.grid_step


def right_snap(x: float, bounds: DomainBounds) -> float:
    return -bounds.lam + float(right_snap_index(np.asarray([x]), bounds)[0]) * bounds.grid_step


def interior_point_1d(s, bounds: DomainBounds, epsilon: float, rng: RandomStream) -> float:
    """A private interior point of a multiset of reals in [-lam, lam].

    Runs the exponential mechanism over the grid G with quality
    q(s, y) = min(#{x : left(x) <= y}, #{x : right(x) >= y}), using the sorted
    candidate-run construction so the runtime is near-linear in |s| rather than
    linear in |G|. With probability at least 1 - 2(lam/g + 1) exp(-eps|s|/4) the
    output lies in [min(s) - g, max(s) + g]. An empty input yields a uniform
    grid point (ZeroNoise: the lowest grid point).
    """
    if bounds.grid_step <= 0:
        raise ParameterError("interior point requires a positive grid step")
    if not (math.isfinite(epsilon) and epsilon > 0):
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    s = np.asarray(s, dtype=float).ravel()
    if s.size and (np.min(s) < -bounds.lam or np.max(s) > bounds.lam):
        raise ParameterError("interior point input must lie in [-lam, lam]")

    g = bounds.grid_step
    last = grid_size(bounds) - 1  # grid indices run 0 .. last

    if s.size == 0:
        if rng.zero_noise:
            return -bounds.lam
        j = int(rng.generator.integers(0, last + 1))
        return -bounds.lam + j * g

    lefts = np.sort(left_snap_index(s, bounds))
    rights = np.sort(right_snap_index(s, bounds))

    # Candidate indices: left(x)-g, left(x), right(x), right(x)+g for each x,
    # bracketed by the sentinels -lam-g and lam+g (indices -1 and last+1).
    cand = np.unique(np.concatenate([lefts - 1, lefts, rights, rights + 1]))
    cand = cand[(cand >= -1) & (cand <= last + 1)]
    boundaries = np.unique(np.concatenate([[-1], cand, [last + 1]]))

    # Runs are the half-open index intervals (boundaries[i-1], boundaries[i]];
    # q is constant on the grid points inside each run.
    prev = boundaries[:-1]
    cur = boundaries[1:]
    run_lo = np.maximum(prev + 1, 0)
    run_hi = np.minimum(cur, last)
    counts = np.maximum(0, run_hi - run_lo + 1)
    keep = counts > 0
    run_lo, run_hi, counts = run_lo[keep], run_hi[keep], counts[keep]

    rep = run_hi  # representative grid index per run
    n_left = np.searchsorted(lefts, rep, side="right")           # #{x : left(x) <= rep}
    n_right = rights.size - np.searchsorted(rights, rep, side="left")  # #{x : right(x) >= rep}
    q = np.minimum(n_left, n_right).astype(float)

    if rng.zero_noise:
        # Deterministic hook: the lowest grid point among maximal-quality runs.
        i = int(np.argmax(q))
        return -bounds.lam + int(run_lo[i]) * g

    log_w = (epsilon * q / 2.0) + np.log(counts.astype(float))
    i = choice_from_log_weights(log_w, rng)
    j = int(rng.generator.integers(run_lo[i], run_hi[i] + 1))
    return -bounds.lam + j * g


def bounding_segment_1d(s, bounds: DomainBounds, epsilon: float, beta: float, rng: RandomStream) -> Segment:
    """A private segment [x, y] containing all but O(log/eps) of the input points.

    Construction: interior points of the (4/eps)ln(4*lam/(g*beta)) + 1 smallest
    and largest points, widened by one grid step on each side. Inputs below the
    size threshold fall back to a degenerate segment [z, z] around an interior
    point of the whole multiset.
    """
    if bounds.grid_step <= 0:
        raise ParameterError("bounding segment requires a positive grid step")
    if not (0 < beta <= 1):
        raise ParameterError(f"beta must lie in (0, 1], got {beta}")
    s = np.asarray(s, dtype=float).ravel()
    g = bounds.grid_step

    side = (4.0 / epsilon) * math.log(4.0 * bounds.lam / (g * beta)) + 1.0
    if s.size < 2.0 * side:
        z = interior_point_1d(s, bounds, epsilon, rng)
        return Segment(z, z)

    c = min(int(math.ceil(side)), s.size // 2)
    ordered = np.sort(s)
    z0 = interior_point_1d(ordered[:c], bounds, epsilon, rng.split(0))
    z1 = interior_point_1d(ordered[-c:], bounds, epsilon, rng.split(1))
    lo, hi = z0 - g, z1 + g
    if lo > hi:  # possible only on failure of an interior-point stage
        lo, hi = hi, lo
    return Segment(lo, hi)


def private_average_1d(s, bounds: DomainBounds, budget: PrivacyBudget, beta: float, rng: RandomStream) -> float:
    """A private estimate of the average of a multiset of reals in [-lam, lam].

    Two stages: a bounding segment at (eps/2, beta/2) with grid step r_min, then
    the Gaussian mechanism at (eps/2, delta) on the average of the points inside
    the segment, with sensitivity (segment width)/|S'|. If no point falls inside
    the segment, returns the segment midpoint.
    """
    if not (0 < bounds.r_min <= bounds.lam):
        raise ParameterError(f"private averaging requires r_min in (0, lam], got {bounds.r_min}")
    s = np.asarray(s, dtype=float).ravel()
    seg_bounds = DomainBounds(bounds.lam, bounds.r_min, bounds.r_min)
    seg = bounding_segment_1d(s, seg_bounds, epsilon=budget.epsilon / 2.0, beta=beta / 2.0, rng=rng.split(0))

    inside = s[(s >= seg.lo) & (s <= seg.hi)]
    if inside.size == 0:
        return seg.midpoint
    sensitivity = (seg.hi - seg.lo) / inside.size
    sigma = gaussian_sigma_for(PrivacyBudget(budget.epsilon / 2.0, budget.delta), sensitivity)
    noise = float(gaussian_noise_vec(sigma, 1, rng.split(1))[0])
    return float(np.mean(inside)) + noise


def private_average_rd(s, bounds: DomainBounds, budget: PrivacyBudget, beta: float, rng: RandomStream) -> np.ndarray:
    """A private estimate of the average of points inside the l2 ball B(0, lam).

    Runs private_average_1d per coordinate with the advanced-composition split
    eps_tilde = eps / (2 sqrt(2 d ln(2/delta))), delta_tilde = delta/d,
    beta_tilde = beta/d.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 2:
        raise ParameterError(f"expected a 2-d point array, got shape {s.shape}")
    d = s.shape[1]
    if s.shape[0] and float(np.max(np.linalg.norm(s, axis=1))) > bounds.lam * (1 + 1e-9):
        raise ParameterError("all points must lie inside the l2 ball B(0, lam)")

    eps_tilde = budget.epsilon / (2.0 * math.sqrt(2.0 * d * math.log(2.0 / budget.delta)))
    coord_budget = PrivacyBudget(eps_tilde, budget.delta / d)
    beta_tilde = beta / d
    out = np.empty(d)
    for j in range(d):
        out[j] = private_average_1d(s[:, j], bounds, coord_budget, beta_tilde, rng.split(j))
    return out
