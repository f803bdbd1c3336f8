"""Private averaging on bounded 1D / Rd domains."""

import math

import numpy as np
import pytest

from dpcluster import (
    DomainBounds,
    NoiseMode,
    PrivacyBudget,
    RandomStream,
    bounding_segment_1d,
    interior_point_1d,
    private_average_1d,
    private_average_rd,
)
from dpcluster.averaging import grid_size, left_snap, right_snap


def _zero(seed=0):
    return RandomStream(seed, noise_mode=NoiseMode.ZERO_NOISE)


def test_grid_snapping():
    # Domain [-10, 10] with step 2: x = 3 snaps to 2 (left) and 4 (right).
    b = DomainBounds(10.0, 2.0, 2.0)
    assert grid_size(b) == 11
    assert left_snap(3.0, b) == 2.0
    assert right_snap(3.0, b) == 4.0
    assert left_snap(4.0, b) == 4.0
    assert right_snap(4.0, b) == 4.0
    assert left_snap(-10.0, b) == -10.0
    assert right_snap(10.0, b) == 10.0


def test_interior_point_concentrated_data():
    # 200 copies of 5.0 on a unit grid: an interior point must land in [4, 6]
    # (the snapped neighborhood of the common value) with high probability.
    b = DomainBounds(100.0, 1.0, 1.0)
    s = np.full(200, 5.0)
    r = RandomStream(3)
    vals = [interior_point_1d(s, b, 1.0, r.split(i)) for i in range(50)]
    assert all(4.0 <= v <= 6.0 for v in vals)


def test_interior_point_between_two_clumps():
    # Half the data at -8, half at 8: every grid point between them has full
    # depth, so the zero-noise answer is an actual interior point.
    b = DomainBounds(10.0, 1.0, 1.0)
    s = np.concatenate([np.full(100, -8.0), np.full(100, 8.0)])
    v = interior_point_1d(s, b, 1.0, _zero())
    assert -8.0 <= v <= 8.0


def test_interior_point_empty_input():
    b = DomainBounds(10.0, 1.0, 1.0)
    assert interior_point_1d(np.array([]), b, 1.0, _zero()) == -10.0
    v = interior_point_1d(np.array([]), b, 1.0, RandomStream(5))
    assert -10.0 <= v <= 10.0


def test_bounding_segment_captures_mass():
    # 500 uniform points in [-20, 20], Lambda=100, g=0.02, beta=0.1, eps=1:
    # the noisy interior points each miss at most ~2*side points, so at least
    # 500 - 2*ceil(side) samples must lie inside, and the segment cannot be
    # much wider than the data spread plus 2g.
    b = DomainBounds(100.0, 0.02, 0.02)
    gen = RandomStream(9).generator
    s = gen.uniform(-20.0, 20.0, size=500)
    side = (4.0 / 1.0) * math.log(4.0 * 100.0 / (0.02 * 0.1)) + 1.0  # ~49.8
    seg = bounding_segment_1d(s, b, 1.0, 0.1, RandomStream(11))
    inside = np.sum((s >= seg.lo) & (s <= seg.hi))
    assert inside >= 500 - 2 * math.ceil(side)
    assert seg.hi - seg.lo <= (s.max() - s.min()) + 2 * 0.02 + 1e-9


def test_bounding_segment_zero_spread():
    # All points equal: the segment collapses to a few grid steps around them.
    b = DomainBounds(100.0, 0.01, 0.01)
    s = np.full(2000, 7.0)
    seg = bounding_segment_1d(s, b, 1.0, 0.1, RandomStream(13))
    assert seg.hi - seg.lo <= 4 * 0.01 + 1e-9
    assert seg.lo <= 7.0 <= seg.hi


def test_bounding_segment_tiny_database_degenerates():
    # With fewer than 2*side points the output is a single noisy grid point.
    b = DomainBounds(100.0, 0.02, 0.02)
    seg = bounding_segment_1d(np.array([1.0, 2.0, 3.0]), b, 1.0, 0.1, RandomStream(15))
    assert seg.lo == seg.hi


def test_private_average_1d_accuracy():
    # 1000 copies of 7.0: the average should be within 0.05 almost always.
    b = DomainBounds(100.0, 0.05, 0.05)
    s = np.full(1000, 7.0)
    budget = PrivacyBudget(1.0, 1e-8)
    r = RandomStream(17)
    errs = [abs(private_average_1d(s, b, budget, 0.1, r.split(i)) - 7.0) for i in range(200)]
    assert np.mean(np.array(errs) <= 0.05) >= 0.95


def test_private_average_1d_error_scales_with_spread():
    # The Gaussian-stage noise scale is proportional to the bounding-segment
    # width, so tight data must average far more accurately than spread data.
    b = DomainBounds(1000.0, 0.05, 0.05)
    budget = PrivacyBudget(0.5, 1e-8)
    gen = RandomStream(19).generator
    tight = gen.uniform(49.9, 50.1, size=400)
    wide = gen.uniform(-900.0, 900.0, size=400)
    r = RandomStream(21)
    tight_err = np.mean([abs(private_average_1d(tight, b, budget, 0.1, r.split(i)) - tight.mean()) for i in range(100)])
    wide_err = np.mean([abs(private_average_1d(wide, b, budget, 0.1, r.split(100 + i)) - wide.mean()) for i in range(100)])
    assert tight_err < wide_err / 10


def test_private_average_1d_lambda_insensitive():
    # Accuracy depends on the data spread, not the domain radius.
    budget = PrivacyBudget(1.0, 1e-8)
    s = np.full(1000, 3.0)
    errs = []
    for lam in (10.0, 10_000.0):
        b = DomainBounds(lam, 0.05, 0.05)
        r = RandomStream(23)
        errs.append(np.mean([abs(private_average_1d(s, b, budget, 0.1, r.split(i)) - 3.0) for i in range(50)]))
    assert errs[1] <= 10 * max(errs[0], 1e-3)


def test_private_average_zero_noise_exact():
    b = DomainBounds(100.0, 0.01, 0.01)
    s = np.tile([1.0, 2.0, 3.0, 4.0], 250)
    out = private_average_1d(s, b, PrivacyBudget(1.0, 1e-8), 0.1, _zero())
    assert out == pytest.approx(2.5, abs=0.05)


def test_private_average_rd_zero_noise_exact():
    b = DomainBounds(100.0, 0.01, 0.01)
    s = np.array([[1.0, -2.0], [3.0, -4.0], [5.0, -6.0]])
    out = private_average_rd(s, b, PrivacyBudget(1.0, 1e-8), 0.1, _zero())
    assert np.allclose(out, [3.0, -4.0], atol=0.05)


def test_private_average_rd_accuracy():
    b = DomainBounds(200.0, 0.1, 0.1)
    gen = RandomStream(27).generator
    s = np.array([10.0, -5.0, 0.0]) + gen.normal(0, 0.5, size=(2000, 3))
    out = private_average_rd(s, b, PrivacyBudget(1.0, 1e-8), 0.1, RandomStream(29))
    assert np.linalg.norm(out - s.mean(axis=0)) < 1.0


def test_private_average_rd_rejects_out_of_domain():
    b = DomainBounds(1.0, 0.1, 0.1)
    with pytest.raises(Exception):
        private_average_rd(np.array([[5.0, 5.0]]), b, PrivacyBudget(1.0, 1e-8), 0.1, RandomStream(31))
