"""k-tuple machinery: balls, partition tests, the private tester, and the
two k-tuple clustering algorithms."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpcluster import (
    BallSet,
    DatabaseTooSmallError,
    NoiseMode,
    ParameterError,
    PrivacyBudget,
    RandomStream,
    TupleDatabase,
    alpha_bound,
    balls_from_tuple,
    compute_m,
    count_unpartitioned,
    is_far_balls,
    is_good_solution,
    min_tuples_for_privacy,
    partition_of,
    private_k_averages,
    private_k_noisy_centers,
    private_test_close_tuples,
    private_test_partition,
    tuple_partitioned_by,
)
from dpcluster.tuples import canonical_tuple

DELTA_TINY = math.exp(-28)


def _pair_db(n, a=0.0, b=1000.0, jitter=0.0, seed=1, d=1):
    gen = RandomStream(seed).generator
    ca = np.full((n, d), 0.0)
    cb = np.full((n, d), 0.0)
    ca[:, 0] = a
    cb[:, 0] = b
    arr = np.stack([ca, cb], axis=1)
    if jitter:
        arr = arr + gen.normal(0, jitter, size=arr.shape)
    return TupleDatabase(arr)


def test_canonical_tuple_sorts_lexicographically():
    out = canonical_tuple([[3.0, 0.0], [1.0, 2.0], [1.0, -1.0]])
    assert out.tolist() == [[1.0, -1.0], [1.0, 2.0], [3.0, 0.0]]


def test_database_shape_and_points():
    db = TupleDatabase([[0.0, 14.0], [1.0, 2.0]])  # 2 tuples of 2 scalars
    assert (db.n, db.k, db.d) == (2, 2, 1)
    assert db.points().shape == (4, 1)
    with pytest.raises(ParameterError):
        TupleDatabase(np.array([[np.inf, 1.0]]))


def test_balls_from_tuple_1d():
    # Tuple {0, 14} with Delta = 7: both radii are 14/7 = 2.
    b = balls_from_tuple([[0.0], [14.0]], 7.0)
    assert b.radii.tolist() == [2.0, 2.0]
    assert b.centers.ravel().tolist() == [0.0, 14.0]


def test_balls_from_tuple_2d():
    # {(0,0), (0,7), (7,0)} with Delta = 7: nearest-neighbor distance is 7
    # for every point, so each radius is 1.
    b = balls_from_tuple([[0.0, 0.0], [0.0, 7.0], [7.0, 0.0]], 7.0)
    assert np.allclose(b.radii, 1.0)


def test_balls_k1_needs_lambda():
    b = balls_from_tuple([[5.0]], 7.0, lambda_bound=10.0)
    assert b.radii.tolist() == [20.0]
    with pytest.raises(ParameterError):
        balls_from_tuple([[5.0]], 7.0)


def test_is_far_balls():
    # Balls at 0 and 14 with radius 2 are exactly 7-far (14 >= 7*2).
    b = balls_from_tuple([[0.0], [14.0]], 7.0)
    assert is_far_balls(b, 7.0)
    assert not is_far_balls(b, 7.0 + 1e-9)
    assert not is_far_balls(BallSet.empty_balls(2, 1, 7.0), 7.0)
    assert is_far_balls(balls_from_tuple([[1.0]], 7.0, lambda_bound=5.0), 7.0)


def test_tuple_partitioned_by():
    b = balls_from_tuple([[0.0], [14.0]], 7.0)  # radii 2
    assert tuple_partitioned_by([[1.0], [13.0]], b)
    # Boundary is inclusive.
    assert tuple_partitioned_by([[2.0], [12.0]], b)
    # Both points in one ball: not a partition.
    assert not tuple_partitioned_by([[0.5], [1.0]], b)
    # A point outside every ball: not a partition.
    assert not tuple_partitioned_by([[1.0], [7.0]], b)
    # Empty balls partition nothing.
    assert not tuple_partitioned_by([[1.0], [13.0]], BallSet.empty_balls(2, 1, 7.0))


def test_count_unpartitioned():
    b = balls_from_tuple([[0.0], [14.0]], 7.0)
    db = TupleDatabase([[0.0, 14.0], [1.0, 13.0], [0.0, 7.0], [50.0, 60.0]])
    assert count_unpartitioned(db, b) == 2
    assert count_unpartitioned(db, BallSet.empty_balls(2, 1, 7.0)) == 4


def test_partition_anchor_invariance():
    db = _pair_db(50, 0.0, 1000.0, jitter=1.0, d=3)
    p0 = partition_of(db, anchor=0)
    for anchor in (1, 7, 49):
        pa = partition_of(db, anchor=anchor)
        # Same partition up to renaming: labels agree or are globally flipped.
        agree = np.mean(p0 == pa)
        assert agree in (0.0, 1.0)


@settings(max_examples=30, deadline=None)
@given(st.permutations(list(range(4))))
def test_canonicalization_is_order_invariant(perm):
    pts = np.array([[3.0, 1.0], [-2.0, 0.5], [0.0, 0.0], [3.0, -9.0]])
    assert np.array_equal(canonical_tuple(pts[perm]), canonical_tuple(pts))


def test_compute_m_oracle():
    # n=3781, eps=1, delta=e^-28, beta=0.05: the smallest feasible subsample
    # size is m = 12, and the stated identities hold at the output.
    p = compute_m(3781, 1.0, DELTA_TINY, 0.05)
    assert p.m == 12
    assert p.eps1 == pytest.approx(math.log(1.0 * 3781 / (2 * p.m) - 3.0))
    assert p.m > (2.0 * math.log(1.0 / DELTA_TINY) + math.log(1.0 / 0.05)) / p.eps1
    assert p.ell == pytest.approx((2.0 * p.m / 1.0) * math.log(p.m / (0.05 * DELTA_TINY)))


def test_compute_m_monotone_in_n():
    ms = [compute_m(n, 1.0, DELTA_TINY, 0.05).m for n in (2000, 4000, 8000, 16000)]
    assert ms == sorted(ms, reverse=True)


def test_compute_m_infeasible_raises():
    with pytest.raises(DatabaseTooSmallError):
        compute_m(50, 1.0, DELTA_TINY, 0.05)


def test_tester_accepts_clustered_data():
    # Every tuple is (near) {0, 1000}: each anchor partitions everything, so
    # Success with nonempty balls should be essentially certain.
    db = _pair_db(200, jitter=0.5)
    successes = 0
    nonempty = 0
    for i in range(20):
        out = private_test_close_tuples(db.subset(range(10)), db, 2.0, 0.5, 0.05, 7.0, RandomStream(100 + i))
        successes += out.success
        nonempty += out.success and not out.balls.empty
    assert successes == 20
    assert nonempty == 20


def test_tester_rejects_unstructured_data():
    # Tuples drawn uniformly at random share no common partition.
    gen = RandomStream(3).generator
    db = TupleDatabase(gen.uniform(-1000, 1000, size=(400, 2, 1)))
    failures = sum(
        not private_test_close_tuples(db.subset(range(10)), db, 2.0, 0.5, 0.05, 7.0, RandomStream(200 + i)).success
        for i in range(20)
    )
    assert failures >= 18


def test_tester_zero_noise_deterministic():
    db = _pair_db(100, jitter=0.5)
    r = RandomStream(5, noise_mode=NoiseMode.ZERO_NOISE)
    out = private_test_close_tuples(db.subset(range(5)), db, 2.0, 0.5, 0.05, 7.0, r)
    assert out.success and not out.balls.empty
    assert count_unpartitioned(db, out.balls) == 0


def test_tester_parameter_gates():
    db = _pair_db(20)
    with pytest.raises(ParameterError):
        private_test_close_tuples(db, db, 2.0, 0.5, 0.05, 6.0, RandomStream(1))
    with pytest.raises(ParameterError):
        private_test_close_tuples(db, db, -1.0, 0.5, 0.05, 7.0, RandomStream(1))
    with pytest.raises(ParameterError):
        private_test_close_tuples(db, db, 2.0, 0.5, 1.5, 7.0, RandomStream(1))


def test_partition_tester_end_to_end():
    db = _pair_db(6000, jitter=0.5)
    out = private_test_partition(db, PrivacyBudget(1.0, DELTA_TINY), 0.05, 7.0, RandomStream(7))
    assert out.success and not out.balls.empty


def test_min_tuples_fixed_point():
    # The returned n satisfies the privacy floor; n - 1 does not.
    budget = PrivacyBudget(1.0, DELTA_TINY)
    n = min_tuples_for_privacy(budget, 0.05)

    def feasible(m):
        try:
            ell = compute_m(m, 0.5, DELTA_TINY / 4.0, 0.025).ell
        except DatabaseTooSmallError:
            return False
        return m >= 2.0 * ell + 2.0

    assert feasible(n)
    assert not feasible(n - 1)


def test_min_tuples_monotone_in_epsilon():
    ns = [min_tuples_for_privacy(PrivacyBudget(e, DELTA_TINY), 0.05) for e in (0.5, 1.0, 2.0)]
    assert ns == sorted(ns, reverse=True)


def test_private_k_averages_zero_noise_recovers_centers():
    # Under the zero-noise hook the pipeline reduces to exact cluster averages
    # (up to grid snapping in the averager).
    budget = PrivacyBudget(1.0, DELTA_TINY)
    n = min_tuples_for_privacy(budget, 0.05)
    db = _pair_db(n, 0.0, 1000.0, jitter=0.5)
    res = private_k_averages(db, budget, 0.05, 0.1, 2048.0, RandomStream(11, noise_mode=NoiseMode.ZERO_NOISE))
    assert res.success
    got = np.sort(res.centers.ravel())
    assert abs(got[0] - 0.0) < 0.5
    assert abs(got[1] - 1000.0) < 0.5


def test_private_k_averages_real_noise_structure():
    # With real noise the per-cluster budget split eps/(4k(ell+1)) is tiny,
    # so only the structure of the output is checked, not its accuracy.
    budget = PrivacyBudget(1.0, DELTA_TINY)
    n = min_tuples_for_privacy(budget, 0.05)
    db = _pair_db(n, 0.0, 1000.0, jitter=0.5)
    res = private_k_averages(db, budget, 0.05, 0.1, 2048.0, RandomStream(11))
    assert res.success
    assert res.centers.shape == (2, 1)
    assert np.all(np.abs(res.centers) <= 2048.0)
    assert res.info["eps_hat"] < budget.epsilon


def test_private_k_averages_too_small_raises():
    db = _pair_db(100)
    with pytest.raises(DatabaseTooSmallError):
        private_k_averages(db, PrivacyBudget(1.0, DELTA_TINY), 0.05, 0.1, 2048.0, RandomStream(1))


def test_private_k_noisy_centers_recovers_centers():
    budget = PrivacyBudget(1.0, 0.01)
    db = _pair_db(5000, 0.0, 1000.0, jitter=0.1)
    res = private_k_noisy_centers(db, budget, 0.05, 1100.0, RandomStream(13), lambda_bound=2048.0)
    assert res.success
    got = np.sort(res.centers.ravel())
    # sigma_i here is ~70, so 400 is a comfortable multiple of it.
    assert abs(got[0] - 0.0) < 400.0
    assert abs(got[1] - 1000.0) < 400.0
    assert all(s >= 0.0 for s in res.info["sigmas"])


def test_private_k_noisy_centers_below_floor_flagged():
    budget = PrivacyBudget(1.0, DELTA_TINY)
    db = _pair_db(3781, 0.0, 1000.0, jitter=0.5)
    res = private_k_noisy_centers(db, budget, 0.05, 400.0, RandomStream(15), lambda_bound=2048.0)
    assert res.success
    assert res.info["below_privacy_floor"] is True


def test_private_k_noisy_centers_delta_gate():
    db = _pair_db(100)
    with pytest.raises(ParameterError):
        private_k_noisy_centers(db, PrivacyBudget(1.0, 0.6), 0.05, 400.0, RandomStream(1), lambda_bound=10.0)


def test_is_good_solution():
    db = _pair_db(50, 0.0, 1000.0, jitter=0.5)
    assert is_good_solution(np.array([[1.0], [999.0]]), db)
    # Both candidate centers inside one cluster split it: not a good solution.
    assert not is_good_solution(np.array([[-0.2], [0.2]]), db)


def test_alpha_bound_monotonicity():
    budget = PrivacyBudget(1.0, 1e-9)
    a_small = alpha_bound(10**6, 2, 3, budget, 0.05, 1000.0, 0.1)
    a_large = alpha_bound(4 * 10**6, 2, 3, budget, 0.05, 1000.0, 0.1)
    assert a_large < a_small
    assert alpha_bound(10**6, 4, 3, budget, 0.05, 1000.0, 0.1) > a_small
    assert alpha_bound(10**6, 2, 3, budget, 0.05, 1000.0, 0.1, constant=2.0) == pytest.approx(2 * a_small)


def test_jsonl_round_trip(tmp_path):
    db = _pair_db(10, 0.0, 50.0, jitter=1.0, d=2)
    path = tmp_path / "tuples.jsonl"
    db.to_jsonl(path)
    back = TupleDatabase.from_jsonl(path, lambda_bound=100.0)
    assert np.allclose(back.data, db.data)
    with pytest.raises(ParameterError):
        TupleDatabase.from_jsonl(path, lambda_bound=1.0)
