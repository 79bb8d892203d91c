import numpy as np
import pytest

from interlace.lattice import (
    Ball,
    RngStream,
    SiteSet,
    pack_points,
    random_steps,
    sup_norm,
    unpack_keys,
    walk_fixed,
    walk_until,
)


def test_sup_norm_examples():
    assert sup_norm(np.zeros(5, dtype=int)) == 0
    assert sup_norm(np.array([1, -3, 2])) == 3


def test_sup_norm_sign_symmetry():
    rng = np.random.default_rng(0)
    x = rng.integers(-50, 51, size=(1000, 4))
    assert np.array_equal(sup_norm(x), sup_norm(-x))


def test_dimension_guard():
    with pytest.raises(ValueError):
        walk_fixed(np.zeros(2, dtype=int), 5, RngStream(0, 0))
    with pytest.raises(ValueError):
        walk_fixed(np.zeros(9, dtype=int), 5, RngStream(0, 0))


def test_ball_membership_and_points():
    b = Ball(np.array([1, -1, 0]), 2)
    pts = b.points()
    assert pts.shape == (125, 3)
    assert b.contains(pts).all()
    assert not b.contains(np.array([[4, 0, 0]]))[0]


def test_pack_unpack_roundtrip():
    rng = np.random.default_rng(1)
    pts = rng.integers(-7, 8, size=(500, 5))
    keys = pack_points(pts, 7, 5)
    assert np.array_equal(unpack_keys(keys, 7, 5), pts)


def test_siteset_contains_and_union():
    a = SiteSet.from_points(np.array([[0, 0, 0], [1, 2, 3]]))
    b = SiteSet.from_points(np.array([[1, 2, 3], [-4, 0, 1]]))
    u = a.union(b)
    assert len(u) == 3
    assert u.contains(np.array([[1, 2, 3]]))[0]
    # out-of-bound queries are simply absent
    assert not a.contains(np.array([[100, 100, 100]]))[0]


def test_walk_reproducible_and_nearest_neighbor():
    w1 = walk_fixed(np.zeros(5, dtype=int), 3000, RngStream(7, 3))
    w2 = walk_fixed(np.zeros(5, dtype=int), 3000, RngStream(7, 3))
    w3 = walk_fixed(np.zeros(5, dtype=int), 3000, RngStream(7, 4))
    assert np.array_equal(w1.positions, w2.positions)
    assert not np.array_equal(w1.positions, w3.positions)
    assert w1.check_nearest_neighbor()


def test_step_direction_symmetry():
    # each of the 2d unit steps within 5 sigma of 1/(2d) over >= 1e5 steps
    d, n = 4, 200_000
    steps = random_steps(RngStream(11, 0).generator(), d, n)
    p = 1.0 / (2 * d)
    sigma = np.sqrt(p * (1 - p) / n)
    for j in range(d):
        for sgn in (1, -1):
            freq = np.mean(steps[:, j] == sgn)
            assert abs(freq - p) < 5 * sigma


def test_walk_until_hit_at_time_zero():
    K = SiteSet.from_points(np.array([[0, 0, 0]]))
    w = walk_until(np.zeros(3, dtype=int), RngStream(1, 0), hit_sites=K,
                   exit_ball=Ball(np.zeros(3, dtype=int), 10))
    assert len(w) == 0 and w.stop_cause == "hit"


def test_walk_until_requires_cap():
    K = SiteSet.from_points(np.array([[5, 5, 5]]))
    with pytest.raises(ValueError):
        walk_until(np.zeros(3, dtype=int), RngStream(1, 0), hit_sites=K)


def test_walk_until_start_outside_ball():
    w = walk_until(np.array([5, 0, 0]), RngStream(1, 1), exit_ball=Ball(np.zeros(3, dtype=int), 2))
    assert len(w) == 0 and w.stop_cause == "exit"


def test_exit_time_of_unit_ball_matches_enumeration():
    """Exit-time law of B(0,1) from 0 at d=3 against exhaustive enumeration.

    The first step always lands on the shell; the walk exits at t = 2 iff
    the second step repeats the first direction, so P(T = 2) = 1/(2d).
    Enumerating all 36 two-step paths gives the same value.
    """
    d = 3
    count = 0
    for first in range(2 * d):
        for second in range(2 * d):
            pos = np.zeros(d, dtype=int)
            for dd in (first, second):
                pos[dd >> 1] += 1 - 2 * (dd & 1)
            if np.abs(pos).max() > 1:
                count += 1
    p2_exact = count / (2 * d) ** 2
    assert p2_exact == pytest.approx(1 / (2 * d))

    n = 4000
    ball = Ball(np.zeros(d, dtype=int), 1)
    exits = np.array([
        len(walk_until(np.zeros(d, dtype=int), RngStream(5, k), exit_ball=ball))
        for k in range(n)
    ])
    assert (exits >= 2).all()
    freq2 = np.mean(exits == 2)
    se = np.sqrt(p2_exact * (1 - p2_exact) / n)
    assert abs(freq2 - p2_exact) < 3 * se


def test_walk_until_fixed_length_and_hit_precedence():
    K = SiteSet.from_points(np.array([[0, 0, 1]]))
    w = walk_until(np.zeros(3, dtype=int), RngStream(2, 5), length=50, hit_sites=K)
    if w.stop_cause == "hit":
        assert K.contains(w.end[None, :])[0]
        assert not K.contains(w.positions[:-1]).any()
    else:
        assert w.stop_cause == "length" and len(w) == 50


def test_coordinate_variance_clt():
    # E |X_n|^2 = n, so per coordinate ~ n / d: check within 3 stderr
    d, n, reps = 5, 10_000, 10_000
    rng = RngStream(21, 0).generator()
    sq = np.zeros((reps, d))
    chunk = 500
    for lo in range(0, reps, chunk):
        hi = min(reps, lo + chunk)
        dirs = rng.integers(0, 2 * d, size=(hi - lo, n))
        fin = np.zeros((hi - lo, d), dtype=np.int64)
        for j in range(d):
            fin[:, j] = (dirs == 2 * j).sum(axis=1) - (dirs == 2 * j + 1).sum(axis=1)
        sq[lo:hi] = fin.astype(float) ** 2
    per_coord = sq.mean(axis=0)
    se = sq.std(axis=0, ddof=1) / np.sqrt(reps)
    assert np.all(np.abs(per_coord - n / d) < 3 * se)
