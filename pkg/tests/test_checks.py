import numpy as np
import pytest

from interlace.lattice import Ball, RngStream
from interlace.checks import (
    CheckReport,
    _f_kernel,
    check_convolution,
    check_inequalities,
    conv_sum_exact_n1,
    conv_sum_exact_n1_batch,
    conv_sum_mc,
    fit_loglog,
)


def test_fit_loglog_recovers_powerlaw():
    xs = np.array([2, 4, 8, 16, 32])
    ys = 3.5 * xs ** -1.7
    slope, sd = fit_loglog(xs, ys)
    assert slope == pytest.approx(-1.7, abs=1e-12)


def test_kernel_values():
    d = 5
    assert _f_kernel(np.array([0.0]), d)[0] == 1.0
    assert _f_kernel(np.array([1.0]), d)[0] == 1.0
    assert _f_kernel(np.array([2.0]), d)[0] == pytest.approx(2 ** (2 - d))


def test_conv_exact_n1_matches_brute_force():
    d = 5
    z0 = np.zeros(d, dtype=np.int64)
    ze = np.array([4, 0, 0, 0, 0], dtype=np.int64)
    L = 5
    pts = Ball(np.zeros(d, dtype=np.int64), L).points()
    a = np.max(np.abs(pts - z0), axis=1)
    b = np.max(np.abs(pts - ze), axis=1)
    brute = float(np.sum(_f_kernel(a, d) * _f_kernel(b, d)))
    assert conv_sum_exact_n1(z0, ze, L, d) == pytest.approx(brute, rel=1e-12)


def test_conv_exact_batch_matches_scalar():
    d = 5
    ze = np.array([3, 0, 0, 0, 0], dtype=np.int64)
    rng = np.random.default_rng(2)
    z1s = rng.integers(-4, 5, size=(15, d))
    bat = conv_sum_exact_n1_batch(z1s, ze, 4, d)
    sc = [conv_sum_exact_n1(z, ze, 4, d) for z in z1s]
    assert np.allclose(bat, sc, rtol=1e-12)


def test_conv_mc_matches_direct_n2():
    """Estimator validation: the importance-sampled n=2 sum agrees with the
    direct double sum at a small truncation radius."""
    d = 5
    z0 = np.zeros(d, dtype=np.int64)
    ze = np.array([3, 0, 0, 0, 0], dtype=np.int64)
    L = 4
    pts = Ball(np.zeros(d, dtype=np.int64), L).points()
    inner = conv_sum_exact_n1_batch(pts, ze, L, d)
    f0 = _f_kernel(np.max(np.abs(pts - z0), axis=1), d)
    direct = float(np.sum(f0 * inner))
    est, se = conv_sum_mc(z0, ze, 2, L, d, 60_000, RngStream(81, 0))
    assert abs(est - direct) < 3 * se


def test_conv_n0_exact_empty_product():
    d = 5
    rep = check_convolution(0, d=d)
    assert rep.passed
    assert rep.statistic["exponent"] == pytest.approx(2 - d)


def test_convolution_subcritical_exponent():
    rep = check_convolution(1, seps=(8, 16, 32), stream=RngStream(82, 0))
    assert rep.passed
    assert abs(rep.statistic["exponent"] - (-1)) < 0.3


def test_convolution_supercritical_growth():
    rep = check_convolution(2, L_list=(8, 16, 32), samples=20_000, stream=RngStream(83, 0))
    assert rep.passed
    assert rep.statistic["growth_slope"] > 0.2


def test_check_negative_n_rejected():
    with pytest.raises(ValueError):
        check_convolution(-1)


def test_inequalities_pass_and_reproduce():
    r1 = check_inequalities(replicas=10_000, stream=RngStream(84, 0))
    r2 = check_inequalities(replicas=10_000, stream=RngStream(84, 0))
    assert r1.passed
    assert r1.statistic == r2.statistic  # same seeds reproduce exactly


def test_report_row_shape():
    rep = check_convolution(0)
    row = rep.row()
    assert row["check_id"] == "convolution-n0"
    assert row["passed"] == 1
    assert "param_n" in row
