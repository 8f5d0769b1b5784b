import math

import numpy as np
import pytest

from kinlang.brownian import (
    BrownianTriple,
    ExpIntegralPair,
    FinePathOracle,
    SpaceTimeMoments,
    combine_exp_pairs,
    combine_triples,
    exp_pair_covariance,
    fine_path_oracle,
    moments_to_triple,
    sample_exp_pair,
    sample_midpoint_noise,
    sample_triple,
    split_midpoint_structure,
    triple_to_moments,
)
from kinlang.rng import stream

from conftest import ScriptedRng, ZeroGaussianRng


def var_bound(true_var: float, n: int, sigmas: float) -> float:
    # sampling error of an empirical variance of n iid Gaussians
    return sigmas * true_var * math.sqrt(2.0 / (n - 1))


# ----------------------------------------------------------------------
# sampling


def test_sample_triple_zero_rng_gives_zero_vectors(zero_rng):
    t = sample_triple(1.0, 5, zero_rng)
    assert not t.w.any() and not t.hh.any() and not t.kk.any()


def test_sample_triple_rejects_bad_arguments():
    g = stream(0)
    with pytest.raises(ValueError):
        sample_triple(0.0, 3, g)
    with pytest.raises(ValueError):
        sample_triple(-1.0, 3, g)
    with pytest.raises(ValueError):
        sample_triple(1.0, 0, g)


def test_sample_triple_bridge_area_variance_within_two_percent():
    n = 100_000
    t = sample_triple(1.0, n, stream(1))
    assert abs(np.var(t.hh, ddof=1) - 1.0 / 12.0) < 0.02 * (1.0 / 12.0)


def test_sample_triple_second_moment_variance_three_sigma():
    # h = 4, 10^5 scalar draws; coordinates of one wide draw are iid samples
    n = 100_000
    t = sample_triple(4.0, n, stream(2))
    true = 4.0 / 720.0
    assert abs(np.var(t.kk, ddof=1) - true) < var_bound(true, n, 3.0)


def test_triple_invariant_validation():
    with pytest.raises(ValueError):
        BrownianTriple(1.0, np.zeros(3), np.zeros(3), np.zeros(2))
    with pytest.raises(ValueError):
        BrownianTriple(0.0, np.zeros(3), np.zeros(3), np.zeros(3))


# ----------------------------------------------------------------------
# moment maps


def test_triple_to_moments_zero_input():
    t = BrownianTriple(1.0, np.zeros(2), np.zeros(2), np.zeros(2))
    m = triple_to_moments(t)
    assert not m.m.any() and not m.n.any()


def test_triple_to_moments_linear_path_values():
    # path X_r = r on [0,1]: W=1, H=0, K=0 and direct quadrature gives
    # M = int r dr = 1/2, N = int r*r dr = 1/3
    t = BrownianTriple(1.0, np.array([1.0]), np.array([0.0]), np.array([0.0]))
    m = triple_to_moments(t)
    assert m.m[0] == pytest.approx(0.5, abs=1e-15)
    assert m.n[0] == pytest.approx(1.0 / 3.0, abs=1e-15)


def test_triple_to_moments_hand_substitution():
    # h=2, w=hh=kk=e1: M = (1 + 2) e1, N = (4/3 + 2 - 4) e1
    e1 = np.array([1.0, 0.0])
    m = triple_to_moments(BrownianTriple(2.0, e1, e1, e1))
    np.testing.assert_allclose(m.m, 3.0 * e1, atol=1e-15)
    np.testing.assert_allclose(m.n, -(2.0 / 3.0) * e1, atol=1e-14)


def test_moments_to_triple_linear_path():
    # K = 1/4 - 1/3 + 1/12 = 0 for the linear path
    s = SpaceTimeMoments(1.0, np.array([1.0]), np.array([0.5]), np.array([1.0 / 3.0]))
    t = moments_to_triple(s)
    assert t.hh[0] == pytest.approx(0.0, abs=1e-15)
    assert t.kk[0] == pytest.approx(0.0, abs=1e-15)


def test_moments_to_triple_quadratic_path():
    # X_r = r^2 on [0,1]: W=1, M=1/3, N=1/4 -> H = 1/3 - 1/2 = -1/6,
    # K = 1/6 - 1/4 + 1/12 = 0 (exact quadrature of the definitions)
    s = SpaceTimeMoments(1.0, np.array([1.0]), np.array([1.0 / 3.0]), np.array([0.25]))
    t = moments_to_triple(s)
    assert t.hh[0] == pytest.approx(-1.0 / 6.0, abs=1e-15)
    assert t.kk[0] == pytest.approx(0.0, abs=1e-15)


def test_round_trip_is_identity():
    g = stream(3)
    for _ in range(100):
        t = sample_triple(g.uniform(0.05, 5.0), 4, g)
        back = moments_to_triple(triple_to_moments(t))
        np.testing.assert_allclose(back.w, t.w, rtol=1e-12)
        np.testing.assert_allclose(back.hh, t.hh, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(back.kk, t.kk, rtol=1e-12, atol=1e-15)


# ----------------------------------------------------------------------
# combination


def linear_oracle(h: float, substeps: int = 128) -> FinePathOracle:
    return FinePathOracle.from_function(h, substeps, lambda r: np.array([r]))


def test_combine_triples_linear_path_moments():
    # halves [0,1], [1,2] of X_r = r: M_{0,2} = 2 = int_0^2 r dr and
    # N_{0,2} = 8/3 = int_0^2 r^2 dr
    o = linear_oracle(2.0)
    combined = combine_triples(o.triple(0, 64), o.triple(64, 128))
    m = triple_to_moments(combined)
    assert m.m[0] == pytest.approx(2.0, rel=1e-14)
    assert m.n[0] == pytest.approx(8.0 / 3.0, rel=1e-14)


def test_combine_triples_matches_fine_path_oracle():
    g = stream(4)
    for _ in range(20):
        path = FinePathOracle.sample(1.0, 4096, 2, g)
        whole = path.triple(0, 4096)
        comb = combine_triples(path.triple(0, 2048), path.triple(2048, 4096))
        scale = max(1.0, float(np.max(np.abs(path.values))))
        for a, b in ((whole.w, comb.w), (whole.hh, comb.hh), (whole.kk, comb.kk)):
            assert float(np.max(np.abs(a - b))) <= 1e-10 * scale


def test_combine_triples_dimension_mismatch():
    a = sample_triple(1.0, 2, stream(5))
    b = sample_triple(1.0, 3, stream(6))
    with pytest.raises(ValueError):
        combine_triples(a, b)


# ----------------------------------------------------------------------
# damped-integral pairs


def test_exp_pair_covariance_closed_forms():
    gamma, h = 2.0, 1.0
    v11, v12, v22 = exp_pair_covariance(gamma, h)
    assert v11 == pytest.approx((1 - math.exp(-2 * gamma * h)) / (2 * gamma), rel=1e-14)
    assert v12 == pytest.approx((1 - math.exp(-gamma * h)) ** 2 / (2 * gamma**2), rel=1e-14)
    assert v22 == pytest.approx(
        (4 * math.exp(-gamma * h) - math.exp(-2 * gamma * h) + 2 * gamma * h - 3) / (2 * gamma**3),
        rel=1e-13,
    )


def test_exp_pair_covariance_small_gamma_limit():
    # Taylor limit: Var(I1) -> h, Cov -> h^2/2, Var(I2) -> h^3/3, the plain
    # (W, int W) moments
    h = 0.7
    v11, v12, v22 = exp_pair_covariance(1e-12, h)
    assert v11 == pytest.approx(h, rel=1e-11)
    assert v12 == pytest.approx(h * h / 2.0, rel=1e-11)
    assert v22 == pytest.approx(h**3 / 3.0, rel=1e-11)


def test_sample_exp_pair_zero_rng(zero_rng):
    p = sample_exp_pair(2.0, 1.0, 4, zero_rng)
    assert not p.i1.any() and not p.i2.any()


def test_sample_exp_pair_regression_coefficient_closed_form():
    # I2 = c I1 + X with c = (1 - e^-a)/(gamma (1 + e^-a)); with the residual
    # zeroed the ratio i2/i1 is exactly c
    gamma, h = 1.7, 0.9
    a = gamma * h
    c = (1 - math.exp(-a)) / (gamma * (1 + math.exp(-a)))
    v11, v12, _ = exp_pair_covariance(gamma, h)
    assert c == pytest.approx(v12 / v11, rel=1e-14)


def test_sample_exp_pair_empirical_covariance_three_sigma():
    gamma, h, n = 2.0, 1.0, 100_000
    pair = sample_exp_pair(gamma, h, n, stream(7))
    v11, v12, v22 = exp_pair_covariance(gamma, h)
    want = (1 - math.exp(-2.0)) ** 2 / 8.0
    assert v12 == pytest.approx(want, rel=1e-14)
    est = float(np.cov(pair.i1, pair.i2, ddof=1)[0, 1])
    bound = 3.0 * math.sqrt((v11 * v22 + v12**2) / (n - 1))
    assert abs(est - want) < bound


def test_residual_variance_never_negative():
    from kinlang.brownian import _pair_sampling_consts

    # upper end bounded by the exp overflow guard on phi1(2a)
    for a in np.logspace(-12, 2.5, 60):
        for h in (1e-3, 1.0, 7.0):
            gamma = a / h
            std1, c, std_res = _pair_sampling_consts(gamma, h)
            assert std1 > 0.0 and std_res >= 0.0


def test_combine_exp_pairs_zero_left_contribution():
    gamma = 2.0
    left = ExpIntegralPair(0.5, gamma, np.zeros(3), np.zeros(3))
    right = sample_exp_pair(gamma, 0.5, 3, stream(8))
    out = combine_exp_pairs(gamma, left, right)
    np.testing.assert_array_equal(out.i1, right.i1)
    np.testing.assert_array_equal(out.i2, right.i2)
    assert out.h == 1.0


def test_combine_exp_pairs_matches_left_point_oracle():
    # left-point quadrature of the Ito integral with the exact inner time
    # integral; the combination identity is exact on grid points
    g = stream(9)
    gamma = 2.0
    for _ in range(10):
        path = FinePathOracle.sample(1.0, 4096, 1, g)
        whole = path.exp_pair(gamma, 0, 4096, rule="left")
        comb = combine_exp_pairs(
            gamma, path.exp_pair(gamma, 0, 2048, rule="left"), path.exp_pair(gamma, 2048, 4096, rule="left")
        )
        scale = max(1.0, float(np.max(np.abs(path.values))))
        assert float(np.max(np.abs(whole.i1 - comb.i1))) <= 1e-6 * scale
        assert float(np.max(np.abs(whole.i2 - comb.i2))) <= 1e-6 * scale


def test_combine_exp_pairs_gamma_zero_limit_cross_oracle():
    # at gamma -> 0 the combination reduces to W-additivity and M-chaining;
    # the kernel gap is O(gamma) so gamma = 1e-9 sits well under 1e-8
    g = stream(10)
    tiny = 1e-9
    for _ in range(10):
        path = FinePathOracle.sample(1.0, 512, 2, g)
        pair = combine_exp_pairs(
            tiny, path.exp_pair(tiny, 0, 256), path.exp_pair(tiny, 256, 512)
        )
        mom = triple_to_moments(combine_triples(path.triple(0, 256), path.triple(256, 512)))
        scale = max(1.0, float(np.max(np.abs(path.values))))
        assert float(np.max(np.abs(pair.i1 - mom.w))) <= 1e-8 * scale
        assert float(np.max(np.abs(pair.i2 - mom.m))) <= 1e-8 * scale


def test_combine_exp_pairs_gamma_mismatch():
    a = sample_exp_pair(2.0, 1.0, 2, stream(11))
    b = ExpIntegralPair(1.0, 2.0 + 1e-9, a.i1, a.i2)
    with pytest.raises(ValueError):
        combine_exp_pairs(2.0, a, b)


# ----------------------------------------------------------------------
# randomized-midpoint split structure


def test_split_rademacher_left_picks_first_midpoint():
    # uniforms consumed in order: x fraction, y fraction, side (< 0.5 -> left)
    rng = ScriptedRng([0.3, 0.7, 0.2])
    split = split_midpoint_structure(2.0, 1.0, 2, rng)
    assert split.rademacher_side == "left"
    assert split.alpha == pytest.approx(0.15)  # (z - s)/h = x_frac / 2
    assert split.alpha < 0.5  # z lands in the first half
    np.testing.assert_array_equal(split.s_z.i1, split.s_x.i1)


def test_split_rademacher_right_picks_second_midpoint():
    rng = ScriptedRng([0.3, 0.7, 0.9])
    split = split_midpoint_structure(2.0, 1.0, 2, rng)
    assert split.rademacher_side == "right"
    assert split.alpha == pytest.approx(0.85)  # 1/2 + y_frac / 2
    np.testing.assert_array_equal(split.z_t.i1, split.y_t.i1)


def test_split_zero_gaussians_keeps_uniform_midpoint(zero_rng):
    alphas = []
    for _ in range(200):
        split = split_midpoint_structure(2.0, 1.0, 2, zero_rng)
        assert not split.s_t.i1.any() and not split.s_t.i2.any()
        assert not split.s_z.i2.any()
        alphas.append(split.alpha)
    alphas = np.asarray(alphas)
    assert 0.0 < alphas.min() and alphas.max() < 1.0
    # mean of U(0,1) within 4 standard errors
    assert abs(alphas.mean() - 0.5) < 4.0 / math.sqrt(12.0 * len(alphas))


def test_split_consistency_identity():
    g = stream(12)
    for _ in range(1000):
        split = split_midpoint_structure(2.0, 0.8, 2, g)
        re = combine_exp_pairs(2.0, split.s_z, split.z_t)
        scale = max(1.0, float(np.max(np.abs(split.s_t.i2))))
        assert float(np.max(np.abs(re.i1 - split.s_t.i1))) <= 1e-12 * scale
        assert float(np.max(np.abs(re.i2 - split.s_t.i2))) <= 1e-12 * scale


def test_sample_midpoint_noise_full_interval_consistency():
    g = stream(13)
    noise = sample_midpoint_noise(2.0, 0.5, 3, g)
    assert 0.0 < noise.alpha < 1.0
    assert noise.to_mid.h == pytest.approx(noise.alpha * 0.5)
    assert noise.full.h == pytest.approx(0.5)


# ----------------------------------------------------------------------
# fine-path oracle


def test_oracle_linear_path_has_zero_bridge_everywhere():
    o = linear_oracle(1.0, 64)
    for i0, i1 in ((0, 64), (0, 32), (32, 64), (16, 48), (5, 11)):
        t = o.triple(i0, i1)
        assert float(np.max(np.abs(t.hh))) < 1e-14
        assert float(np.max(np.abs(t.kk))) < 1e-14


def test_oracle_endpoints_reproduce_increments_exactly():
    g = stream(14)
    o = FinePathOracle.sample(1.0, 256, 3, g)
    inc = np.diff(o.values, axis=0)
    np.testing.assert_array_equal(o.increment(0, 256), o.values[256] - o.values[0])
    np.testing.assert_array_equal(o.increment(3, 4), inc[3])


def test_oracle_refinement_self_consistency():
    # refine a 2^12 path to 2^13 by bridge midpoints; M changes by less than
    # 1e-4 * path scale
    g = stream(15)
    coarse = FinePathOracle.sample(1.0, 4096, 1, g)
    vals = coarse.values
    mids = 0.5 * (vals[:-1] + vals[1:]) + math.sqrt(coarse.dt / 4.0) * g.standard_normal(vals[:-1].shape)
    refined_vals = np.empty((2 * 4096 + 1, 1))
    refined_vals[0::2] = vals
    refined_vals[1::2] = mids
    refined = FinePathOracle(1.0, refined_vals)
    m_coarse = coarse.moments(0, 4096).m
    m_fine = refined.moments(0, 8192).m
    scale = max(1.0, float(np.max(np.abs(vals))))
    assert float(np.max(np.abs(m_fine - m_coarse))) < 1e-4 * scale


def test_oracle_iterated_integral_identity():
    # iint X dr dr = h^2 (W/6 + H/2 + K) holds to round-off on oracle paths
    g = stream(16)
    for _ in range(10):
        path = FinePathOracle.sample(2.0, 1024, 2, g)
        t = path.triple(0, 1024)
        ident = t.h**2 * (t.w / 6.0 + t.hh / 2.0 + t.kk)
        got = path.double_time_integral(0, 1024)
        scale = max(1.0, float(np.max(np.abs(path.values))))
        assert float(np.max(np.abs(got - ident))) <= 1e-10 * scale


def test_oracle_rejects_too_few_substeps():
    with pytest.raises(ValueError):
        fine_path_oracle(1.0, 1, 1, stream(17))


def test_oracle_span_validation():
    o = linear_oracle(1.0, 8)
    with pytest.raises(ValueError):
        o.triple(3, 3)
    with pytest.raises(ValueError):
        o.triple(0, 9)


# ----------------------------------------------------------------------
# distributional invariants (4 standard errors)


@pytest.mark.parametrize("h", [0.1, 1.0])
def test_triple_distribution_four_se(h):
    n = 20_000
    t = sample_triple(h, n, stream(18 + int(10 * h)))
    for sample, true in ((t.w, h), (t.hh, h / 12.0), (t.kk, h / 720.0)):
        assert abs(np.var(sample, ddof=1) - true) < var_bound(true, n, 4.0)
    for a, b, va, vb in (
        (t.w, t.hh, h, h / 12.0),
        (t.w, t.kk, h, h / 720.0),
        (t.hh, t.kk, h / 12.0, h / 720.0),
    ):
        est = float(np.cov(a, b, ddof=1)[0, 1])
        assert abs(est) < 4.0 * math.sqrt(va * vb / (n - 1))


@pytest.mark.parametrize("gamma,h", [(2.0, 1.0), (0.5, 1.0), (2.0, 0.01)])
def test_exp_pair_distribution_four_se(gamma, h):
    n = 20_000
    pair = sample_exp_pair(gamma, h, n, stream(30 + int(gamma * 10) + int(h * 100)))
    v11, v12, v22 = exp_pair_covariance(gamma, h)
    assert abs(np.var(pair.i1, ddof=1) - v11) < var_bound(v11, n, 4.0)
    assert abs(np.var(pair.i2, ddof=1) - v22) < var_bound(v22, n, 4.0)
    est = float(np.cov(pair.i1, pair.i2, ddof=1)[0, 1])
    assert abs(est - v12) < 4.0 * math.sqrt((v11 * v22 + v12**2) / (n - 1))


def test_oracle_bridge_moments_uncorrelated_with_increment():
    n = 600
    g = stream(31)
    w = np.empty(n)
    hh = np.empty(n)
    kk = np.empty(n)
    for i in range(n):
        t = FinePathOracle.sample(1.0, 128, 1, g).triple(0, 128)
        w[i], hh[i], kk[i] = t.w[0], t.hh[0], t.kk[0]
    bound = 4.0 / math.sqrt(n)
    assert abs(np.corrcoef(w, hh)[0, 1]) < bound
    assert abs(np.corrcoef(w, kk)[0, 1]) < bound
    assert abs(np.corrcoef(hh, kk)[0, 1]) < bound
