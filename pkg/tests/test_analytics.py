import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from codedcache import analytics as an
from codedcache.errors import DomainError, InfeasibleError

from _shared import alpha_tau_grid


def Q_alpha4(tau):
    # closed form of Q at alpha = 4
    return 1.0 + math.sqrt(tau) * (math.pi / 2 - math.atan(1.0 / math.sqrt(tau)))


def beta_oracle(a, b, z):
    return special.betaincc(a, b, z) * special.beta(a, b)


# --- special function -------------------------------------------------------


def test_beta_complement_trivial():
    assert an.beta_complement(1.0, 1.0, 0.5) == pytest.approx(0.5, rel=1e-12)


def test_beta_complement_arcsine_case():
    # antiderivative 2 asin(sqrt(u)) gives 2 (pi/2 - pi/4) = pi/2
    assert an.beta_complement(0.5, 0.5, 0.5) == pytest.approx(math.pi / 2, rel=1e-11)
    assert an.beta_complement(0.5, 0.5, 0.5) == pytest.approx(beta_oracle(0.5, 0.5, 0.5), rel=1e-12)


def test_beta_complement_vanishes_near_one():
    assert an.beta_complement(0.5, 0.5, 1 - 1e-12) < 1e-5


@pytest.mark.parametrize("alpha", [2.2, 2.5, 3.0, 4.0, 6.0, 10.0])
@pytest.mark.parametrize("z", [1e-4, 0.01, 0.3, 0.5, 0.7, 0.99, 0.999999])
def test_beta_complement_matches_scipy(alpha, z):
    a, b = 2 / alpha, 1 - 2 / alpha
    assert an.beta_complement(a, b, z) == pytest.approx(beta_oracle(a, b, z), rel=1e-10)


@pytest.mark.parametrize("args", [(0, 0.5, 0.5), (0.5, 0, 0.5), (0.5, 0.5, 0.0), (0.5, 0.5, 1.0)])
def test_beta_complement_domain(args):
    with pytest.raises(DomainError):
        an.beta_complement(*args)


# --- Q and layer probabilities -------------------------------------------------


def test_q_factor_alpha4_values():
    assert an.q_factor(an.ChannelModel(4, 1.0)) == pytest.approx(1.785398163397448, rel=1e-12)
    assert an.q_factor(an.ChannelModel(4, 0.1)) == pytest.approx(1.0968534082340389, rel=1e-12)
    assert an.layer_success_prob(an.ChannelModel(4, 1.0), 1) == pytest.approx(0.5600991535, abs=1e-10)


@pytest.mark.parametrize("tau", [1e-3, 0.1, 0.5, 1.0, 3.0, 10.0, 100.0])
def test_q_factor_alpha4_closed_form(tau):
    assert an.q_factor(an.ChannelModel(4, tau)) == pytest.approx(Q_alpha4(tau), rel=1e-12)


def test_q_factor_small_tau_limit():
    assert an.q_factor(an.ChannelModel(4, 1e-12)) == pytest.approx(1.0, abs=1e-5)
    assert an.layer_success_prob(an.ChannelModel(3, 1e-12), 5) == pytest.approx(1.0, abs=1e-4)


def test_q_factor_increasing_in_tau():
    for alpha in (2.5, 4.0, 7.0):
        qs = [an.q_factor(an.ChannelModel(alpha, t)) for t in np.logspace(-3, 3, 40)]
        assert all(b > a for a, b in zip(qs, qs[1:]))
        assert qs[0] > 1


def test_chain_is_product_of_layers():
    for alpha, tau in alpha_tau_grid():
        ch = an.ChannelModel(alpha, tau)
        prod = 1.0
        for k in range(1, 15):
            prod *= an.layer_success_prob(ch, k)
            assert an.chain_success_prob(ch, k) == pytest.approx(prod, rel=1e-12, abs=1e-300)


def test_chain_examples():
    ch = an.ChannelModel(4, 0.1)
    q1 = an.layer_success_prob(ch, 1)
    assert an.chain_success_prob(ch, 1) == q1
    assert an.chain_success_prob(ch, 2) == pytest.approx(q1**3, rel=1e-13)
    assert an.chain_success_prob(ch, 3) == pytest.approx(1.0968534082340389**-6, rel=1e-12)


def test_chain_underflows_cleanly():
    ch = an.ChannelModel(2.5, 100.0)
    c = an.chain_probs(ch, 5000)
    assert np.all(np.isfinite(c)) and c[-1] == 0.0
    assert np.all(np.diff(c) <= 0)


def test_layer_index_domain():
    ch = an.ChannelModel(4, 1)
    with pytest.raises(DomainError):
        an.layer_success_prob(ch, 0)
    with pytest.raises(DomainError):
        an.chain_success_prob(ch, 0)


def test_channel_validation():
    with pytest.raises(DomainError):
        an.ChannelModel(2.0, 1.0)
    with pytest.raises(DomainError):
        an.ChannelModel(4.0, 0.0)


# --- offloaded traffic ----------------------------------------------------------


def test_fot_examples():
    ch = an.ChannelModel(4, 0.1)
    c = an.chain_probs(ch, 3)
    assert an.fot(ch, 8, 0) == 0.0
    assert an.fot(ch, 8, 8) == pytest.approx(c[0], rel=1e-14)
    assert an.fot(ch, 8, 4) == pytest.approx((c[0] + c[1]) / 2, rel=1e-14)
    # t = 3, boundary coefficient 1 - 9/8 < 0
    assert an.fot(ch, 8, 3) == pytest.approx(3 / 8 * c.sum() + (1 - 9 / 8) * c[2], rel=1e-14)
    with pytest.raises(DomainError):
        an.fot(ch, 8, 9)


def test_afot_examples():
    ch = an.ChannelModel(4, 0.1)
    c = an.chain_probs(ch, 2)
    pop = an.PopularityProfile((0.7, 0.3))
    cfg = an.CodingConfig(2, 2)
    assert an.afot(ch, cfg, pop, (2, 1)) == pytest.approx(0.7 * c[0] + 0.3 * (c[0] + c[1]) / 2, rel=1e-14)
    assert an.afot(ch, cfg, pop, (0, 0)) == 0.0
    one = an.PopularityProfile((1.0,))
    assert an.afot(ch, an.CodingConfig(5, 1), one, (5,)) == pytest.approx(c[0], rel=1e-14)
    with pytest.raises(InfeasibleError):
        an.afot(ch, an.CodingConfig(2, 1), pop, (2, 1))


def test_fot_continuous_examples():
    ch = an.ChannelModel(3, 0.5)
    c = an.chain_probs(ch, 2)
    assert an.fot_continuous(ch, 0.0) == 0.0
    assert an.fot_continuous(ch, 1.0) == pytest.approx(c[0], rel=1e-14)
    assert an.fot_continuous(ch, 0.5) == pytest.approx(c.mean(), rel=1e-14)
    with pytest.raises(DomainError):
        an.fot_continuous(ch, 1.5)


def test_fot_continuous_samples_discrete():
    for alpha, tau in alpha_tau_grid():
        ch = an.ChannelModel(alpha, tau)
        for n in (1, 7, 16, 33):
            table = an.fot_table(ch, n)
            for m in range(n + 1):
                assert an.fot_continuous(ch, m / n) == pytest.approx(table[m], abs=1e-12)


def test_region_slopes_increase_with_t():
    for alpha, tau in alpha_tau_grid():
        ch = an.ChannelModel(alpha, tau)
        s = [an.region_slope(ch, t) for t in range(2, 40)]
        # strict while C_t is representable, flat once it has underflowed
        assert all(b >= a - 1e-15 for a, b in zip(s, s[1:]))
        assert s[1] > s[0]


def test_fot_range():
    for alpha, tau in alpha_tau_grid():
        ch = an.ChannelModel(alpha, tau)
        t = an.fot_table(ch, 24)
        assert t.min() >= 0 and t.max() == pytest.approx(an.layer_success_prob(ch, 1), rel=1e-14)
        assert np.argmax(t) == 24


@settings(max_examples=60, deadline=None)
@given(alpha=st.floats(2.05, 12.0), log_tau=st.floats(-3, 2.5), n=st.integers(1, 64))
def test_fot_increasing_concave_property(alpha, log_tau, n):
    ch = an.ChannelModel(alpha, 10**log_tau)
    d = np.diff(an.fot_table(ch, n))
    assert np.all(d > 0)
    assert np.all(d[1:] <= d[:-1] + 1e-15)


@settings(max_examples=40, deadline=None)
@given(alpha=st.floats(2.05, 12.0), log_tau=st.floats(-3, 2), n=st.integers(2, 80))
def test_within_region_deltas_property(alpha, log_tau, n):
    ch = an.ChannelModel(alpha, 10**log_tau)
    table = an.difference_table(ch, n)
    for m in range(2, n + 1):
        t, tp = -(-n // m), -(-n // (m - 1))
        if t == tp:
            assert table.deltas[m] == pytest.approx(an.within_region_delta(ch, n, t), abs=1e-12)


def test_boundary_delta_relation():
    for alpha, tau in alpha_tau_grid():
        ch = an.ChannelModel(alpha, tau)
        for n in (8, 17, 32, 50):
            c = an.chain_probs(ch, n + 1)
            table = an.difference_table(ch, n)
            for m in range(2, n + 1):
                t, tp = -(-n // m), -(-n // (m - 1))
                if tp == t + 1:
                    lhs = table.deltas[m] - an.within_region_delta(ch, n, t + 1)
                    rhs = (1 - t * m / n) * (c[t - 1] - c[t])
                    assert lhs == pytest.approx(rhs, abs=1e-12)


# --- difference table -----------------------------------------------------------


def test_difference_table_n8_labels():
    table = an.difference_table(an.ChannelModel(4, 0.1), 8)
    assert table.labels() == ["d_8", "d_{4,8}", "d_{3,4}", "d_{2,3}", "d_2", "d_2", "d_2", "d_2"]
    assert table.distinct_count == 5


@pytest.mark.parametrize("n,count", [(2, 2), (3, 3), (4, 3), (8, 5), (16, 8), (32, 12), (64, 18)])
def test_distinct_counts(n, count):
    assert an.difference_table(an.ChannelModel(4, 0.1), n).distinct_count == count


def test_distinct_count_bounded_and_growth_recorded():
    ch = an.ChannelModel(4, 1.0)
    for n in (1, 2, 5, 10, 100, 256, 1024):
        table = an.difference_table(ch, n)
        assert table.distinct_count == len(set(table.labels())) <= n
        # recorded against 2 ceil(sqrt(n)); the asymptotic claim is not asserted
        print(n, table.distinct_count, 2 * math.ceil(math.sqrt(n)))


def test_boundary_equalities_n32():
    ch = an.ChannelModel(4, 0.1)
    table = an.difference_table(ch, 32)
    d = table.as_array()
    # m = 32 is the {1,2} boundary and m = 16 the {2,3} boundary
    assert d[32] == pytest.approx(an.within_region_delta(ch, 32, 2), abs=1e-12)
    assert d[16] == pytest.approx(an.within_region_delta(ch, 32, 3), abs=1e-12)
    assert table.label(32) == "d_2" and table.label(16) == "d_3"
    assert math.isinf(d[0])


# --- ergodic rate ---------------------------------------------------------------


def test_ergodic_rate_values_alpha4():
    r = an.rate_table(4.0, 4)
    assert r[0] == 0.0
    assert r == pytest.approx([0, 0.61598018, 1.16940455, 1.16940455, 2.14815506], abs=1e-7)
    assert an.ergodic_rate(4.0, 4, 4) == pytest.approx(an.rate_integral(4.0, 1), abs=1e-14)


def test_ergodic_rate_single_layer_oracle():
    # E[log2(1 + SIR_1)] = int_0^inf P(SIR_1 > 2^r - 1) dr, integrated with mpmath
    def integrand(r):
        tau = 2**r - 1
        if tau == 0:
            return mpmath.mpf(1)
        return 1 / Q_alpha4(float(tau))

    oracle = mpmath.quad(integrand, [0, 1, 4, 16, 40])
    # the truncated tail above r = 40 is below 1e-6
    assert an.ergodic_rate(4.0, 1, 1) == pytest.approx(float(oracle), abs=1e-5)


@pytest.mark.parametrize("t", [1, 2, 3, 5])
def test_rate_quadrature_vs_riemann(t):
    alpha = 4.0
    r_max = an.rate_truncation_point(alpha, t)
    step = 1e-4
    grid = np.arange(0.5 * step, r_max, step)
    vals = np.array([an._rate_integrand(alpha, t, r) for r in grid])
    riemann = vals.sum() * step
    assert an.rate_integral(alpha, t) == pytest.approx(riemann, abs=1e-4)


def test_rate_truncation_point_cutoff():
    for t in (1, 3):
        r = an.rate_truncation_point(4.0, t)
        assert an._rate_integrand(4.0, t, r) < 1e-12 <= an._rate_integrand(4.0, t, r * (1 - 1e-6))


def test_aer_examples():
    pop = an.PopularityProfile((0.6, 0.4))
    cfg = an.CodingConfig(2, 2)
    single = an.rate_integral(4.0, 1)
    assert an.aer(4.0, cfg, pop, (2, 2)) == pytest.approx(single, rel=1e-14)
    assert an.aer(4.0, cfg, pop, (0, 0)) == 0.0
    with pytest.raises(DomainError):
        an.ergodic_rate(4.0, 2, 3)


# --- popularity and most-popular caching --------------------------------------------


def test_zipf_examples():
    assert an.zipf_popularity(4, 0).probs == pytest.approx([0.25] * 4)
    assert an.zipf_popularity(2, 1).probs == pytest.approx([2 / 3, 1 / 3])
    p = an.zipf_popularity(100, 0.6).probs
    assert p[0] / p[1] == pytest.approx(2**0.6, rel=1e-12)
    assert sum(p) == pytest.approx(1.0, abs=1e-12)


def test_popularity_validation():
    with pytest.raises(DomainError):
        an.PopularityProfile((0.3, 0.7))
    with pytest.raises(DomainError):
        an.PopularityProfile((0.5, 0.4))


def test_mpc_afot():
    ch = an.ChannelModel(4, 0.1)
    q1 = an.layer_success_prob(ch, 1)
    assert an.mpc_afot(ch, an.zipf_popularity(10, 0), 2) == pytest.approx(0.2 * q1)
    pop = an.PopularityProfile((0.5, 0.5, 0.0))
    assert an.mpc_afot(ch, pop, 2) == pytest.approx(q1)
    zipf = an.zipf_popularity(100, 0.6)
    assert an.mpc_afot(ch, zipf, 30) == pytest.approx(q1 * sum(zipf.probs[:30]), rel=1e-14)
    for n in (1, 3, 8):
        m = an.mpc_vector(100, n, 30)
        assert an.afot(ch, an.CodingConfig(n, 30), zipf, m) == pytest.approx(an.mpc_afot(ch, zipf, 30), rel=1e-13)
    with pytest.raises(DomainError):
        an.mpc_afot(ch, zipf, 100)


def test_degeneracy_condition():
    ch = an.ChannelModel(4, 1.0)
    assert not an.mpc_degeneracy_holds(ch, 2, an.zipf_popularity(10, 0), 2)
    assert an.mpc_degeneracy_holds(ch, 2, an.zipf_popularity(10, 50), 2)
    assert an.degeneracy_threshold(ch, 4) > 1


def test_degeneracy_flips_when_tau_grows():
    pop = an.zipf_popularity(20, 1.0)
    holds = lambda tau: an.mpc_degeneracy_holds(an.ChannelModel(4, tau), 4, pop, 5)
    lo, hi = 1e-2, 1e4
    assert not holds(lo) and holds(hi)
    for _ in range(60):
        mid = math.sqrt(lo * hi)
        lo, hi = (mid, hi) if not holds(mid) else (lo, mid)
    # a single flip point: threshold decreasing in tau
    rhs = [an.degeneracy_threshold(an.ChannelModel(4, t), 4) for t in np.logspace(-2, 4, 50)]
    assert all(b < a for a, b in zip(rhs, rhs[1:]))
    assert hi / lo < 1 + 1e-9
