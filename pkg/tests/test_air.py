import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mtomgcs.air import (
    DemapperConfig,
    air_mtom,
    air_pas,
    air_th,
    bit_llrs,
    bit_log_posteriors,
    demapper_for,
    evaluate,
    evaluate_th,
    gmi,
    mtom_weights,
    order_from_mi,
    per_bit_mi,
)
from mtomgcs.channel import AwgnChannel, simulate
from mtomgcs.constellation import ReliabilityOrder, brgc_qam
from mtomgcs.oracle import gmi_quadrature
from mtomgcs.pas import mb_pmf


def test_qpsk_llr_closed_form():
    c = brgc_qam(2)
    sigma2 = 0.3
    y = np.random.default_rng(0).normal(size=50) + 1j * np.random.default_rng(1).normal(size=50)
    llr = bit_llrs(y, DemapperConfig(c, sigma2))
    # label bit 1 is the positive half-plane, so LLR = log P(0)/P(1) = -2 sqrt(2) Re(y) / sigma2
    assert np.allclose(llr[:, 0], -2 * math.sqrt(2) * y.real / sigma2)
    assert np.allclose(llr[:, 1], -2 * math.sqrt(2) * y.imag / sigma2)


def test_llr_signs_at_points_small_variance():
    c = brgc_qam(6)
    llr = bit_llrs(c.points, DemapperConfig(c, 1e-6))
    assert np.array_equal((llr < 0).astype(np.uint8), c.labels)
    assert np.all(np.abs(llr) > 1e3)
    assert np.all(np.isfinite(llr))


def test_posteriors_normalized():
    c = brgc_qam(4)
    rng = np.random.default_rng(2)
    idx = rng.integers(0, 16, 1000)
    y = simulate(AwgnChannel(8.0), c, idx, 3)
    cfg = demapper_for(AwgnChannel(8.0), c)
    lp_true = bit_log_posteriors(idx, y, cfg)
    lp_flip = bit_log_posteriors(idx ^ 0b1111, y, cfg)  # every label bit flipped
    assert np.allclose(2**lp_true + 2**lp_flip, 1.0)


def test_demapper_rejects_nonpositive_variance():
    with pytest.raises(ValueError):
        DemapperConfig(brgc_qam(2), 0.0)


def test_noiseless_mi_is_one():
    rep = gmi(brgc_qam(8), AwgnChannel(math.inf), 5000, 0)
    assert np.allclose(rep.per_bit_mi, 1.0)


def test_mc_gmi_matches_quadrature_16qam():
    c = brgc_qam(4)
    ref = gmi_quadrature(c.points, c.labels, 10.0)
    rep = gmi(c, AwgnChannel(10.0), 200_000, 1)
    assert rep.per_bit_mi.sum() == pytest.approx(ref.sum(), abs=0.02)
    assert np.allclose(rep.per_bit_mi, ref, atol=0.01)


@settings(max_examples=25, deadline=None)
@given(n_d=st.floats(0, 6), m=st.just(8))
def test_noiseless_air_is_m_minus_nd(n_d, m):
    bce = np.zeros(m)
    assert air_mtom(bce, n_d, m) == pytest.approx(m - n_d)
    assert air_th(bce, bce, n_d, m) == pytest.approx(m - n_d)


def test_air_nd0_equals_gmi_exactly():
    rep = evaluate(brgc_qam(6), AwgnChannel(12.0), 0.0, 20_000, 4)
    assert rep.air_mtom == pytest.approx(rep.per_bit_mi.sum(), abs=1e-12)
    assert air_mtom(rep.bce, 0.0, 6, rep.order) == pytest.approx(rep.per_bit_mi.sum(), abs=1e-12)


def test_air_integer_nd_matches_direct_bce():
    c = brgc_qam(8)
    rep = evaluate(c, AwgnChannel(15.0), 2.0, 20_000, 5)
    direct = 6 + sum(rep.bce[p] for p in rep.order.order[:6])
    assert rep.air_mtom == pytest.approx(direct, abs=1e-12)
    assert air_mtom(rep.bce, 2.0, 8, rep.order) == pytest.approx(direct, abs=1e-12)


def test_air_piecewise_linear_in_nd():
    bce = -np.random.default_rng(0).uniform(0, 0.6, 8)
    order = order_from_mi(1 + bce)
    for k in range(6):
        a, b = air_mtom(bce, k, 8, order), air_mtom(bce, k + 1, 8, order)
        for t in (0.1, 0.37, 0.5, 0.9):
            assert air_mtom(bce, k + t, 8, order) == pytest.approx((1 - t) * a + t * b, abs=1e-12)


def test_mtom_weights_fractional():
    w, offset = mtom_weights(1.5, 4, ReliabilityOrder((2, 0, 3, 1)))
    assert offset == pytest.approx(2.5)
    assert w.tolist() == [1.0, 0.0, 1.0, 0.5]


def test_nd_out_of_range():
    for bad in (-0.1, 6.5):
        with pytest.raises(ValueError):
            air_mtom(np.zeros(8), bad, 8)
    with pytest.raises(ValueError):
        air_th(np.zeros(8), np.zeros(6), 1.5, 8)


def test_air_th_integer_is_mtom():
    bce = -np.linspace(0.01, 0.5, 8)
    other = -np.linspace(0.1, 0.9, 8)
    assert air_th(bce, other, 2.0, 8) == pytest.approx(air_mtom(bce, 2.0, 8))


def test_air_th_is_time_share():
    lo, hi = -np.linspace(0.01, 0.5, 8), -np.linspace(0.0, 0.3, 8)
    expected = 0.3 * air_mtom(hi, 2, 8) + 0.7 * air_mtom(lo, 1, 8)
    assert air_th(lo, hi, 1.3, 8) == pytest.approx(expected)


def test_air_non_increasing_in_noise():
    c = brgc_qam(6)
    airs = [evaluate(c, AwgnChannel(s), 1.0, 20_000, 7).air_mtom for s in (8, 11, 14, 17, 20)]
    assert all(a <= b + 1e-9 for a, b in zip(airs, airs[1:]))


def test_air_bounded_by_rate():
    for n_d in (0.0, 1.0, 2.5):
        rep = evaluate(brgc_qam(8), AwgnChannel(16.0), n_d, 20_000, 8)
        assert np.all(rep.per_bit_mi <= 1.0)
        assert rep.air_mtom <= 8 - n_d + rep.confidence_halfwidth


def test_evaluate_deterministic():
    a = evaluate(brgc_qam(6), AwgnChannel(10.0), 1.5, 10_000, 11)
    b = evaluate(brgc_qam(6), AwgnChannel(10.0), 1.5, 10_000, 11)
    assert a.air_mtom == b.air_mtom and a.order == b.order
    assert set(a.as_record()) >= {"n_d", "air_mtom", "halfwidth", "mi_0", "mi_5"}


def test_evaluate_th_paired():
    c = brgc_qam(6)
    ch = AwgnChannel(14.0)
    rep = evaluate_th(c, c, ch, 1.5, 20_000, 3)
    lo = evaluate(c, ch, 1, 20_000, 3)
    hi = evaluate(c, ch, 2, 20_000, 3)
    assert rep.air_th == pytest.approx(0.5 * lo.air_mtom + 0.5 * hi.air_mtom)


def test_confidence_halfwidth_honest():
    c = brgc_qam(4)
    ch = AwgnChannel(9.0)
    truth = gmi_quadrature(c.points, c.labels, 9.0).sum()
    hits = 0
    for k in range(50):
        rep = gmi(c, ch, 5000, 1000 + k)
        hits += abs(rep.air_mtom - truth) <= rep.confidence_halfwidth
    assert hits >= 45


def test_air_pas_uniform_is_gmi():
    c = brgc_qam(4)
    ch = AwgnChannel(9.0)
    pmf = mb_pmf(c, 0.0)
    rng = np.random.default_rng(0)
    idx = rng.integers(0, 16, 20_000)
    y = simulate(ch, c, idx, 1)
    cfg = demapper_for(ch, c, prior=pmf.probs)
    air, mi, _ = air_pas(pmf, idx, y, cfg)
    plain = per_bit_mi(idx, y, demapper_for(ch, c))
    assert air == pytest.approx(plain.sum(), abs=1e-9)
    assert np.allclose(mi, plain)


def test_air_pas_noiseless_is_entropy():
    c = brgc_qam(6)
    pmf = mb_pmf(c, 3.0)
    idx = np.random.default_rng(0).choice(64, 5000, p=pmf.probs)
    ch = AwgnChannel(math.inf)
    y = simulate(ch, pmf.constellation, idx, 0)
    air, _, _ = air_pas(pmf, idx, y, demapper_for(ch, pmf.constellation, prior=pmf.probs))
    assert air == pytest.approx(pmf.entropy, abs=1e-6)
    with pytest.raises(ValueError):
        air_pas(pmf, idx, y, demapper_for(ch, pmf.constellation))


def test_order_from_mi_ties():
    assert order_from_mi([0.5, 0.9, 0.5, 0.1]).order == (1, 0, 2, 3)
    assert order_from_mi([0.5, 0.5004, 0.2], tie_tol=1e-3).order == (0, 1, 2)
