import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mtomgcs.channel import (
    PLANCK,
    AwgnChannel,
    FiberParams,
    LinkModel,
    TrxParams,
    ase_snr,
    combine_snr_db,
    db2lin,
    dbm2watt,
    effective_snr,
    lin2db,
    nli_snr,
    nli_variance,
    optimal_launch_power,
    quantizer_spec,
    read_link_config,
    read_nli_coeffs,
    simulate,
    uniform_halfwidth,
    write_link_config,
)
from mtomgcs.constellation import brgc_qam, moments

QAM256 = moments(brgc_qam(8))


def test_ase_zero_spans_is_inf():
    assert ase_snr(FiberParams(n_spans=0), 0.0) == math.inf


def test_ase_closed_form():
    # standalone arithmetic for alpha=0.2, 100 km, NF 5 dB, 32 GBd, 0 dBm, 15 spans
    gain = 10 ** (0.2 * 100 / 10)
    n_ase = 15 * (gain - 1) * PLANCK * 193.41e12 * 10**0.5 * 32e9
    expected = 10 * math.log10(1e-3 / n_ase)
    assert ase_snr(FiberParams(), 0.0) == pytest.approx(expected, abs=1e-9)


def test_ase_doubling_spans_costs_3db():
    f = FiberParams(n_spans=10)
    assert ase_snr(f, 1.0) - ase_snr(f.with_spans(20), 1.0) == pytest.approx(10 * math.log10(2))


def test_nli_cubic_law():
    link = LinkModel()
    _, mu4, mu6, _ = QAM256
    assert nli_snr(link, mu4, mu6, 0.0) - nli_snr(link, mu4, mu6, 3.0) == pytest.approx(6.0, abs=1e-9)
    f = link.fiber
    v1 = nli_variance(f, link.coeffs, mu4, mu6, 1e-3)
    v2 = nli_variance(f, link.coeffs, mu4, mu6, 2e-3)
    assert v2 / v1 == pytest.approx(8.0)


def test_nli_gaussian_input_uses_c0_only():
    f = FiberParams()
    c = (3.0, 100.0, -7.0)
    assert nli_variance(f, c, 2.0, 6.0, 0.5) == pytest.approx(0.125 * f.n_spans * 3.0)


def test_nli_negative_variance_rejected():
    with pytest.raises(ValueError):
        nli_variance(FiberParams(), (1.0, 10.0, 0.0), 1.0, 2.0, 1e-3)


def test_mb_moments_penalized_by_nli():
    link = LinkModel()
    _, mu4, mu6, _ = QAM256
    assert nli_snr(link, 1.98, 5.74, 1.0) < nli_snr(link, mu4, mu6, 1.0)


def test_effective_snr_composition():
    assert combine_snr_db(20, 20, 20) == pytest.approx(20 - 10 * math.log10(3))
    assert combine_snr_db(20, 20, 20) == pytest.approx(15.23, abs=0.005)
    assert combine_snr_db(math.inf, 17.0, math.inf) == pytest.approx(17.0)
    # without TRX penalty and with negligible NLI the link is ASE limited
    link = LinkModel(trx=TrxParams(), nli_coeffs=(0.0, 0.0, 0.0))
    assert effective_snr(link, 1.3, 2.3, 1.0) == pytest.approx(ase_snr(link.fiber, 1.0))


def test_effective_snr_three_terms():
    link = LinkModel()
    _, mu4, mu6, _ = QAM256
    p = 1.5
    expected = combine_snr_db(link.trx.snr_trx, ase_snr(link.fiber, p), nli_snr(link, mu4, mu6, p))
    assert effective_snr(link, mu4, mu6, p) == pytest.approx(expected)
    # permuting the three terms changes nothing
    assert combine_snr_db(nli_snr(link, mu4, mu6, p), link.trx.snr_trx, ase_snr(link.fiber, p)) == pytest.approx(expected)


def test_snr_unimodal_in_launch_power():
    link = LinkModel()
    _, mu4, mu6, _ = QAM256
    grid = np.round(np.arange(-5, 8.0001, 0.1), 10)
    snr = np.array([effective_snr(link, mu4, mu6, p) for p in grid])
    k = int(np.argmax(snr))
    assert 0 < k < grid.size - 1
    assert np.all(np.diff(snr[: k + 1]) > 0) and np.all(np.diff(snr[k:]) < 0)
    p_opt, s_opt = optimal_launch_power(link, mu4, mu6)
    assert p_opt == pytest.approx(grid[k]) and s_opt == pytest.approx(snr[k])


@settings(max_examples=40, deadline=None)
@given(
    nf=st.floats(3, 10),
    spans=st.integers(1, 29),
    mu4=st.floats(1.0, 1.9),
    trx=st.floats(15, 40),
    p=st.floats(-3, 6),
)
def test_effective_snr_monotone(nf, spans, mu4, trx, p):
    base = LinkModel(FiberParams(amp_nf=nf, n_spans=spans), TrxParams(snr_trx=trx))
    s = effective_snr(base, mu4, 2.5, p)
    worse = [
        dataclasses.replace(base, fiber=dataclasses.replace(base.fiber, amp_nf=nf + 0.5)),
        base.with_spans(spans + 1),
        dataclasses.replace(base, trx=TrxParams(snr_trx=trx - 1)),
    ]
    for w in worse:
        assert effective_snr(w, mu4, 2.5, p) < s
    assert effective_snr(base, mu4 + 0.05, 2.5, p) < s


def test_quantizer_spec_examples():
    delta, q = quantizer_spec(brgc_qam(2), TrxParams(n_qbits=8))
    assert delta == pytest.approx(1.1 / math.sqrt(2))
    assert q == pytest.approx((delta / 256) ** 2 / 12)
    delta, _ = quantizer_spec(brgc_qam(8), TrxParams(n_qbits=8))
    assert delta == pytest.approx(1.1 * 15 / math.sqrt(170))
    assert quantizer_spec(brgc_qam(8), TrxParams())[1] == 0.0
    qs = [quantizer_spec(brgc_qam(8), TrxParams(n_qbits=b))[1] for b in (4, 8, 12, 16)]
    assert all(a > b for a, b in zip(qs, qs[1:])) and qs[-1] < 1e-10


def test_trx_validation():
    with pytest.raises(ValueError):
        TrxParams(n_qbits=0)
    with pytest.raises(ValueError):
        TrxParams(headroom=0.9)
    with pytest.raises(ValueError):
        FiberParams(gamma=0.0)
    with pytest.raises(ValueError):
        FiberParams(n_spans=-1)


def test_simulate_noiseless_is_exact():
    c = brgc_qam(6)
    idx = np.arange(64)
    assert np.array_equal(simulate(AwgnChannel(math.inf), c, idx, 0), c.points)


def test_simulate_variance_and_support():
    c = brgc_qam(8)
    ch = AwgnChannel(12.0, TrxParams(n_qbits=3))
    rng = np.random.default_rng(0)
    idx = rng.integers(0, 256, 1_000_000)
    y = simulate(ch, c, idx, seed=5)
    _, q_var = quantizer_spec(c, ch.trx)
    target = 1 / db2lin(12.0) + q_var
    assert np.mean(np.abs(y - c.points[idx]) ** 2) == pytest.approx(target, rel=0.01)
    # quantization only: each uniform source stays inside its support
    yq = simulate(AwgnChannel(math.inf, TrxParams(n_qbits=3)), c, idx[:10000], seed=5)
    e = yq - c.points[idx[:10000]]
    a = uniform_halfwidth(q_var)
    assert np.all(np.abs(e.real) <= 2 * a) and np.all(np.abs(e.imag) <= 2 * a)
    assert np.mean(np.abs(e) ** 2) == pytest.approx(q_var, rel=0.05)


def test_simulate_deterministic_and_checks_range():
    c = brgc_qam(4)
    idx = np.arange(16).repeat(10)
    link = LinkModel()
    assert np.array_equal(simulate(link, c, idx, 3), simulate(link, c, idx, 3))
    assert not np.array_equal(simulate(link, c, idx, 3), simulate(link, c, idx, 4))
    with pytest.raises(ValueError):
        simulate(link, c, [16], 0)


def test_link_config_roundtrip(tmp_path):
    link = LinkModel(FiberParams(alpha=0.183, gamma=0.986, n_spans=14), TrxParams(20.78, 6), 1.3, (1e3, 2e2, 1e1))
    path = tmp_path / "link.ini"
    write_link_config(link, path)
    assert read_link_config(path) == link
    assert read_nli_coeffs(path) == (1e3, 2e2, 1e1)
    path.write_text(path.read_text().replace("[fiber]", "[fiber]\nbogus = 1"))
    with pytest.raises(ValueError):
        read_link_config(path)
    with pytest.raises(FileNotFoundError):
        read_link_config(tmp_path / "missing.ini")


def test_unit_helpers():
    assert dbm2watt(0) == pytest.approx(1e-3)
    assert lin2db(db2lin(7.3)) == pytest.approx(7.3)
