import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mtomgcs.channel import AwgnChannel
from mtomgcs.constellation import (
    Constellation,
    QuadrantSet,
    ReliabilityOrder,
    bits_to_int,
    brgc,
    brgc_qam,
    expand_quadrant,
    hamming_penalty,
    int_to_bits,
    merged_fraction,
    moments,
    normalize_power,
    read_constellation,
    reduce_to_quadrant,
    reliability_order,
    write_constellation,
)
from mtomgcs.oracle import pam_bit_mi_quadrature


def random_quadrant(m, seed):
    rng = np.random.default_rng(seed)
    return QuadrantSet(m, rng.uniform(0.05, 2, 2 ** (m - 2)) + 1j * rng.uniform(0.05, 2, 2 ** (m - 2)))


def test_bit_helpers_roundtrip():
    v = np.arange(64)
    assert np.array_equal(bits_to_int(int_to_bits(v, 6)), v)
    assert int_to_bits([5], 4).tolist() == [[0, 1, 0, 1]]


def test_brgc_neighbours_differ_in_one_bit():
    g = brgc(5)
    assert sorted(g) == list(range(32))
    assert all(bin(a ^ b).count("1") == 1 for a, b in zip(g[:-1], g[1:]))


def test_qpsk():
    c = brgc_qam(2)
    expected = {(0, 0): -1 - 1j, (0, 1): -1 + 1j, (1, 0): 1 - 1j, (1, 1): 1 + 1j}
    for pt, lab in zip(c.points, c.labels):
        assert pt == pytest.approx(expected[tuple(lab)] / np.sqrt(2))
    assert moments(c) == pytest.approx((1, 1, 1, 1))


def test_256qam_moments():
    mu2, mu4, mu6, papr = moments(brgc_qam(8))
    assert mu2 == pytest.approx(1, abs=1e-12)
    assert (mu4, mu6, papr) == pytest.approx((1.39, 2.29, 2.65), abs=0.01)
    # closed form for unit-power square 256QAM
    assert papr == pytest.approx(2 * 225 / 170)


@pytest.mark.parametrize("m", [2, 4, 6, 8])
def test_square_qam_is_gray(m):
    c = brgc_qam(m)
    d = np.abs(c.points[:, None] - c.points[None, :])
    dmin = d[d > 0].min()
    ham = (c.labels[:, None, :] != c.labels[None, :, :]).sum(-1)
    assert np.all(ham[np.isclose(d, dmin)] == 1)
    assert hamming_penalty(c) == pytest.approx(1.0)


def test_square_qam_label_is_i_then_q():
    c = brgc_qam(4)
    # the I-PAM bits alone determine the real part
    for pt, lab in zip(c.points, c.labels):
        same_i = np.all(c.labels[:, :2] == lab[:2], axis=1)
        assert np.allclose(c.points[same_i].real, pt.real)


@pytest.mark.parametrize("m, bound", [(5, 1.2), (7, 1.1)])
def test_cross_qam_luts(m, bound):
    c = brgc_qam(m)
    assert c.power == pytest.approx(1.0)
    # quadrant symmetric, quasi-Gray
    reduce_to_quadrant(c)
    assert 1.0 < hamming_penalty(c) < bound


@pytest.mark.parametrize("m", [1, 3, 9])
def test_unsupported_m(m):
    with pytest.raises(ValueError):
        brgc_qam(m)


def test_constellation_validation():
    with pytest.raises(ValueError):
        Constellation(2, np.zeros(3), int_to_bits(np.arange(4), 2))
    with pytest.raises(ValueError):
        Constellation(2, np.zeros(4), np.zeros((4, 2)))
    # coincident points are fine, duplicate labels are not
    Constellation(2, np.zeros(4), int_to_bits(np.arange(4), 2))


def test_normalize_power_examples():
    c = brgc_qam(4)
    assert np.allclose(normalize_power(c).points, c.points)
    assert np.allclose(normalize_power(c.with_points(3 * c.points)).points, c.points)
    with pytest.raises(ValueError):
        normalize_power(c.with_points(np.zeros(16)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), m=st.sampled_from([4, 6, 8]))
def test_normalize_power_property(seed, m):
    q = random_quadrant(m, seed)
    c = expand_quadrant(q)
    n = normalize_power(c)
    assert n.power == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(normalize_power(n).points, n.points, atol=1e-12)
    assert normalize_power(q).power == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), m=st.sampled_from([2, 4, 6, 8]))
def test_expand_reduce_roundtrip_and_symmetry(seed, m):
    q = random_quadrant(m, seed)
    c = expand_quadrant(q)
    pts = np.sort_complex(np.round(c.points, 12))
    for flip in (np.conj(c.points), -c.points, -np.conj(c.points)):
        assert np.allclose(np.sort_complex(np.round(flip, 12)), pts)
    assert np.allclose(reduce_to_quadrant(c).reduced_points, q.reduced_points)
    # moments of the expansion equal moments of the reduced set
    e = np.abs(q.reduced_points) ** 2
    _, mu4, mu6, _ = moments(c)
    assert mu4 == pytest.approx(np.mean(e**2))
    assert mu6 == pytest.approx(np.mean(e**3))


def test_expand_single_point_gives_qpsk():
    c = expand_quadrant(QuadrantSet(2, np.array([(1 + 1j) / np.sqrt(2)])))
    q = brgc_qam(2)
    assert np.allclose(c.points, q.points)
    assert np.array_equal(c.labels, q.labels)


def test_reduce_brgc_256():
    c = brgc_qam(8)
    q = reduce_to_quadrant(c)
    assert np.all(q.reduced_points.real > 0) and np.all(q.reduced_points.imag > 0)
    back = expand_quadrant(q)
    assert np.allclose(back.points, c.points)
    assert np.array_equal(back.labels, c.labels)


def test_sign_positions_validated():
    q = random_quadrant(4, 0)
    for bad in [(1, 1), (0, 4), (-1, 2)]:
        with pytest.raises(ValueError):
            expand_quadrant(q, bad)
    c = expand_quadrant(q, (1, 3))
    assert np.allclose(reduce_to_quadrant(c, (1, 3)).reduced_points, q.reduced_points)


def test_reduce_rejects_asymmetric():
    c = brgc_qam(4)
    pts = c.points.copy()
    pts[0] += 0.1
    with pytest.raises(ValueError):
        reduce_to_quadrant(c.with_points(pts))


def test_moments_pmf_validation():
    c = brgc_qam(4)
    with pytest.raises(ValueError):
        moments(c, np.full(16, -1 / 16))
    with pytest.raises(ValueError):
        moments(c, np.full(16, 0.1))
    p = np.zeros(16)
    p[0] = 1
    mu2, _, _, papr = moments(c, p)
    assert mu2 == pytest.approx(abs(c.points[0]) ** 2)


def test_merged_fraction():
    c = brgc_qam(4)
    assert merged_fraction(c, [0, 1, 2, 3]) == 1.0  # singleton groups are trivially merged
    assert merged_fraction(c, [0, 2]) == 0.0
    # collapse pairs that differ only in the last bit of each PAM
    pts = c.points.copy()
    for g in range(16):
        same = np.all(c.labels[:, [0, 2]] == c.labels[g, [0, 2]], axis=1)
        pts[same] = c.points[same].mean()
    assert merged_fraction(c.with_points(pts), [0, 2]) == 1.0


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), m=st.sampled_from([2, 4, 6]), with_pmf=st.booleans())
def test_file_roundtrip(tmp_path_factory, seed, m, with_pmf):
    c = expand_quadrant(random_quadrant(m, seed))
    path = tmp_path_factory.mktemp("c") / "c.const"
    pmf = np.random.default_rng(seed).dirichlet(np.ones(2**m)) if with_pmf else None
    write_constellation(c, path, pmf)
    back, p = read_constellation(path, with_pmf=True)
    assert np.array_equal(back.points, c.points)
    assert np.array_equal(back.labels, c.labels)
    if with_pmf:
        assert np.array_equal(p, pmf)
    else:
        assert p is None


def test_file_header(tmp_path):
    path = tmp_path / "c.const"
    write_constellation(brgc_qam(4), path)
    head = path.read_text().splitlines()[:3]
    assert head == ["format_version = 1", "m = 4", "power_normalized = true"]
    path.write_text(path.read_text().replace("format_version = 1", "format_version = 9"))
    with pytest.raises(ValueError):
        read_constellation(path)


def test_reliability_order_noiseless_is_identity():
    order = reliability_order(brgc_qam(8), AwgnChannel(float("inf")), 10_000, 0)
    assert order.order == tuple(range(8))
    assert np.allclose(order.mi, 1.0)


def test_reliability_order_256qam_19db():
    order = reliability_order(brgc_qam(8), AwgnChannel(19.0), 100_000, 1)
    assert sorted(order.order) == list(range(8))
    rank = {p: k for k, p in enumerate(order.order)}
    # each PAM's sign bit ranks above its LSB
    assert rank[0] < rank[3] and rank[4] < rank[7]
    assert set(order.order[-2:]) == {3, 7}
    # the MC per-bit MI agrees with a 1-D quadrature per PAM bit
    levels = np.arange(-15, 16, 2) / np.sqrt(170)
    gray = brgc(4)
    lab = np.empty((16, 4), dtype=int)
    lab[:] = int_to_bits(gray, 4)
    ref = pam_bit_mi_quadrature(levels, lab, 10 ** (-1.9) / 2)
    assert np.allclose(order.mi[:4], ref, atol=0.01)
    assert np.allclose(order.mi[4:], ref, atol=0.01)


def test_reliability_order_validation():
    with pytest.raises(ValueError):
        reliability_order(brgc_qam(4), AwgnChannel(10.0), 100, 0)
    with pytest.raises(ValueError):
        ReliabilityOrder((0, 0, 1))
    assert ReliabilityOrder.identity(3).data_positions(2) == [0, 1]
