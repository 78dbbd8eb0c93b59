"""Bit-metric demapping and achievable-rate estimators."""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy.special import logsumexp

from .channel import channel_noise, simulate
from .constellation import Constellation, ReliabilityOrder

LOG2E = 1.0 / math.log(2.0)
Z95 = 1.959963984540054
_CHUNK = 1 << 14
# floor applied when a noiseless channel feeds the Gaussian demapper
MIN_DEMAPPER_VARIANCE = 1e-12


@dataclasses.dataclass(frozen=True, eq=False)
class DemapperConfig:
    constellation: Constellation
    noise_variance: float
    prior: np.ndarray | None = None

    def __post_init__(self):
        if not self.noise_variance > 0:
            raise ValueError("noise_variance must be positive")

    @property
    def labels(self) -> np.ndarray:
        return self.constellation.labels

    def log_prior(self) -> np.ndarray | float:
        if self.prior is None:
            return 0.0
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(self.prior, dtype=float))


def demapper_for(channel, c: Constellation, prior=None, launch_power=None) -> DemapperConfig:
    """Gaussian demapper with variance ``sigma2_awgn + q_variance``."""
    sigma2, q_var = channel_noise(channel, c, prior, launch_power)
    return DemapperConfig(c, max(sigma2 + q_var, MIN_DEMAPPER_VARIANCE), prior)


def _symbol_metrics(y: np.ndarray, cfg: DemapperConfig) -> np.ndarray:
    pts = cfg.constellation.points
    return -np.abs(y[:, None] - pts[None, :]) ** 2 / cfg.noise_variance + cfg.log_prior()


def _bit_lse(metric: np.ndarray, labels: np.ndarray):
    """Per-bit log-sum-exp over the label-0 and label-1 point subsets."""
    shift = metric.max(axis=1, keepdims=True)
    weights = np.exp(metric - shift)
    ones = labels.astype(float)
    with np.errstate(divide="ignore"):
        lse1 = np.log(weights @ ones) + shift
        lse0 = np.log(weights @ (1.0 - ones)) + shift
    # a subset sum that underflowed is recomputed exactly
    bad = np.nonzero(~(np.isfinite(lse0) & np.isfinite(lse1)).all(axis=1))[0]
    for i in range(labels.shape[1]):
        if bad.size == 0:
            break
        sel = labels[:, i] == 1
        lse1[bad, i] = logsumexp(metric[np.ix_(bad, sel)], axis=1)
        lse0[bad, i] = logsumexp(metric[np.ix_(bad, ~sel)], axis=1)
    return lse0, lse1


def bit_llrs(y, cfg: DemapperConfig) -> np.ndarray:
    """Exact LLRs ``log P(b=0|y) - log P(b=1|y)``, shape ``(n, m)``."""
    y = np.asarray(y, dtype=np.complex128)
    out = np.empty((y.size, cfg.constellation.m))
    for s in range(0, y.size, _CHUNK):
        lse0, lse1 = _bit_lse(_symbol_metrics(y[s : s + _CHUNK], cfg), cfg.labels)
        out[s : s + _CHUNK] = lse0 - lse1
    return out


def bit_log_posteriors(x_indices, y, cfg: DemapperConfig) -> np.ndarray:
    """``log2 p(u_k^i | y_k)`` of the transmitted bits, shape ``(n, m)``."""
    x_indices = np.asarray(x_indices)
    y = np.asarray(y, dtype=np.complex128)
    labels = cfg.labels
    out = np.empty((y.size, cfg.constellation.m))
    for s in range(0, y.size, _CHUNK):
        sl = slice(s, s + _CHUNK)
        lse0, lse1 = _bit_lse(_symbol_metrics(y[sl], cfg), labels)
        total = np.logaddexp(lse0, lse1)
        true_bits = labels[x_indices[sl]]
        out[sl] = (np.where(true_bits == 1, lse1, lse0) - total) * LOG2E
    return out


def per_bit_mi(x_indices, y, cfg: DemapperConfig) -> np.ndarray:
    """``1 + E[log2 p(u^i|y)]`` per label position; not clamped at zero."""
    return 1.0 + bit_log_posteriors(x_indices, y, cfg).mean(axis=0)


def order_from_mi(mi, tie_tol: float = 0.0) -> ReliabilityOrder:
    """Sort positions by descending MI; near-ties (within ``tie_tol``) keep index order."""
    mi = np.asarray(mi, dtype=float)
    key = -mi if tie_tol <= 0 else -np.round(mi / tie_tol)
    order = sorted(range(mi.size), key=lambda i: (key[i], i))
    return ReliabilityOrder(tuple(order), tuple(float(v) for v in mi))


def _check_nd(n_d: float, m: int) -> None:
    if not 0 <= n_d <= m - 2 + 1e-12:
        raise ValueError(f"n_d={n_d} outside [0, {m - 2}]")


def _ceil(x: float) -> int:
    return int(math.ceil(x - 1e-12))


def _floor(x: float) -> int:
    return int(math.floor(x + 1e-12))


def mtom_weights(n_d: float, m: int, order: ReliabilityOrder) -> tuple[np.ndarray, float]:
    """Position weights ``w`` and offset ``c`` with ``AIR = c + sum_i w_i (E[log2 p] at i)``."""
    _check_nd(n_d, m)
    hi, lo = _ceil(n_d), _floor(n_d)
    w = np.zeros(m)
    w[list(order.order[: m - hi])] = 1.0
    frac = hi - n_d
    offset = float(m - hi)
    if hi != lo:
        w[order.order[m - lo - 1]] = frac
        offset += frac
    return w, offset


def air_mtom(bce, n_d: float, m: int, order: ReliabilityOrder | None = None) -> float:
    """Rate with dummy positions discarded.

    ``bce[i]`` is ``E[log2 p(u^i|y)]`` at label position ``i``.
    """
    order = order or ReliabilityOrder.identity(m)
    w, offset = mtom_weights(n_d, m, order)
    return float(offset + w @ np.asarray(bce, dtype=float))


def air_th(bce_low, bce_high, n_d: float, m: int, order_low=None, order_high=None) -> float:
    """Time-sharing rate between the floor(n_d) and ceil(n_d) constellations."""
    if len(bce_low) != m or len(bce_high) != m:
        raise ValueError("BCE vectors do not match m")
    _check_nd(n_d, m)
    hi, lo = _ceil(n_d), _floor(n_d)
    order_low = order_low or ReliabilityOrder.identity(m)
    order_high = order_high or ReliabilityOrder.identity(m)
    if hi == lo:
        return air_mtom(bce_low, n_d, m, order_low)
    a_high = air_mtom(bce_high, hi, m, order_high)
    a_low = air_mtom(bce_low, lo, m, order_low)
    return (n_d - lo) * a_high + (hi - n_d) * a_low


@dataclasses.dataclass
class AirReport:
    per_bit_mi: np.ndarray
    air_mtom: float
    air_th: float
    n_d: float
    n_symbols: int
    confidence_halfwidth: float
    order: ReliabilityOrder
    bce: np.ndarray
    # per-sample rate contributions; kept for paired comparisons
    samples: np.ndarray = dataclasses.field(repr=False, default=None)

    def as_record(self) -> dict:
        rec = {
            "n_d": self.n_d,
            "n_symbols": self.n_symbols,
            "air_mtom": self.air_mtom,
            "air_th": self.air_th,
            "halfwidth": self.confidence_halfwidth,
            "order": " ".join(str(i) for i in self.order.order),
        }
        rec.update({f"mi_{i}": float(v) for i, v in enumerate(self.per_bit_mi)})
        return rec


def halfwidth(samples) -> float:
    samples = np.asarray(samples, dtype=float)
    return float(Z95 * samples.std(ddof=1) / np.sqrt(samples.size)) if samples.size > 1 else math.inf


def evaluate(
    c: Constellation,
    channel,
    n_d: float = 0.0,
    n_symbols: int = 100_000,
    seed: int = 0,
    order: ReliabilityOrder | None = None,
    launch_power=None,
    tie_tol: float = 1e-3,
) -> AirReport:
    """Monte Carlo AIR of a uniform-input constellation on ``channel``.

    Without an explicit ``order`` the reliability order is taken from the
    per-bit MI measured on this very evaluation.
    """
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, c.size, n_symbols)
    y = simulate(channel, c, idx, seed=int(rng.integers(2**63)), launch_power=launch_power)
    cfg = demapper_for(channel, c, launch_power=launch_power)
    logp = bit_log_posteriors(idx, y, cfg)
    bce = logp.mean(axis=0)
    mi = 1.0 + bce
    if order is None:
        order = order_from_mi(mi, tie_tol)
    w, offset = mtom_weights(n_d, c.m, order)
    samples = offset + logp @ w
    return AirReport(
        per_bit_mi=mi,
        air_mtom=float(samples.mean()),
        air_th=float(samples.mean()),
        n_d=n_d,
        n_symbols=n_symbols,
        confidence_halfwidth=halfwidth(samples),
        order=order,
        bce=bce,
        samples=samples,
    )


def evaluate_th(c_low, c_high, channel, n_d: float, n_symbols: int = 100_000, seed: int = 0, launch_power=None) -> AirReport:
    """Time-sharing AIR; both constellations see the same seed (paired noise)."""
    lo, hi = _floor(n_d), _ceil(n_d)
    low = evaluate(c_low, channel, lo, n_symbols, seed, launch_power=launch_power)
    if lo == hi:
        return low
    high = evaluate(c_high, channel, hi, n_symbols, seed, launch_power=launch_power)
    f_hi, f_lo = n_d - lo, hi - n_d
    value = air_th(low.bce, high.bce, n_d, c_low.m, low.order, high.order)
    hw = math.hypot(f_hi * high.confidence_halfwidth, f_lo * low.confidence_halfwidth)
    return AirReport(
        per_bit_mi=f_lo * low.per_bit_mi + f_hi * high.per_bit_mi,
        air_mtom=math.nan,
        air_th=value,
        n_d=n_d,
        n_symbols=n_symbols,
        confidence_halfwidth=hw,
        order=low.order,
        bce=f_lo * low.bce + f_hi * high.bce,
    )


def gmi(c: Constellation, channel, n_symbols: int = 100_000, seed: int = 0, launch_power=None) -> AirReport:
    return evaluate(c, channel, 0.0, n_symbols, seed, launch_power=launch_power)


def air_pas(pmf, x_indices, y, cfg: DemapperConfig) -> tuple[float, np.ndarray, float]:
    """PAS rate ``H(X) - sum_i E[-log2 p(u^i|y)]`` with a matched prior.

    Returns ``(air, per_bit_mi, halfwidth)``; per-bit MI here is
    ``H(b_i) + E[log2 p(b_i|y)]`` since bits are not uniform.
    """
    probs = np.asarray(pmf.probs, dtype=float)
    if cfg.prior is None or not np.allclose(cfg.prior, probs):
        raise ValueError("demapper prior must equal the PMF")
    logp = bit_log_posteriors(x_indices, y, cfg)
    samples = pmf.entropy + logp.sum(axis=1)
    p1 = probs @ cfg.labels
    with np.errstate(divide="ignore", invalid="ignore"):
        h_bits = -np.nan_to_num(p1 * np.log2(p1)) - np.nan_to_num((1 - p1) * np.log2(1 - p1))
    return float(samples.mean()), h_bits + logp.mean(axis=0), halfwidth(samples)
