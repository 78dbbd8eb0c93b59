"""Dummy-bit budgeting, net-rate arithmetic and MUX/DEMUX framing."""

from __future__ import annotations

import dataclasses
import math
from fractions import Fraction

import numpy as np

from .constellation import ReliabilityOrder


@dataclasses.dataclass(frozen=True)
class RatePlan:
    K: int
    N: int
    m: int
    N_D: int

    def __post_init__(self):
        if not (0 < self.K <= self.N) or self.N_D < 0:
            raise ValueError("need 0 < K <= N and N_D >= 0")
        if (self.N + self.N_D) % self.m:
            raise ValueError(f"N + N_D = {self.N + self.N_D} is not a multiple of m = {self.m}")
        if self.n_d_exact > self.m - 2:
            raise ValueError(f"n_d = {float(self.n_d_exact):.4f} exceeds m - 2 = {self.m - 2}")

    @property
    def R(self) -> Fraction:
        return Fraction(self.K, self.N)

    @property
    def n_d_exact(self) -> Fraction:
        return Fraction(self.m * self.N_D, self.N + self.N_D)

    @property
    def eta_exact(self) -> Fraction:
        return Fraction(self.K * self.m, self.N + self.N_D)

    @property
    def n_d(self) -> float:
        return float(self.n_d_exact)

    @property
    def eta(self) -> float:
        return float(self.eta_exact)

    @property
    def n_symbols(self) -> int:
        return (self.N + self.N_D) // self.m

    def as_record(self) -> dict:
        return {
            "K": self.K,
            "N": self.N,
            "m": self.m,
            "N_D": self.N_D,
            "R": str(self.R),
            "n_d": self.n_d,
            "eta": self.eta,
            "eta_exact": str(self.eta_exact),
            "n_symbols": self.n_symbols,
        }


def eta_of(K: int, N: int, m: int, N_D: int) -> Fraction:
    return Fraction(K * m, N + N_D)


def eta_step(K: int, N: int, m: int, N_D: int) -> Fraction:
    """Rate decrement when one more dummy bit is added."""
    return Fraction(K * m, (N + N_D) * (N + N_D + 1))


def plan_for_target(K: int, N: int, m: int, eta_target: float) -> RatePlan:
    """Frame-aligned dummy-bit count closest to the target net rate."""
    r_max = Fraction(K * m, N)
    target = Fraction(eta_target).limit_denominator(10**12)
    # targets quoted to a few decimals may overshoot R*m by less than one rate step
    if target <= 0 or target > r_max + m * eta_step(K, N, m, 0):
        raise ValueError(f"target rate {eta_target} outside (0, R*m = {float(r_max):.6f}]")
    ideal = max(Fraction(0), Fraction(K * m) / target - N)
    lo = math.floor(ideal)
    # candidates: frame-aligned values around the ideal dummy count
    base = lo - ((N + lo) % m)
    candidates = [v for v in range(base - m, base + 2 * m + 1, m) if v >= 0 and (N + v) % m == 0]
    n_dummy = min(candidates, key=lambda v: (abs(eta_of(K, N, m, v) - target), v))
    return RatePlan(K, N, m, n_dummy)


def rate_step_table(K: int, N: int, m: int, nd_max: float | None = None):
    """Rows ``(N_D, eta, eta_step)`` for every N_D with n_d <= nd_max."""
    nd_max = m - 2 if nd_max is None else nd_max
    # n_d <= nd_max  <=>  N_D <= nd_max * N / (m - nd_max)
    limit = math.floor(Fraction(nd_max).limit_denominator(10**6) * N / (m - Fraction(nd_max).limit_denominator(10**6)))
    return [(n_dummy, eta_of(K, N, m, n_dummy), eta_step(K, N, m, n_dummy)) for n_dummy in range(limit + 1)]


def frame_layout(plan: RatePlan, order: ReliabilityOrder) -> np.ndarray:
    """``(n_symbols, m)`` map to coded-bit indices; ``-1`` marks dummy slots.

    Coded bits fill the fully loaded positions of every symbol in reliability
    order; the shared position takes coded bits on the leading symbols only.
    """
    m, n_sym = plan.m, plan.n_symbols
    if len(order.order) != m:
        raise ValueError("reliability order does not match m")
    hi = math.ceil(plan.n_d_exact)
    lo = math.floor(plan.n_d_exact)
    full = list(order.order[: m - hi])
    n_shared = plan.N - n_sym * (m - hi)
    shared = order.order[m - lo - 1] if hi != lo else None
    layout = np.full((n_sym, m), -1, dtype=np.int64)
    k = 0
    for s in range(n_sym):
        for pos in full:
            layout[s, pos] = k
            k += 1
        if shared is not None and s < n_shared:
            layout[s, shared] = k
            k += 1
    if k != plan.N:
        raise ValueError(f"layout assigns {k} coded bits, expected {plan.N}")
    return layout


def mux_frame(coded_bits, plan: RatePlan, order: ReliabilityOrder, dummy_fill: str = "random", seed: int = 0) -> np.ndarray:
    """Label words (one row per symbol, one column per label position)."""
    coded_bits = np.asarray(coded_bits, dtype=np.uint8)
    if coded_bits.shape != (plan.N,):
        raise ValueError(f"expected {plan.N} coded bits, got {coded_bits.shape}")
    layout = frame_layout(plan, order)
    if dummy_fill == "zero":
        words = np.zeros(layout.shape, dtype=np.uint8)
    elif dummy_fill == "random":
        words = np.random.default_rng(seed).integers(0, 2, layout.shape).astype(np.uint8)
    else:
        raise ValueError(f"unknown dummy fill policy {dummy_fill!r}")
    coded = layout >= 0
    words[coded] = coded_bits[layout[coded]]
    return words


def demux_llrs(llrs, plan: RatePlan, order: ReliabilityOrder) -> np.ndarray:
    """Coded-bit LLRs in codeword order; dummy slots are dropped."""
    llrs = np.asarray(llrs, dtype=float)
    layout = frame_layout(plan, order)
    if llrs.shape != layout.shape:
        raise ValueError(f"LLR array shape {llrs.shape} does not match layout {layout.shape}")
    out = np.empty(plan.N)
    coded = layout >= 0
    out[layout[coded]] = llrs[coded]
    return out
