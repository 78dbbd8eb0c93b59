"""Maxwell-Boltzmann input distributions for the PAS baseline."""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .air import air_pas, demapper_for
from .channel import simulate
from .constellation import Constellation


@dataclasses.dataclass(frozen=True, eq=False)
class MBPmf:
    nu: float
    probs: np.ndarray
    entropy: float
    # support constellation rescaled to unit power under ``probs``
    constellation: Constellation


def entropy_bits(p) -> float:
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def mb_probs(c: Constellation, nu: float) -> np.ndarray:
    energy = np.abs(c.points) ** 2
    logits = -nu * (energy - energy.min())
    p = np.exp(logits)
    return p / p.sum()


def mb_pmf(c: Constellation, nu: float) -> MBPmf:
    if nu < 0:
        raise ValueError("nu must be non-negative")
    p = mb_probs(c, nu)
    scale = 1.0 / math.sqrt(float(p @ np.abs(c.points) ** 2))
    return MBPmf(float(nu), p, entropy_bits(p), c.with_points(c.points * scale))


def mb_for_entropy(c: Constellation, h_target: float, tol: float = 1e-6) -> MBPmf:
    """Bisection on the MB scale until the entropy is within ``tol`` bits."""
    h_max = math.log2(c.size)
    energy = np.abs(c.points) ** 2
    h_min = math.log2(np.isclose(energy, energy.min()).sum())
    if not (h_min < h_target <= h_max + 1e-12):
        raise ValueError(f"entropy {h_target} not reachable (range ({h_min}, {h_max}])")
    if h_target >= h_max - tol:
        return mb_pmf(c, 0.0)
    # nu is measured in units of 1/E[|x|^2] of the given grid
    lo, hi = 0.0, 1.0 / float(np.mean(energy))
    while entropy_bits(mb_probs(c, hi)) > h_target:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        h = entropy_bits(mb_probs(c, mid))
        if abs(h - h_target) < tol:
            break
        if h > h_target:
            lo = mid
        else:
            hi = mid
    return mb_pmf(c, mid)


def pas_net_rate(h: float, m: int, R: float) -> float:
    """Ideal-DM PAS net rate ``H - m (1 - R)``."""
    if not 0 < R <= 1:
        raise ValueError("FEC rate must lie in (0, 1]")
    rate = h - m * (1 - R)
    if rate < 0:
        raise ValueError(f"negative net rate {rate:.4f} for H={h}, m={m}, R={R}")
    return rate


def sample_pmf(pmf: MBPmf, n: int, seed: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.random.default_rng(seed).choice(len(pmf.probs), size=n, p=pmf.probs)


def evaluate_pas(pmf: MBPmf, channel, n_symbols: int = 100_000, seed: int = 0, launch_power=None):
    """Monte Carlo PAS AIR with a matched-prior demapper.

    Returns ``(air, per_bit_mi, halfwidth)``; NLIN follows the PMF moments.
    """
    rng = np.random.default_rng(seed)
    c = pmf.constellation
    idx = sample_pmf(pmf, n_symbols, int(rng.integers(2**63)))
    y = simulate(channel, c, idx, int(rng.integers(2**63)), pmf=pmf.probs, launch_power=launch_power)
    cfg = demapper_for(channel, c, prior=pmf.probs, launch_power=launch_power)
    return air_pas(pmf, idx, y, cfg)


def pas_sweep(c: Constellation, channel, h_grid, R: float, n_symbols: int = 20_000, seed: int = 0, margin: float = 0.0):
    """AIR versus net rate over an entropy grid, as a ``SweepResult``."""
    from .sweep import SweepRecord, SweepResult  # sweep imports this module

    records = []
    for k, h in enumerate(h_grid):
        pmf = mb_for_entropy(c, float(h))
        net = pas_net_rate(float(h), c.m, R)
        air, _, hw = evaluate_pas(pmf, channel, n_symbols, seed + k)
        records.append(SweepRecord("pas", "PAS", "H", float(h), net, H=float(h), air=air, halfwidth=hw,
                                   feasible=bool(air >= net + margin), seed=seed + k))
    return SweepResult(records, {"sweep": "pas", "R": R, "m": c.m, "seed": seed, "margin": margin, "link": repr(channel)})
