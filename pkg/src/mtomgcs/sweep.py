"""Required-SNR and maximum-distance sweeps at desk or full scale."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import zlib
from pathlib import Path

import numpy as np

from .air import evaluate, evaluate_th, gmi
from .channel import AwgnChannel, LinkModel, optimal_launch_power
from .constellation import (
    QuadrantSet,
    brgc_qam,
    expand_quadrant,
    moments,
    read_constellation,
    reduce_to_quadrant,
    write_constellation,
)
from .optimizer import OptimizerConfig, nearest_int, optimize_restarts
from .pas import evaluate_pas, mb_for_entropy

logger = logging.getLogger(__name__)

SCHEMES = ("BRGC", "MTOM-unshaped", "MTOM-GCS", "TH", "TH-GCS", "PAS")


@dataclasses.dataclass(frozen=True)
class ScaleConfig:
    name: str
    nd_step: float
    n_blocks: int
    block_symbols: int
    optimizer: OptimizerConfig
    n_restarts: int = 1

    @property
    def n_symbols(self) -> int:
        return self.n_blocks * self.block_symbols


SCALES = {
    "desk": ScaleConfig("desk", 0.25, 5, 20_000, OptimizerConfig(patience=3, max_decays=1, min_epochs=5)),
    "full": ScaleConfig("full", 0.05, 5, 100_000, OptimizerConfig()),
}


@dataclasses.dataclass
class SweepRecord:
    scenario: str
    scheme: str
    knob: str  # "snr_db" or "n_spans"
    value: float
    net_rate: float
    n_d: float = math.nan
    H: float = math.nan
    launch_power: float = math.nan
    air: float = math.nan
    halfwidth: float = math.nan
    feasible: bool = False
    # "ok" (evaluated), "inferred" (by monotonicity), "unreachable" or "failed: ..."
    status: str = "ok"
    seed: int = 0


@dataclasses.dataclass
class SweepResult:
    records: list
    metadata: dict

    def extend(self, other: "SweepResult") -> "SweepResult":
        self.records.extend(other.records)
        return self

    @property
    def failed(self) -> list:
        return [r for r in self.records if r.status.startswith("failed")]

    def thresholds(self, scheme: str, interpolate: bool = False) -> dict:
        """Per net rate: smallest feasible SNR (or largest feasible span count).

        With ``interpolate`` the AIR is interpolated linearly between the two
        evaluated grid points that bracket the target rate.
        """
        out = {}
        rows = [r for r in self.records if r.scheme == scheme]
        for rate in sorted({r.net_rate for r in rows}):
            cells = sorted((r for r in rows if r.net_rate == rate), key=lambda r: r.value)
            ok = [r for r in cells if r.feasible]
            if not ok:
                out[rate] = math.nan
                continue
            if cells[0].knob == "snr_db":
                edge = min(ok, key=lambda r: r.value)
                out[rate] = edge.value
                below = [r for r in cells if r.value < edge.value and r.status == "ok"]
                if interpolate and below and edge.status == "ok":
                    prev = max(below, key=lambda r: r.value)
                    if edge.air > prev.air:
                        t = (rate - prev.air) / (edge.air - prev.air)
                        out[rate] = prev.value + t * (edge.value - prev.value)
            else:
                out[rate] = max(ok, key=lambda r: r.value).value
        return out

    def to_csv(self, path) -> None:
        fields = [f.name for f in dataclasses.fields(SweepRecord)]
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(fields)
            for r in self.records:
                w.writerow([_fmt(getattr(r, f)) for f in fields])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def cell_seed(base_seed: int, scenario: str, value: float) -> int:
    """Seed shared by every scheme at one knob value (paired comparisons)."""
    return (int(base_seed) * 1_000_003 + zlib.crc32(f"{scenario}|{value:.6g}".encode())) % 2**63


def snr_grid(lo: float, hi: float, step: float = 0.6) -> np.ndarray:
    n = int(math.floor((hi - lo) / step + 1e-9))
    return np.round(lo + step * np.arange(n + 1), 10)


def nd_grid(m: int, step: float, nd_max: float | None = None) -> np.ndarray:
    nd_max = min(3, m - 5) if nd_max is None else nd_max
    n = int(math.floor(nd_max / step + 1e-9))
    return np.round(step * np.arange(n + 1), 10)


def mtom_rate(R: float, m: int, n_d: float) -> float:
    return R * (m - n_d)


class ConstellationCache:
    """Optimized constellations keyed by (m, integer n_d, channel, optimizer settings).

    The rounded n_d is part of the key because the objective only depends on
    it; with a ``directory`` entries persist as constellation files.
    """

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory else None
        self._mem = {}
        if self.directory:
            self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(m: int, n_d_int: int, channel, cfg: OptimizerConfig, n_restarts: int) -> str:
        cfg_fields = dataclasses.asdict(dataclasses.replace(cfg, n_d_target=0.0))
        blob = json.dumps([m, n_d_int, repr(channel), cfg_fields, n_restarts], sort_keys=True, default=str)
        return hashlib.sha1(blob.encode()).hexdigest()[:16]

    def get(self, key):
        if key in self._mem:
            return self._mem[key]
        if self.directory and (self.directory / f"{key}.const").exists():
            c = read_constellation(self.directory / f"{key}.const")
            power = json.loads((self.directory / f"{key}.json").read_text())["launch_power"]
            self._mem[key] = (reduce_to_quadrant(c), power)
            return self._mem[key]
        return None

    def put(self, key, q: QuadrantSet, power: float) -> None:
        self._mem[key] = (q, power)
        if self.directory:
            write_constellation(expand_quadrant(q), self.directory / f"{key}.const")
            (self.directory / f"{key}.json").write_text(json.dumps({"launch_power": power}))

    def __len__(self) -> int:
        return len(self._mem)


def gcs_constellation(channel, m: int, n_d_int: int, scale: ScaleConfig, cache: ConstellationCache | None, seed: int = 0):
    """MTOM-GCS constellation for an integer dummy count (optimized on demand)."""
    cfg = dataclasses.replace(scale.optimizer, n_d_target=float(n_d_int), seed=seed,
                              optimize_launch_power=isinstance(channel, LinkModel))
    key = ConstellationCache.key(m, n_d_int, channel, cfg, scale.n_restarts)
    hit = cache.get(key) if cache is not None else None
    if hit is not None:
        return hit
    q, power, _ = optimize_restarts(reduce_to_quadrant(brgc_qam(m)), channel, cfg, scale.n_restarts)
    if cache is not None:
        cache.put(key, q, power)
    return q, power


def _gmi_blocks(c, channel, n_d, scale, seed, launch_power=None, order=None):
    """AIR averaged over independent blocks; halfwidth from the block spread."""
    airs = []
    for b in range(scale.n_blocks):
        airs.append(evaluate(c, channel, n_d, scale.block_symbols, seed + b, order=order, launch_power=launch_power).air_mtom)
    airs = np.array(airs)
    hw = 1.96 * airs.std(ddof=1) / math.sqrt(len(airs)) if len(airs) > 1 else math.nan
    return float(airs.mean()), float(hw)


def scheme_air(scheme: str, channel, R: float, m: int, n_d: float, scale: ScaleConfig, seed: int,
               cache: ConstellationCache | None = None, opt_seed: int = 0, best_power: bool = False):
    """``(air, halfwidth, launch_power, H)`` of one scheme at one channel state.

    With ``best_power`` on a LinkModel the launch power maximizing the
    effective SNR is used (the AIR is monotone in that SNR).
    """
    h = math.nan
    power = None

    def power_for(c, pmf=None):
        if isinstance(channel, LinkModel) and best_power:
            _, mu4, mu6, _ = moments(c, pmf)
            return optimal_launch_power(channel, mu4, mu6)[0]
        return None

    if scheme == "BRGC":
        c = brgc_qam(m - nearest_int(n_d))
        power = power_for(c)
        air, hw = _gmi_blocks(c, channel, 0.0, scale, seed, power)
    elif scheme == "MTOM-unshaped":
        c = brgc_qam(m)
        power = power_for(c)
        air, hw = _gmi_blocks(c, channel, n_d, scale, seed, power)
    elif scheme == "TH":
        lo, hi = math.floor(n_d + 1e-12), math.ceil(n_d - 1e-12)
        c_lo, c_hi = brgc_qam(m - lo), brgc_qam(m - hi)
        p_lo, p_hi = power_for(c_lo), power_for(c_hi)
        a_lo, hw_lo = _gmi_blocks(c_lo, channel, 0.0, scale, seed, p_lo)
        if lo == hi:
            air, hw, power = a_lo, hw_lo, p_lo
        else:
            a_hi, hw_hi = _gmi_blocks(c_hi, channel, 0.0, scale, seed, p_hi)
            f = n_d - lo
            air = f * a_hi + (1 - f) * a_lo
            hw = math.hypot(f * hw_hi, (1 - f) * hw_lo)
            power = p_lo
    elif scheme == "MTOM-GCS":
        q, p_opt = gcs_constellation(channel, m, nearest_int(n_d), scale, cache, opt_seed)
        c = expand_quadrant(q)
        power = power_for(c)
        if power is None and isinstance(channel, LinkModel):
            power = p_opt
        air, hw = _gmi_blocks(c, channel, n_d, scale, seed, power)
    elif scheme == "TH-GCS":
        lo, hi = math.floor(n_d + 1e-12), math.ceil(n_d - 1e-12)
        q_lo, _ = gcs_constellation(channel, m, lo, scale, cache, opt_seed)
        q_hi, _ = gcs_constellation(channel, m, hi, scale, cache, opt_seed)
        c_lo, c_hi = expand_quadrant(q_lo), expand_quadrant(q_hi)
        rep = evaluate_th(c_lo, c_hi, channel, n_d, scale.n_symbols, seed, launch_power=power_for(c_lo))
        air, hw = rep.air_th, rep.confidence_halfwidth
    elif scheme == "PAS":
        h = mtom_rate(R, m, n_d) + m * (1 - R)
        pmf = mb_for_entropy(brgc_qam(m), h)
        power = power_for(pmf.constellation, pmf.probs)
        airs = [evaluate_pas(pmf, channel, scale.block_symbols, seed + b, power)[0] for b in range(scale.n_blocks)]
        air = float(np.mean(airs))
        hw = float(1.96 * np.std(airs, ddof=1) / math.sqrt(len(airs))) if len(airs) > 1 else math.nan
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return air, hw, (math.nan if power is None else float(power)), h


def _bisect(n: int, feasible_at, increasing: bool):
    """Boundary index on a monotone predicate over ``range(n)``.

    ``increasing``: infeasible ... feasible (returns first feasible, or n).
    otherwise: feasible ... infeasible (returns last feasible, or -1).
    """
    lo, hi = -1, n
    while hi - lo > 1:
        mid = (lo + hi) // 2
        ok = feasible_at(mid)
        if ok == increasing:
            hi = mid
        else:
            lo = mid
    return hi if increasing else lo


def _scheme_rates(scheme: str, R: float, m: int, n_ds):
    if scheme == "BRGC":
        # conventional QAM only exists at integer dummy counts (format changes)
        return [float(k) for k in sorted({nearest_int(x) for x in n_ds}) if abs(k - nearest_int(k)) < 1e-12]
    return [float(x) for x in n_ds]


def awgn_required_snr(scheme: str, n_ds, snrs, R: float, m: int = 8, scale: ScaleConfig = SCALES["desk"],
                      cache: ConstellationCache | None = None, seed: int = 0, search: str = "bisect") -> SweepResult:
    """Smallest grid SNR with AIR >= R (m - n_d) for every requested n_d.

    ``search="bisect"`` relies on monotonicity in SNR and marks skipped cells
    as inferred; ``search="full"`` evaluates every cell.
    """
    snrs = [float(s) for s in snrs]
    if not snrs or len(n_ds) == 0:
        raise ValueError("empty sweep grid")
    scenario = f"awgn_R{R:.4f}"
    records = []
    for n_d in _scheme_rates(scheme, R, m, n_ds):
        rate = mtom_rate(R, m, n_d)
        evaluated = {}

        def feasible_at(i):
            if i not in evaluated:
                s = snrs[i]
                sd = cell_seed(seed, scenario, s)
                try:
                    air, hw, power, h = scheme_air(scheme, AwgnChannel(s), R, m, n_d, scale, sd, cache, opt_seed=seed)
                    evaluated[i] = SweepRecord(scenario, scheme, "snr_db", s, rate, n_d, h, power, air, hw, air >= rate, "ok", sd)
                except Exception as exc:  # noqa: BLE001 - a failed cell must not stop the sweep
                    logger.warning("%s n_d=%g snr=%g failed: %s", scheme, n_d, s, exc)
                    evaluated[i] = SweepRecord(scenario, scheme, "snr_db", s, rate, n_d, status=f"failed: {exc}", seed=sd)
            return evaluated[i].feasible

        if search == "full":
            for i in range(len(snrs)):
                feasible_at(i)
            edge = None
        elif search == "bisect":
            edge = _bisect(len(snrs), feasible_at, increasing=True)
        else:
            raise ValueError(f"unknown search mode {search!r}")
        for i, s in enumerate(snrs):
            if i in evaluated:
                records.append(evaluated[i])
            else:
                sd = cell_seed(seed, scenario, s)
                records.append(SweepRecord(scenario, scheme, "snr_db", s, rate, n_d, feasible=i >= edge, status="inferred", seed=sd))
    meta = {"sweep": "awgn_required_snr", "scheme": scheme, "R": R, "m": m, "scale": scale.name, "seed": seed, "search": search}
    return SweepResult(records, meta)


def max_distance(scheme: str, link: LinkModel, n_ds, R: float, m: int = 8, spans=range(1, 31),
                 scale: ScaleConfig = SCALES["desk"], cache: ConstellationCache | None = None, seed: int = 0,
                 train_spans: dict | None = None) -> SweepResult:
    """Largest span count with AIR >= target, per target rate.

    Fixed constellations use the SNR-optimal launch power at every distance.
    MTOM-GCS constellations are trained once per target rate at
    ``train_spans[n_d]`` (with the launch power as a variable) and then
    evaluated along the span grid like the other schemes.
    """
    spans = [int(s) for s in spans]
    scenario = f"nlin_R{R:.4f}"
    records = []
    for n_d in _scheme_rates(scheme, R, m, n_ds):
        rate = mtom_rate(R, m, n_d)
        evaluated = {}
        if scheme == "PAS" and rate + m * (1 - R) > m:
            for s in spans:
                records.append(SweepRecord(scenario, scheme, "n_spans", s, rate, n_d, status="unreachable"))
            continue
        training = None
        if scheme == "MTOM-GCS":
            n_train = (train_spans or {}).get(n_d)
            if n_train is None:
                raise ValueError(f"no training distance for n_d={n_d}")
            training = link.with_spans(n_train)
            _, mu4, mu6, _ = moments(brgc_qam(m))
            training = training.with_power(optimal_launch_power(training, mu4, mu6)[0])

        def feasible_at(i):
            if i not in evaluated:
                s = spans[i]
                sd = cell_seed(seed, scenario, s)
                ch = link.with_spans(s)
                try:
                    if scheme == "MTOM-GCS":
                        q, _ = gcs_constellation(training, m, nearest_int(n_d), scale, cache, seed)
                        c = expand_quadrant(q)
                        _, mu4, mu6, _ = moments(c)
                        power = optimal_launch_power(ch, mu4, mu6)[0]
                        air, hw = _gmi_blocks(c, ch, n_d, scale, sd, power)
                        h = math.nan
                    else:
                        air, hw, power, h = scheme_air(scheme, ch, R, m, n_d, scale, sd, cache, seed, best_power=True)
                    evaluated[i] = SweepRecord(scenario, scheme, "n_spans", s, rate, n_d, h, power, air, hw, air >= rate, "ok", sd)
                except Exception as exc:  # noqa: BLE001
                    logger.warning("%s n_d=%g spans=%d failed: %s", scheme, n_d, s, exc)
                    evaluated[i] = SweepRecord(scenario, scheme, "n_spans", s, rate, n_d, status=f"failed: {exc}", seed=sd)
            return evaluated[i].feasible

        edge = _bisect(len(spans), feasible_at, increasing=False)
        for i, s in enumerate(spans):
            if i in evaluated:
                records.append(evaluated[i])
            else:
                records.append(SweepRecord(scenario, scheme, "n_spans", s, rate, n_d, feasible=i <= edge,
                                           status="inferred", seed=cell_seed(seed, scenario, s)))
    meta = {"sweep": "max_distance", "scheme": scheme, "R": R, "m": m, "scale": scale.name, "seed": seed,
            "link": repr(link)}
    return SweepResult(records, meta)


def gcs_training_spans(link: LinkModel, n_ds, R: float, m: int = 8, spans=range(1, 31), scale: ScaleConfig = SCALES["desk"],
                       seed: int = 0, offset: int = 1) -> dict:
    """Training distance per n_d: the unshaped MTOM frontier plus ``offset`` spans."""
    base = max_distance("MTOM-unshaped", link, n_ds, R, m, spans, scale, seed=seed)
    frontier = base.thresholds("MTOM-unshaped")
    lo, hi = min(spans), max(spans)
    out = {}
    for n_d in n_ds:
        f = frontier[mtom_rate(R, m, float(n_d))]
        f = lo if math.isnan(f) else f
        out[float(n_d)] = int(min(max(f + offset, lo), hi))
    return out
