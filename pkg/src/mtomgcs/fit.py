"""Calibration of the surrogate link to measured effective-SNR grids."""

from __future__ import annotations

import csv
import dataclasses
import math
from pathlib import Path

import cma
import numpy as np
from scipy.optimize import brentq, minimize
from scipy.special import expit

from .channel import (
    FiberParams,
    LinkModel,
    TrxParams,
    _ase_noise_power,
    db2lin,
    dbm2watt,
    default_nli_coeffs,
    lin2db,
    optimal_launch_power,
    quantizer_spec,
)
from .constellation import brgc_qam, moments
from .oracle import gmi_quadrature

FIT_PARAMS = ("amp_nf", "snr_trx", "alpha", "gamma")
DEFAULT_BOUNDS = {"amp_nf": (3.0, 12.0), "snr_trx": (10.0, 40.0), "alpha": (0.1, 0.3), "gamma": (0.3, 2.0)}

# recirculating-loop testbed: 100 km spans, D = 22 ps/nm/km, 5 x 32 GBd on a 50 GHz grid at 192.5 THz
EXPERIMENT_FIBER = FiberParams(
    alpha=0.155,
    dispersion_D=22.0,
    gamma=0.715,
    span_length=100.0,
    n_spans=2,
    amp_nf=5.0,
    center_frequency=192.5,
    n_channels=5,
    symbol_rate=32.0,
    channel_spacing=50.0,
)
EXPERIMENT_POWERS = (-0.9, 0.1, 0.5, 1.0, 1.6, 2.1, 2.6)
EXPERIMENT_DISTANCES = tuple(float(d) for d in range(200, 3001, 200))


@dataclasses.dataclass(frozen=True)
class SnrMeasurementGrid:
    distance: np.ndarray  # km
    launch_power: np.ndarray  # dBm
    snr: np.ndarray  # dB
    constellation: str = "qam256"
    n_qbits: int | None = 8

    def __post_init__(self):
        d = np.asarray(self.distance, dtype=float)
        p = np.asarray(self.launch_power, dtype=float)
        s = np.asarray(self.snr, dtype=float)
        if not (d.shape == p.shape == s.shape) or d.ndim != 1:
            raise ValueError("distance, launch_power and snr must be 1-D arrays of equal length")
        if d.size == 0:
            raise ValueError("empty measurement grid")
        if not np.all(np.isfinite(s)):
            raise ValueError("measured SNRs must be finite")
        keys = set(zip(d.tolist(), p.tolist()))
        if len(keys) != d.size:
            raise ValueError("duplicate (distance, launch_power) records")
        for name, arr in (("distance", d), ("launch_power", p), ("snr", s)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.distance.size

    def moments(self) -> tuple[float, float]:
        _, mu4, mu6, _ = moments(measurement_constellation(self.constellation))
        return mu4, mu6

    def permuted(self, perm) -> "SnrMeasurementGrid":
        perm = np.asarray(perm)
        return dataclasses.replace(self, distance=self.distance[perm], launch_power=self.launch_power[perm], snr=self.snr[perm])


@dataclasses.dataclass
class FitResult:
    amp_nf: float
    snr_trx: float
    alpha: float
    gamma: float
    max_abs_error: float
    trace: list  # best-so-far objective after each generation / iteration
    n_evals: int
    method: str
    seed: int

    @property
    def params(self) -> dict:
        return {k: getattr(self, k) for k in FIT_PARAMS}

    def link(self, fixed: FiberParams = EXPERIMENT_FIBER, n_qbits: int | None = 8) -> LinkModel:
        return make_link(self.params, fixed, n_qbits)

    def to_text(self) -> str:
        lines = ["[fit]"]
        lines += [f"{k} = {getattr(self, k)!r}" for k in FIT_PARAMS]
        lines += [f"max_abs_error = {self.max_abs_error!r}", f"n_evals = {self.n_evals}", f"method = {self.method}", f"seed = {self.seed}"]
        return "\n".join(lines) + "\n"


def measurement_constellation(name: str):
    if not name.startswith("qam"):
        raise ValueError(f"unknown measurement constellation {name!r}")
    size = int(name[3:])
    m = size.bit_length() - 1
    if 2**m != size:
        raise ValueError(f"constellation size {size} is not a power of two")
    return brgc_qam(m)


def _as_dict(params) -> dict:
    if isinstance(params, dict):
        return {k: float(params[k]) for k in FIT_PARAMS}
    values = [float(v) for v in params]
    if len(values) != len(FIT_PARAMS):
        raise ValueError(f"expected {len(FIT_PARAMS)} parameters")
    return dict(zip(FIT_PARAMS, values))


def make_link(params, fixed: FiberParams = EXPERIMENT_FIBER, n_qbits: int | None = 8) -> LinkModel:
    p = _as_dict(params)
    fiber = dataclasses.replace(fixed, amp_nf=p["amp_nf"], alpha=p["alpha"], gamma=p["gamma"])
    return LinkModel(fiber, TrxParams(snr_trx=p["snr_trx"], n_qbits=n_qbits))


def predicted_snr(params, grid: SnrMeasurementGrid, fixed: FiberParams = EXPERIMENT_FIBER) -> np.ndarray:
    """Model effective SNR (dB) at every grid record, quantization included."""
    link = make_link(params, fixed, grid.n_qbits)
    mu4, mu6 = grid.moments()
    one_span = link.fiber.with_spans(1)
    n_spans = np.rint(grid.distance / fixed.span_length)
    p_w = dbm2watt(grid.launch_power)
    c0, c1, c2 = default_nli_coeffs(one_span)
    per_span = c0 + c1 * (mu4 - 2) + c2 * (mu6 - 6)
    inv = 1.0 / db2lin(link.trx.snr_trx) + n_spans * (_ase_noise_power(one_span) / p_w + per_span * p_w**2)
    _, q_var = quantizer_spec(measurement_constellation(grid.constellation), link.trx)
    return lin2db(1.0 / (inv + q_var))


def _physical(p: dict) -> bool:
    return all(math.isfinite(v) for v in p.values()) and p["alpha"] > 0 and p["gamma"] > 0


def fit_objective(params, grid: SnrMeasurementGrid, fixed: FiberParams = EXPERIMENT_FIBER) -> float:
    """Maximum absolute model error in dB; ``inf`` for non-physical parameters."""
    p = _as_dict(params)
    if not _physical(p):
        return math.inf
    err = np.abs(predicted_snr(p, grid, fixed) - grid.snr)
    return float(err.max()) if np.all(np.isfinite(err)) else math.inf


def synthetic_grid(params, fixed: FiberParams = EXPERIMENT_FIBER, powers=EXPERIMENT_POWERS, distances=EXPERIMENT_DISTANCES,
                   noise_db: float = 0.0, seed: int = 0, constellation: str = "qam256", n_qbits: int | None = 8) -> SnrMeasurementGrid:
    """Model-generated grid with optional uniform measurement noise of +-noise_db."""
    d, p = np.meshgrid(np.asarray(distances, float), np.asarray(powers, float), indexing="ij")
    template = SnrMeasurementGrid(d.ravel(), p.ravel(), np.zeros(d.size), constellation, n_qbits)
    snr = predicted_snr(params, template, fixed)
    if noise_db:
        snr = snr + np.random.default_rng(seed).uniform(-noise_db, noise_db, snr.size)
    return dataclasses.replace(template, snr=snr)


class _Warp:
    """Logistic map from R^n onto the parameter box."""

    def __init__(self, bounds: dict):
        for k in FIT_PARAMS:
            lo, hi = bounds[k]
            if not lo < hi:
                raise ValueError(f"bad bounds for {k}: {bounds[k]}")
        self.lo = np.array([bounds[k][0] for k in FIT_PARAMS], dtype=float)
        self.hi = np.array([bounds[k][1] for k in FIT_PARAMS], dtype=float)

    def __call__(self, z) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * expit(np.asarray(z, dtype=float))


def cmaes_fit(grid: SnrMeasurementGrid, bounds: dict | None = None, seed: int = 0, budget: int = 4000,
              fixed: FiberParams = EXPERIMENT_FIBER, method: str = "cmaes", sigma0: float = 1.0) -> FitResult:
    """Minimize the max-error objective in a logistic-warped box.

    ``method="cmaes"`` runs the standard strategy from the ``cma`` package with
    its default population size; ``method="nelder-mead"`` is the deterministic
    fallback (restarted from the incumbent until the budget is spent).
    """
    bounds = {**DEFAULT_BOUNDS, **(bounds or {})}
    warp = _Warp(bounds)
    best = {"f": math.inf, "x": None}
    trace = []
    n_evals = 0

    def f(z) -> float:
        nonlocal n_evals
        n_evals += 1
        x = warp(z)
        value = fit_objective(x, grid, fixed)
        if value < best["f"]:
            best["f"], best["x"] = value, x
        return value

    if method == "cmaes":
        # cma treats seed 0 as "seed from the clock"
        opts = {"seed": seed + 1, "maxfevals": budget, "verbose": -9, "tolfun": 1e-12, "tolx": 1e-12, "tolstagnation": budget}
        es = cma.CMAEvolutionStrategy(np.zeros(len(FIT_PARAMS)), sigma0, opts)
        while not es.stop() and n_evals < budget:
            zs = es.ask()
            es.tell(zs, [f(z) for z in zs])
            trace.append(best["f"])
    elif method == "nelder-mead":
        z0 = np.zeros(len(FIT_PARAMS))
        while n_evals < budget:
            res = minimize(f, z0, method="Nelder-Mead",
                           options={"maxfev": budget - n_evals, "xatol": 1e-10, "fatol": 1e-12, "adaptive": True})
            trace.append(best["f"])
            if np.allclose(res.x, z0):
                break
            z0 = res.x
    else:
        raise ValueError(f"unknown method {method!r}")

    if best["x"] is None:
        raise RuntimeError("no feasible evaluation within the budget")
    p = dict(zip(FIT_PARAMS, (float(v) for v in best["x"])))
    return FitResult(**p, max_abs_error=best["f"], trace=trace, n_evals=n_evals, method=method, seed=seed)


def read_grid_csv(path) -> SnrMeasurementGrid:
    """CSV with columns distance_km, power_dbm, snr_db; ``# key = value`` lines carry metadata."""
    meta = {"constellation": "qam256", "n_qbits": "8"}
    rows = []
    with Path(path).open(newline="") as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                meta[key.strip()] = value.strip()
            else:
                lines.append(line)
        for row in csv.DictReader(lines):
            rows.append((float(row["distance_km"]), float(row["power_dbm"]), float(row["snr_db"])))
    if not rows:
        raise ValueError(f"{path}: no measurement records")
    d, p, s = map(np.array, zip(*rows))
    n_qbits = None if meta["n_qbits"].lower() == "none" else int(meta["n_qbits"])
    return SnrMeasurementGrid(d, p, s, meta["constellation"], n_qbits)


def write_grid_csv(grid: SnrMeasurementGrid, path) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write(f"# constellation = {grid.constellation}\n# n_qbits = {grid.n_qbits}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["distance_km", "power_dbm", "snr_db"])
        for d, p, s in zip(grid.distance, grid.launch_power, grid.snr):
            w.writerow([repr(float(d)), repr(float(p)), repr(float(s))])


def calibrate_nli_scale(link: LinkModel, target_gmi: float, m: int = 8) -> tuple[LinkModel, float]:
    """Scale all NLI coefficients so BRGC ``2**m``-QAM reaches ``target_gmi``.

    The target GMI is first converted into the effective SNR that produces it
    (quadrature oracle, Gaussian noise), then a common factor on (c0, c1, c2)
    is solved for so that the best-launch-power SNR of the link equals it.
    Returns the calibrated link (at that launch power) and the factor.
    """
    c = brgc_qam(m)
    if not 0 < target_gmi < m:
        raise ValueError("target GMI must lie in (0, m)")
    snr_star = brentq(lambda s: gmi_quadrature(c.points, c.labels, s).sum() - target_gmi, -10.0, 40.0, xtol=1e-6)
    _, mu4, mu6, _ = moments(c)
    base = link.coeffs

    def scaled(log_k):
        return dataclasses.replace(link, nli_coeffs=tuple(float(x * 10**log_k) for x in base))

    log_k = brentq(lambda lk: optimal_launch_power(scaled(lk), mu4, mu6)[1] - snr_star, -4.0, 4.0, xtol=1e-6)
    out = scaled(log_k)
    power, _ = optimal_launch_power(out, mu4, mu6)
    return out.with_power(power), float(10**log_k)
