"""Gradient-based many-to-one constellation optimization.

The forward model (normalization, quadrant expansion, moment-dependent
NLIN variance, AWGN plus uniform quantization noise, Gaussian demapping)
is written in torch so the Monte Carlo objective is differentiated exactly.
Noise is drawn with numpy from explicit seeds and fed in as fixed tensors.
"""

from __future__ import annotations

import dataclasses
import logging
import math

import numpy as np
import torch

from .channel import AwgnChannel, LinkModel
from .constellation import (
    QuadrantSet,
    ReliabilityOrder,
    bits_to_int,
    expand_quadrant,
    int_to_bits,
    normalize_power,
    reliability_order,
    _sign_positions,
)

logger = logging.getLogger(__name__)

LOG2E = 1.0 / math.log(2.0)


class OptimizationDiverged(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclasses.dataclass
class OptimizerConfig:
    n_d_target: float = 0.0
    n_symbols_total: int = 100_000  # symbols per epoch
    batch_size: int = 500
    learning_rate: float = 1e-3
    weight_decay: float = 1e-5
    power_learning_rate: float = 1e-2  # dB per step scale for the launch power
    seed: int = 0
    optimize_launch_power: bool = False
    max_epochs: int = 300
    min_epochs: int = 10
    convergence_tol: float = 1e-4
    patience: int = 6
    # plateaus trigger lr *= lr_decay; the run stops on the plateau after max_decays
    lr_decay: float = 0.3
    max_decays: int = 3
    n_validation: int = 20_000
    n_order_mc: int = 100_000
    sign_label_positions: tuple | None = None

    def __post_init__(self):
        if self.n_symbols_total % self.batch_size:
            raise ValueError("batch_size must divide n_symbols_total")
        if self.n_d_target < 0:
            raise ValueError("n_d_target must be non-negative")

    @property
    def steps_per_epoch(self) -> int:
        return self.n_symbols_total // self.batch_size


@dataclasses.dataclass
class TrainingTrace:
    batch_objective: list = dataclasses.field(default_factory=list)
    epoch_objective: list = dataclasses.field(default_factory=list)
    validation_objective: list = dataclasses.field(default_factory=list)
    launch_power: list = dataclasses.field(default_factory=list)
    final_grad_norm: float = math.nan
    data_positions: tuple = ()
    stop_reason: str = ""
    seed: int = 0
    # held-out AIR of every restart when several were run
    restart_scores: list = dataclasses.field(default_factory=list)

    @property
    def epochs(self) -> int:
        return len(self.epoch_objective)

    def rows(self):
        for e, (obj, val, p) in enumerate(zip(self.epoch_objective, self.validation_objective, self.launch_power)):
            yield {"epoch": e + 1, "train_objective": obj, "validation_objective": val, "launch_power_dbm": p}


def nearest_int(x: float) -> int:
    """Round half up (numpy rounds half to even)."""
    return int(math.floor(x + 0.5))


def data_position_count(m: int, n_d_target: float) -> int:
    if not 0 <= n_d_target <= m - 2:
        raise ValueError(f"n_d_target={n_d_target} outside [0, {m - 2}]")
    return m - nearest_int(n_d_target)


class _Expansion:
    """Index tables mapping (reduced index, sign pair) to full label index."""

    def __init__(self, m: int, sign_label_positions=None):
        self.m = m
        p_re, p_im = _sign_positions(m, sign_label_positions)
        self.sign_positions = (p_re, p_im)
        rest = [i for i in range(m) if i not in (p_re, p_im)]
        n_red = 2 ** (m - 2)
        full_index = np.empty((n_red, 4), dtype=np.int64)
        red_of = np.empty(2**m, dtype=np.int64)
        sign_re = np.empty(2**m)
        sign_im = np.empty(2**m)
        red_bits = int_to_bits(np.arange(n_red), m - 2)
        for s in range(4):
            bits = np.zeros((n_red, m), dtype=np.int64)
            bits[:, rest] = red_bits
            bits[:, p_re] = s >> 1
            bits[:, p_im] = s & 1
            j = bits_to_int(bits)
            full_index[:, s] = j
            red_of[j] = np.arange(n_red)
            sign_re[j] = 1.0 if s >> 1 else -1.0
            sign_im[j] = 1.0 if s & 1 else -1.0
        self.full_index = full_index
        self.red_of = torch.as_tensor(red_of)
        self.sign = torch.as_tensor(np.stack([sign_re, sign_im], axis=1))
        self.labels = torch.as_tensor(int_to_bits(np.arange(2**m), m).astype(np.int64))

    def full_points(self, red_xy: torch.Tensor) -> torch.Tensor:
        return red_xy[self.red_of] * self.sign


@dataclasses.dataclass
class Batch:
    """Transmitted full-constellation indices plus unit-scale noise draws."""

    index: np.ndarray
    gauss: np.ndarray  # (n, 2), each real component of variance 1/2
    u_dac: np.ndarray  # (n, 2), uniform on [-1, 1]
    u_adc: np.ndarray

    @classmethod
    def draw(cls, expansion: _Expansion, n: int, rng: np.random.Generator) -> "Batch":
        a = rng.integers(0, expansion.full_index.shape[0], n)
        s = rng.integers(0, 4, n)
        gauss = rng.standard_normal((n, 2)) / math.sqrt(2)
        u_dac = rng.uniform(-1, 1, (n, 2))
        u_adc = rng.uniform(-1, 1, (n, 2))
        return cls(expansion.full_index[a, s], gauss, u_dac, u_adc)


def _channel_terms(channel, red_xy: torch.Tensor, power_dbm):
    energy = (red_xy**2).sum(dim=1)
    mu4 = (energy**2).mean()
    mu6 = (energy**3).mean()
    sigma2 = channel.sigma2_awgn(mu4, mu6, power_dbm)
    if not torch.is_tensor(sigma2):
        sigma2 = torch.as_tensor(float(sigma2), dtype=red_xy.dtype)
    trx = channel.trx
    if trx.n_qbits is None:
        q_var = torch.zeros((), dtype=red_xy.dtype)
    else:
        delta = trx.headroom * red_xy.abs().max()
        q_var = (delta / 2**trx.n_qbits) ** 2 / 12
    return sigma2, q_var


def _forward(red_param, power_dbm, channel, expansion: _Expansion, batch: Batch, data_positions, n_dummy: int):
    """Monte Carlo objective (bits/2D) as a differentiable torch scalar."""
    red_xy = red_param / torch.sqrt((red_param**2).sum(dim=1).mean())
    full = expansion.full_points(red_xy)
    sigma2, q_var = _channel_terms(channel, red_xy, power_dbm)
    dtype = red_xy.dtype
    idx = torch.as_tensor(batch.index)
    halfwidth = torch.sqrt(3 * q_var / 4)
    noise = torch.sqrt(sigma2) * torch.as_tensor(batch.gauss, dtype=dtype) + halfwidth * torch.as_tensor(
        batch.u_dac + batch.u_adc, dtype=dtype
    )
    y = full[idx] + noise
    var = torch.clamp(sigma2 + q_var, min=1e-12)
    # -|y - x|^2 / var without the |y|^2 term, which cancels in every ratio
    metric = (2 * y @ full.T - (full**2).sum(dim=1)) / var  # (B, M)
    # subset sums via exp(metric - rowmax) @ labels; the true-bit subset holds
    # the transmitted point, so it does not underflow at practical SNRs
    peak = metric.max(dim=1, keepdim=True).values.detach()
    e = torch.exp(metric - peak)
    total = e.sum(dim=1, keepdim=True)
    labels = expansion.labels[:, data_positions].to(dtype)  # (M, D)
    ones = e @ labels
    true_bits = labels[idx]
    same = torch.where(true_bits > 0.5, ones, total - ones)
    logp = (torch.log(torch.clamp(same, min=1e-300)) - torch.log(total)) * LOG2E
    return (expansion.m - n_dummy) + logp.mean(dim=0).sum()


def _as_param(q: QuadrantSet, dtype=torch.float64) -> torch.Tensor:
    pts = q.reduced_points
    return torch.tensor(np.stack([pts.real, pts.imag], axis=1), dtype=dtype)


def _resolve_positions(q: QuadrantSet, channel, n_d_target: float, order, seed: int, n_mc: int, sign_positions):
    n_data = data_position_count(q.m, n_d_target)
    if order is None:
        order = reliability_order(expand_quadrant(normalize_power(q), sign_positions), channel, n_mc, seed)
    return list(order.order[:n_data]), q.m - n_data, order


def objective(q: QuadrantSet, channel, n_d_target: float, batch: int = 500, seed: int = 0, order: ReliabilityOrder | None = None,
              launch_power=None, sign_label_positions=None) -> float:
    """Batch estimate of the many-to-one objective in bits/2D."""
    value, _, _ = _objective_and_grad(q, channel, n_d_target, batch, seed, order, launch_power, sign_label_positions, grad=False)
    return value


def gradient(q: QuadrantSet, channel, n_d_target: float, batch: int = 500, seed: int = 0, order: ReliabilityOrder | None = None,
             launch_power=None, sign_label_positions=None):
    """``(dOF/d reduced_points as complex, dOF/d launch_power in dBm)`` at fixed noise."""
    _, g_pts, g_pow = _objective_and_grad(q, channel, n_d_target, batch, seed, order, launch_power, sign_label_positions, grad=True)
    return g_pts, g_pow


def _objective_and_grad(q, channel, n_d_target, batch, seed, order, launch_power, sign_label_positions, grad):
    expansion = _Expansion(q.m, sign_label_positions)
    positions, n_dummy, _ = _resolve_positions(q, channel, n_d_target, order, seed, 10_000, sign_label_positions)
    rng = np.random.default_rng(seed)
    draws = Batch.draw(expansion, batch, rng)
    param = _as_param(q).requires_grad_(grad)
    p0 = channel.launch_power if launch_power is None else launch_power
    power = torch.tensor(float(p0), dtype=torch.float64, requires_grad=grad)
    with torch.set_grad_enabled(grad):
        of = _forward(param, power, channel, expansion, draws, positions, n_dummy)
    if not grad:
        return float(of), None, None
    of.backward()
    g = param.grad.numpy()
    g_pow = 0.0 if power.grad is None else float(power.grad)
    return float(of.detach()), g[:, 0] + 1j * g[:, 1], g_pow


def optimize(init: QuadrantSet, channel, cfg: OptimizerConfig, order: ReliabilityOrder | None = None):
    """Adam on the reduced point set (and optionally the launch power).

    Returns ``(QuadrantSet, launch_power_dbm, TrainingTrace)`` with the
    points normalized to unit power.
    """
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    expansion = _Expansion(init.m, cfg.sign_label_positions)
    positions, n_dummy, order = _resolve_positions(
        init, channel, cfg.n_d_target, order, int(rng.integers(2**63)), cfg.n_order_mc, cfg.sign_label_positions
    )
    trace = TrainingTrace(data_positions=tuple(positions), seed=cfg.seed)
    validation = Batch.draw(expansion, cfg.n_validation, np.random.default_rng(int(rng.integers(2**63))))

    param = _as_param(normalize_power(init)).requires_grad_(True)
    groups = [{"params": [param], "lr": cfg.learning_rate, "weight_decay": cfg.weight_decay}]
    power = torch.tensor(float(channel.launch_power), dtype=torch.float64)
    if cfg.optimize_launch_power:
        if not isinstance(channel, LinkModel):
            raise ValueError("launch power optimization needs a LinkModel channel")
        power.requires_grad_(True)
        groups.append({"params": [power], "lr": cfg.power_learning_rate, "weight_decay": 0.0})
    adam = torch.optim.Adam(groups, betas=(0.9, 0.999), eps=1e-8)

    def validate():
        with torch.no_grad():
            return float(_forward(param, power, channel, expansion, validation, positions, n_dummy))

    best_val = validate()
    stale = decays = 0
    for epoch in range(cfg.max_epochs):
        epoch_vals = []
        for _ in range(cfg.steps_per_epoch):
            batch = Batch.draw(expansion, cfg.batch_size, rng)
            adam.zero_grad()
            of = _forward(param, power, channel, expansion, batch, positions, n_dummy)
            value = float(of.detach())
            if not math.isfinite(value):
                trace.stop_reason = "diverged"
                raise OptimizationDiverged(f"objective became {value} in epoch {epoch + 1}", trace)
            (-of).backward()
            adam.step()
            with torch.no_grad():
                param /= torch.sqrt((param**2).sum(dim=1).mean())
            epoch_vals.append(value)
        trace.batch_objective.extend(epoch_vals)
        trace.epoch_objective.append(float(np.mean(epoch_vals)))
        val = validate()
        trace.validation_objective.append(val)
        trace.launch_power.append(power.item())
        logger.debug("epoch %d: train %.4f val %.4f P %.2f dBm", epoch + 1, trace.epoch_objective[-1], val, power.item())
        if val > best_val + cfg.convergence_tol:
            best_val = val
            stale = 0
        else:
            stale += 1
        if epoch + 1 >= cfg.min_epochs and stale >= cfg.patience:
            if decays >= cfg.max_decays:
                trace.stop_reason = "converged"
                break
            decays += 1
            stale = 0
            for group in adam.param_groups:
                group["lr"] *= cfg.lr_decay
    else:
        trace.stop_reason = "max_epochs"
    if param.grad is not None:
        trace.final_grad_norm = float(param.grad.norm())
    red = param.detach().numpy()
    q = normalize_power(QuadrantSet(init.m, red[:, 0] + 1j * red[:, 1]))
    return q, power.item(), trace


def optimize_restarts(init: QuadrantSet, channel, cfg: OptimizerConfig, n_restarts: int = 1, n_select: int = 100_000):
    """Best of ``n_restarts`` runs (seeds ``cfg.seed + k``) by held-out AIR.

    Every restart is scored on the same independent evaluation seed, so the
    comparison uses common random numbers.
    """
    from .air import evaluate

    if n_restarts < 1:
        raise ValueError("n_restarts must be >= 1")
    best, scores = None, []
    for k in range(n_restarts):
        q, power, trace = optimize(init, channel, dataclasses.replace(cfg, seed=cfg.seed + k))
        c = expand_quadrant(q, cfg.sign_label_positions)
        score = evaluate(c, channel, cfg.n_d_target, n_select, seed=cfg.seed + 7919, launch_power=power).air_mtom
        scores.append(score)
        logger.info("restart %d (seed %d): AIR %.4f", k, cfg.seed + k, score)
        if best is None or score > best[0]:
            best = (score, q, power, trace)
    _, q, power, trace = best
    trace.restart_scores = scores
    return q, power, trace


def optimize_th(init_low: QuadrantSet, init_high: QuadrantSet, channel, cfg: OptimizerConfig):
    """Independent runs at floor(n_d) and ceil(n_d) for time sharing."""
    n_d = cfg.n_d_target
    lo, hi = math.floor(n_d), math.ceil(n_d)
    if lo == hi:
        raise ValueError("time sharing needs a fractional n_d")
    q_lo, _, _ = optimize(init_low, channel, dataclasses.replace(cfg, n_d_target=float(lo)))
    q_hi, _, _ = optimize(init_high, channel, dataclasses.replace(cfg, n_d_target=float(hi)))
    return q_lo, q_hi


def awgn(snr_db: float) -> AwgnChannel:
    return AwgnChannel(snr_db)
