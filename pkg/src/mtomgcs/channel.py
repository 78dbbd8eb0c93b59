"""Memoryless surrogate channel: effective SNR, NLIN variance and quantization.

All scalar formulas use plain arithmetic so they also accept torch tensors
(the optimizer differentiates through them).
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from pathlib import Path

import numpy as np

from .constellation import Constellation, moments

PLANCK = 6.62607015e-34
LIGHT_SPEED = 299792458.0
# defaults for the moment-correction terms, as fractions of the GN term c0
NLI_C1_FRACTION = 0.2
NLI_C2_FRACTION = 0.01


def db2lin(x):
    return 10 ** (x / 10)


def lin2db(x):
    return 10 * np.log10(x)


def dbm2watt(p_dbm):
    return 1e-3 * 10 ** (p_dbm / 10)


@dataclasses.dataclass(frozen=True)
class FiberParams:
    alpha: float = 0.2  # dB/km
    dispersion_D: float = 17.0  # ps/nm/km
    gamma: float = 1.3  # 1/W/km
    span_length: float = 100.0  # km
    n_spans: int = 15
    amp_nf: float = 5.0  # dB
    center_frequency: float = 193.41  # THz
    n_channels: int = 5
    symbol_rate: float = 32.0  # GBd
    channel_spacing: float = 50.0  # GHz

    def __post_init__(self):
        for name in ("alpha", "dispersion_D", "gamma", "span_length", "center_frequency", "symbol_rate", "channel_spacing"):
            if not getattr(self, name) > 0:
                raise ValueError(f"FiberParams.{name} must be positive")
        if self.n_spans < 0 or self.n_channels < 1:
            raise ValueError("n_spans must be >= 0 and n_channels >= 1")

    @property
    def distance(self) -> float:
        return self.n_spans * self.span_length

    def with_spans(self, n_spans: int) -> "FiberParams":
        return dataclasses.replace(self, n_spans=int(n_spans))


@dataclasses.dataclass(frozen=True)
class TrxParams:
    snr_trx: float = math.inf  # dB
    n_qbits: int | None = None  # None disables quantization
    headroom: float = 1.1

    def __post_init__(self):
        if self.n_qbits is not None and self.n_qbits < 1:
            raise ValueError("n_qbits must be >= 1")
        if self.headroom < 1:
            raise ValueError("headroom must be >= 1")


@dataclasses.dataclass(frozen=True)
class AwgnChannel:
    """Linear AWGN channel at a fixed SNR (unit signal power)."""

    snr_db: float
    trx: TrxParams = TrxParams()
    launch_power: float = 0.0  # unused; keeps the channel interface uniform

    def sigma2_awgn(self, mu4=None, mu6=None, launch_power_dbm=None):
        if self.snr_db == math.inf:
            return 0.0
        return 1.0 / db2lin(self.snr_db)

    def describe(self) -> str:
        return f"awgn_{self.snr_db:g}dB"


@dataclasses.dataclass(frozen=True)
class LinkModel:
    """Multi-span amplified fiber link with transceiver penalties."""

    fiber: FiberParams = FiberParams()
    trx: TrxParams = TrxParams(snr_trx=35.0, n_qbits=8)
    launch_power: float = 0.0  # dBm per channel
    nli_coeffs: tuple | None = None  # (c0, c1, c2) in 1/W^2 per span

    @property
    def coeffs(self) -> tuple[float, float, float]:
        if self.nli_coeffs is not None:
            return tuple(float(c) for c in self.nli_coeffs)
        return default_nli_coeffs(self.fiber)

    def with_spans(self, n_spans: int) -> "LinkModel":
        return dataclasses.replace(self, fiber=self.fiber.with_spans(n_spans))

    def with_power(self, launch_power: float) -> "LinkModel":
        return dataclasses.replace(self, launch_power=float(launch_power))

    def sigma2_awgn(self, mu4, mu6, launch_power_dbm=None):
        p = self.launch_power if launch_power_dbm is None else launch_power_dbm
        return 1.0 / effective_snr_linear(self, mu4, mu6, p)

    def describe(self) -> str:
        return f"link_{self.fiber.n_spans}x{self.fiber.span_length:g}km_{self.launch_power:g}dBm"


def ase_snr(fiber: FiberParams, launch_power):
    """ASE-limited SNR in dB (``inf`` without amplified spans)."""
    if fiber.n_spans == 0:
        return math.inf
    return lin2db(_ase_snr_linear(fiber, launch_power))


def _ase_noise_power(fiber: FiberParams) -> float:
    gain = db2lin(fiber.alpha * fiber.span_length)
    h_nu = PLANCK * fiber.center_frequency * 1e12
    return fiber.n_spans * (gain - 1) * h_nu * db2lin(fiber.amp_nf) * fiber.symbol_rate * 1e9


def _ase_snr_linear(fiber: FiberParams, launch_power):
    return dbm2watt(launch_power) / _ase_noise_power(fiber)


def gn_c0(fiber: FiberParams) -> float:
    """Incoherent closed-form GN coefficient per span (1/W^2).

    Centre channel of a uniform comb; per-channel NLI power is
    ``c0 * P**3`` for one span.
    """
    alpha = fiber.alpha / (10 * math.log10(math.e)) / 1e3  # 1/m
    span = fiber.span_length * 1e3
    l_eff = (1 - math.exp(-alpha * span)) / alpha
    l_asym = 1 / alpha
    wavelength = LIGHT_SPEED / (fiber.center_frequency * 1e12)
    beta2 = abs(fiber.dispersion_D * 1e-6 * wavelength**2 / (2 * math.pi * LIGHT_SPEED))
    gamma = fiber.gamma * 1e-3
    baud = fiber.symbol_rate * 1e9
    spacing = fiber.channel_spacing * 1e9
    centre = (fiber.n_channels - 1) / 2
    psi = 0.0
    for ch in range(fiber.n_channels):
        df = (ch - centre) * spacing
        if ch == centre:
            psi += math.asinh(0.5 * math.pi**2 * l_asym * beta2 * baud**2)
        else:
            psi += math.asinh(math.pi**2 * l_asym * beta2 * baud * (df + 0.5 * baud))
            psi -= math.asinh(math.pi**2 * l_asym * beta2 * baud * (df - 0.5 * baud))
    return (16 / 27) * (gamma * l_eff) ** 2 * psi / (2 * math.pi * beta2 * l_asym * baud**2)


def default_nli_coeffs(fiber: FiberParams) -> tuple[float, float, float]:
    c0 = gn_c0(fiber)
    return c0, NLI_C1_FRACTION * c0, NLI_C2_FRACTION * c0


def nli_variance(fiber: FiberParams, coeffs, mu4, mu6, launch_power_w):
    """NLIN variance (W) of the channel under test.

    ``P**3 * n_spans * (c0 + c1*(mu4 - 2) + c2*(mu6 - 6))``; the correction
    terms vanish for Gaussian-statistics input.
    """
    c0, c1, c2 = coeffs
    per_span = c0 + c1 * (mu4 - 2) + c2 * (mu6 - 6)
    check = per_span.detach() if hasattr(per_span, "detach") else per_span
    if float(check) < 0:
        raise ValueError("NLI coefficients give a negative variance for these moments")
    return launch_power_w**3 * fiber.n_spans * per_span


def nli_snr(link: LinkModel, mu4, mu6, launch_power=None):
    p_dbm = link.launch_power if launch_power is None else launch_power
    if link.fiber.n_spans == 0:
        return math.inf
    p_w = dbm2watt(p_dbm)
    return lin2db(p_w / nli_variance(link.fiber, link.coeffs, mu4, mu6, p_w))


def effective_snr_linear(link: LinkModel, mu4, mu6, launch_power):
    """Linear effective SNR, torch-compatible in ``launch_power``/moments."""
    inv = 0.0
    if link.trx.snr_trx != math.inf:
        inv = inv + 1.0 / db2lin(link.trx.snr_trx)
    if link.fiber.n_spans > 0:
        p_w = dbm2watt(launch_power)
        inv = inv + _ase_noise_power(link.fiber) / p_w
        inv = inv + nli_variance(link.fiber, link.coeffs, mu4, mu6, p_w) / p_w
    if isinstance(inv, float) and inv == 0.0:
        return math.inf
    return 1.0 / inv


def effective_snr(link: LinkModel, mu4, mu6, launch_power=None):
    """Effective SNR (dB) combining transceiver, ASE and NLIN terms."""
    p = link.launch_power if launch_power is None else launch_power
    snr = effective_snr_linear(link, mu4, mu6, p)
    return math.inf if snr == math.inf else float(lin2db(snr))


def combine_snr_db(*snrs_db) -> float:
    inv = sum(0.0 if s == math.inf else 1.0 / db2lin(s) for s in snrs_db)
    return math.inf if inv == 0 else float(lin2db(1.0 / inv))


def optimal_launch_power(link: LinkModel, mu4, mu6, grid=None) -> tuple[float, float]:
    """Best launch power on a grid (default -5..8 dBm, 0.1 dB step)."""
    if grid is None:
        grid = np.round(np.arange(-5.0, 8.0 + 1e-9, 0.1), 10)
    snrs = [effective_snr(link, mu4, mu6, p) for p in grid]
    k = int(np.argmax(snrs))
    return float(grid[k]), float(snrs[k])


def quantizer_spec(c: Constellation, trx: TrxParams) -> tuple[float, float]:
    """Quantizer range and the Gaussian-equivalent variance added at the demapper."""
    delta = trx.headroom * float(np.max(np.maximum(np.abs(c.points.real), np.abs(c.points.imag))))
    if trx.n_qbits is None:
        return delta, 0.0
    return delta, (delta / 2**trx.n_qbits) ** 2 / 12


def channel_noise(channel, c: Constellation, pmf=None, launch_power=None) -> tuple[float, float]:
    """``(sigma2_awgn, q_variance)`` for a unit-power constellation on ``channel``."""
    _, mu4, mu6, _ = moments(c, pmf)
    sigma2 = float(channel.sigma2_awgn(mu4, mu6, launch_power))
    _, q_var = quantizer_spec(c, channel.trx)
    return sigma2, q_var


def draw_noise(rng: np.random.Generator, n: int):
    """Unit complex Gaussian plus two unit-half-width complex uniforms."""
    gauss = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
    u_dac = rng.uniform(-1, 1, n) + 1j * rng.uniform(-1, 1, n)
    u_adc = rng.uniform(-1, 1, n) + 1j * rng.uniform(-1, 1, n)
    return gauss, u_dac, u_adc


def uniform_halfwidth(q_variance):
    # each of DAC/ADC carries q_variance/2 per complex sample, i.e. /4 per real dim
    return (3 * q_variance / 4) ** 0.5


def simulate(channel, c: Constellation, symbol_indices, seed: int, pmf=None, launch_power=None) -> np.ndarray:
    """Received samples ``y = x + n + w_dac + w_adc``; deterministic per seed."""
    idx = np.asarray(symbol_indices)
    if idx.size and (idx.min() < 0 or idx.max() >= c.size):
        raise ValueError("symbol index out of range")
    sigma2, q_var = channel_noise(channel, c, pmf, launch_power)
    gauss, u_dac, u_adc = draw_noise(np.random.default_rng(seed), idx.size)
    a = uniform_halfwidth(q_var)
    return c.points[idx] + np.sqrt(sigma2) * gauss + a * (u_dac + u_adc)


# -- configuration files -----------------------------------------------------

_FIBER_FIELDS = {f.name: f.type for f in dataclasses.fields(FiberParams)}


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp.optionxform = str  # field names are case-sensitive (dispersion_D)
    return cp


def read_link_config(path) -> LinkModel:
    """Parse an INI link description (sections fiber, trx, link, nli)."""
    cp = _parser()
    if not cp.read(path):
        raise FileNotFoundError(path)
    fiber_kw = {}
    for key, value in cp["fiber"].items() if cp.has_section("fiber") else []:
        if key not in _FIBER_FIELDS:
            raise ValueError(f"{path}: unknown fiber field {key!r}")
        fiber_kw[key] = int(value) if key in ("n_spans", "n_channels") else float(value)
    trx_kw = {}
    if cp.has_section("trx"):
        sec = cp["trx"]
        if "snr_trx" in sec:
            trx_kw["snr_trx"] = float(sec["snr_trx"])
        if "n_qbits" in sec:
            trx_kw["n_qbits"] = None if sec["n_qbits"].lower() == "none" else int(sec["n_qbits"])
        if "headroom" in sec:
            trx_kw["headroom"] = float(sec["headroom"])
    launch = cp.getfloat("link", "launch_power", fallback=0.0)
    coeffs = read_nli_section(cp)
    return LinkModel(FiberParams(**fiber_kw), TrxParams(**{**dataclasses.asdict(LinkModel().trx), **trx_kw}), launch, coeffs)


def read_nli_section(cp: configparser.ConfigParser):
    if not cp.has_section("nli"):
        return None
    return tuple(cp.getfloat("nli", k) for k in ("c0", "c1", "c2"))


def read_nli_coeffs(path) -> tuple[float, float, float]:
    cp = _parser()
    if not cp.read(path):
        raise FileNotFoundError(path)
    coeffs = read_nli_section(cp)
    if coeffs is None:
        raise ValueError(f"{path}: no [nli] section")
    return coeffs


def write_link_config(link: LinkModel, path) -> None:
    cp = _parser()
    cp["fiber"] = {k: repr(v) for k, v in dataclasses.asdict(link.fiber).items()}
    cp["trx"] = {
        "snr_trx": repr(link.trx.snr_trx),
        "n_qbits": str(link.trx.n_qbits),
        "headroom": repr(link.trx.headroom),
    }
    cp["link"] = {"launch_power": repr(link.launch_power)}
    if link.nli_coeffs is not None:
        cp["nli"] = dict(zip(("c0", "c1", "c2"), (repr(float(c)) for c in link.nli_coeffs)))
    with Path(path).open("w") as fh:
        cp.write(fh)
