"""Labelled 2-D constellations, quadrant reduction and moment statistics."""

from __future__ import annotations

import dataclasses
from importlib import resources
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
MERGE_THRESHOLD = 1e-2


def int_to_bits(values, width: int) -> np.ndarray:
    """MSB-first bit matrix of shape ``(len(values), width)``."""
    values = np.asarray(values, dtype=np.int64)
    shifts = np.arange(width - 1, -1, -1)
    return ((values[:, None] >> shifts) & 1).astype(np.uint8)


def bits_to_int(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    width = bits.shape[-1]
    return (bits << np.arange(width - 1, -1, -1)).sum(axis=-1)


def brgc(n_bits: int) -> np.ndarray:
    """Binary reflected Gray code: entry ``i`` is the label of level ``i``."""
    idx = np.arange(2**n_bits)
    return idx ^ (idx >> 1)


@dataclasses.dataclass(frozen=True, eq=False)
class Constellation:
    """``2**m`` complex points with a fixed bijective label LUT.

    Points may coincide (many-to-one mapping); labels may not.
    """

    m: int
    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.complex128).copy()
        labels = np.asarray(self.labels, dtype=np.uint8).copy()
        size = 2**self.m
        if points.shape != (size,):
            raise ValueError(f"expected {size} points for m={self.m}, got {points.shape}")
        if labels.shape != (size, self.m):
            raise ValueError(f"labels must have shape ({size}, {self.m}), got {labels.shape}")
        if np.any(labels > 1):
            raise ValueError("labels must be 0/1")
        if len(np.unique(bits_to_int(labels))) != size:
            raise ValueError("labels are not bijective")
        points.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return 2**self.m

    @property
    def power(self) -> float:
        return float(np.mean(np.abs(self.points) ** 2))

    def with_points(self, points) -> "Constellation":
        return Constellation(self.m, points, self.labels)


@dataclasses.dataclass(frozen=True, eq=False)
class QuadrantSet:
    """First-quadrant representatives of a quadrant-symmetric constellation.

    Reduced point ``r`` carries the ``m - 2`` non-sign label bits ``bin(r)``.
    """

    m: int
    reduced_points: np.ndarray

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("m must be at least 2")
        pts = np.asarray(self.reduced_points, dtype=np.complex128).copy()
        if pts.shape != (2 ** (self.m - 2),):
            raise ValueError(f"expected {2 ** (self.m - 2)} reduced points, got {pts.shape}")
        pts.setflags(write=False)
        object.__setattr__(self, "reduced_points", pts)

    @property
    def power(self) -> float:
        # sign flips preserve |x|, so the reduced mean equals the full mean
        return float(np.mean(np.abs(self.reduced_points) ** 2))


@dataclasses.dataclass(frozen=True)
class ReliabilityOrder:
    """Label positions (0-based) sorted from most to least reliable."""

    order: tuple
    mi: tuple = ()

    def __post_init__(self):
        order = tuple(int(i) for i in self.order)
        if sorted(order) != list(range(len(order))):
            raise ValueError(f"not a permutation: {order}")
        object.__setattr__(self, "order", order)

    @classmethod
    def identity(cls, m: int) -> "ReliabilityOrder":
        return cls(tuple(range(m)))

    def data_positions(self, n_data: int) -> list:
        return list(self.order[:n_data])


def reliability_order(c: "Constellation", channel, n_mc: int = 100_000, seed: int = 0, tie_tol: float = 1e-3) -> ReliabilityOrder:
    """Order label positions by Monte Carlo bit-wise MI on ``channel``."""
    if n_mc < 10_000:
        raise ValueError("n_mc must be at least 10000")
    from .air import evaluate  # air depends on this module

    return evaluate(c, channel, 0.0, n_mc, seed, tie_tol=tie_tol).order


def normalize_power(c):
    """Scale a Constellation or QuadrantSet to unit mean energy."""
    power = c.power
    if not power > 0:
        raise ValueError("cannot normalize an all-zero constellation")
    scale = 1.0 / np.sqrt(power)
    if isinstance(c, QuadrantSet):
        return QuadrantSet(c.m, c.reduced_points * scale)
    return c.with_points(c.points * scale)


def pam_levels(n_bits: int) -> tuple[np.ndarray, np.ndarray]:
    """Odd-integer PAM levels and their BRGC labels (level order)."""
    n = 2**n_bits
    levels = np.arange(-(n - 1), n, 2, dtype=float)
    return levels, brgc(n_bits)


def square_qam(m: int) -> Constellation:
    """Square QAM as the product of two BRGC PAMs; label = [I bits, Q bits]."""
    if m % 2:
        raise ValueError("square QAM needs even m")
    half = m // 2
    levels, gray = pam_levels(half)
    level_of_label = np.empty_like(levels)
    level_of_label[gray] = levels
    idx = np.arange(2**m)
    re = level_of_label[idx >> half]
    im = level_of_label[idx & (2**half - 1)]
    return normalize_power(Constellation(m, re + 1j * im, int_to_bits(idx, m)))


def brgc_qam(m: int) -> Constellation:
    """Conventional Gray-labelled QAM of ``2**m`` points.

    Even ``m`` gives square QAM. ``m`` of 5 or 7 loads the shipped cross-QAM
    LUTs (quasi-Gray, minimum Gray penalty).
    """
    if m in (2, 4, 6, 8, 10):
        return square_qam(m)
    if m in (5, 7):
        ref = resources.files("mtomgcs").joinpath(f"data/cross{2**m}.const")
        with resources.as_file(ref) as path:
            return normalize_power(read_constellation(path))
    raise ValueError(f"unsupported modulation order m={m}; use 2, 4, 5, 6, 7, 8 or 10")


def _sign_positions(m: int, sign_label_positions) -> tuple[int, int]:
    if sign_label_positions is None:
        # first bit of each PAM label; the I-PAM carries the extra bit for odd m
        return 0, (m + 1) // 2
    p_re, p_im = (int(p) for p in sign_label_positions)
    if p_re == p_im or not (0 <= p_re < m and 0 <= p_im < m):
        raise ValueError(f"invalid sign label positions {sign_label_positions} for m={m}")
    return p_re, p_im


def expand_quadrant(q: QuadrantSet, sign_label_positions=None) -> Constellation:
    """Mirror the reduced set into all four quadrants.

    The two designated label positions carry the real/imaginary sign
    (bit 1 = positive); the rest carry the reduced index bits.
    """
    m = q.m
    p_re, p_im = _sign_positions(m, sign_label_positions)
    rest = [i for i in range(m) if i not in (p_re, p_im)]
    n_red = 2 ** (m - 2)
    points = np.empty(2**m, dtype=np.complex128)
    red = q.reduced_points
    red_bits = int_to_bits(np.arange(n_red), m - 2)
    for s_re in (0, 1):
        for s_im in (0, 1):
            bits = np.zeros((n_red, m), dtype=np.uint8)
            bits[:, rest] = red_bits
            bits[:, p_re] = s_re
            bits[:, p_im] = s_im
            sign_re = 1.0 if s_re else -1.0
            sign_im = 1.0 if s_im else -1.0
            points[bits_to_int(bits)] = sign_re * red.real + 1j * sign_im * red.imag
    return Constellation(m, points, int_to_bits(np.arange(2**m), m))


def reduce_to_quadrant(c: Constellation, sign_label_positions=None) -> QuadrantSet:
    """Inverse of :func:`expand_quadrant` for constellations it can represent."""
    m = c.m
    p_re, p_im = _sign_positions(m, sign_label_positions)
    rest = [i for i in range(m) if i not in (p_re, p_im)]
    mask = (c.labels[:, p_re] == 1) & (c.labels[:, p_im] == 1)
    red_index = bits_to_int(c.labels[mask][:, rest])
    reduced = np.empty(2 ** (m - 2), dtype=np.complex128)
    reduced[red_index] = c.points[mask]
    q = QuadrantSet(m, reduced)
    if not np.allclose(_point_at_label(expand_quadrant(q, (p_re, p_im))), _point_at_label(c)):
        raise ValueError("constellation is not quadrant-symmetric in the declared sign bits")
    return q


def _point_at_label(c: Constellation) -> np.ndarray:
    out = np.empty(c.size, dtype=np.complex128)
    out[bits_to_int(c.labels)] = c.points
    return out


def moments(c: Constellation, pmf=None) -> tuple[float, float, float, float]:
    """Return ``(mu2, mu4, mu6, papr)`` with ``mu_k = sum p_i |x_i|^k``."""
    energy = np.abs(c.points) ** 2
    if pmf is None:
        p = np.full(c.size, 1.0 / c.size)
    else:
        p = np.asarray(pmf, dtype=float)
        if p.shape != (c.size,):
            raise ValueError("pmf length does not match the constellation")
        if np.any(p < 0):
            raise ValueError("pmf has negative entries")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"pmf sums to {p.sum()}, not 1")
    mu2 = float(p @ energy)
    mu4 = float(p @ energy**2)
    mu6 = float(p @ energy**3)
    return mu2, mu4, mu6, float(energy.max() / mu2)


def hamming_penalty(c: Constellation) -> float:
    """Mean label Hamming distance over nearest-neighbour point pairs."""
    pts = c.points
    d = np.abs(pts[:, None] - pts[None, :])
    np.fill_diagonal(d, np.inf)
    dmin = d.min()
    i, j = np.nonzero(np.isclose(d, dmin, rtol=1e-6))
    keep = i < j
    i, j = i[keep], j[keep]
    return float(np.mean(np.sum(c.labels[i] != c.labels[j], axis=1)))


def merge_groups(c: Constellation, data_positions) -> np.ndarray:
    """Group id of each point: points sharing the bits on ``data_positions``."""
    return bits_to_int(c.labels[:, list(data_positions)]) if len(data_positions) else np.zeros(c.size, int)


def merged_fraction(c: Constellation, data_positions, threshold: float = MERGE_THRESHOLD) -> float:
    """Fraction of points whose label group has diameter below ``threshold``."""
    groups = merge_groups(c, data_positions)
    merged = 0
    for g in np.unique(groups):
        members = c.points[groups == g]
        diameter = np.abs(members[:, None] - members[None, :]).max()
        if diameter < threshold:
            merged += len(members)
    return merged / c.size


# -- file format -------------------------------------------------------------


def write_constellation(c: Constellation, path, pmf=None) -> None:
    """Write the versioned text format (one record per point)."""
    normalized = abs(c.power - 1.0) < 1e-9
    lines = [
        f"format_version = {FORMAT_VERSION}",
        f"m = {c.m}",
        f"power_normalized = {'true' if normalized else 'false'}",
        "index label re im" + (" prob" if pmf is not None else ""),
    ]
    for i in range(c.size):
        label = "".join(str(b) for b in c.labels[i])
        rec = f"{i} {label} {c.points[i].real:.17e} {c.points[i].imag:.17e}"
        if pmf is not None:
            rec += f" {pmf[i]:.17e}"
        lines.append(rec)
    Path(path).write_text("\n".join(lines) + "\n")


def read_constellation(path, with_pmf: bool = False):
    header = {}
    records = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" in line:
            key, value = (s.strip() for s in line.split("=", 1))
            header[key] = value
        elif line.startswith("index"):
            continue
        else:
            records.append(line.split())
    if int(header.get("format_version", -1)) != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format_version {header.get('format_version')}")
    m = int(header["m"])
    if len(records) != 2**m:
        raise ValueError(f"{path}: expected {2**m} records, found {len(records)}")
    records.sort(key=lambda r: int(r[0]))
    labels = np.array([[int(ch) for ch in r[1]] for r in records], dtype=np.uint8)
    points = np.array([float(r[2]) + 1j * float(r[3]) for r in records])
    c = Constellation(m, points, labels)
    if with_pmf:
        pmf = np.array([float(r[4]) for r in records]) if len(records[0]) > 4 else None
        return c, pmf
    return c
