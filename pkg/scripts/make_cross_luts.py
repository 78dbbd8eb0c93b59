"""Generate the shipped 32-/128-cross QAM label LUTs.

Each cross is folded from a 2^a x 2^b rectangular Gray QAM: the outer
columns move onto the cross arms. Four fold orientations are tried; each is
refined by a deterministic pairwise-swap descent whose primary cost is the
Gray penalty (label Hamming distance summed over nearest neighbours) and
whose tie-break is the pairwise-error weight
``sum_ij exp(-|xi - xj|^2 / 4 sigma^2) * d_H(i, j)`` at ``TIEBREAK_SNR_DB``.
The labelling with the lowest (penalty, tie-break) pair is written to
src/mtomgcs/data/ and read by ``brgc_qam``.
"""

import itertools
from pathlib import Path

import numpy as np

from mtomgcs.constellation import Constellation, hamming_penalty, int_to_bits, pam_levels, write_constellation

OUT = Path(__file__).resolve().parents[1] / "src" / "mtomgcs" / "data"
TIEBREAK_SNR_DB = {5: 12.4, 7: 17.2}
PENALTY_WEIGHT = 1e3


def folded_cross(m: int, reverse_rows: bool, reverse_cols: bool) -> Constellation:
    a, b = (m + 1) // 2, (m - 1) // 2
    i_levels, i_gray = pam_levels(a)
    q_levels, q_gray = pam_levels(b)
    i_keep = 3 * 2 ** (b - 1) - 1  # largest |I| kept in place: 5 / 11
    q_max = 2**b - 1
    n_arm_rows = 2 ** (b - 2)
    points, labels = [], []
    for ii, i_lev in enumerate(i_levels):
        for qi, q_lev in enumerate(q_levels):
            label = np.concatenate([int_to_bits([i_gray[ii]], a)[0], int_to_bits([q_gray[qi]], b)[0]])
            if abs(i_lev) <= i_keep:
                pt = i_lev + 1j * q_lev
            else:
                row = int(abs(i_lev) - i_keep - 2) // 2
                if reverse_rows:
                    row = n_arm_rows - 1 - row
                col = q_max + 1 - abs(q_lev) if reverse_cols else abs(q_lev)
                pt = np.sign(i_lev) * col + 1j * np.sign(q_lev) * (2**b + 1 + 2 * row)
            points.append(pt)
            labels.append(label)
    return Constellation(m, np.array(points), np.array(labels))


def _weights(c: Constellation, snr_db: float) -> np.ndarray:
    x = c.points / np.sqrt(np.mean(np.abs(c.points) ** 2))
    d = np.abs(x[:, None] - x[None, :])
    w = np.exp(-(d**2) * 10 ** (snr_db / 10) / 4)
    w[np.isclose(d, d[d > 0].min())] += PENALTY_WEIGHT
    np.fill_diagonal(w, 0.0)
    return w


def descend(c: Constellation, snr_db: float) -> tuple[Constellation, float]:
    w = _weights(c, snr_db)
    lab = c.labels.astype(int)

    def hamming(lab):
        return (lab[:, None, :] != lab[None, :, :]).sum(-1)

    ham = hamming(lab)
    improved = True
    while improved:
        improved = False
        for p in range(c.size):
            for q in range(p + 1, c.size):
                delta = (w[p] - w[q]) * (ham[q] - ham[p])
                delta[[p, q]] = 0.0
                if delta.sum() < -1e-9:
                    lab[[p, q]] = lab[[q, p]]
                    ham = hamming(lab)
                    improved = True
    return Constellation(c.m, c.points, lab.astype(np.uint8)), float((w * ham).sum() / 2)


def build(m: int) -> Constellation:
    best = None
    for rows, cols in itertools.product((False, True), repeat=2):
        c, cost = descend(folded_cross(m, rows, cols), TIEBREAK_SNR_DB[m])
        key = (round(hamming_penalty(c), 9), cost)
        if best is None or key < best[0]:
            best = (key, c)
    return best[1]


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for m in (5, 7):
        c = build(m)
        print(f"{2**m}-cross: Gray penalty {hamming_penalty(c):.4f}")
        write_constellation(c, OUT / f"cross{2**m}.const")


if __name__ == "__main__":
    main()
