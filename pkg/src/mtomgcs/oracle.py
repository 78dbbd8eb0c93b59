"""Deterministic reference values by numerical integration.

These routines share no code with the Monte Carlo estimators and exist to
cross-check them.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp


def gmi_quadrature(points, labels, snr_db: float, n_nodes: int = 48) -> np.ndarray:
    """Per-position bit-wise MI of a uniform constellation on complex AWGN.

    Tensor-product Gauss-Hermite quadrature over the 2-D noise for each
    transmitted point; exact likelihoods (no max-log).
    """
    points = np.asarray(points, dtype=np.complex128)
    labels = np.asarray(labels)
    energy = np.mean(np.abs(points) ** 2)
    sigma2 = energy / 10 ** (snr_db / 10)
    t, w = np.polynomial.hermite.hermgauss(n_nodes)
    # complex noise with variance sigma2: each real dim has sigma2/2, z = sqrt(sigma2) * (t1 + j t2)
    noise = np.sqrt(sigma2) * (t[:, None] + 1j * t[None, :]).ravel()
    weight = (w[:, None] * w[None, :]).ravel() / np.pi
    m = labels.shape[1]
    mi = np.zeros(m)
    for k, x in enumerate(points):
        y = x + noise
        metric = -np.abs(y[:, None] - points[None, :]) ** 2 / sigma2
        total = logsumexp(metric, axis=1)
        for i in range(m):
            same = labels[:, i] == labels[k, i]
            mi[i] += weight @ (logsumexp(metric[:, same], axis=1) - total)
    return 1.0 + mi / (len(points) * np.log(2))


def pam_bit_mi_quadrature(levels, bit_labels, noise_var_1d: float, n_nodes: int = 80) -> np.ndarray:
    """Per-bit MI of a real PAM with real Gaussian noise of variance ``noise_var_1d``."""
    levels = np.asarray(levels, dtype=float)
    t, w = np.polynomial.hermite.hermgauss(n_nodes)
    nb = bit_labels.shape[1]
    mi = np.zeros(nb)
    for k, a in enumerate(levels):
        y = a + np.sqrt(2 * noise_var_1d) * t
        metric = -((y[:, None] - levels[None, :]) ** 2) / (2 * noise_var_1d)
        total = logsumexp(metric, axis=1)
        for i in range(nb):
            same = bit_labels[:, i] == bit_labels[k, i]
            mi[i] += w @ (logsumexp(metric[:, same], axis=1) - total) / np.sqrt(np.pi)
    return 1.0 + mi / (len(levels) * np.log(2))
