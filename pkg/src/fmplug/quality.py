"""Image metrics and Gaussian concentration diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PSNR_CAP = 99.0


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    mse: float
    instance: str = ""


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b) -> float:
    """PSNR in dB with peak 1.0, capped at 99 dB for (near-)identical images."""
    err = mse(a, b)
    if err < 1e-10:
        return PSNR_CAP
    return float(10.0 * np.log10(1.0 / err))


def ssim(a, b, win: int = 7, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM over all valid ``win`` x ``win`` uniform windows (peak 1.0).

    3-D inputs are treated as channel-last and averaged over channels.
    """
    a, b = _pair(a, b)
    if a.ndim == 3:
        return float(np.mean([ssim(a[..., c], b[..., c], win, k1, k2) for c in range(a.shape[-1])]))
    if a.ndim != 2 or min(a.shape) < win:
        raise ValueError(f"image {a.shape} is smaller than the {win}x{win} window")
    c1, c2 = k1**2, k2**2
    wa = sliding_window_view(a, (win, win))
    wb = sliding_window_view(b, (win, win))
    mu_a = wa.mean(axis=(-2, -1))
    mu_b = wb.mean(axis=(-2, -1))
    da = wa - mu_a[..., None, None]
    db = wb - mu_b[..., None, None]
    var_a = (da * da).mean(axis=(-2, -1))
    var_b = (db * db).mean(axis=(-2, -1))
    cov = (da * db).mean(axis=(-2, -1))
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def report(x_hat, x_true, instance: str = "") -> MetricReport:
    return MetricReport(psnr=psnr(x_hat, x_true), ssim=ssim(x_hat, x_true), mse=mse(x_hat, x_true), instance=instance)


def _gaussian_norms(d: int, n: int, seed: int, center=None, scale: float = 1.0, chunk_elems: int = 2**22):
    rng = np.random.default_rng(seed)
    rows = max(1, chunk_elems // d)
    out = np.empty(n)
    for start in range(0, n, rows):
        m = min(rows, n - start)
        z = scale * rng.standard_normal((m, d))
        if center is not None:
            z += center
        out[start : start + m] = np.sqrt(np.einsum("ij,ij->i", z, z))
    return out


def concentration_diag(d: int, n: int, seed: int = 0, taus=(1.0, 2.0, 3.0)) -> dict:
    """Mean norm of n standard Gaussians in R^d and the fraction with |norm - sqrt(d)| >= tau."""
    if d < 1 or n < 100:
        raise ValueError("need d >= 1 and n >= 100")
    norms = _gaussian_norms(d, n, seed)
    dev = np.abs(norms - np.sqrt(d))
    return {
        "d": d,
        "n": n,
        "mean_norm": float(norms.mean()),
        "tail": {float(t): float(np.mean(dev >= t)) for t in taus},
    }


def shell_overlap_diag(center, radius2: float, n: int, seed: int = 0) -> float:
    """Fraction of N(center, radius2 I) draws within distance 1 of the sqrt(d) shell."""
    center = np.asarray(center, dtype=np.float64).ravel()
    if radius2 <= 0:
        raise ValueError("radius2 must be positive")
    d = center.size
    norms = _gaussian_norms(d, n, seed, center=center, scale=np.sqrt(radius2))
    return float(np.mean(np.abs(norms - np.sqrt(d)) <= 1.0))
