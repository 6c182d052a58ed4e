"""Synthetic datasets and the raw float-grid file format."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np


def radial_frequency(size: int) -> np.ndarray:
    """|f| in cycles/sample for every bin of a size x size 2-D DFT."""
    f = np.fft.fftfreq(size)
    return np.sqrt(f[:, None] ** 2 + f[None, :] ** 2)


def make_smooth_dataset(count: int, size: int, cutoff: float, seed: int) -> np.ndarray:
    """Low-pass filtered white noise images, min-max normalized to [0, 1].

    ``cutoff`` is the kept fraction of the Nyquist frequency (0.5 cycles/sample).
    Returns an array of shape (count, size, size).
    """
    if size < 8:
        raise ValueError(f"size must be >= 8, got {size}")
    if not 0.0 < cutoff < 1.0:
        raise ValueError(f"cutoff must lie in (0, 1), got {cutoff}")
    rng = np.random.default_rng(seed)
    keep = radial_frequency(size) <= cutoff * 0.5
    noise = rng.standard_normal((count, size, size))
    imgs = np.real(np.fft.ifft2(np.fft.fft2(noise) * keep))
    lo = imgs.min(axis=(1, 2), keepdims=True)
    hi = imgs.max(axis=(1, 2), keepdims=True)
    return (imgs - lo) / (hi - lo)


def make_mixture_dataset(
    components: int,
    count: int,
    seed: int,
    center=(2.5, 2.5),
    radius: float = 1.5,
    std: float = 0.3,
) -> np.ndarray:
    """2-D Gaussian mixture with unequal weights (proportional to 1..K).

    Component means sit on a circle of ``radius`` around ``center``.
    """
    if components < 1 or count < 1:
        raise ValueError("components and count must be positive")
    rng = np.random.default_rng(seed)
    w = np.arange(1, components + 1, dtype=float)
    w /= w.sum()
    ang = 2 * np.pi * np.arange(components) / components + np.pi / 4
    means = np.asarray(center, float) + radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    comp = rng.choice(components, size=count, p=w)
    return means[comp] + std * rng.standard_normal((count, 2))


# raw grid file: uint32 header length (12), uint32 count, h, w, then float64 payload, all little-endian
def write_grid_file(path, images) -> None:
    images = np.asarray(images, dtype="<f8")
    if images.ndim != 3:
        raise ValueError(f"expected (count, h, w) images, got shape {images.shape}")
    count, h, w = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<IIII", 12, count, h, w))
        fh.write(images.tobytes(order="C"))


def read_grid_file(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise ValueError(f"{path}: truncated grid file")
    (hlen,) = struct.unpack_from("<I", raw, 0)
    if hlen != 12 or len(raw) < 4 + hlen:
        raise ValueError(f"{path}: bad grid header")
    count, h, w = struct.unpack_from("<III", raw, 4)
    payload = raw[4 + hlen :]
    if len(payload) != 8 * count * h * w:
        raise ValueError(f"{path}: payload holds {len(payload)} bytes, header declares {8 * count * h * w}")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(count, h, w)
