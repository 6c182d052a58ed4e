"""Linear degradation operators and the additive Gaussian measurement noise."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

KINDS = ("gaussian_blur", "downsample", "mask", "identity")


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """Normalized separable Gaussian kernel of odd ``size``."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 1, got {size}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    r = np.arange(size) - size // 2
    g = np.exp(-0.5 * (r / sigma) ** 2)
    g /= g.sum()
    k = np.outer(g, g)
    return k / k.sum()


@dataclass(frozen=True)
class ForwardOperator:
    kind: str
    image_shape: tuple
    noise_sigma: float = 0.0
    kernel_size: int = 9
    blur_sigma: float = 1.5
    factor: int = 4
    mask: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}; expected one of {KINDS}")
        h, w = self.image_shape
        object.__setattr__(self, "image_shape", (int(h), int(w)))
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.kind == "gaussian_blur":
            gaussian_kernel(self.kernel_size, self.blur_sigma)
        if self.kind == "downsample" and (h % self.factor or w % self.factor):
            raise ValueError(f"factor {self.factor} must divide image shape {self.image_shape}")
        if self.kind == "mask":
            if self.mask is None or np.shape(self.mask) != self.image_shape:
                raise ValueError("mask operator needs a boolean grid matching image_shape")
            object.__setattr__(self, "mask", np.asarray(self.mask, dtype=bool))

    @property
    def d(self) -> int:
        return self.image_shape[0] * self.image_shape[1]

    @property
    def measurement_shape(self) -> tuple:
        if self.kind == "downsample":
            return (self.image_shape[0] // self.factor, self.image_shape[1] // self.factor)
        return self.image_shape

    @property
    def kernel(self) -> np.ndarray:
        return gaussian_kernel(self.kernel_size, self.blur_sigma)


def _as_image(op: ForwardOperator, x) -> Tensor:
    x = ad.as_tensor(x)
    if x.shape == op.image_shape:
        return x
    if x.shape == (op.d,):
        return ad.reshape(x, op.image_shape)
    raise ad.ShapeError(f"operator expects image {op.image_shape} or vector ({op.d},), got {x.shape}")


def apply(op: ForwardOperator, x) -> Tensor:
    """Noiseless measurement A(x) as an image-shaped Tensor."""
    img = _as_image(op, x)
    if op.kind == "gaussian_blur":
        return ad.conv2d(img, op.kernel)
    if op.kind == "downsample":
        return ad.avg_pool2d(img, op.factor)
    if op.kind == "mask":
        return img * op.mask.astype(np.float64)
    return img


def observe(op: ForwardOperator, x, seed: int) -> np.ndarray:
    """Noisy measurement A(x) + sigma * g with g drawn from ``seed``."""
    clean = apply(op, x).numpy()
    if op.noise_sigma == 0:
        return clean
    rng = np.random.default_rng(seed)
    return clean + op.noise_sigma * rng.standard_normal(clean.shape)


def lift(op: ForwardOperator, y) -> np.ndarray:
    """Bring a measurement back to object space (nearest-neighbour for SR)."""
    y = np.asarray(getattr(y, "data", y), dtype=np.float64)
    if y.shape != op.measurement_shape:
        raise ad.ShapeError(f"measurement shape {y.shape} != {op.measurement_shape}")
    if op.kind == "downsample":
        return np.repeat(np.repeat(y, op.factor, axis=0), op.factor, axis=1)
    return y.copy()
