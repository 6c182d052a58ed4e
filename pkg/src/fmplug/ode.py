"""Fixed-step Euler integration of a flow model, unrolled on the autodiff tape."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .flow import FlowModel


@dataclass(frozen=True)
class IntegrationSpec:
    steps: int = 3
    t_start: float = 0.0
    direction: str = "forward"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.direction not in ("forward", "backward"):
            raise ValueError(f"direction must be 'forward' or 'backward', got {self.direction!r}")
        if not 0.0 <= float(self.t_start) < 1.0:
            raise ValueError(f"t_start must lie in [0, 1), got {self.t_start}")


def _check_finite(z: Tensor, step: int) -> None:
    if not np.all(np.isfinite(z.data)):
        raise FloatingPointError(f"non-finite state after Euler step {step}")


def euler_step(model: FlowModel, z, t, h) -> Tensor:
    """One explicit Euler step z + h v(z, t)."""
    return z + h * model.velocity(z, t)


def generate(model: FlowModel, z, steps: int = 3, t_start=0.0) -> Tensor:
    """Integrate from ``t_start`` to 1 in ``steps`` equal Euler steps.

    ``t_start`` may be a scalar Tensor, in which case the output is
    differentiable with respect to it through both the step size and the time
    inputs of the velocity field.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    z = ad.as_tensor(z)
    _check_finite(z, 0)
    t0 = t_start if isinstance(t_start, Tensor) else float(t_start)
    t0_val = float(np.asarray(getattr(t0, "data", t0)))
    if not 0.0 <= t0_val <= 1.0:
        raise ValueError(f"t_start must lie in [0, 1], got {t0_val}")
    h = (1.0 - t0) * (1.0 / steps)
    for i in range(steps):
        t = t0 + h * float(i) if i else t0
        z = euler_step(model, z, t, h)
        _check_finite(z, i + 1)
    return z


def invert(model: FlowModel, x, steps: int = 3) -> Tensor:
    """Run the flow backward from t=1 to t=0 (inverted seed of ``x``)."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    z = ad.as_tensor(x)
    _check_finite(z, 0)
    h = 1.0 / steps
    for i in range(steps):
        z = euler_step(model, z, 1.0 - i * h, -h)
        _check_finite(z, i + 1)
    return z


def integrate(model: FlowModel, z, spec: IntegrationSpec) -> Tensor:
    if spec.direction == "forward":
        return generate(model, z, spec.steps, spec.t_start)
    return invert(model, z, spec.steps)
