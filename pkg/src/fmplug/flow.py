"""Linear flow-matching path, MLP velocity field and its training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .optim import Adam

logger = logging.getLogger(__name__)


def _linear_alpha(t):
    return t


def _linear_beta(t):
    return 1.0 - t


@dataclass(frozen=True)
class PathSchedule:
    """Interpolation coefficients z_t = alpha(t) x + beta(t) z."""

    name: str = "linear"
    alpha: Callable = _linear_alpha
    beta: Callable = _linear_beta


LINEAR = PathSchedule()


def _check_time(t) -> None:
    tv = t.data if isinstance(t, Tensor) else np.asarray(t)
    if np.any(tv < 0.0) or np.any(tv > 1.0):
        raise ValueError(f"time must lie in [0, 1], got {tv}")


def interpolate(x, z, t, path: PathSchedule = LINEAR):
    """Point on the probability path between seed ``z`` (t=0) and object ``x`` (t=1)."""
    _check_time(t)
    xs = x.shape if hasattr(x, "shape") else np.shape(x)
    zs = z.shape if hasattr(z, "shape") else np.shape(z)
    if tuple(xs) != tuple(zs):
        raise ad.ShapeError(f"interpolate: x {tuple(xs)} and z {tuple(zs)} differ")
    if not any(isinstance(v, Tensor) for v in (x, z, t)):
        x, z = np.asarray(x, float), np.asarray(z, float)
    return path.alpha(t) * x + path.beta(t) * z


def target_velocity(x, z):
    """Conditional velocity d/dt of the linear path, which is x - z for every t."""
    if np.shape(getattr(x, "data", x)) != np.shape(getattr(z, "data", z)):
        raise ad.ShapeError(f"target_velocity: x {np.shape(getattr(x, 'data', x))} and z {np.shape(getattr(z, 'data', z))} differ")
    if isinstance(x, Tensor) or isinstance(z, Tensor):
        return ad.sub(x, z)
    return np.asarray(x, float) - np.asarray(z, float)


class VelocityField:
    """tanh MLP with sinusoidal time features appended to the input.

    ``widths`` is the full layer list ``[d + time_features, ..., d]``.
    ``output="velocity"`` returns the network output as v(z, t) directly.
    ``output="denoiser"`` reads it as a clean-object estimate D(z, t) and
    returns v = (D - z) / max(1 - t, floor), the linear-path velocity implied
    by that estimate; the network then only has to produce objects, which a
    narrow hidden layer can do for high-dimensional images.
    """

    def __init__(
        self,
        widths,
        time_features: int = 8,
        params=None,
        seed: int = 0,
        output: str = "velocity",
        floor: float = 0.05,
    ):
        widths = [int(w) for w in widths]
        if len(widths) < 2:
            raise ValueError("need at least an input and an output width")
        if time_features % 2:
            raise ValueError("time_features must be even (sin/cos pairs)")
        if output not in ("velocity", "denoiser"):
            raise ValueError(f"output must be 'velocity' or 'denoiser', got {output!r}")
        self.widths = widths
        self.time_features = time_features
        self.output = output
        self.floor = float(floor)
        self.d = widths[-1]
        if widths[0] != self.d + time_features:
            raise ValueError(f"input width {widths[0]} != d + time_features = {self.d + time_features}")
        self.freqs = np.pi * 2.0 ** np.arange(time_features // 2)
        if params is None:
            rng = np.random.default_rng(seed)
            params = []
            for fan_in, fan_out in zip(widths[:-1], widths[1:]):
                params.append(rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in))
                params.append(np.zeros(fan_out))
        self.params = [np.array(p, dtype=np.float64) for p in params]
        expected = self.param_shapes()
        got = [p.shape for p in self.params]
        if got != expected:
            raise ValueError(f"parameter shapes {got} do not match architecture {expected}")

    def param_shapes(self) -> list[tuple]:
        shapes = []
        for fan_in, fan_out in zip(self.widths[:-1], self.widths[1:]):
            shapes += [(fan_in, fan_out), (fan_out,)]
        return shapes

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.param_shapes())

    def embed_time(self, t, batch: int) -> Tensor:
        tcol = ad.reshape(ad.as_tensor(t), (-1, 1))
        arg = tcol * self.freqs[None, :]
        emb = ad.concat([ad.sin(arg), ad.cos(arg)], axis=1)
        if emb.shape[0] != batch:
            emb = ad.broadcast_to(emb, (batch, self.time_features))
        return emb

    def __call__(self, z, t, params=None) -> Tensor:
        z = ad.as_tensor(z)
        single = z.ndim == 1
        z2 = ad.reshape(z, (1, -1)) if single else z
        if z2.shape[1] != self.d:
            raise ad.ShapeError(f"velocity input has dimension {z2.shape[1]}, model expects {self.d}")
        ps = params if params is not None else [Tensor(p) for p in self.params]
        h = ad.concat([z2, self.embed_time(t, z2.shape[0])], axis=1)
        n_layers = len(self.widths) - 1
        for i in range(n_layers):
            h = ad.matmul(h, ps[2 * i]) + ps[2 * i + 1]
            if i < n_layers - 1:
                h = ad.tanh(h)
        if self.output == "denoiser":
            # max(1 - t, floor) written with relu so t stays differentiable
            gap = ad.relu((1.0 - self.floor) - ad.reshape(ad.as_tensor(t), (-1, 1))) + self.floor
            h = (h - z2) / gap
        return ad.reshape(h, (-1,)) if single else h


@dataclass
class FlowModel:
    """A velocity field plus its path schedule. ``field`` is any callable (z, t) -> Tensor."""

    field: Callable
    d: int
    path: PathSchedule = LINEAR
    metadata: dict = field(default_factory=dict)

    def velocity(self, z, t) -> Tensor:
        return self.field(z, t)

    @classmethod
    def from_function(cls, fn: Callable, d: int) -> "FlowModel":
        return cls(field=fn, d=d)


def fm_loss(model: FlowModel, x, z, t, params=None) -> Tensor:
    """Mean over the batch of ||v(z_t, t) - (x - z)||^2."""
    x = np.atleast_2d(np.asarray(x, float))
    z = np.atleast_2d(np.asarray(z, float))
    t = np.atleast_1d(np.asarray(t, float))
    if x.shape[0] == 0:
        raise ValueError("fm_loss: empty batch")
    if x.shape != z.shape or t.shape[0] != x.shape[0]:
        raise ad.ShapeError(f"fm_loss: x {x.shape}, z {z.shape}, t {t.shape} disagree")
    _check_time(t)
    zt = interpolate(x, z, t[:, None], model.path)
    if params is None:
        v = model.velocity(Tensor(zt), Tensor(t))
    else:
        v = model.field(Tensor(zt), Tensor(t), params=params)
    resid = v - target_velocity(x, z)
    return ad.tsum(ad.square(resid)) * (1.0 / x.shape[0])


def _loss_plateau_ok(trace: np.ndarray, window: int = 100, rel_tol: float = 0.1) -> bool:
    half = trace[len(trace) // 2 :]
    n = len(half) // window
    if n < 2:
        return True
    blocks = half[: n * window].reshape(n, window).mean(axis=1)
    running_min = np.minimum.accumulate(blocks)
    return bool(np.all(blocks[1:] <= running_min[:-1] * (1.0 + rel_tol)))


def train_fm(
    data,
    hidden=(128, 128),
    time_features: int = 8,
    lr: float = 1e-3,
    steps: int = 2000,
    batch_size: int = 128,
    seed: int = 0,
    schedule: str = "cosine",
    output: str = "velocity",
) -> FlowModel:
    """Fit a velocity field to ``data`` (N x d) with the conditional FM objective.

    Seeds, times and minibatches all come from one generator seeded by ``seed``,
    so a re-run reproduces the parameters bit for bit. ``schedule`` is
    ``"cosine"`` (learning rate annealed to zero) or ``"constant"``;
    ``steps=0`` returns the untrained initialization.
    """
    if schedule not in ("cosine", "constant"):
        raise ValueError(f"unknown schedule {schedule!r}")
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError(f"dataset must be a nonempty (N, d) array, got shape {data.shape}")
    n, d = data.shape
    rng = np.random.default_rng(seed)
    net = VelocityField([d + time_features, *hidden, d], time_features, seed=int(rng.integers(2**31)), output=output)
    model = FlowModel(field=net, d=d)
    opt = Adam(net.params, lr=lr)
    trace = np.empty(steps)
    for step in range(steps):
        if schedule == "cosine":
            opt.lr = lr * 0.5 * (1.0 + np.cos(np.pi * step / steps))
        idx = rng.integers(0, n, size=min(batch_size, n))
        x = data[idx]
        z = rng.standard_normal(x.shape)
        t = rng.uniform(0.0, 1.0, size=x.shape[0])
        ps = [Tensor(p, requires_grad=True) for p in net.params]
        loss = fm_loss(model, x, z, t, params=ps)
        val = loss.item()
        if not np.isfinite(val):
            raise FloatingPointError(f"fm loss became {val} at step {step}; learning rate {lr} is likely too high")
        trace[step] = val
        opt.step(ad.grad(loss, ps))
        if step % 500 == 0:
            logger.debug("step %d loss %.5f", step, val)
    model.metadata = {
        "seed": seed,
        "steps": steps,
        "lr": lr,
        "batch_size": batch_size,
        "schedule": schedule,
        "output": output,
        "loss_trace": trace.tolist(),
        "plateau_warning": not _loss_plateau_ok(trace),
    }
    return model
