"""Inverse-problem solvers driven by a trained flow prior.

Five methods share one entry point, :func:`solve`:

``interleave``
    Euler generation with a data-fidelity gradient step after every ODE step.
``plugin``
    Optimize the seed of the whole (fixed) generation map, random init.
``dflow``
    ``plugin`` started from a mix of the inverted measurement and noise, with a
    chi-square negative log-likelihood penalty on the seed.
``fmplug_w``
    Warm start: enter the flow at a learned time t with
    ``z_t = alpha(t) lift(y) + beta(t) z`` (variance-calibrated), optimize (z, t).
``fmplug_w_r``
    ``fmplug_w`` with z re-projected onto the radius-sqrt(d) sphere after every update.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .degrade import ForwardOperator, apply, lift
from .flow import FlowModel
from .ode import euler_step, generate, invert
from .optim import Adam

logger = logging.getLogger(__name__)

METHODS = ("interleave", "plugin", "dflow", "fmplug_w", "fmplug_w_r")


@dataclass
class SolverConfig:
    method: str = "fmplug_w"
    iterations: int = 300
    steps: int = 3
    lr: float = 1e-2
    alpha: float = 0.5
    reg_weight: float = 1e-3
    n_cal: int = 512
    calibrate: bool = True
    calibrate_every_step: bool = True
    t_init: float = 0.3
    inner_steps: int = 1
    descent_check: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.reg_weight < 0:
            raise ValueError("reg_weight must be >= 0")
        if self.n_cal < 2:
            raise ValueError("n_cal must be >= 2")
        if not 0.0 < self.t_init < 1.0:
            raise ValueError("t_init must lie in (0, 1)")
        if self.inner_steps < 0:
            raise ValueError("inner_steps must be >= 0")


@dataclass
class SolveResult:
    x_hat: np.ndarray
    loss_trace: np.ndarray
    method: str
    best_iter: int
    t: float | None = None
    t_trace: np.ndarray | None = None
    seed_norm_trace: np.ndarray | None = None
    seconds: float = 0.0
    nfe: int = 0
    guidance_trace: list = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return float(self.loss_trace[self.best_iter])


# -- Gaussianity helpers ----------------------------------------------------
def sphere_project(z) -> np.ndarray:
    """Rescale ``z`` onto the sphere of radius sqrt(d)."""
    z = np.asarray(z, dtype=np.float64)
    nrm = np.linalg.norm(z)
    if nrm == 0 or not np.isfinite(nrm):
        raise ValueError("cannot project a zero (or non-finite) vector onto the sphere")
    return np.sqrt(z.size) * z / nrm


def chi2_nll(z0):
    """-(d/2 - 1) log ||z||^2 + ||z||^2 / 2, the chi-square NLL of the squared norm."""
    d = z0.size
    if d <= 2:
        raise ValueError(f"chi2_nll needs d >= 3, got d={d}")
    if isinstance(z0, Tensor):
        u = ad.tsum(ad.square(z0))
        if u.item() <= 0:
            raise ValueError("chi2_nll undefined at z = 0")
        return ad.log(u) * (-(d / 2.0 - 1.0)) + u * 0.5
    u = float(np.sum(np.square(z0)))
    if u <= 0:
        raise ValueError("chi2_nll undefined at z = 0")
    return -(d / 2.0 - 1.0) * np.log(u) + u / 2.0


def variance_calibrate(z_t, target_var: float):
    """Scale ``z_t`` so its scalar variance across dimensions equals ``target_var``.

    For a Tensor input the scale factor is a constant of the graph.
    """
    data = z_t.data if isinstance(z_t, Tensor) else np.asarray(z_t, dtype=np.float64)
    v = float(np.var(data))
    if v <= 0:
        raise ValueError("cannot calibrate a zero-variance vector")
    if target_var <= 0:
        raise ValueError("target variance must be positive")
    return z_t * float(np.sqrt(target_var / v))


@dataclass(frozen=True)
class PathVariance:
    """Pooled variance of generation states on the Euler grid."""

    grid: np.ndarray
    var: np.ndarray

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.grid, self.var))


def estimate_path_variance(model: FlowModel, n_cal: int = 512, steps: int = 3, seed: int = 0) -> PathVariance:
    """Run ``n_cal`` seeded generations and pool the state variance at each grid time."""
    if n_cal < 2:
        raise ValueError("n_cal must be >= 2")
    rng = np.random.default_rng(seed)
    z = Tensor(rng.standard_normal((n_cal, model.d)))
    grid = np.linspace(0.0, 1.0, steps + 1)
    var = [float(np.var(z.data))]
    h = 1.0 / steps
    with ad.no_grad():
        for i in range(steps):
            z = euler_step(model, z, i * h, h)
            var.append(float(np.var(z.data)))
    return PathVariance(grid, np.array(var))


def dflow_init(y_lifted, alpha: float, model: FlowModel, steps: int, seed) -> np.ndarray:
    """sqrt(alpha) * inverted seed of y + sqrt(1 - alpha) * fresh Gaussian."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    y_lifted = np.asarray(y_lifted, dtype=np.float64).ravel()
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(y_lifted.size)
    with ad.no_grad():
        y0 = invert(model, y_lifted, steps).data
    return np.sqrt(alpha) * y0 + np.sqrt(1.0 - alpha) * noise


# -- solvers -------------------------------------------------------------------
def _residual(y: np.ndarray, op: ForwardOperator, x) -> Tensor:
    r = apply(op, x) - y
    return ad.tsum(ad.square(r))


def _check_inputs(y, op: ForwardOperator, model: FlowModel) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != op.measurement_shape:
        raise ad.ShapeError(f"measurement shape {y.shape} != operator's {op.measurement_shape}")
    if model.d != op.d:
        raise ad.ShapeError(f"model dimension {model.d} != operator object dimension {op.d}")
    return y


def _run_descent(params, forward, cfg: SolverConfig, post_update=None):
    """Adam on ``params``; evaluates iterates 0..E and keeps the best one."""
    opt = Adam(params, lr=cfg.lr)
    trace, records = [], []
    best, best_rec, best_val = 0, None, np.inf
    for e in range(cfg.iterations + 1):
        ts = [Tensor(p, requires_grad=True) for p in params]
        loss, x, extra = forward(ts, e)
        val = loss.item()
        if not np.isfinite(val):
            raise FloatingPointError(f"non-finite loss at iterate {e}")
        trace.append(val)
        records.append(extra)
        if val < best_val:
            best, best_val, best_rec = e, val, (x.numpy(), extra)
        if e == cfg.iterations:
            break
        opt.step(ad.grad(loss, ts))
        if post_update is not None:
            post_update(params)
    return np.array(trace), best, best_rec, records


def solve_plugin(y, op: ForwardOperator, model: FlowModel, cfg: SolverConfig, z0=None) -> SolveResult:
    """Seed optimization through the full generation map (``plugin`` / ``dflow``)."""
    if cfg.method not in ("plugin", "dflow"):
        raise ValueError(f"solve_plugin handles plugin/dflow, got {cfg.method!r}")
    y = _check_inputs(y, op, model)
    start = time.perf_counter()
    if z0 is None:
        if cfg.method == "dflow":
            z0 = dflow_init(lift(op, y), cfg.alpha, model, cfg.steps, cfg.seed)
        else:
            z0 = np.random.default_rng(cfg.seed).standard_normal(model.d)
    z = np.array(z0, dtype=np.float64).ravel()
    reg = cfg.reg_weight if cfg.method == "dflow" else 0.0

    def forward(ts, e):
        (zt,) = ts
        x = generate(model, zt, cfg.steps, 0.0)
        loss = _residual(y, op, x)
        if reg > 0:
            loss = loss + chi2_nll(zt) * reg
        return loss, x, float(np.linalg.norm(zt.data))

    trace, best, (x_best, _), norms = _run_descent([z], forward, cfg)
    return SolveResult(
        x_hat=x_best.reshape(op.image_shape),
        loss_trace=trace,
        method=cfg.method,
        best_iter=best,
        seed_norm_trace=np.array(norms),
        seconds=time.perf_counter() - start,
        nfe=cfg.steps,
    )


def calibration_scale(y_lifted, z, tau, model: FlowModel, path_var: PathVariance) -> float:
    """sqrt(Var(Z_t) / Var(z_t)) for the warm-start state at t = sigmoid(tau)."""
    t = float(ad.sigmoid(Tensor(tau)).data)
    zt = model.path.alpha(t) * y_lifted + model.path.beta(t) * np.asarray(z)
    return float(np.sqrt(path_var(t) / np.var(zt)))


def warm_start_objective(y, y_lifted, op: ForwardOperator, model: FlowModel, z, tau, steps: int, scale=None):
    """||y - A(G(s * (alpha_t lift(y) + beta_t z), t))||^2 with t = sigmoid(tau).

    ``scale`` is the variance-calibration factor, a constant of the graph
    (None skips calibration). Returns (loss, x, t).
    """
    t = ad.sigmoid(ad.as_tensor(tau))
    zt = model.path.alpha(t) * y_lifted + model.path.beta(t) * ad.as_tensor(z)
    if scale is not None:
        zt = zt * scale
    x = generate(model, zt, steps, t_start=t)
    return _residual(y, op, x), x, t.item()


def solve_fmplug_w(
    y,
    op: ForwardOperator,
    model: FlowModel,
    cfg: SolverConfig,
    path_var: PathVariance | None = None,
    z0=None,
) -> SolveResult:
    """Joint optimization of the seed z and the warm-start time t = sigmoid(tau)."""
    if cfg.method not in ("fmplug_w", "fmplug_w_r"):
        raise ValueError(f"solve_fmplug_w handles fmplug_w/fmplug_w_r, got {cfg.method!r}")
    y = _check_inputs(y, op, model)
    start = time.perf_counter()
    project = cfg.method == "fmplug_w_r"
    y_l = lift(op, y).ravel()
    if cfg.calibrate and path_var is None:
        path_var = estimate_path_variance(model, cfg.n_cal, cfg.steps, seed=cfg.seed)
    if z0 is None:
        z0 = np.random.default_rng(cfg.seed).standard_normal(model.d)
    z = np.array(z0, dtype=np.float64).ravel()
    if project:
        z = sphere_project(z)
    tau = np.array(np.log(cfg.t_init / (1.0 - cfg.t_init)))
    fixed_scale = []

    def forward(ts, e):
        zv, tv = ts
        scale = None
        if cfg.calibrate:
            if cfg.calibrate_every_step or not fixed_scale:
                fixed_scale[:] = [calibration_scale(y_l, zv.data, tv.data, model, path_var)]
            scale = fixed_scale[0]
        loss, x, t = warm_start_objective(y, y_l, op, model, zv, tv, cfg.steps, scale)
        return loss, x, (t, float(np.linalg.norm(zv.data)))

    def reproject(params):
        params[0][:] = sphere_project(params[0])

    trace, best, (x_best, (t_best, _)), recs = _run_descent(
        [z, tau], forward, cfg, post_update=reproject if project else None
    )
    return SolveResult(
        x_hat=x_best.reshape(op.image_shape),
        loss_trace=trace,
        method=cfg.method,
        best_iter=best,
        t=t_best,
        t_trace=np.array([r[0] for r in recs]),
        seed_norm_trace=np.array([r[1] for r in recs]),
        seconds=time.perf_counter() - start,
        nfe=cfg.steps,
    )


def solve_fmplug_wr(y, op, model, cfg: SolverConfig, path_var=None, z0=None) -> SolveResult:
    if cfg.method != "fmplug_w_r":
        raise ValueError(f"solve_fmplug_wr expects method fmplug_w_r, got {cfg.method!r}")
    return solve_fmplug_w(y, op, model, cfg, path_var=path_var, z0=z0)


def _guidance_step(y, op, z: np.ndarray, lr: float, check: bool):
    zt = Tensor(z, requires_grad=True)
    before = _residual(y, op, zt)
    (g,) = ad.grad(before, [zt])
    b = before.item()
    step = lr
    for _ in range(60):
        cand = z - step * g
        with ad.no_grad():
            after = _residual(y, op, cand).item()
        if not check or after <= b:
            return cand, b, after
        step *= 0.5
    return z, b, b


def solve_interleaving(y, op: ForwardOperator, model: FlowModel, cfg: SolverConfig, z0=None) -> SolveResult:
    """T Euler steps, each followed by ``inner_steps`` gradient steps on ||y - A(z)||^2."""
    if cfg.method != "interleave":
        raise ValueError(f"solve_interleaving expects method interleave, got {cfg.method!r}")
    y = _check_inputs(y, op, model)
    start = time.perf_counter()
    if z0 is None:
        z0 = np.random.default_rng(cfg.seed).standard_normal(model.d)
    z = Tensor(np.array(z0, dtype=np.float64).ravel())
    h = (1.0 - 0.0) * (1.0 / cfg.steps)
    trace, guidance, nfe = [], [], 0
    for i in range(cfg.steps):
        t = 0.0 + h * float(i) if i else 0.0
        with ad.no_grad():
            z = euler_step(model, z, t, h)
        nfe += 1
        if not np.all(np.isfinite(z.data)):
            raise FloatingPointError(f"non-finite state after Euler step {i + 1}")
        if cfg.lr > 0:
            zd = z.data
            for _ in range(cfg.inner_steps):
                zd, b, a = _guidance_step(y, op, zd, cfg.lr, cfg.descent_check)
                guidance.append((b, a))
            z = Tensor(zd)
        with ad.no_grad():
            trace.append(_residual(y, op, z).item())
    return SolveResult(
        x_hat=z.numpy().reshape(op.image_shape),
        loss_trace=np.array(trace),
        method=cfg.method,
        best_iter=len(trace) - 1,
        seed_norm_trace=None,
        seconds=time.perf_counter() - start,
        nfe=nfe,
        guidance_trace=guidance,
    )


def solve(y, op: ForwardOperator, model: FlowModel, cfg: SolverConfig, path_var=None) -> SolveResult:
    if cfg.method == "interleave":
        return solve_interleaving(y, op, model, cfg)
    if cfg.method in ("plugin", "dflow"):
        return solve_plugin(y, op, model, cfg)
    return solve_fmplug_w(y, op, model, cfg, path_var=path_var)
