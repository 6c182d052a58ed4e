"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` to see the lines inline;
they are also repeated in the terminal summary.
"""

import time

import numpy as np
import pytest
from scipy.stats import binomtest

from fmplug import autodiff as ad
from fmplug.autodiff import Tensor
from fmplug.bench import load_checkpoint, parse_config, run_experiment, save_checkpoint
from fmplug.bench.checkpoint import dumps
from fmplug.bench.datasets import make_smooth_dataset
from fmplug.degrade import ForwardOperator, apply, observe
from fmplug.flow import FlowModel, VelocityField, fm_loss, train_fm
from fmplug.ode import generate
from fmplug.quality import concentration_diag, psnr, shell_overlap_diag
from fmplug.solve import (
    SolverConfig,
    chi2_nll,
    estimate_path_variance,
    solve,
    solve_interleaving,
    sphere_project,
    variance_calibrate,
)

from conftest import fd_grad, rel_err
from test_autodiff import PRIMITIVES

RESULTS: list[str] = []


def verdict(n: int, name: str, ok: bool, detail: str) -> None:
    line = f"criterion {n} [{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# -- 1 -----------------------------------------------------------------------------
def test_criterion_1_autodiff():
    start = time.perf_counter()
    worst_prim = 0.0
    r = np.random.default_rng(1)
    for name, fn, shape, kind in PRIMITIVES:
        x0 = r.uniform(-2, 2, size=shape)
        if kind == "positive":
            x0 = np.abs(x0) + 0.1
        elif kind == "away_from_zero":
            x0 = np.where(np.abs(x0) < 0.05, 0.5, x0)
        x = Tensor(x0, requires_grad=True)
        (g,) = ad.grad(fn(x), [x])
        worst_prim = max(worst_prim, rel_err(g, fd_grad(lambda v: fn(Tensor(v)).item(), x0)))

    # full solve step: seed and start time through T=3 Euler steps of a width-64 net
    side = 6
    net = VelocityField([side * side + 8, 64, 64, side * side], seed=2)
    model = FlowModel(field=net, d=side * side)
    op = ForwardOperator("gaussian_blur", (side, side), kernel_size=3, blur_sigma=1.0)
    y = ad.as_tensor(apply(op, r.uniform(0, 1, (side, side)))).data

    def loss(z, t0):
        x = generate(model, z, 3, t_start=t0)
        return ad.tsum(ad.square(Tensor(y) - apply(op, x)))

    z0, t0 = r.standard_normal(side * side), np.array(0.3)
    z, t = Tensor(z0, requires_grad=True), Tensor(t0, requires_grad=True)
    gz, gt = ad.grad(loss(z, t), [z, t])
    err_z = rel_err(gz, fd_grad(lambda v: loss(v, t0).item(), z0))
    err_t = rel_err(gt, fd_grad(lambda v: loss(z0, v).item(), t0))
    secs = time.perf_counter() - start
    ok = worst_prim < 1e-4 and err_z < 1e-4 and err_t < 1e-3 and secs < 60
    verdict(1, "autodiff vs finite differences", ok,
            f"primitives {worst_prim:.1e}, seed {err_z:.1e}, t_start {err_t:.1e}, {secs:.1f}s")


# -- 2 -----------------------------------------------------------------------------
def test_criterion_2_euler_order():
    ident = FlowModel.from_function(lambda z, t: ad.as_tensor(z), d=3)
    z0 = np.array([1.0, -0.5, 2.0])
    err = {T: np.linalg.norm(generate(ident, z0, T).data - np.e * z0) for T in (8, 16, 32)}
    ratios = [err[8] / err[16], err[16] / err[32]]
    ok = all(abs(q - 2.0) <= 0.3 for q in ratios)
    verdict(2, "Euler first-order convergence", ok, f"error ratios {ratios[0]:.3f}, {ratios[1]:.3f}")


# -- 3 -----------------------------------------------------------------------------
def test_criterion_3_training(toy_data):
    start = time.perf_counter()
    model = train_fm(toy_data, steps=2000, lr=3e-3, seed=0)
    init = train_fm(toy_data, steps=0, seed=0)  # same seed draws the same initial network
    r = np.random.default_rng(123)
    z = r.standard_normal(toy_data.shape)
    t = r.uniform(0, 1, len(toy_data))
    ratio = fm_loss(model, toy_data, z, t).item() / fm_loss(init, toy_data, z, t).item()
    seeds = np.random.default_rng(7).standard_normal((1000, 2))
    with ad.no_grad():
        samples = generate(model, seeds, 100).data
    gap = np.abs(samples.mean(axis=0) - toy_data.mean(axis=0))
    secs = time.perf_counter() - start
    ok = ratio < 0.25 and np.all(gap < 0.1) and secs < 300
    verdict(3, "flow matching on a 2-D mixture", ok,
            f"loss ratio {ratio:.3f}, mean gap {gap.max():.3f}, {secs:.1f}s")


# -- 4 -----------------------------------------------------------------------------
def test_criterion_4_gaussianity():
    r = np.random.default_rng(4)
    worst_norm = worst_idem = 0.0
    for d in (2, 64, 4096):
        z = r.standard_normal(d) * r.uniform(0.01, 100)
        p = sphere_project(z)
        worst_norm = max(worst_norm, abs(np.linalg.norm(p) - np.sqrt(d)))
        worst_idem = max(worst_idem, np.max(np.abs(sphere_project(p) - p)))
    argmins = {}
    for d in (4, 100, 1024):
        grid = np.arange(1, 3 * d + 1, dtype=float)
        vals = [chi2_nll(np.concatenate([[np.sqrt(u)], np.zeros(d - 1)])) for u in grid]
        argmins[d] = int(grid[int(np.argmin(vals))])
    worst_var = 0.0
    for _ in range(200):
        z = r.standard_normal(r.integers(2, 500)) * r.uniform(0.01, 10)
        target = r.uniform(0.01, 5)
        worst_var = max(worst_var, abs(np.var(variance_calibrate(z, target)) / target - 1))
    ok = worst_norm <= 1e-9 and worst_idem <= 1e-9 and all(argmins[d] == d - 2 for d in argmins) and worst_var <= 1e-9
    verdict(4, "Gaussianity machinery", ok,
            f"norm err {worst_norm:.1e}, chi2 argmin {argmins}, variance rel err {worst_var:.1e}")


# -- 5 -----------------------------------------------------------------------------
def test_criterion_5_concentration():
    d = 4096
    conc = concentration_diag(d, 10_000, seed=0)
    overlap = shell_overlap_diag(np.full(d, 2.0), 1.0, 10_000, seed=0)
    ok = 63.3 <= conc["mean_norm"] <= 64.6 and overlap < 1e-3
    verdict(5, "concentration diagnostics", ok, f"mean norm {conc['mean_norm']:.3f}, off-center overlap {overlap:.1e}")


# -- 6 and 7 -------------------------------------------------------------------------
@pytest.fixture(scope="module")
def deblur_suite(image_model):
    op = ForwardOperator("gaussian_blur", (32, 32), kernel_size=9, blur_sigma=1.5, noise_sigma=0.03)
    test = make_smooth_dataset(10, 32, 0.25, seed=12345)
    pv = estimate_path_variance(image_model, 512, 3, seed=0)
    out = {"plugin": [], "fmplug_w": [], "fmplug_w_r": [], "norms": [], "t": []}
    start = time.perf_counter()
    for i, x in enumerate(test):
        y = observe(op, x, seed=i)
        for method in ("plugin", "fmplug_w", "fmplug_w_r"):
            res = solve(y, op, image_model, SolverConfig(method=method, iterations=300, seed=i), path_var=pv)
            out[method].append(psnr(res.x_hat, x))
            if method == "fmplug_w_r":
                out["norms"].append(res.seed_norm_trace)
            if method == "fmplug_w":
                out["t"].append(res.t)
    out["seconds"] = time.perf_counter() - start
    return out


def test_criterion_6_warm_start_beats_random_init(deblur_suite):
    w, p = np.array(deblur_suite["fmplug_w"]), np.array(deblur_suite["plugin"])
    wins = int(np.sum(w > p))
    pval = binomtest(wins, len(w), 0.5, alternative="greater").pvalue
    ok = w.mean() > p.mean() and pval < 0.05 and deblur_suite["seconds"] < 1800
    verdict(6, "warm start vs random-init plug-in (deblur)", ok,
            f"PSNR {w.mean():.2f} vs {p.mean():.2f} dB, wins {wins}/{len(w)}, sign test p={pval:.4f}, "
            f"mean learned t {np.mean(deblur_suite['t']):.3f}")


def test_criterion_7_projection(deblur_suite):
    wr, w = np.array(deblur_suite["fmplug_w_r"]), np.array(deblur_suite["fmplug_w"])
    norm_err = max(np.max(np.abs(n - np.sqrt(1024))) for n in deblur_suite["norms"])
    gap = wr.mean() - w.mean()
    ok = norm_err <= 1e-9 and gap >= -0.2
    verdict(7, "sphere-projected warm start", ok, f"PSNR gap wr - w = {gap:+.3f} dB, max norm error {norm_err:.1e}")


# -- 8 -----------------------------------------------------------------------------
def test_criterion_8_interleaving(image_model):
    op = ForwardOperator("gaussian_blur", (32, 32), kernel_size=9, blur_sigma=1.5, noise_sigma=0.03)
    x = make_smooth_dataset(1, 32, 0.25, seed=777)[0]
    y = observe(op, x, seed=0)
    plain = solve_interleaving(y, op, image_model, SolverConfig(method="interleave", lr=0.0, seed=3))
    with ad.no_grad():
        ref = generate(image_model, np.random.default_rng(3).standard_normal(1024), 3).data
    bitwise = np.array_equal(plain.x_hat.ravel(), ref)
    checked = solve_interleaving(
        y, op, image_model, SolverConfig(method="interleave", lr=5.0, inner_steps=5, descent_check=True, seed=3)
    )
    steps = checked.guidance_trace
    monotone = all(after <= before for before, after in steps)
    ok = bitwise and monotone and len(steps) == 15
    verdict(8, "interleaving baseline", ok, f"eta=0 bitwise {bitwise}, {len(steps)} checked steps monotone {monotone}")


# -- 9 -----------------------------------------------------------------------------
GRID = """
[experiment]
seed = 9
instances = 2
[dataset]
kind = smooth
size = 8
cutoff = 0.4
[model]
checkpoint = model.fmpl
[operator.deblur]
kind = gaussian_blur
kernel_size = 3
blur_sigma = 1.0
noise_sigma = 0.03
[solver.plugin]
method = plugin
iterations = 10
[solver.fmplug_w_r]
method = fmplug_w_r
iterations = 10
n_cal = 64
"""


def test_criterion_9_determinism_and_persistence(tmp_path, small_image_model, image_model):
    save_checkpoint(small_image_model, tmp_path / "model.fmpl")
    csvs = []
    for run in ("a", "b"):
        out = run_experiment(parse_config(GRID, base_dir=tmp_path), tmp_path / run)
        csvs.append(out["csv"].read_bytes())
    same_csv = csvs[0] == csvs[1]
    save_checkpoint(image_model, tmp_path / "big.fmpl")
    back = load_checkpoint(tmp_path / "big.fmpl")
    same_params = all(p.tobytes() == q.tobytes() for p, q in zip(image_model.field.params, back.field.params))
    same_bytes = dumps(back) == (tmp_path / "big.fmpl").read_bytes()
    ok = same_csv and same_params and same_bytes
    verdict(9, "determinism and persistence", ok,
            f"CSV identical {same_csv}, parameters bitwise {same_params}, re-save bytes identical {same_bytes}")
