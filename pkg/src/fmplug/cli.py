"""Command line entry point: ``fmplug {train,solve,experiment,diagnose}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .bench.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .bench.config import ConfigError, load_config
from .bench.datasets import make_smooth_dataset
from .bench.experiment import build_model, build_operator, run_experiment
from .degrade import observe
from .quality import concentration_diag, report, shell_overlap_diag
from .solve import METHODS, SolverConfig, solve

TASKS = {
    "deblur": {"kind": "gaussian_blur", "kernel_size": 9, "blur_sigma": 1.5, "noise_sigma": 0.03},
    "sr": {"kind": "downsample", "factor": 4, "noise_sigma": 0.03},
}


def _train(args) -> int:
    cfg = load_config(args.config)
    cfg.model.pop("checkpoint", None)
    model = build_model(cfg)
    save_checkpoint(model, args.out)
    trace = model.metadata["loss_trace"]
    print(json.dumps({"out": args.out, "d": model.d, "final_loss": trace[-1] if trace else None,
                      "plateau_warning": model.metadata["plateau_warning"]}))
    return 0


def _solve(args) -> int:
    model = load_checkpoint(args.ckpt)
    side = int(round(np.sqrt(model.d)))
    op = build_operator(TASKS[args.task], (side, side))
    x = make_smooth_dataset(1, side, args.cutoff, args.seed)[0]
    y = observe(op, x, seed=args.seed)
    cfg = SolverConfig(method=args.method, iterations=args.iterations, steps=args.steps, lr=args.lr, seed=args.seed)
    res = solve(y, op, model, cfg)
    rep = report(res.x_hat, x)
    print(json.dumps({"task": args.task, "method": args.method, "psnr": rep.psnr, "ssim": rep.ssim,
                      "mse": rep.mse, "final_loss": res.final_loss, "learned_t": res.t}))
    return 0


def _experiment(args) -> int:
    out = run_experiment(load_config(args.config), args.out_dir)
    print(out["markdown"].read_text())
    failed = sum(r["status"] != "ok" for r in out["rows"])
    return 1 if failed else 0


def _diagnose(args) -> int:
    conc = concentration_diag(args.d, args.samples, seed=args.seed)
    off = np.full(args.d, 2.0)  # norm 2 sqrt(d)
    conc["overlap_centered"] = shell_overlap_diag(np.zeros(args.d), 1.0, args.samples, seed=args.seed)
    conc["overlap_offset_2sqrtd"] = shell_overlap_diag(off, 1.0, args.samples, seed=args.seed)
    print(json.dumps(conc))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fmplug", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a flow prior and write a checkpoint")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(func=_train)

    s = sub.add_parser("solve", help="solve one synthetic instance")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--task", choices=sorted(TASKS), required=True)
    s.add_argument("--method", choices=METHODS, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--iterations", type=int, default=300)
    s.add_argument("--steps", type=int, default=3)
    s.add_argument("--lr", type=float, default=1e-2)
    s.add_argument("--cutoff", type=float, default=0.25)
    s.set_defaults(func=_solve)

    e = sub.add_parser("experiment", help="run a config grid and write CSV + markdown")
    e.add_argument("--config", required=True)
    e.add_argument("--out-dir", required=True)
    e.set_defaults(func=_experiment)

    d = sub.add_parser("diagnose", help="Gaussian concentration diagnostics")
    d.add_argument("--d", type=int, required=True)
    d.add_argument("--samples", type=int, required=True)
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=_diagnose)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, FileNotFoundError, ValueError, ArithmeticError) as exc:
        print(f"fmplug: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
