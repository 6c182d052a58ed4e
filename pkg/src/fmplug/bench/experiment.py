"""Experiment grid runner: train or load a prior, solve every cell, write reports."""

from __future__ import annotations

import csv
import io
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ..degrade import ForwardOperator, observe
from ..flow import FlowModel, train_fm
from ..quality import report
from ..solve import SolverConfig, estimate_path_variance, solve
from .checkpoint import load_checkpoint
from .config import ExperimentConfig
from .datasets import make_mixture_dataset, make_smooth_dataset, read_grid_file

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["task", "instance", "method", "status", "psnr", "ssim", "mse", "final_loss", "learned_t", "seconds"]
THREADS_ENV = "FMPLUG_THREADS"


def load_dataset(spec: dict, base_dir=".") -> np.ndarray:
    kind = spec.get("kind", "smooth")
    if kind == "smooth":
        return make_smooth_dataset(spec.get("count", 2000), spec.get("size", 32), spec.get("cutoff", 0.25), spec.get("seed", 0))
    if kind == "mixture":
        return make_mixture_dataset(spec.get("components", 2), spec.get("count", 500), spec.get("seed", 0))
    if kind == "file":
        return read_grid_file(Path(base_dir) / spec["path"])
    raise ValueError(f"unknown dataset kind {kind!r}")


def build_model(cfg: ExperimentConfig) -> FlowModel:
    spec = cfg.model
    if "checkpoint" in spec:
        return load_checkpoint(Path(cfg.base_dir) / spec["checkpoint"])
    data = load_dataset(cfg.dataset, cfg.base_dir)
    return train_fm(
        data.reshape(len(data), -1),
        hidden=spec.get("hidden", (256, 256)),
        time_features=spec.get("time_features", 8),
        lr=spec.get("lr", 1e-3),
        steps=spec.get("steps", 3000),
        batch_size=spec.get("batch_size", 128),
        seed=spec.get("seed", 0),
        schedule=spec.get("schedule", "cosine"),
        output=spec.get("output", "denoiser"),
    )


def build_operator(spec: dict, image_shape) -> ForwardOperator:
    spec = dict(spec)
    kind = spec.pop("kind")
    mask = None
    if kind == "mask":
        rng = np.random.default_rng(spec.pop("mask_seed", 0))
        mask = rng.uniform(size=image_shape) >= spec.pop("mask_fraction", 0.5)
    else:
        spec.pop("mask_seed", None)
        spec.pop("mask_fraction", None)
    return ForwardOperator(kind=kind, image_shape=tuple(image_shape), mask=mask, **spec)


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def summarize(rows: list[dict]) -> dict:
    """Per (task, method) means over successful rows, keyed in first-seen order."""
    out: dict = {}
    for r in rows:
        if r["status"] != "ok":
            continue
        cell = out.setdefault(r["task"], {}).setdefault(r["method"], {"psnr": [], "ssim": [], "mse": [], "learned_t": []})
        for k in ("psnr", "ssim", "mse"):
            cell[k].append(r[k])
        if r["learned_t"] is not None:
            cell["learned_t"].append(r["learned_t"])
    return {
        task: {
            m: {k: (float(np.mean(v)) if v else None) for k, v in cols.items()} | {"n": len(cols["psnr"])}
            for m, cols in methods.items()
        }
        for task, methods in out.items()
    }


def markdown_summary(summary: dict) -> str:
    lines = []
    for task, methods in summary.items():
        best = {
            "psnr": max(v["psnr"] for v in methods.values()),
            "ssim": max(v["ssim"] for v in methods.values()),
            "mse": min(v["mse"] for v in methods.values()),
        }
        lines += [f"### {task}", "", "| method | n | PSNR | SSIM | MSE | learned t |", "|---|---|---|---|---|---|"]
        for m, v in methods.items():
            cells = []
            for k, fmt in (("psnr", "{:.3f}"), ("ssim", "{:.4f}"), ("mse", "{:.3e}")):
                s = fmt.format(v[k])
                cells.append(f"**{s}**" if v[k] == best[k] else s)
            t = "" if v["learned_t"] is None else f"{v['learned_t']:.3f}"
            lines.append(f"| {m} | {v['n']} | " + " | ".join(cells) + f" | {t} |")
        lines.append("")
    return "\n".join(lines)


def rows_to_csv(rows: list[dict], timing: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(
            [r["task"], r["instance"], r["method"], r["status"]]
            + [_fmt(r[k]) for k in ("psnr", "ssim", "mse", "final_loss", "learned_t")]
            + [_fmt(r["seconds"]) if timing else ""]
        )
    return buf.getvalue()


def run_grid(cfg: ExperimentConfig, model: FlowModel) -> list[dict]:
    """Solve every (task, instance, method) cell; rows come back in sorted grid order."""
    exp = cfg.experiment
    n_inst = exp.get("instances", 10)
    base_seed = exp.get("seed", 0)
    side = int(round(np.sqrt(model.d)))
    if side * side != model.d:
        raise ValueError(f"model dimension {model.d} is not a square image")
    test = make_smooth_dataset(n_inst, side, cfg.dataset.get("cutoff", 0.25), exp.get("test_seed", 12345))
    if cfg.dataset.get("kind") == "file":
        test = load_dataset(cfg.dataset, cfg.base_dir)[-n_inst:]

    var_cache: dict = {}

    def path_var(sc: SolverConfig):
        key = (sc.steps, sc.n_cal, sc.seed)
        if key not in var_cache:
            var_cache[key] = estimate_path_variance(model, sc.n_cal, sc.steps, seed=sc.seed)
        return var_cache[key]

    cells = []
    for oi, (task, ospec) in enumerate(cfg.operators.items()):
        op = build_operator(ospec, (side, side))
        for inst in range(n_inst):
            pair_index = oi * n_inst + inst
            y = observe(op, test[inst], seed=base_seed ^ pair_index)
            for method, sspec in cfg.solvers.items():
                cells.append((task, op, inst, pair_index, y, method, sspec))

    # variance tables are filled up front so worker threads only read them
    for *_, sspec in cells:
        sc = SolverConfig(**sspec)
        if sc.method.startswith("fmplug") and sc.calibrate:
            path_var(sc)

    def run_cell(cell):
        task, op, inst, pair_index, y, method, sspec = cell
        sc = SolverConfig(**{**sspec, "seed": sspec.get("seed", 0) ^ pair_index})
        row = {"task": task, "instance": inst, "method": method, "status": "ok", "psnr": None, "ssim": None,
               "mse": None, "final_loss": None, "learned_t": None, "seconds": None}
        try:
            base = SolverConfig(**sspec)
            pv = var_cache.get((base.steps, base.n_cal, base.seed))
            res = solve(y, op, model, sc, path_var=pv)
            rep = report(res.x_hat, test[inst])
            row.update(psnr=rep.psnr, ssim=rep.ssim, mse=rep.mse, final_loss=res.final_loss,
                       learned_t=res.t, seconds=res.seconds)
        except (ArithmeticError, ValueError) as exc:
            logger.warning("cell %s/%d/%s failed: %s", task, inst, method, exc)
            row["status"] = "failed"
        return row

    threads = int(os.environ.get(THREADS_ENV, "1"))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(run_cell, cells))
    return [run_cell(c) for c in cells]


def run_experiment(cfg: ExperimentConfig, out_dir, model: FlowModel | None = None) -> dict:
    """Run the full grid and write ``results.csv`` and ``summary.md`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if model is None:
        model = build_model(cfg)
    rows = run_grid(cfg, model)
    summary = summarize(rows)
    csv_path = out_dir / "results.csv"
    md_path = out_dir / "summary.md"
    csv_path.write_text(rows_to_csv(rows, timing=cfg.experiment.get("timing", False)))
    md_path.write_text(markdown_summary(summary))
    return {"rows": rows, "summary": summary, "csv": csv_path, "markdown": md_path}
