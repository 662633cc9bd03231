"""Pipeline driver: generate -> fit -> abstract -> verify -> mc-check.

Each stage reads its inputs from the configured output directory and writes
one artifact plus a manifest, so stages can be rerun independently and a
full pipeline is byte-reproducible from the config file.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .abstraction import build_grid, build_imdp, export_imdp, import_imdp
from .bounds import compute_bound_params
from .config import RunConfig, config_echo, parse_config
from .errors import ConfigurationError, GpSafetyError
from .gp import fit, load_model, optimize_hyperparameters, rkhs_norm_estimate, save_model
from .systems import builtin_system, generate_dataset, load_dataset, save_dataset
from .validation import monte_carlo_safety
from .verifier import load_bounds, save_bounds, verify_finite, verify_infinite

STAGES = ("generate", "fit", "abstract", "verify", "mc-check", "pipeline")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _path(cfg: RunConfig, name: str) -> str:
    return os.path.join(cfg.output_dir, name)


def _model_paths(cfg: RunConfig):
    spec = builtin_system(cfg.system_name)
    return {
        (a, d): _path(cfg, f"model_{a}_{d}.gpm")
        for a in spec.actions
        for d in range(spec.dimension)
    }


def _require(path: str) -> str:
    if not os.path.exists(path):
        raise ConfigurationError(f"missing stage input: {path}")
    return path


def _write_manifest(cfg: RunConfig, stage: str, elapsed: float) -> None:
    digest = hashlib.sha256(
        "\n".join(f"{k}={v}" for k, v in sorted(cfg.raw.items())).encode()
    ).hexdigest()
    with open(_path(cfg, f"manifest_{stage}.txt"), "w") as f:
        f.write(f"stage={stage}\n")
        f.write(f"config_sha256={digest}\n")
        f.write(f"tool_version={__version__}\n")
        f.write(f"wall_time_s={elapsed:.3f}\n")


def stage_generate(cfg: RunConfig) -> None:
    spec = builtin_system(cfg.system_name)
    dataset = generate_dataset(spec, cfg.safe_box, cfg.n_d, cfg.sigma, cfg.seed)
    save_dataset(dataset, _path(cfg, "dataset.csv"))


def stage_fit(cfg: RunConfig) -> None:
    spec = builtin_system(cfg.system_name)
    dataset = load_dataset(_require(_path(cfg, "dataset.csv")))
    for (a, d), path in _model_paths(cfg).items():
        params = optimize_hyperparameters(
            dataset,
            a,
            d,
            lam=cfg.gp_lambda,
            sv_range=cfg.sv_range,
            ls_range=cfg.ls_range,
            points_per_axis=cfg.points_per_axis,
        )
        model = fit(dataset, a, d, params, lam=cfg.gp_lambda)
        save_model(model, path)
    del spec


def _load_models(cfg: RunConfig) -> dict:
    return {
        key: load_model(_require(path)) for key, path in _model_paths(cfg).items()
    }


def stage_abstract(cfg: RunConfig) -> None:
    grid = build_grid(cfg.safe_box, cfg.h)
    models = _load_models(cfg)
    b_norm = cfg.b_norm
    if b_norm is None:
        # data-driven proxy, reported but not a certified norm bound
        b_norm = tuple(
            max(
                rkhs_norm_estimate(m)
                for key, m in models.items()
                if key[1] == d
            )
            for d in range(grid.dim)
        )
    params = compute_bound_params(
        models,
        delta=cfg.delta,
        sigma=cfg.sigma,
        b_norm=b_norm,
        epsilon_mode=cfg.epsilon_mode,
        epsilon=cfg.epsilon,
        cells=grid.cells() if cfg.epsilon_mode != "explicit" else None,
        subgrid_k=cfg.subgrid_k,
    )
    imdp = build_imdp(grid, models, params, subgrid_k=cfg.subgrid_k)
    export_imdp(imdp, _path(cfg, "imdp.txt"))


def stage_verify(cfg: RunConfig) -> None:
    imdp = import_imdp(_require(_path(cfg, "imdp.txt")))
    if math.isinf(cfg.horizon):
        bounds = verify_infinite(imdp, tol=cfg.tol)
    else:
        bounds = verify_finite(imdp, int(cfg.horizon))
    meta = dict(config_echo(cfg))
    meta["epsilon"] = f"{imdp.epsilon:.17g}"
    meta["tol"] = cfg.tol
    save_bounds(bounds, _path(cfg, "results.csv"), metadata=meta)
    grid = build_grid(cfg.safe_box, cfg.h)
    export_heatmap(bounds, grid, _path(cfg, "heatmap.csv"))


def export_heatmap(bounds, grid, path: str) -> None:
    """Plot-ready cell geometry plus bounds; 2-D grids only."""
    with open(path, "w") as f:
        if grid.dim != 2:
            f.write("# non-2D grid: index-only format\n")
            f.write("state_index,p_min,p_max\n")
            for i in range(len(bounds.p_min)):
                f.write(f"{i},{bounds.p_min[i]:.17g},{bounds.p_max[i]:.17g}\n")
            return
        f.write("x_lo,x_hi,y_lo,y_hi,p_min,p_max\n")
        for i in range(grid.n_cells):
            cell = grid.cell(i)
            f.write(
                f"{cell.lower[0]:.17g},{cell.upper[0]:.17g},"
                f"{cell.lower[1]:.17g},{cell.upper[1]:.17g},"
                f"{bounds.p_min[i]:.17g},{bounds.p_max[i]:.17g}\n"
            )
        f.write(
            f",,,,{bounds.p_min[grid.unsafe_index]:.17g},"
            f"{bounds.p_max[grid.unsafe_index]:.17g}\n"
        )


def stage_mc_check(cfg: RunConfig, cells_to_check: int = 20, trials: int = 500):
    """Spot-check verification output against true-system simulation."""
    _require(_path(cfg, "imdp.txt"))
    bounds = load_bounds(_require(_path(cfg, "results.csv")))
    spec = builtin_system(cfg.system_name)
    grid = build_grid(cfg.safe_box, cfg.h)
    horizon = 100 if math.isinf(cfg.horizon) else int(cfg.horizon)
    rng = np.random.default_rng(cfg.seed)
    picks = rng.choice(grid.n_cells, size=min(cells_to_check, grid.n_cells),
                       replace=False)
    with open(_path(cfg, "mc_report.csv"), "w") as f:
        for key, val in config_echo(cfg).items():
            f.write(f"# {key}={val}\n")
        f.write(
            "state_index,action,estimate,ci_low,ci_high,p_min,p_max,consistent\n"
        )
        for q in sorted(int(p) for p in picks):
            x0 = grid.cell(q).center
            for a in spec.actions:
                res = monte_carlo_safety(
                    spec,
                    x0,
                    lambda obs, action=a: action,
                    horizon,
                    cfg.sigma,
                    cfg.safe_box,
                    trials,
                    seed=cfg.seed + q,
                )
                consistent = (
                    res.ci_high >= bounds.p_min[q] and res.ci_low <= bounds.p_max[q]
                )
                f.write(
                    f"{q},{a},{res.point_estimate:.6g},{res.ci_low:.6g},"
                    f"{res.ci_high:.6g},{bounds.p_min[q]:.17g},"
                    f"{bounds.p_max[q]:.17g},{str(consistent).lower()}\n"
                )


def run_stage(cfg: RunConfig, stage: str) -> None:
    os.makedirs(cfg.output_dir, exist_ok=True)
    stages = (
        ["generate", "fit", "abstract", "verify", "mc-check"]
        if stage == "pipeline"
        else [stage]
    )
    handlers = {
        "generate": stage_generate,
        "fit": stage_fit,
        "abstract": stage_abstract,
        "verify": stage_verify,
        "mc-check": stage_mc_check,
    }
    for name in stages:
        start = time.monotonic()
        handlers[name](cfg)
        _write_manifest(cfg, name, time.monotonic() - start)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gpsafety",
        description=(
            "Data-driven safety verification: learn dynamics from noisy "
            "samples, abstract them as an interval MDP, and bound per-cell "
            "safety probabilities."
        ),
    )
    parser.add_argument("stage", choices=STAGES)
    parser.add_argument("config", help="run configuration file")
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config)
        run_stage(cfg, args.stage)
    except (ConfigurationError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except GpSafetyError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
