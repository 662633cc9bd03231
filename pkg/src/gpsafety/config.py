"""Flat `section.key = value` run configuration.

One file carries every experiment parameter so that reruns are reproducible
from the config alone; there are no environment variables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .boxes import Box
from .errors import ConfigurationError

_REQUIRED = (
    "system.name",
    "grid.safe_box",
    "grid.h",
    "data.n_d",
    "data.sigma",
    "data.seed",
    "output.dir",
)

_DEFAULTS = {
    "gp.lambda": None,  # 1 + 2/n_d when unset
    "gp.sv_min": 1e-2,
    "gp.sv_max": 1e4,
    "gp.ls_min": 1e-1,
    "gp.ls_max": 1e2,
    "gp.points_per_axis": 10,
    "bounds.delta": 0.0,
    "bounds.B": None,  # data-driven estimate when unset
    "bounds.epsilon_mode": "explicit",
    "bounds.epsilon": None,
    "abstraction.subgrid_k": 3,
    "verify.horizon": 10,
    "verify.tol": 1e-6,
    "threads": 0,
}


@dataclass(frozen=True)
class RunConfig:
    system_name: str
    safe_box: Box
    h: float
    n_d: int
    sigma: float
    seed: int
    output_dir: str
    gp_lambda: float | None
    sv_range: tuple[float, float]
    ls_range: tuple[float, float]
    points_per_axis: int
    delta: float
    b_norm: tuple[float, ...] | None
    epsilon_mode: str
    epsilon: float | None
    subgrid_k: int
    horizon: float  # integer count or math.inf
    tol: float
    threads: int
    raw: dict = field(default_factory=dict)


def _parse_lines(text: str, source: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"{source}:{lineno}: expected `key = value`")
        key, _, val = stripped.partition("=")
        out[key.strip()] = val.strip()
    return out


def _floats(val: str) -> list[float]:
    return [float(v) for v in val.replace(",", " ").split()]


def parse_config(path: str) -> RunConfig:
    with open(path) as f:
        raw = _parse_lines(f.read(), path)
    return build_config(raw, source=path)


def build_config(raw: dict[str, str], source: str = "<config>") -> RunConfig:
    known = set(_REQUIRED) | set(_DEFAULTS)
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigurationError(f"{source}: unknown keys: {', '.join(unknown)}")
    missing = sorted(k for k in _REQUIRED if k not in raw)
    if missing:
        raise ConfigurationError(f"{source}: missing keys: {', '.join(missing)}")

    def get(key: str):
        return raw.get(key, _DEFAULTS.get(key))

    try:
        bounds_vals = _floats(raw["grid.safe_box"])
        if len(bounds_vals) % 2 != 0 or not bounds_vals:
            raise ConfigurationError(
                f"{source}: grid.safe_box needs an even number of values "
                "(lo hi per axis)"
            )
        arr = np.array(bounds_vals).reshape(-1, 2)
        safe_box = Box(arr[:, 0], arr[:, 1])

        horizon_raw = str(get("verify.horizon"))
        horizon = math.inf if horizon_raw == "inf" else int(horizon_raw)
        if horizon != math.inf and horizon < 0:
            raise ConfigurationError(f"{source}: verify.horizon must be >= 0")

        b_raw = get("bounds.B")
        b_norm = tuple(_floats(b_raw)) if isinstance(b_raw, str) else None
        eps_raw = get("bounds.epsilon")
        lam_raw = get("gp.lambda")

        cfg = RunConfig(
            system_name=raw["system.name"],
            safe_box=safe_box,
            h=float(raw["grid.h"]),
            n_d=int(raw["data.n_d"]),
            sigma=float(raw["data.sigma"]),
            seed=int(raw["data.seed"]),
            output_dir=raw["output.dir"],
            gp_lambda=float(lam_raw) if lam_raw is not None else None,
            sv_range=(float(get("gp.sv_min")), float(get("gp.sv_max"))),
            ls_range=(float(get("gp.ls_min")), float(get("gp.ls_max"))),
            points_per_axis=int(get("gp.points_per_axis")),
            delta=float(get("bounds.delta")),
            b_norm=b_norm,
            epsilon_mode=str(get("bounds.epsilon_mode")),
            epsilon=float(eps_raw) if eps_raw is not None else None,
            subgrid_k=int(get("abstraction.subgrid_k")),
            horizon=horizon,
            tol=float(get("verify.tol")),
            threads=int(get("threads")),
            raw=dict(raw),
        )
    except (ValueError, TypeError) as e:
        raise ConfigurationError(f"{source}: {e}") from e

    _validate(cfg, source)
    return cfg


def _validate(cfg: RunConfig, source: str) -> None:
    problems = []
    if cfg.h <= 0:
        problems.append("grid.h must be positive")
    if cfg.n_d < 1:
        problems.append("data.n_d must be >= 1")
    if cfg.sigma <= 0:
        problems.append("data.sigma must be positive")
    if not 0 <= cfg.delta < 1:
        problems.append("bounds.delta must lie in [0, 1)")
    if cfg.epsilon_mode not in ("explicit", "derived_lemma", "derived_paper_literal"):
        problems.append(f"unknown bounds.epsilon_mode {cfg.epsilon_mode!r}")
    if cfg.epsilon_mode == "explicit" and (cfg.epsilon is None or cfg.epsilon <= 0):
        problems.append("explicit bounds.epsilon_mode needs bounds.epsilon > 0")
    if cfg.epsilon_mode != "explicit" and cfg.delta == 0:
        problems.append("derived bounds.epsilon_mode needs bounds.delta > 0")
    if cfg.subgrid_k < 1:
        problems.append("abstraction.subgrid_k must be >= 1")
    if cfg.tol <= 0:
        problems.append("verify.tol must be positive")
    if problems:
        raise ConfigurationError(f"{source}: " + "; ".join(problems))


def config_echo(cfg: RunConfig) -> dict:
    """Key parameters reproduced in every result file header."""
    return {
        "system": cfg.system_name,
        "epsilon": cfg.epsilon if cfg.epsilon is not None else "derived",
        "epsilon_mode": cfg.epsilon_mode,
        "delta": cfg.delta,
        "h": cfg.h,
        "T": "inf" if math.isinf(cfg.horizon) else int(cfg.horizon),
        "n_D": cfg.n_d,
        "sigma": cfg.sigma,
        "seed": cfg.seed,
    }
