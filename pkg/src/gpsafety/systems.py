"""Benchmark dynamical systems, bounded observation noise, dataset generation.

A system is a finite family of per-action maps f(., a) on R^n.  Observations
are y = f(x, a) + v with v zero-mean, componentwise independent and bounded:
each component is drawn uniformly from [-sigma, sigma].
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .boxes import Box
from .errors import ConfigurationError, ParseError

A_ROTATION = np.array([[0.9, -0.4], [0.4, 0.5]])
A_UPPER = np.array([[0.8, 0.5], [0.0, 0.5]])
A_LOWER = np.array([[0.5, 0.0], [-0.5, 0.8]])


def _spiral_map(x: np.ndarray) -> np.ndarray:
    """2-D nonlinear benchmark: slow spiral driven by a sine term."""
    return np.array([x[0] - 0.05 * x[1], x[1] + 0.1 * np.sin(x[0])])


@dataclass(frozen=True)
class SystemSpec:
    """Dimension, ordered action set, and one dynamics map per action."""

    name: str
    dimension: int
    actions: tuple[str, ...]
    maps: dict  # action -> n x n matrix or callable R^n -> R^n

    def __post_init__(self):
        if len(self.actions) < 1:
            raise ConfigurationError("system needs at least one action")
        if set(self.actions) != set(self.maps):
            raise ConfigurationError("actions and dynamics maps do not match")


@dataclass(frozen=True)
class Sample:
    x: np.ndarray
    u: str
    y: np.ndarray


@dataclass(frozen=True)
class DataSet:
    samples: tuple[Sample, ...]
    noise_bound: float
    seed: int

    def per_action(self) -> dict[str, list[Sample]]:
        out: dict[str, list[Sample]] = {}
        for s in self.samples:
            out.setdefault(s.u, []).append(s)
        return out


def step_true(spec: SystemSpec, x, a: str) -> np.ndarray:
    """Apply the noiseless dynamics f(x, a)."""
    if a not in spec.maps:
        raise ConfigurationError(f"unknown action {a!r} for system {spec.name!r}")
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.dimension,):
        raise ConfigurationError(
            f"state has shape {x.shape}, expected ({spec.dimension},)"
        )
    m = spec.maps[a]
    if callable(m):
        return np.asarray(m(x), dtype=float)
    return m @ x


def sample_noise(rng: np.random.Generator, sigma: float, n: int) -> np.ndarray:
    """One bounded noise vector: components i.i.d. uniform on [-sigma, sigma]."""
    if sigma <= 0:
        raise ConfigurationError("noise bound must be positive")
    return rng.uniform(-sigma, sigma, size=n)


def generate_dataset(
    spec: SystemSpec, region: Box, n_d: int, sigma: float, seed: int
) -> DataSet:
    """Draw n_d noisy samples: x uniform over region, action uniform over U."""
    if n_d < 1:
        raise ConfigurationError("need at least one sample")
    if region.dim != spec.dimension:
        raise ConfigurationError("sampling region dimension mismatch")
    rng = np.random.default_rng(seed)
    xs = region.sample(rng, n_d)
    action_idx = rng.integers(0, len(spec.actions), size=n_d)
    samples = []
    for i in range(n_d):
        a = spec.actions[action_idx[i]]
        y = step_true(spec, xs[i], a) + sample_noise(rng, sigma, spec.dimension)
        samples.append(Sample(x=xs[i], u=a, y=y))
    return DataSet(samples=tuple(samples), noise_bound=sigma, seed=seed)


_LINEAR_RE = re.compile(r"^linear:(.+)$")


def builtin_system(name: str) -> SystemSpec:
    """Look up a benchmark system by name.

    Available: rotation, upper, lower, switched (upper/lower as two actions),
    nonlinear, and linear:<rows> with rows like "0.9,-0.4;0.4,0.5".
    """
    if name == "rotation":
        return SystemSpec(name, 2, ("a",), {"a": A_ROTATION})
    if name == "upper":
        return SystemSpec(name, 2, ("a",), {"a": A_UPPER})
    if name == "lower":
        return SystemSpec(name, 2, ("a",), {"a": A_LOWER})
    if name == "switched":
        return SystemSpec(
            name, 2, ("upper", "lower"), {"upper": A_UPPER, "lower": A_LOWER}
        )
    if name == "nonlinear":
        return SystemSpec(name, 2, ("a",), {"a": _spiral_map})
    m = _LINEAR_RE.match(name)
    if m:
        try:
            rows = [
                [float(v) for v in row.split(",")]
                for row in m.group(1).split(";")
            ]
            mat = np.array(rows, dtype=float)
        except ValueError as e:
            raise ConfigurationError(f"bad matrix literal in {name!r}: {e}") from e
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ConfigurationError(f"matrix in {name!r} is not square")
        return SystemSpec(name, mat.shape[0], ("a",), {"a": mat})
    raise ConfigurationError(f"unknown system {name!r}")


def save_dataset(dataset: DataSet, path: str) -> None:
    """CSV with leading '# key=value' metadata lines."""
    n = dataset.samples[0].x.size
    with open(path, "w") as f:
        f.write(f"# sigma={dataset.noise_bound:.17g}\n")
        f.write(f"# seed={dataset.seed}\n")
        cols = (
            [f"x{i + 1}" for i in range(n)]
            + ["u"]
            + [f"y{i + 1}" for i in range(n)]
        )
        f.write(",".join(cols) + "\n")
        for s in dataset.samples:
            xs = [f"{v:.17g}" for v in s.x]
            ys = [f"{v:.17g}" for v in s.y]
            f.write(",".join(xs + [s.u] + ys) + "\n")


def load_dataset(path: str) -> DataSet:
    sigma = None
    seed = None
    samples = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line.lstrip("# ").partition("=")
                if key == "sigma":
                    sigma = float(val)
                elif key == "seed":
                    seed = int(val)
                continue
            if line.startswith("x1,"):
                continue
            parts = line.split(",")
            if len(parts) % 2 != 1:
                raise ParseError(f"{path}:{lineno}: malformed sample row")
            n = (len(parts) - 1) // 2
            try:
                x = np.array([float(v) for v in parts[:n]])
                y = np.array([float(v) for v in parts[n + 1 :]])
            except ValueError as e:
                raise ParseError(f"{path}:{lineno}: {e}") from e
            samples.append(Sample(x=x, u=parts[n], y=y))
    if sigma is None or seed is None:
        raise ParseError(f"{path}: missing sigma/seed metadata")
    if not samples:
        raise ParseError(f"{path}: no samples")
    return DataSet(samples=tuple(samples), noise_bound=sigma, seed=seed)
