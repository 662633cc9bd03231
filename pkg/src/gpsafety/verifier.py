"""Interval value iteration: pessimistic and optimistic safety probabilities.

Per step and per (state, action) row, the adversary picks the feasible
distribution extremizing the expected continuation value.  That optimum is
reached by starting every destination at its lower bound and greedily
spending the leftover mass on destinations in value order, each capped by
its interval width.  The strategy then extremizes over actions.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, SoundnessError
from .abstraction import Imdp, Row

log = logging.getLogger(__name__)

MAX_ITERATIONS = 100_000


@dataclass(frozen=True)
class SafetyBounds:
    """Per-state interval [p_min, p_max] of remaining safe for the horizon."""

    horizon: float  # integer step count, or math.inf
    p_min: np.ndarray
    p_max: np.ndarray
    iterations_run: int
    converged: bool

    def __post_init__(self):
        if np.any(self.p_min > self.p_max + 1e-15):
            raise SoundnessError("lower safety bound exceeds upper bound")


def _dense_row(row: Row, n_states: int, default_upper: float):
    lower = np.zeros(n_states)
    upper = np.full(n_states, default_upper)
    lower[row.dests] = row.lower
    upper[row.dests] = row.upper
    return lower, upper


def o_optimize(values: np.ndarray, row: Row, n_states: int,
               default_upper: float, maximize: bool):
    """Exact extreme feasible distribution for one row and value vector.

    Returns (distribution, expected value).  Ties in value are broken by
    ascending state index for reproducibility.
    """
    values = np.asarray(values, dtype=float)
    lower, upper = _dense_row(row, n_states, default_upper)
    budget = 1.0 - lower.sum()
    if budget < -1e-12 or upper.sum() < 1.0 - 1e-12 or np.any(lower > upper):
        raise SoundnessError("ill-formed row passed to adversary optimization")
    order = np.argsort(-values if maximize else values, kind="stable")
    caps = (upper - lower)[order]
    used = np.cumsum(caps) - caps
    alloc = np.clip(budget - used, 0.0, caps)
    dist = lower.copy()
    dist[order] += alloc
    return dist, float(dist @ values)


class _DenseImdp:
    """Per-action dense lower/upper matrices for vectorized Bellman steps."""

    def __init__(self, imdp: Imdp):
        s = imdp.n_states
        self.n_states = s
        self.lower = []
        self.upper = []
        for ai in range(len(imdp.actions)):
            lo = np.zeros((s, s))
            hi = np.full((s, s), imdp.default_upper)
            for q in range(s):
                row = imdp.row(q, ai)
                lo[q, row.dests] = row.lower
                hi[q, row.dests] = row.upper
            budget = 1.0 - lo.sum(axis=1)
            if np.any(budget < -1e-12) or np.any(hi.sum(axis=1) < 1.0 - 1e-12):
                raise SoundnessError("ill-formed row in IMDP")
            self.lower.append(lo)
            self.upper.append(hi)
        self.budget = [1.0 - lo.sum(axis=1) for lo in self.lower]

    def extremize(self, values: np.ndarray, maximize: bool) -> np.ndarray:
        """One Bellman application of min-min (or max-max) over all states."""
        order = np.argsort(-values if maximize else values, kind="stable")
        v_sorted = values[order]
        best = None
        for lo, hi, budget in zip(self.lower, self.upper, self.budget):
            caps = (hi - lo)[:, order]
            used = np.cumsum(caps, axis=1) - caps
            alloc = np.clip(budget[:, None] - used, 0.0, caps)
            expect = lo @ values + alloc @ v_sorted
            if best is None:
                best = expect
            else:
                best = np.maximum(best, expect) if maximize else np.minimum(best, expect)
        return best


def _compiled(imdp: Imdp) -> _DenseImdp:
    # cached on the instance; the IMDP itself is immutable
    cached = getattr(imdp, "_dense_cache", None)
    if cached is None:
        cached = _DenseImdp(imdp)
        object.__setattr__(imdp, "_dense_cache", cached)
    return cached


def initial_values(imdp: Imdp) -> np.ndarray:
    v = np.ones(imdp.n_states)
    v[imdp.unsafe_index] = 0.0
    return v


def bellman_step(imdp: Imdp, prev_min: np.ndarray, prev_max: np.ndarray):
    """One synchronous update of both safety bound vectors."""
    dense = _compiled(imdp)
    return (
        dense.extremize(np.asarray(prev_min, dtype=float), maximize=False),
        dense.extremize(np.asarray(prev_max, dtype=float), maximize=True),
    )


def verify_finite(imdp: Imdp, horizon: int) -> SafetyBounds:
    """Safety probability bounds after exactly `horizon` steps."""
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    p_min = initial_values(imdp)
    p_max = p_min.copy()
    steps = 0
    for _ in range(horizon):
        new_min, new_max = bellman_step(imdp, p_min, p_max)
        steps += 1
        if np.array_equal(new_min, p_min) and np.array_equal(new_max, p_max):
            p_min, p_max = new_min, new_max
            break  # exact fixpoint: remaining steps are identities
        p_min, p_max = new_min, new_max
    return SafetyBounds(
        horizon=horizon,
        p_min=p_min,
        p_max=p_max,
        iterations_run=steps,
        converged=True,
    )


def verify_infinite(
    imdp: Imdp, tol: float = 1e-6, max_iterations: int = MAX_ITERATIONS
) -> SafetyBounds:
    """Iterate to convergence (max componentwise change of both vectors < tol)."""
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    p_min = initial_values(imdp)
    p_max = p_min.copy()
    for it in range(1, max_iterations + 1):
        new_min, new_max = bellman_step(imdp, p_min, p_max)
        change = max(
            float(np.max(np.abs(new_min - p_min))),
            float(np.max(np.abs(new_max - p_max))),
        )
        p_min, p_max = new_min, new_max
        if change < tol:
            return SafetyBounds(
                horizon=math.inf,
                p_min=p_min,
                p_max=p_max,
                iterations_run=it,
                converged=True,
            )
    log.warning("value iteration hit the %d-iteration cap", max_iterations)
    return SafetyBounds(
        horizon=math.inf,
        p_min=p_min,
        p_max=p_max,
        iterations_run=max_iterations,
        converged=False,
    )


def save_bounds(bounds: SafetyBounds, path: str, metadata: dict | None = None):
    """CSV `state_index,p_min,p_max` with `# key=value` metadata lines."""
    with open(path, "w") as f:
        horizon = "inf" if math.isinf(bounds.horizon) else str(int(bounds.horizon))
        f.write(f"# horizon={horizon}\n")
        f.write(f"# iterations={bounds.iterations_run}\n")
        f.write(f"# converged={str(bounds.converged).lower()}\n")
        for key, val in (metadata or {}).items():
            f.write(f"# {key}={val}\n")
        f.write("state_index,p_min,p_max\n")
        for i, (lo, hi) in enumerate(zip(bounds.p_min, bounds.p_max)):
            f.write(f"{i},{lo:.17g},{hi:.17g}\n")


def load_bounds(path: str) -> SafetyBounds:
    meta: dict[str, str] = {}
    p_min, p_max = [], []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line.lstrip("# ").partition("=")
                meta[key] = val
                continue
            if line.startswith("state_index"):
                continue
            parts = line.split(",")
            try:
                p_min.append(float(parts[1]))
                p_max.append(float(parts[2]))
            except (IndexError, ValueError) as e:
                raise ParseError(f"{path}:{lineno}: {e}") from e
    if "horizon" not in meta or not p_min:
        raise ParseError(f"{path}: missing metadata or data rows")
    horizon = math.inf if meta["horizon"] == "inf" else float(meta["horizon"])
    return SafetyBounds(
        horizon=horizon,
        p_min=np.array(p_min),
        p_max=np.array(p_max),
        iterations_run=int(meta.get("iterations", 0)),
        converged=meta.get("converged", "true") == "true",
    )
