"""Grid abstraction of the learned dynamics as an interval MDP.

Each safe-set cell becomes a state; everything outside the safe set
collapses into one absorbing unsafe state.  Transition probability
intervals come from testing where a sound enclosure of the learned mean
image of a cell can land, relative to margin-shrunk and margin-enlarged
target cells.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .boxes import Box, expand_box, shrink_box
from .bounds import BoundParams, dimension_confidence
from .errors import ConfigurationError, ParseError, SoundnessError
from .gp import GpModel, mean_range_over_box

log = logging.getLogger(__name__)

_DIV_TOL = 1e-9


@dataclass(frozen=True)
class Grid:
    """Uniform partition of the safe box into cubes of side h."""

    safe_box: Box
    h: float
    shape: tuple[int, ...]

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    @property
    def unsafe_index(self) -> int:
        return self.n_cells

    @property
    def dim(self) -> int:
        return self.safe_box.dim

    def cell(self, index: int) -> Box:
        multi = np.unravel_index(index, self.shape)
        lo = self.safe_box.lower + np.array(multi) * self.h
        return Box(lo, lo + self.h)

    def cells(self):
        return [self.cell(i) for i in range(self.n_cells)]

    def cell_of_point(self, x) -> int | None:
        """Index of the cell containing x, None if outside the safe box."""
        x = np.asarray(x, dtype=float)
        if not self.safe_box.contains_point(x):
            return None
        multi = np.minimum(
            ((x - self.safe_box.lower) / self.h).astype(int),
            np.array(self.shape) - 1,
        )
        return int(np.ravel_multi_index(tuple(multi), self.shape))


def build_grid(safe_box: Box, h: float) -> Grid:
    if h <= 0:
        raise ConfigurationError("cell side must be positive")
    counts = []
    for axis, side in enumerate(safe_box.sides):
        ratio = side / h
        if abs(ratio - round(ratio)) > _DIV_TOL * max(1.0, ratio):
            raise ConfigurationError(
                f"safe box side {side:g} on axis {axis} is not a multiple of h={h:g}"
            )
        counts.append(int(round(ratio)))
    return Grid(safe_box=safe_box, h=h, shape=tuple(counts))


@dataclass(frozen=True)
class TransitionInterval:
    lower: float
    upper: float

    def __post_init__(self):
        if not 0.0 <= self.lower <= self.upper <= 1.0:
            raise SoundnessError(
                f"invalid transition interval [{self.lower}, {self.upper}]"
            )


@dataclass(frozen=True)
class Row:
    """Explicit entries of one (state, action) row; unlisted destinations
    take the IMDP-wide default interval."""

    dests: np.ndarray  # state indices, ascending
    lower: np.ndarray
    upper: np.ndarray


@dataclass(frozen=True)
class Imdp:
    n_safe: int
    actions: tuple[str, ...]
    dim: int
    delta: float
    epsilon: float
    default_upper: float  # unlisted destinations are [0, default_upper]
    rows: tuple  # rows[q][action_index] -> Row

    @property
    def n_states(self) -> int:
        return self.n_safe + 1

    @property
    def unsafe_index(self) -> int:
        return self.n_safe

    def row(self, q: int, action_index: int) -> Row:
        return self.rows[q][action_index]


def mean_image_box(models: list[GpModel], cell: Box, subgrid_k: int = 3) -> Box:
    """Box certified to contain the learned mean image of the cell."""
    los, his = zip(*(mean_range_over_box(m, cell, k=subgrid_k) for m in models))
    return Box(np.array(los), np.array(his))


def _interval_from_image(
    image: Box, target: Box, eps: float, conf: float
) -> TransitionInterval:
    reduced = shrink_box(target, eps)
    lower = conf if (reduced is not None and reduced.contains_box(image)) else 0.0
    upper = 1.0 if image.intersects(expand_box(target, eps)) else 1.0 - conf
    return TransitionInterval(lower, upper)


def _confidence(delta: float, dim: int, confidence=None) -> float:
    if confidence is None:
        return dimension_confidence(delta, dim)
    conf = float(np.prod(np.asarray(confidence, dtype=float)))
    if not 0 <= conf <= 1:
        raise ValueError("confidence product must lie in [0, 1]")
    return conf


def transition_interval(
    q: Box,
    a: str,
    q_target: Box,
    models: dict,
    eps: float,
    delta: float,
    subgrid_k: int = 3,
    confidence=None,
) -> TransitionInterval:
    """Interval for the one-step transition q -> q_target under action a.

    models maps (action, dim) to a fitted regressor.  confidence optionally
    overrides the per-dimension confidence vector (default 1 - delta each).
    """
    dims = sorted(d for (act, d) in models if act == a)
    image = mean_image_box([models[(a, d)] for d in dims], q, subgrid_k)
    return _interval_from_image(
        image, q_target, eps, _confidence(delta, len(dims), confidence)
    )


def unsafe_transition_interval(
    q: Box,
    a: str,
    models: dict,
    safe_box: Box,
    eps: float,
    delta: float,
    subgrid_k: int = 3,
    confidence=None,
) -> TransitionInterval:
    """Interval for q -> unsafe: complement of the stay-safe interval."""
    stay = transition_interval(
        q, a, safe_box, models, eps, delta, subgrid_k, confidence
    )
    return TransitionInterval(1.0 - stay.upper, 1.0 - stay.lower)


def _candidate_indices(grid: Grid, reach: Box) -> list[int]:
    """Safe cells whose closed intersection with reach may be nonempty."""
    if not grid.safe_box.intersects(reach):
        return []
    lo_idx, hi_idx = [], []
    for d in range(grid.dim):
        lo = math.floor((reach.lower[d] - grid.safe_box.lower[d]) / grid.h) - 1
        hi = math.floor((reach.upper[d] - grid.safe_box.lower[d]) / grid.h) + 1
        lo_idx.append(max(lo, 0))
        hi_idx.append(min(hi, grid.shape[d] - 1))
        if lo_idx[-1] > hi_idx[-1]:
            return []
    ranges = [np.arange(a, b + 1) for a, b in zip(lo_idx, hi_idx)]
    mesh = np.meshgrid(*ranges, indexing="ij")
    flat = np.ravel_multi_index([m.ravel() for m in mesh], grid.shape)
    return [int(i) for i in flat]


def build_imdp(
    grid: Grid,
    models: dict,
    bound_params: BoundParams,
    subgrid_k: int = 3,
    confidence=None,
) -> Imdp:
    """Assemble the full IMDP, including the absorbing unsafe state.

    models maps (action, dim) keys to fitted regressors covering every
    action and every output dimension.
    """
    actions = tuple(sorted({act for (act, _) in models}))
    dims = sorted({d for (_, d) in models})
    if dims != list(range(grid.dim)):
        raise ConfigurationError("models do not cover all output dimensions")
    eps = bound_params.epsilon
    delta = bound_params.delta
    conf = _confidence(delta, grid.dim, confidence)
    default_upper = 1.0 - conf
    if eps >= grid.h / 2:
        log.warning(
            "epsilon %.4g >= h/2 = %.4g: every reduced cell is empty and all "
            "lower bounds to safe cells vanish",
            eps,
            grid.h / 2,
        )

    unsafe = grid.unsafe_index
    rows: list[list[Row]] = [[] for _ in range(grid.n_cells + 1)]
    for ai, action in enumerate(actions):
        per_dim = [models[(action, d)] for d in range(grid.dim)]
        for q in range(grid.n_cells):
            cell = grid.cell(q)
            image = mean_image_box(per_dim, cell, subgrid_k)
            reach = expand_box(image, eps)
            entries: dict[int, TransitionInterval] = {}
            for cand in _candidate_indices(grid, reach):
                iv = _interval_from_image(image, grid.cell(cand), eps, conf)
                if iv.lower > 0.0 or iv.upper != default_upper:
                    entries[cand] = iv
            stay = _interval_from_image(image, grid.safe_box, eps, conf)
            entries[unsafe] = TransitionInterval(1.0 - stay.upper, 1.0 - stay.lower)
            dests = np.array(sorted(entries), dtype=int)
            row = Row(
                dests=dests,
                lower=np.array([entries[d].lower for d in dests]),
                upper=np.array([entries[d].upper for d in dests]),
            )
            _check_row(row, grid.n_cells + 1, default_upper, q, action)
            rows[q].append(row)
    self_loop = Row(
        dests=np.array([unsafe]), lower=np.array([1.0]), upper=np.array([1.0])
    )
    rows[unsafe] = [self_loop for _ in actions]
    return Imdp(
        n_safe=grid.n_cells,
        actions=actions,
        dim=grid.dim,
        delta=delta,
        epsilon=eps,
        default_upper=default_upper,
        rows=tuple(tuple(r) for r in rows),
    )


def _check_row(
    row: Row, n_states: int, default_upper: float, q: int, action: str
) -> None:
    sum_lo = float(row.lower.sum())
    sum_hi = float(row.upper.sum()) + default_upper * (n_states - row.dests.size)
    if sum_lo > 1.0 + 1e-12 or sum_hi < 1.0 - 1e-12:
        raise SoundnessError(
            f"ill-formed row (q={q}, a={action!r}): "
            f"sum lower={sum_lo:.17g}, sum upper={sum_hi:.17g}, "
            f"entries={list(zip(row.dests, row.lower, row.upper))}"
        )


def check_imdp(imdp: Imdp) -> None:
    """Re-validate the well-formedness inequality on every row."""
    for q in range(imdp.n_states):
        for ai, action in enumerate(imdp.actions):
            _check_row(imdp.row(q, ai), imdp.n_states, imdp.default_upper, q, action)


_IMDP_MAGIC = "gpsafety-imdp v1"


def export_imdp(imdp: Imdp, path: str) -> None:
    """One line per explicit entry: `q a q' p_low p_high`."""
    with open(path, "w") as f:
        f.write(_IMDP_MAGIC + "\n")
        f.write(f"states {imdp.n_states} safe {imdp.n_safe} dim {imdp.dim}\n")
        f.write(f"actions {' '.join(imdp.actions)}\n")
        f.write(f"delta {imdp.delta:.17g}\n")
        f.write(f"epsilon {imdp.epsilon:.17g}\n")
        f.write(f"default 0 {imdp.default_upper:.17g}\n")
        f.write("begin transitions\n")
        for q in range(imdp.n_states):
            for ai in range(len(imdp.actions)):
                row = imdp.row(q, ai)
                for d, lo, hi in zip(row.dests, row.lower, row.upper):
                    f.write(f"{q} {ai} {d} {lo:.17g} {hi:.17g}\n")


def import_imdp(path: str) -> Imdp:
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != _IMDP_MAGIC:
        raise ParseError(f"{path}: missing or unknown header")
    header = {}
    actions: tuple[str, ...] = ()
    body_start = None
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "begin":
            body_start = lineno
            break
        try:
            if parts[0] == "states":
                header["n_states"] = int(parts[1])
                header["n_safe"] = int(parts[3])
                header["dim"] = int(parts[5])
            elif parts[0] == "actions":
                actions = tuple(parts[1:])
            elif parts[0] in ("delta", "epsilon"):
                header[parts[0]] = float(parts[1])
            elif parts[0] == "default":
                header["default_upper"] = float(parts[2])
            else:
                raise ParseError(f"{path}:{lineno}: unknown header key {parts[0]!r}")
        except (IndexError, ValueError) as e:
            raise ParseError(f"{path}:{lineno}: {e}") from e
    required = {"n_states", "n_safe", "dim", "delta", "epsilon", "default_upper"}
    if body_start is None or not actions or not required <= header.keys():
        raise ParseError(f"{path}: incomplete header")

    n_states = header["n_states"]
    entries: list[list[dict]] = [
        [dict() for _ in actions] for _ in range(n_states)
    ]
    for lineno, line in enumerate(lines[body_start:], start=body_start + 1):
        parts = line.split()
        if not parts:
            continue
        try:
            q, ai, d = int(parts[0]), int(parts[1]), int(parts[2])
            lo, hi = float(parts[3]), float(parts[4])
        except (IndexError, ValueError) as e:
            raise ParseError(f"{path}:{lineno}: {e}") from e
        if not (0 <= q < n_states and 0 <= ai < len(actions) and 0 <= d < n_states):
            raise ParseError(f"{path}:{lineno}: index out of range")
        entries[q][ai][d] = (lo, hi)

    rows = []
    for q in range(n_states):
        state_rows = []
        for ai in range(len(actions)):
            dests = np.array(sorted(entries[q][ai]), dtype=int)
            state_rows.append(
                Row(
                    dests=dests,
                    lower=np.array([entries[q][ai][d][0] for d in dests]),
                    upper=np.array([entries[q][ai][d][1] for d in dests]),
                )
            )
        rows.append(tuple(state_rows))
    imdp = Imdp(
        n_safe=header["n_safe"],
        actions=actions,
        dim=header["dim"],
        delta=header["delta"],
        epsilon=header["epsilon"],
        default_upper=header["default_upper"],
        rows=tuple(rows),
    )
    check_imdp(imdp)
    return imdp
