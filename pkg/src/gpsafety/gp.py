"""Squared-exponential GP regression with certified range bounds over boxes.

One model is trained per (action, output dimension).  Queries go through a
single Cholesky factor of K(X, X) + lambda*I computed at fit time.  On top of
the usual posterior, the module provides a global Lipschitz bound on the
posterior mean, which turns pointwise evaluations on a sub-grid into sound
enclosures of the mean (and variance maxima) over whole cells.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist

from .boxes import Box, subgrid_centers
from .errors import NumericError, ParseError
from .systems import DataSet

log = logging.getLogger(__name__)

_JITTER0 = 1e-10
_JITTER_TRIES = 3


@dataclass(frozen=True)
class SeKernelParams:
    """Isotropic squared-exponential kernel parameters."""

    signal_variance: float
    lengthscale: float

    def __post_init__(self):
        if not (
            0 < self.signal_variance < math.inf and 0 < self.lengthscale < math.inf
        ):
            raise ValueError("kernel parameters must be positive and finite")


def kernel_eval(params: SeKernelParams, x, xp) -> float:
    """k(x, x') = sv * exp(-|x - x'|^2 / (2 l^2))."""
    d2 = float(np.sum((np.asarray(x, float) - np.asarray(xp, float)) ** 2))
    return params.signal_variance * math.exp(-d2 / (2 * params.lengthscale**2))


def kernel_matrix(params: SeKernelParams, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d2 = cdist(a, b, "sqeuclidean")
    return params.signal_variance * np.exp(-d2 / (2 * params.lengthscale**2))


def default_lambda(n_d: int) -> float:
    """Regularizer keyed to the dataset size, 1 + 2/n_d."""
    return 1.0 + 2.0 / n_d


@dataclass(frozen=True)
class GpModel:
    """Trained regressor for one action and one output dimension."""

    action: str
    output_dim: int
    kernel: SeKernelParams
    lam: float
    x_train: np.ndarray  # (n_d, n)
    y_train: np.ndarray  # (n_d,)
    weights: np.ndarray  # (K + lam I)^-1 y
    chol_lower: np.ndarray  # lower factor of K + lam I

    @property
    def n_points(self) -> int:
        return self.x_train.shape[0]

    @property
    def input_dim(self) -> int:
        return self.x_train.shape[1]


def _factor(k_mat: np.ndarray, lam: float) -> np.ndarray:
    n = k_mat.shape[0]
    jitter = 0.0
    for attempt in range(_JITTER_TRIES + 1):
        try:
            return cholesky(k_mat + (lam + jitter) * np.eye(n), lower=True)
        except np.linalg.LinAlgError:
            jitter = _JITTER0 * (10**attempt)
            log.warning("factorization failed, retrying with jitter %g", jitter)
    cond = np.linalg.cond(k_mat + lam * np.eye(n))
    raise NumericError(
        f"kernel matrix not positive definite after jitter "
        f"(n={n}, lambda={lam:g}, condition number ~{cond:.3g})"
    )


def fit(
    dataset: DataSet,
    action: str,
    dim_index: int,
    params: SeKernelParams,
    lam: float | None = None,
) -> GpModel:
    """Train on the action's partition, targeting output component dim_index."""
    part = dataset.per_action().get(action)
    if not part:
        raise NumericError(f"no samples for action {action!r}")
    x = np.array([s.x for s in part])
    y = np.array([s.y[dim_index] for s in part])
    if lam is None:
        lam = default_lambda(len(part))
    if lam <= 0:
        raise ValueError("lambda must be positive")
    k_mat = kernel_matrix(params, x, x)
    lower = _factor(k_mat, lam)
    weights = cho_solve((lower, True), y)
    return GpModel(
        action=action,
        output_dim=dim_index,
        kernel=params,
        lam=lam,
        x_train=x,
        y_train=y,
        weights=weights,
        chol_lower=lower,
    )


def posterior_mean(model: GpModel, x) -> float:
    return float(posterior_mean_batch(model, np.atleast_2d(np.asarray(x, float)))[0])


def posterior_var(model: GpModel, x) -> float:
    return float(posterior_var_batch(model, np.atleast_2d(np.asarray(x, float)))[0])


def posterior_mean_batch(model: GpModel, xs: np.ndarray) -> np.ndarray:
    k_star = kernel_matrix(model.kernel, xs, model.x_train)
    return k_star @ model.weights


def posterior_var_batch(model: GpModel, xs: np.ndarray) -> np.ndarray:
    k_star = kernel_matrix(model.kernel, xs, model.x_train)
    v = solve_triangular(model.chol_lower, k_star.T, lower=True)
    raw = model.kernel.signal_variance - np.sum(v * v, axis=0)
    worst = raw.min() if raw.size else 0.0
    if worst < -1e-10:
        log.warning("posterior variance clamped from %g to 0", worst)
    return np.maximum(raw, 0.0)


def log_marginal_likelihood(
    y: np.ndarray, k_mat: np.ndarray, lam: float
) -> float:
    lower = _factor(k_mat, lam)
    alpha = cho_solve((lower, True), y)
    n = y.size
    return float(
        -0.5 * y @ alpha
        - np.sum(np.log(np.diag(lower)))
        - 0.5 * n * math.log(2 * math.pi)
    )


def _grid(lo: float, hi: float, count: int) -> np.ndarray:
    return np.logspace(math.log10(lo), math.log10(hi), count)


def optimize_hyperparameters(
    dataset: DataSet,
    action: str,
    dim_index: int,
    lam: float | None = None,
    sv_range: tuple[float, float] = (1e-2, 1e4),
    ls_range: tuple[float, float] = (1e-1, 1e2),
    points_per_axis: int = 10,
) -> SeKernelParams:
    """Deterministic two-pass grid search maximizing the marginal likelihood."""
    part = dataset.per_action().get(action)
    if not part or len(part) < 10:
        raise ValueError("hyperparameter search needs at least 10 samples")
    x = np.array([s.x for s in part])
    y = np.array([s.y[dim_index] for s in part])
    if lam is None:
        lam = default_lambda(len(part))
    if np.ptp(y) == 0.0:
        log.warning(
            "degenerate targets (all equal) for action %r dim %d; "
            "falling back to smallest signal variance",
            action,
            dim_index,
        )
        return SeKernelParams(sv_range[0], math.sqrt(ls_range[0] * ls_range[1]))

    d2 = cdist(x, x, "sqeuclidean")

    def search(svs, lss):
        best = None
        for ls in lss:
            base = np.exp(-d2 / (2 * ls**2))
            for sv in svs:
                ll = log_marginal_likelihood(y, sv * base, lam)
                if best is None or ll > best[0]:
                    best = (ll, sv, ls)
        return best

    _, sv, ls = search(
        _grid(*sv_range, points_per_axis), _grid(*ls_range, points_per_axis)
    )
    # refine one coarse grid step around the winner, clipped to the search span
    sv_step = (sv_range[1] / sv_range[0]) ** (1 / (points_per_axis - 1))
    ls_step = (ls_range[1] / ls_range[0]) ** (1 / (points_per_axis - 1))
    _, sv, ls = search(
        _grid(
            max(sv / sv_step, sv_range[0]),
            min(sv * sv_step, sv_range[1]),
            points_per_axis,
        ),
        _grid(
            max(ls / ls_step, ls_range[0]),
            min(ls * ls_step, ls_range[1]),
            points_per_axis,
        ),
    )
    return SeKernelParams(float(sv), float(ls))


def kernel_gradient_bound(params: SeKernelParams) -> float:
    """Global bound on |grad_x k(x, x')|: sv * e^{-1/2} / l."""
    return params.signal_variance * math.exp(-0.5) / params.lengthscale


def kernel_hessian_bound(params: SeKernelParams) -> float:
    """Global bound on the operator norm of the kernel Hessian: sv / l^2."""
    return params.signal_variance / params.lengthscale**2


def mean_lipschitz_bound(model: GpModel) -> float:
    """L such that |mu(x) - mu(x')| <= L |x - x'| everywhere."""
    return kernel_gradient_bound(model.kernel) * float(
        np.sum(np.abs(model.weights))
    )


def mean_hessian_bound(model: GpModel) -> float:
    """Global bound on the operator norm of the posterior mean's Hessian."""
    return kernel_hessian_bound(model.kernel) * float(
        np.sum(np.abs(model.weights))
    )


def mean_gradient_batch(model: GpModel, xs: np.ndarray) -> np.ndarray:
    """Exact gradients of the posterior mean, shape (len(xs), dim)."""
    k_star = kernel_matrix(model.kernel, xs, model.x_train)
    weighted = k_star * model.weights
    ls2 = model.kernel.lengthscale**2
    return (weighted @ model.x_train - weighted.sum(axis=1)[:, None] * xs) / ls2


def var_lipschitz_bound(model: GpModel) -> float:
    """Global Lipschitz bound for the posterior variance.

    |grad var| = 2 |J_k(x)^T (K + lam I)^-1 k(x)| with each kernel-vector
    entry at most sv and each gradient row bounded by the kernel gradient
    bound; the solve is bounded through the smallest eigenvalue lam.
    """
    n_d = model.n_points
    return (
        2.0
        * kernel_gradient_bound(model.kernel)
        * n_d
        * model.kernel.signal_variance
        / model.lam
    )


def _divisor_chain(k: int) -> list[int]:
    return [d for d in range(1, k + 1) if k % d == 0]


def _mean_enclosure_level(model: GpModel, box: Box, level: int):
    """Enclosure of mu over the box from one sub-grid level.

    Per sub-box the deviation from the center value is bounded by the
    cheaper of the global Lipschitz bound and a first-order Taylor bound
    |grad mu(c)| * rho + H/2 * rho^2 with H a global Hessian bound.
    """
    centers = subgrid_centers(box, level)
    rho = box.euclidean_radius / level
    mus = posterior_mean_batch(model, centers)
    grad_norm = np.linalg.norm(mean_gradient_batch(model, centers), axis=1)
    slack = np.minimum(
        mean_lipschitz_bound(model) * rho,
        grad_norm * rho + 0.5 * mean_hessian_bound(model) * rho**2,
    )
    return float(np.min(mus - slack)), float(np.max(mus + slack))


def mean_range_over_box(model: GpModel, box: Box, k: int = 3) -> tuple[float, float]:
    """Sound enclosure of {mu(x) : x in box} via sub-grid refinement.

    The enclosure is intersected over every divisor of k, so refining k to
    any multiple never widens the result.
    """
    lo, hi = -math.inf, math.inf
    for level in _divisor_chain(k):
        level_lo, level_hi = _mean_enclosure_level(model, box, level)
        lo = max(lo, level_lo)
        hi = min(hi, level_hi)
    return lo, hi


def _var_nearest_point_bound(model: GpModel, box: Box) -> float:
    """Upper bound on posterior variance over the box from the single best
    training point: var(x) <= sv - k(x, x_j)^2 / (sv + lam) for every j."""
    sv = model.kernel.signal_variance
    farthest = np.maximum(
        np.abs(model.x_train - box.lower), np.abs(model.x_train - box.upper)
    )
    d2 = np.sum(farthest**2, axis=1)
    k_min = sv * np.exp(-d2 / (2 * model.kernel.lengthscale**2))
    return sv - float(np.max(k_min**2)) / (sv + model.lam)


def var_max_over_box(model: GpModel, box: Box, k: int = 3) -> float:
    """Sound upper bound on posterior variance over the box."""
    lip = var_lipschitz_bound(model)
    best = model.kernel.signal_variance
    for level in _divisor_chain(k):
        centers = subgrid_centers(box, level)
        slack = lip * box.euclidean_radius / level
        vs = posterior_var_batch(model, centers)
        best = min(best, float(vs.max() + slack))
    return min(best, _var_nearest_point_bound(model, box))


def rkhs_norm_estimate(model: GpModel) -> float:
    """Empirical proxy sqrt(y^T (K + lam I)^-1 y) for the function norm.

    Reported as a data-driven default only; it is not a certified bound on
    the unknown dynamics.
    """
    return math.sqrt(max(float(model.y_train @ model.weights), 0.0))


_MODEL_MAGIC = "gpsafety-gp v1"


def save_model(model: GpModel, path: str) -> None:
    """Text dump, round-trip exact at 17 significant digits."""

    def row(vals):
        return " ".join(f"{v:.17g}" for v in vals)

    with open(path, "w") as f:
        f.write(_MODEL_MAGIC + "\n")
        f.write(f"action {model.action}\n")
        f.write(f"output_dim {model.output_dim}\n")
        f.write(f"signal_variance {model.kernel.signal_variance:.17g}\n")
        f.write(f"lengthscale {model.kernel.lengthscale:.17g}\n")
        f.write(f"lambda {model.lam:.17g}\n")
        f.write(f"shape {model.n_points} {model.input_dim}\n")
        for r in model.x_train:
            f.write("X " + row(r) + "\n")
        f.write("Y " + row(model.y_train) + "\n")
        f.write("W " + row(model.weights) + "\n")
        for r in model.chol_lower:
            f.write("L " + row(r) + "\n")


def load_model(path: str) -> GpModel:
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != _MODEL_MAGIC:
        raise ParseError(f"{path}: not a model file")
    fields = {}
    x_rows, l_rows = [], []
    y = w = None
    for lineno, line in enumerate(lines[1:], start=2):
        tag, _, rest = line.partition(" ")
        try:
            if tag in ("action",):
                fields[tag] = rest
            elif tag in ("output_dim",):
                fields[tag] = int(rest)
            elif tag in ("signal_variance", "lengthscale", "lambda"):
                fields[tag] = float(rest)
            elif tag == "shape":
                fields["shape"] = tuple(int(v) for v in rest.split())
            elif tag == "X":
                x_rows.append([float(v) for v in rest.split()])
            elif tag == "Y":
                y = np.array([float(v) for v in rest.split()])
            elif tag == "W":
                w = np.array([float(v) for v in rest.split()])
            elif tag == "L":
                l_rows.append([float(v) for v in rest.split()])
            else:
                raise ParseError(f"{path}:{lineno}: unknown tag {tag!r}")
        except ValueError as e:
            raise ParseError(f"{path}:{lineno}: {e}") from e
    try:
        n_d, n = fields["shape"]
        model = GpModel(
            action=fields["action"],
            output_dim=fields["output_dim"],
            kernel=SeKernelParams(fields["signal_variance"], fields["lengthscale"]),
            lam=fields["lambda"],
            x_train=np.array(x_rows).reshape(n_d, n),
            y_train=y,
            weights=w,
            chol_lower=np.array(l_rows).reshape(n_d, n_d),
        )
    except KeyError as e:
        raise ParseError(f"{path}: missing field {e}") from e
    if y is None or w is None or y.size != n_d or w.size != n_d:
        raise ParseError(f"{path}: inconsistent vector lengths")
    return model
