"""Confidence scaling for the GP error and the abstraction margin epsilon.

The uniform high-probability bound |mu(x) - f(x)| <= beta * sd(x) is driven
by the noise bound, the regularizer, a function-norm bound B and the
empirical information gain of the training set.  The margin epsilon used by
the abstraction either comes straight from configuration or is derived from
these quantities.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .boxes import Box
from .gp import GpModel, var_max_over_box

log = logging.getLogger(__name__)

EPSILON_MODES = ("explicit", "derived_lemma", "derived_paper_literal")
_EPS_FLOOR = 1e-12


@dataclass(frozen=True)
class BoundParams:
    """Everything the transition-bound construction needs."""

    b_norm: tuple[float, ...]  # per output dimension
    delta: float
    sigma: float
    lam: float
    alpha: dict = field(default_factory=dict)  # (action, dim) -> info gain
    beta: dict = field(default_factory=dict)  # (action, dim) -> scaling
    epsilon: float = 0.0
    epsilon_mode: str = "explicit"

    def __post_init__(self):
        if not 0 <= self.delta < 1:
            raise ValueError("delta must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.epsilon_mode not in EPSILON_MODES:
            raise ValueError(f"unknown epsilon mode {self.epsilon_mode!r}")


def information_gain(model: GpModel) -> float:
    """Empirical information gain 0.5 * log det(I + K / lam) of the data."""
    if model.n_points == 0:
        return 0.0
    # det(K + lam I) = lam^n det(I + K/lam); the factor is already at hand
    logdet = 2.0 * float(np.sum(np.log(np.diag(model.chol_lower))))
    return 0.5 * (logdet - model.n_points * math.log(model.lam))


def beta(b_norm: float, sigma: float, lam: float, alpha: float, delta: float) -> float:
    """Confidence scaling (sigma/sqrt(lam)) * (B + sigma*sqrt(2(alpha + 1 + log 1/delta)))."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if sigma < 0 or b_norm < 0 or alpha < 0:
        raise ValueError("sigma, B and alpha must be nonnegative")
    return (sigma / math.sqrt(lam)) * (
        b_norm + sigma * math.sqrt(2.0 * (alpha + 1.0 + math.log(1.0 / delta)))
    )


def dimension_confidence(delta: float, n: int) -> float:
    """Joint confidence (1 - delta)^n over n independent output dimensions."""
    if not 0 <= delta < 1:
        raise ValueError("delta must lie in [0, 1)")
    if n < 1:
        raise ValueError("dimension must be >= 1")
    return (1.0 - delta) ** n


def epsilon_from_delta(
    beta_by_dim: dict,
    models: dict,
    cells,
    mode: str = "derived_lemma",
    subgrid_k: int = 3,
) -> float:
    """Margin derived from the confidence scaling and posterior spread.

    beta_by_dim maps (action, dim) to its scaling; models maps the same keys
    to fitted regressors; cells is an iterable of boxes to maximize over.
    Mode derived_lemma scales the posterior sd by beta itself; mode
    derived_paper_literal uses sqrt(beta) instead.
    """
    if mode not in ("derived_lemma", "derived_paper_literal"):
        raise ValueError(f"epsilon cannot be derived in mode {mode!r}")
    if not models:
        raise ValueError("no fitted models to derive epsilon from")
    cells = list(cells)
    eps = 0.0
    for key, model in models.items():
        b = beta_by_dim[key]
        scale = b if mode == "derived_lemma" else math.sqrt(b)
        sd_max = max(
            math.sqrt(var_max_over_box(model, cell, k=subgrid_k)) for cell in cells
        )
        eps = max(eps, scale * sd_max)
    if eps < _EPS_FLOOR:
        log.warning(
            "derived epsilon %g degenerate; flooring to %g", eps, _EPS_FLOOR
        )
        eps = _EPS_FLOOR
    return eps


def compute_bound_params(
    models: dict,
    delta: float,
    sigma: float,
    b_norm: tuple[float, ...],
    epsilon_mode: str = "explicit",
    epsilon: float | None = None,
    cells=None,
    subgrid_k: int = 3,
) -> BoundParams:
    """Assemble alpha/beta per model and resolve epsilon for an abstraction run.

    With delta == 0 the per-dimension confidence is certain and beta plays no
    role, so epsilon must be explicit.
    """
    some = next(iter(models.values()))
    lam = some.lam
    alpha = {key: information_gain(m) for key, m in models.items()}
    if delta > 0:
        betas = {
            key: beta(b_norm[key[1]], sigma, lam, alpha[key], delta)
            for key in models
        }
    else:
        betas = {}
        if epsilon_mode != "explicit":
            raise ValueError("derived epsilon modes require delta > 0")
    if epsilon_mode == "explicit":
        if epsilon is None or epsilon <= 0:
            raise ValueError("explicit epsilon mode needs a positive epsilon")
        eps = float(epsilon)
    else:
        if cells is None:
            raise ValueError("derived epsilon modes need the grid cells")
        eps = epsilon_from_delta(betas, models, cells, epsilon_mode, subgrid_k)
    return BoundParams(
        b_norm=tuple(b_norm),
        delta=delta,
        sigma=sigma,
        lam=lam,
        alpha=alpha,
        beta=betas,
        epsilon=eps,
        epsilon_mode=epsilon_mode,
    )
