"""Independent oracles used to audit the abstraction and the verifier.

Nothing here shares code with the transition-bound construction or the
interval Bellman recursion: trajectories are simulated on the true system,
and small interval MDPs are solved by exhausting extreme-point adversaries
over all destination orderings.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np
from scipy.stats import beta as beta_dist

from .boxes import Box
from .abstraction import Imdp
from .errors import ConfigurationError
from .systems import SystemSpec, sample_noise, step_true


@dataclass(frozen=True)
class McResult:
    successes: int
    trials: int
    point_estimate: float
    ci_low: float
    ci_high: float


def clopper_pearson(successes: int, trials: int, confidence: float = 0.99):
    """Exact binomial confidence interval."""
    if not 0 <= successes <= trials or trials < 1:
        raise ValueError("need 0 <= successes <= trials, trials >= 1")
    alpha = 1.0 - confidence
    lo = (
        0.0
        if successes == 0
        else float(beta_dist.ppf(alpha / 2, successes, trials - successes + 1))
    )
    hi = (
        1.0
        if successes == trials
        else float(beta_dist.ppf(1 - alpha / 2, successes + 1, trials - successes))
    )
    return lo, hi


def monte_carlo_safety(
    spec: SystemSpec,
    x0,
    strategy,
    horizon: int,
    sigma: float,
    safe_box: Box,
    trials: int,
    seed: int,
    confidence: float = 0.99,
) -> McResult:
    """Fraction of simulated trajectories staying in the safe box.

    `strategy` maps the list of noisy observations seen so far to an action.
    The state trajectory itself is noise-free; noise enters only through the
    observations the strategy sees.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    x0 = np.asarray(x0, dtype=float)
    successes = 0
    for trial in range(trials):
        rng = np.random.default_rng((seed, trial))
        x = x0
        observations = [x + sample_noise(rng, sigma, spec.dimension)]
        safe = safe_box.contains_point(x)
        for _ in range(horizon):
            if not safe:
                break
            a = strategy(observations)
            x = step_true(spec, x, a)
            observations.append(x + sample_noise(rng, sigma, spec.dimension))
            safe = safe_box.contains_point(x)
        successes += bool(safe)
    lo, hi = clopper_pearson(successes, trials, confidence)
    return McResult(
        successes=successes,
        trials=trials,
        point_estimate=successes / trials,
        ci_low=lo,
        ci_high=hi,
    )


def _extreme_values(values, lowers, uppers):
    """Min/max of sum(dist * values) over the interval polytope, by brute
    force over all destination orderings."""
    n = len(values)
    base = sum(lowers)
    best_min, best_max = None, None
    for order in permutations(range(n)):
        budget = 1.0 - base
        total = sum(lowers[i] * values[i] for i in range(n))
        for i in order:
            give = min(budget, uppers[i] - lowers[i])
            total += give * values[i]
            budget -= give
            if budget <= 0:
                break
        if best_min is None or total < best_min:
            best_min = total
        if best_max is None or total > best_max:
            best_max = total
    return best_min, best_max


def enumerate_extreme_adversaries(imdp: Imdp, horizon: int):
    """Exact (p_min, p_max) for tiny instances, by exhaustive enumeration.

    Backward induction where each (state, action, step) is extremized over
    every extreme point of its interval polytope, then over actions; this
    covers every strategy because per-step action choices are independent.
    """
    if imdp.n_states > 5 or len(imdp.actions) > 2 or horizon > 5:
        raise ConfigurationError("instance too large for exhaustive enumeration")
    s = imdp.n_states
    dense = []
    for ai in range(len(imdp.actions)):
        per_state = []
        for q in range(s):
            row = imdp.row(q, ai)
            lo = np.zeros(s)
            hi = np.full(s, imdp.default_upper)
            lo[row.dests] = row.lower
            hi[row.dests] = row.upper
            per_state.append((lo.tolist(), hi.tolist()))
        dense.append(per_state)

    v_min = [1.0] * s
    v_max = [1.0] * s
    v_min[imdp.unsafe_index] = 0.0
    v_max[imdp.unsafe_index] = 0.0
    for _ in range(horizon):
        new_min, new_max = [], []
        for q in range(s):
            per_action_min, per_action_max = [], []
            for ai in range(len(imdp.actions)):
                lo, hi = dense[ai][q]
                mn, _ = _extreme_values(v_min, lo, hi)
                _, mx = _extreme_values(v_max, lo, hi)
                per_action_min.append(mn)
                per_action_max.append(mx)
            new_min.append(min(per_action_min))
            new_max.append(max(per_action_max))
        v_min, v_max = new_min, new_max
    return np.array(v_min), np.array(v_max)


def empirical_transition_check(
    q: Box,
    a: str,
    target: Box,
    spec: SystemSpec,
    sigma: float,
    samples_x: int,
    noise_draws: int,
    seed: int,
    confidence: float = 0.99,
):
    """Envelope of per-start estimates of Pr(f(x, a) + v lands in target).

    Returns (min_result, max_result): the McResults of the starting points
    with the smallest and largest point estimates.
    """
    rng = np.random.default_rng(seed)
    xs = q.sample(rng, samples_x)
    results = []
    for x in xs:
        image = step_true(spec, x, a)
        noise = rng.uniform(-sigma, sigma, size=(noise_draws, spec.dimension))
        landed = image + noise
        inside = np.all(
            (landed >= target.lower) & (landed <= target.upper), axis=1
        )
        successes = int(inside.sum())
        lo, hi = clopper_pearson(successes, noise_draws, confidence)
        results.append(
            McResult(
                successes=successes,
                trials=noise_draws,
                point_estimate=successes / noise_draws,
                ci_low=lo,
                ci_high=hi,
            )
        )
    results.sort(key=lambda r: r.point_estimate)
    return results[0], results[-1]
