import numpy as np
import pytest

from gpsafety.abstraction import Imdp, Row
from gpsafety.boxes import Box
from gpsafety.errors import ConfigurationError
from gpsafety.systems import builtin_system
from gpsafety.validation import (
    clopper_pearson,
    empirical_transition_check,
    enumerate_extreme_adversaries,
    monte_carlo_safety,
)
from gpsafety.verifier import verify_finite


def full_row(lowers, uppers):
    n = len(lowers)
    return Row(
        dests=np.arange(n),
        lower=np.asarray(lowers, float),
        upper=np.asarray(uppers, float),
    )


def make_imdp(rows_per_action):
    n_states = len(rows_per_action[0])
    rows = tuple(
        tuple(rows_per_action[ai][q] for ai in range(len(rows_per_action)))
        for q in range(n_states)
    )
    return Imdp(
        n_safe=n_states - 1,
        actions=tuple(f"a{i}" for i in range(len(rows_per_action))),
        dim=1,
        delta=0.0,
        epsilon=0.1,
        default_upper=1.0,
        rows=rows,
    )


def test_clopper_pearson_closed_forms():
    # zero successes: lo = 0, hi = 1 - (alpha/2)^(1/n)
    lo, hi = clopper_pearson(0, 10, confidence=0.99)
    assert lo == 0.0
    assert hi == pytest.approx(1.0 - 0.005 ** (1 / 10))
    # all successes: mirror image
    lo, hi = clopper_pearson(10, 10, confidence=0.99)
    assert hi == 1.0
    assert lo == pytest.approx(0.005 ** (1 / 10))
    # interior case brackets the point estimate
    lo, hi = clopper_pearson(5, 10, confidence=0.99)
    assert lo < 0.5 < hi


def test_clopper_pearson_rejects_bad_counts():
    with pytest.raises(ValueError):
        clopper_pearson(5, 0)
    with pytest.raises(ValueError):
        clopper_pearson(11, 10)


def test_monte_carlo_is_deterministic_and_extreme_cases():
    spec = builtin_system("rotation")
    safe = Box([-4.0, -4.0], [4.0, 4.0])
    strat = lambda obs: "a"
    # the rotation map is a contraction: starting near the origin is safe
    res = monte_carlo_safety(spec, [0.1, 0.1], strat, 10, 0.01, safe, 200, seed=1)
    assert res.point_estimate == 1.0
    # starting outside is immediately unsafe
    res = monte_carlo_safety(spec, [9.0, 0.0], strat, 10, 0.01, safe, 50, seed=1)
    assert res.point_estimate == 0.0
    a = monte_carlo_safety(spec, [3.0, 3.0], strat, 10, 0.5, safe, 100, seed=7)
    b = monte_carlo_safety(spec, [3.0, 3.0], strat, 10, 0.5, safe, 100, seed=7)
    assert a == b


def test_enumeration_matches_hand_chain():
    imdp = make_imdp([[full_row([0.8, 0.1], [0.9, 0.2]),
                       full_row([0.0, 1.0], [0.0, 1.0])]])
    v_min, v_max = enumerate_extreme_adversaries(imdp, 2)
    assert v_min[0] == pytest.approx(0.64)
    assert v_max[0] == pytest.approx(0.81)
    res = verify_finite(imdp, 2)
    np.testing.assert_allclose(res.p_min, v_min)
    np.testing.assert_allclose(res.p_max, v_max)


def test_enumeration_size_guard():
    rows = [[full_row([1.0] + [0.0] * 5, [1.0] + [0.0] * 5)] * 6]
    with pytest.raises(ConfigurationError):
        enumerate_extreme_adversaries(make_imdp(rows), 2)
    small = make_imdp([[full_row([0.5, 0.5], [0.5, 0.5])] * 2])
    with pytest.raises(ConfigurationError):
        enumerate_extreme_adversaries(small, 10)


def test_empirical_transition_check_extremes():
    spec = builtin_system("rotation")
    cell = Box([0.0, 0.0], [0.25, 0.25])
    # the whole plane is always hit
    everywhere = Box([-100.0, -100.0], [100.0, 100.0])
    mn, mx = empirical_transition_check(
        cell, "a", everywhere, spec, 0.01, samples_x=5, noise_draws=100, seed=0
    )
    assert mn.point_estimate == 1.0 and mx.point_estimate == 1.0
    # a far-away box is never hit
    nowhere = Box([50.0, 50.0], [51.0, 51.0])
    mn, mx = empirical_transition_check(
        cell, "a", nowhere, spec, 0.01, samples_x=5, noise_draws=100, seed=0
    )
    assert mn.point_estimate == 0.0 and mx.point_estimate == 0.0
    assert mn.ci_low == 0.0 and mx.ci_high < 0.1
