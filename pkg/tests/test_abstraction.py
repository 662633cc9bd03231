import numpy as np
import pytest

from gpsafety import abstraction, gp
from gpsafety.bounds import compute_bound_params
from gpsafety.boxes import Box
from gpsafety.errors import ConfigurationError, SoundnessError
from gpsafety.systems import builtin_system, generate_dataset
from gpsafety.verifier import verify_finite


@pytest.fixture(scope="module")
def rotation_models():
    """Well-trained models of the rotation system on a small region."""
    spec = builtin_system("rotation")
    region = Box([-1.5, -1.5], [1.5, 1.5])
    ds = generate_dataset(spec, region, 300, sigma=0.01, seed=42)
    models = {}
    for d in range(2):
        params = gp.optimize_hyperparameters(ds, "a", d)
        models[("a", d)] = gp.fit(ds, "a", d, params)
    return models


def small_grid():
    return abstraction.build_grid(Box([-1.0, -1.0], [1.0, 1.0]), 0.5)


def test_build_grid_shape_and_cells():
    grid = abstraction.build_grid(Box([-4.0, -4.0], [4.0, 4.0]), 0.25)
    assert grid.shape == (32, 32)
    assert grid.n_cells == 1024
    assert grid.unsafe_index == 1024
    first = grid.cell(0)
    np.testing.assert_allclose(first.sides, [0.25, 0.25])
    # every cell sits inside the safe box; the hull recovers it
    assert all(grid.safe_box.contains_box(c) for c in grid.cells())


def test_build_grid_rejects_non_divisible_h():
    with pytest.raises(ConfigurationError):
        abstraction.build_grid(Box([0.0, 0.0], [1.0, 1.0]), 0.3)
    with pytest.raises(ConfigurationError):
        abstraction.build_grid(Box([0.0], [1.0]), -0.1)


def test_cell_of_point_roundtrip():
    grid = small_grid()
    for q in range(grid.n_cells):
        assert grid.cell_of_point(grid.cell(q).center) == q
    assert grid.cell_of_point([5.0, 0.0]) is None


def test_transition_interval_validation():
    with pytest.raises(SoundnessError):
        abstraction.TransitionInterval(0.5, 0.4)
    with pytest.raises(SoundnessError):
        abstraction.TransitionInterval(-0.1, 0.5)
    with pytest.raises(SoundnessError):
        abstraction.TransitionInterval(0.5, 1.1)


def test_mean_image_box_tracks_linear_map(rotation_models):
    models = [rotation_models[("a", d)] for d in range(2)]
    cell = Box([0.25, 0.25], [0.5, 0.5])
    image = abstraction.mean_image_box(models, cell, subgrid_k=3)
    # true image of the cell under the rotation matrix, corner by corner
    a_mat = builtin_system("rotation").maps["a"]
    corners = np.array(
        [a_mat @ [x1, x2] for x1 in (0.25, 0.5) for x2 in (0.25, 0.5)]
    )
    true_lo, true_hi = corners.min(axis=0), corners.max(axis=0)
    # sound: encloses the true image up to regression error, and not by much
    assert np.all(image.lower <= true_lo + 0.05)
    assert np.all(image.upper >= true_hi - 0.05)
    assert np.all(image.sides <= (true_hi - true_lo) + 0.3)


def test_transition_interval_zero_delta_is_binary(rotation_models):
    cell = Box([0.0, 0.0], [0.25, 0.25])
    # huge target: mean image certainly fits even after shrinking
    wide = Box([-5.0, -5.0], [5.0, 5.0])
    ti = abstraction.transition_interval(
        cell, "a", wide, rotation_models, eps=0.12, delta=0.0
    )
    assert (ti.lower, ti.upper) == (1.0, 1.0)
    # far-away target: cannot be reached
    far = Box([3.0, 3.0], [4.0, 4.0])
    ti = abstraction.transition_interval(
        cell, "a", far, rotation_models, eps=0.12, delta=0.0
    )
    assert (ti.lower, ti.upper) == (0.0, 0.0)


def test_unsafe_interval_complements_stay_safe(rotation_models):
    cell = Box([0.75, 0.75], [1.0, 1.0])
    safe = Box([-1.0, -1.0], [1.0, 1.0])
    stay = abstraction.transition_interval(
        cell, "a", safe, rotation_models, eps=0.12, delta=0.0
    )
    unsafe = abstraction.unsafe_transition_interval(
        cell, "a", rotation_models, safe, eps=0.12, delta=0.0
    )
    assert unsafe.lower == pytest.approx(1.0 - stay.upper)
    assert unsafe.upper == pytest.approx(1.0 - stay.lower)


def test_positive_delta_caps_confidence(rotation_models):
    cell = Box([0.0, 0.0], [0.25, 0.25])
    wide = Box([-5.0, -5.0], [5.0, 5.0])
    delta = 0.1
    conf = (1 - delta) ** 2
    ti = abstraction.transition_interval(
        cell, "a", wide, rotation_models, eps=0.12, delta=delta
    )
    assert ti.lower == pytest.approx(conf)
    assert ti.upper == 1.0
    far = Box([3.0, 3.0], [4.0, 4.0])
    ti = abstraction.transition_interval(
        cell, "a", far, rotation_models, eps=0.12, delta=delta
    )
    assert ti.lower == 0.0
    assert ti.upper == pytest.approx(1.0 - conf)


def test_refining_subgrid_never_widens(rotation_models):
    cell = Box([0.5, -0.5], [1.0, 0.0])
    target = Box([0.0, 0.0], [1.0, 1.0])
    coarse = abstraction.transition_interval(
        cell, "a", target, rotation_models, eps=0.05, delta=0.0, subgrid_k=2
    )
    fine = abstraction.transition_interval(
        cell, "a", target, rotation_models, eps=0.05, delta=0.0, subgrid_k=6
    )
    assert fine.lower >= coarse.lower - 1e-12
    assert fine.upper <= coarse.upper + 1e-12


def test_build_imdp_structure(rotation_models):
    grid = small_grid()
    params = compute_bound_params(
        rotation_models, delta=0.0, sigma=0.01, b_norm=(1.0, 1.0),
        epsilon_mode="explicit", epsilon=0.1,
    )
    imdp = abstraction.build_imdp(grid, rotation_models, params)
    assert imdp.n_safe == grid.n_cells
    assert imdp.n_states == grid.n_cells + 1
    assert imdp.actions == ("a",)
    abstraction.check_imdp(imdp)  # every row well-formed
    # the unsafe state is absorbing
    unsafe_row = imdp.row(imdp.unsafe_index, 0)
    assert list(unsafe_row.dests) == [imdp.unsafe_index]
    np.testing.assert_array_equal(unsafe_row.lower, [1.0])
    np.testing.assert_array_equal(unsafe_row.upper, [1.0])


def test_imdp_roundtrip_preserves_verification(rotation_models, tmp_path):
    grid = small_grid()
    params = compute_bound_params(
        rotation_models, delta=0.0, sigma=0.01, b_norm=(1.0, 1.0),
        epsilon_mode="explicit", epsilon=0.1,
    )
    imdp = abstraction.build_imdp(grid, rotation_models, params)
    path = tmp_path / "imdp.txt"
    abstraction.export_imdp(imdp, str(path))
    back = abstraction.import_imdp(str(path))
    assert back.n_safe == imdp.n_safe
    assert back.actions == imdp.actions
    assert back.default_upper == imdp.default_upper
    a = verify_finite(imdp, 5)
    b = verify_finite(back, 5)
    np.testing.assert_array_equal(a.p_min, b.p_min)
    np.testing.assert_array_equal(a.p_max, b.p_max)
