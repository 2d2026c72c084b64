import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geotemp import geotime, localizer, net
from geotemp.geotime import GeoLocation

from conftest import SMALL_MODEL


@pytest.fixture(scope="module")
def model():
    return net.init_model(SMALL_MODEL, seed=4)


@pytest.fixture(scope="module")
def field(model, tiny_world):
    ix = next(ix for s, ix in tiny_world.scenes().items() if s.startswith("w"))
    return localizer.TimeLossField.from_dataset(model, tiny_world, ix[:12])


def test_single_image_loss_nonnegative(field):
    for k in range(len(field)):
        one = field.subset([k])
        assert np.all(localizer.loss_surface(one, (5, 8)).loss >= 0)


def test_loss_is_sum_over_images(field):
    lat, lon = np.array([10.0, -33.0]), np.array([5.0, 120.0])
    total = localizer.time_loss_grid(field, lat, lon)
    parts = sum(localizer.time_loss_grid(field.subset([k]), lat, lon) for k in range(len(field)))
    np.testing.assert_allclose(total, parts, rtol=0, atol=1e-9)
    sub = localizer.time_loss_grid(field.subset([0, 3, 5]), lat, lon)
    assert np.all(total >= sub)


def test_surface_additivity(field):
    full = localizer.loss_surface(field, (9, 12)).loss
    parts = sum(localizer.loss_surface(field.subset([k]), (9, 12)).loss for k in range(len(field)))
    np.testing.assert_allclose(full, parts, rtol=0, atol=1e-9)


def test_order_invariance_exact(field):
    perm = np.random.default_rng(0).permutation(len(field))
    lat, lon = np.linspace(-60, 60, 7), np.linspace(-170, 170, 7)
    a = localizer.time_loss_grid(field, lat, lon)
    b = localizer.time_loss_grid(field.subset(perm), lat, lon)
    np.testing.assert_array_equal(a, b)


@settings(max_examples=50, deadline=None)
@given(st.integers(-89 * 64, 89 * 64), st.integers(-180 * 64, 180 * 64 - 1), st.sampled_from([-360, 360]))
def test_longitude_wrap_exact(field, lat64, lon64, shift):
    lat, lon = lat64 / 64, lon64 / 64
    a = localizer.time_loss(field, GeoLocation(lat, lon))
    b = float(localizer.time_loss_grid(field, lat, lon + shift)[0])
    assert a == b


def test_gradient_matches_finite_differences(field):
    rng = np.random.default_rng(1)
    lats, lons = rng.uniform(-80, 80, 20), rng.uniform(-180, 180, 20)
    loss, dlat, dlon = localizer.time_loss_grid(field, lats, lons, grad=True)
    h = 1e-4
    f = lambda a, o: localizer.time_loss_grid(field, a, o)
    num_lat = (-f(lats + 2 * h, lons) + 8 * f(lats + h, lons) - 8 * f(lats - h, lons) + f(lats - 2 * h, lons)) / (12 * h)
    num_lon = (-f(lats, lons + 2 * h) + 8 * f(lats, lons + h) - 8 * f(lats, lons - h) + f(lats, lons - 2 * h)) / (12 * h)
    for a, n in ((dlat, num_lat), (dlon, num_lon)):
        rel = np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), 1e-12)
        assert rel.max() < 1e-3


def test_surface_with_gradients_matches_plain(field):
    a = localizer.loss_surface(field, (6, 10), with_grad=True)
    b = localizer.loss_surface(field, (6, 10))
    np.testing.assert_array_equal(a.loss, b.loss)
    assert a.dlat.shape == a.loss.shape == (6, 10)
    assert np.all(np.isfinite(a.dlat)) and np.all(np.isfinite(a.dlon))


def test_grid_covers_sphere():
    lats, lons = localizer.grid_centers(37, 72)
    assert lats[0] > -90 and lats[-1] < 90 and lons[0] >= -180 and lons[-1] < 180
    np.testing.assert_allclose(lats, geotime.bin_centers()[0][:: 72])
    with pytest.raises(ValueError):
        localizer.grid_centers(1, 10)


def test_descent_never_increases_loss(field):
    res = localizer.continuous_localize(field, restarts=2, steps=10)
    for t in res.restarts:
        assert t.end_loss <= t.start_loss
    coarse = localizer.loss_surface(field, (19, 36))
    assert res.loss <= coarse.loss.min()
    assert -localizer.LAT_LIMIT <= res.location.lat_deg <= localizer.LAT_LIMIT


def test_localize_deterministic(field):
    a = localizer.continuous_localize(field, restarts=2, steps=5, seed=3)
    b = localizer.continuous_localize(field, restarts=2, steps=5, seed=3)
    assert a.location == b.location and a.loss == b.loss


def test_divergence_names_restart(tiny_world):
    model = net.init_model(SMALL_MODEL, seed=4)
    model.time_given_loc_head.fc2.bias.data[:] = np.nan
    f = localizer.TimeLossField.from_dataset(model, tiny_world, [0, 1])
    with pytest.raises(localizer.DivergenceError, match="restart 0"):
        localizer.continuous_localize(f, restarts=1, steps=3)


def test_field_validation(model, tiny_world):
    with pytest.raises(ValueError):
        localizer.TimeLossField(model, tiny_world.images[:2], tiny_world.time_bins[:3])
    with pytest.raises(ValueError):
        localizer.TimeLossField(model, tiny_world.images[:0], tiny_world.time_bins[:0])


def test_nested_subsets():
    subs = localizer.nested_subsets(40, (1, 5, 20), seed=0, scene_index=2)
    assert set(subs[1]) <= set(subs[5]) <= set(subs[20])
    assert len(subs[20]) == 20
    with pytest.raises(ValueError):
        localizer.nested_subsets(4, (1, 5), 0, 0)
