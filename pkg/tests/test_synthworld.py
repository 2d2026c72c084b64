import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geotemp import synthworld as sw
from geotemp.geotime import GeoLocation, Timestamp


def scene(lat=40.0, lon=10.0, fog=0.0, snow=0.0, seed=3):
    return sw.SceneSpec("s", GeoLocation(lat, lon), seed, fog, snow)


def test_declination_landmarks():
    assert sw.solar_declination(172) == pytest.approx(23.43, abs=0.02)
    assert sw.solar_declination(355) == pytest.approx(-23.44, abs=0.01)
    assert abs(sw.solar_declination(80)) < 1.0
    # published ephemeris: about +23.44 at the June solstice, -23.44 in December
    assert abs(sw.solar_declination(172) - 23.44) < 1.0


def test_elevation_landmarks():
    eq = GeoLocation(0.0, 0.0)
    equinox = 81  # declination closest to zero under the cosine model
    assert sw.solar_elevation(eq, equinox, 12.0) == pytest.approx(90.0, abs=1.0)
    assert sw.solar_elevation(eq, equinox, 0.0) == pytest.approx(-90.0, abs=1.0)
    polar = GeoLocation(80.0, 0.0)
    assert max(sw.solar_elevation(polar, 355, h / 4) for h in range(96)) < 0


def test_local_noon_shifts_with_longitude():
    for lon in (-120.0, -45.0, 0.0, 30.0, 150.0):
        hours = np.linspace(0, 24, 24 * 60, endpoint=False)
        el = [sw.solar_elevation(GeoLocation(10.0, lon), 100, h) for h in hours]
        noon = hours[int(np.argmax(el))]
        expected = (12 - lon / 15) % 24
        assert min(abs(noon - expected), 24 - abs(noon - expected)) < 0.05


def test_night_darker_than_day():
    s = scene()
    rng = lambda: np.random.default_rng(0)
    night = sw.render(s, Timestamp(172, 23), rng())  # ~ local midnight at lon 10
    day = sw.render(s, Timestamp(172, 11), rng())
    assert night.hidden.elevation < -10 and day.hidden.elevation > 30
    assert night.image.mean() < day.image.mean()


def test_render_deterministic_and_in_range():
    a = sw.render(scene(fog=0.5), Timestamp(40, 8), np.random.default_rng(7))
    b = sw.render(scene(fog=0.5), Timestamp(40, 8), np.random.default_rng(7))
    np.testing.assert_array_equal(a.image, b.image)
    assert a.image.shape == (3, 32, 32)
    assert a.image.min() >= -1 and a.image.max() <= 1


def test_zero_fog_propensity_means_no_veil():
    rng = np.random.default_rng(0)
    for day in range(1, 365, 17):
        assert sw.render(scene(fog=0.0), Timestamp(day, day % 24), rng).hidden.fog == 0.0


def test_fog_attribute_is_the_veil():
    s = sw.render(scene(fog=0.9), Timestamp(10, 10), np.random.default_rng(4))
    assert s.attributes[sw.ATTRIBUTE_NAMES.index("fog")] == s.hidden.fog


def test_daylight_plus_night_exactly_one():
    rng = np.random.default_rng(0)
    d, n = sw.ATTRIBUTE_NAMES.index("daylight"), sw.ATTRIBUTE_NAMES.index("night")
    for k in range(50):
        a = sw.render(scene(lat=-50 + 2 * k), Timestamp(1 + 7 * k, k % 24), rng).attributes
        assert a[d] + a[n] == 1.0


def test_noon_tropical_daylight():
    s = sw.render(scene(lat=5.0, lon=0.0), Timestamp(100, 12), np.random.default_rng(0))
    assert s.attributes[sw.ATTRIBUTE_NAMES.index("daylight")] > 0.9


def test_winter_snow_at_high_latitude_only():
    snowy = sw.render(scene(lat=55, snow=1.0), Timestamp(15, 11), np.random.default_rng(0))
    summer = sw.render(scene(lat=55, snow=1.0), Timestamp(196, 11), np.random.default_rng(0))
    tropic = sw.render(scene(lat=5, snow=1.0), Timestamp(15, 11), np.random.default_rng(0))
    assert snowy.hidden.snow_cover > 0.5
    assert summer.hidden.snow_score == 0 and tropic.hidden.snow_score == 0


def test_location_enters_only_through_physics():
    # +15 degrees of longitude with the clock one hour earlier leaves the sun where it was
    a = sw.render(scene(lat=30, lon=0.0), Timestamp(200, 9), np.random.default_rng(1))
    b = sw.render(scene(lat=30, lon=15.0), Timestamp(200, 8), np.random.default_rng(1))
    assert a.hidden.elevation == pytest.approx(b.hidden.elevation, abs=1e-9)
    np.testing.assert_allclose(a.image, b.image, atol=1e-9)
    np.testing.assert_allclose(a.attributes, b.attributes, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.floats(-89, 89), st.floats(-180, 179.9), st.integers(1, 365), st.integers(0, 23),
       st.floats(0, 1), st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_attributes_in_unit_interval(lat, lon, day, hour, fog, snow, seed):
    s = sw.render(scene(lat, lon, fog, snow), Timestamp(day, hour), np.random.default_rng(seed), size=8)
    assert s.attributes.shape == (sw.N_ATTRIBUTES,) == (40,)
    assert np.all((s.attributes >= 0) & (s.attributes <= 1))
    assert s.image.min() >= -1 and s.image.max() <= 1


def test_daylight_monotone_in_elevation():
    d = sw.ATTRIBUTE_NAMES.index("daylight")
    prev = -1.0
    for h in np.linspace(0, 12, 49):
        # equator at the equinox: elevation rises monotonically from midnight to noon
        hidden = sw.physics(scene(0.0, 0.0), Timestamp(81, 0), float(h), 0.0)
        v = sw.attribute_vector(hidden)[d]
        assert v >= prev
        prev = v


def test_scene_validation():
    with pytest.raises(ValueError):
        sw.SceneSpec("x", GeoLocation(0, 0), 1, 1.5, 0.0)


def test_world_sizes_and_unique_ids():
    data = sw.build_samples(sw.WorldConfig(mode="webcam", n_scenes=10, samples_per_scene=100, image_size=8))
    assert len(data) == 1000 == len(set(data.ids))
    # webcam split is by scene
    for s, ix in data.scenes().items():
        assert len(set(data.split[ix])) == 1


def test_roaming_split_by_sample():
    data = sw.build_samples(sw.WorldConfig(mode="roaming", n_roaming=400, image_size=8))
    frac = (data.split == "test").mean()
    assert 0.15 < frac < 0.35
    assert len(set(data.scene_ids)) == 400


def test_latitude_is_sin_uniform():
    from scipy import stats

    rng = np.random.default_rng(0)
    lat, lon = sw.sample_locations(rng, 10000, sw.WorldConfig())
    ks = stats.kstest(np.sin(np.radians(lat)), "uniform", args=(-1, 2)).statistic
    assert ks < 0.05
    ulat, ulon = sw.sample_locations(rng, 10000, sw.WorldConfig(location_prior="uniform"))
    assert stats.kstest(ulon, "uniform", args=(-180, 360)).statistic < 0.05


def test_manifest_round_trip_and_hash(tmp_path):
    cfg = sw.WorldConfig(mode="hybrid", n_scenes=2, samples_per_scene=5, n_roaming=6, image_size=8, seed=9)
    m1, data = sw.generate_dataset(cfg, tmp_path / "a")
    m2, _ = sw.generate_dataset(cfg, tmp_path / "b")
    assert m1.digest() == m2.digest()
    header = json.loads((tmp_path / "a" / sw.MANIFEST_NAME).read_text().splitlines()[0])
    assert header["shape"] == [3, 8, 8] and header["range"] == [-1, 1]
    back = sw.load_dataset(tmp_path / "a")
    np.testing.assert_array_equal(back.images, data.images)
    assert back.ids == data.ids
    np.testing.assert_array_equal(back.attributes, data.attributes)
    raw = np.fromfile(tmp_path / "a" / "images" / f"{data.ids[0]}.f32", dtype="<f4")
    np.testing.assert_array_equal(raw.reshape(3, 8, 8), data.images[0])


def test_missing_image_file_detected(tmp_path):
    cfg = sw.WorldConfig(mode="roaming", n_roaming=4, image_size=8)
    _, data = sw.generate_dataset(cfg, tmp_path)
    (tmp_path / "images" / f"{data.ids[1]}.f32").unlink()
    with pytest.raises(FileNotFoundError):
        sw.load_dataset(tmp_path)


def test_different_seed_different_world():
    a = sw.build_samples(sw.WorldConfig(mode="roaming", n_roaming=20, image_size=8, seed=1))
    b = sw.build_samples(sw.WorldConfig(mode="roaming", n_roaming=20, image_size=8, seed=2))
    assert not np.array_equal(a.lat, b.lat)
