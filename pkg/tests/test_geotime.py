import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geotemp import geotime
from geotemp.geotime import GeoLocation, Timestamp

lats = st.floats(-90, 90, allow_nan=False)
lons = st.floats(-180, 180, allow_nan=False, exclude_max=True)


def test_every_location_bin_round_trips():
    for b in range(geotime.LOC_BINS):
        assert geotime.location_to_bin(geotime.bin_to_center(b)) == b


def test_every_time_bin_round_trips():
    seen = set()
    for month in range(1, 13):
        for hour in range(24):
            b = geotime.time_to_bin(month, hour)
            assert geotime.bin_to_time(b) == (month, hour)
            seen.add(b)
    assert seen == set(range(geotime.TIME_BINS))


def test_equator_prime_meridian_bin():
    assert geotime.location_to_bin(GeoLocation(0.0, 0.0)) == 1332
    c = geotime.bin_to_center(1332)
    assert (c.lat_deg, c.lon_deg) == pytest.approx((0.0, 2.5))


def test_bin_index_out_of_range():
    with pytest.raises(IndexError):
        geotime.bin_to_center(geotime.LOC_BINS)
    with pytest.raises(IndexError):
        geotime.bin_to_time(-1)


def test_domain_validation():
    with pytest.raises(ValueError):
        GeoLocation(90.5, 0.0)
    with pytest.raises(ValueError):
        GeoLocation(0.0, 180.0)
    with pytest.raises(ValueError):
        Timestamp(366, 0)
    with pytest.raises(ValueError):
        Timestamp(1, 24)


def test_month_from_day_of_year():
    assert Timestamp(31, 0).month == 1
    assert Timestamp(32, 0).month == 2
    assert Timestamp(365, 23).month == 12
    assert Timestamp.from_month(3, 5).day_of_year == 31 + 28 + 15


def test_antipodal_distance_is_half_circumference():
    d = geotime.great_circle_km(GeoLocation(0, 0), GeoLocation(0, -180))
    assert d == pytest.approx(math.pi * geotime.EARTH_RADIUS_KM, rel=1e-12)
    assert d == pytest.approx(20015.087, abs=1e-3)


def test_half_cell_diagonal_oracle():
    # largest cell is on the equator row; corner offset is (lat_step/2, 2.5 deg)
    dlat, dlon = math.radians(180 / 37 / 2), math.radians(2.5)
    h = math.sin(dlat / 2) ** 2 + math.cos(dlat) * math.sin(dlon / 2) ** 2
    oracle = 2 * 6371 * math.asin(math.sqrt(h))
    assert geotime.half_cell_diagonal_km() == pytest.approx(oracle, rel=1e-12)
    assert geotime.half_cell_diagonal_km() < 390


def test_random_hour_error_mean_is_six():
    d = np.arange(24)
    assert geotime.circular_diff("hour", d, 0).mean() == 6.0


@settings(max_examples=200)
@given(lats, lons)
def test_ecef_is_unit_norm(lat, lon):
    assert np.linalg.norm(geotime.latlon_to_ecef(lat, lon)) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=200)
@given(lats, lons)
def test_point_lies_in_its_bin(lat, lon):
    b = geotime.location_to_bin(GeoLocation(lat, lon))
    c = geotime.bin_to_center(b)
    assert abs(c.lat_deg - lat) <= geotime.LAT_STEP / 2 + 1e-9
    assert abs(c.lon_deg - lon) <= geotime.LON_STEP / 2 + 1e-9
    assert geotime.great_circle_km(c, GeoLocation(lat, lon)) <= geotime.half_cell_diagonal_km() + 1e-6


@settings(max_examples=200)
@given(lats, lons, lats, lons)
def test_haversine_symmetric_and_bounded(a1, o1, a2, o2):
    d12 = geotime.haversine_km(a1, o1, a2, o2)
    d21 = geotime.haversine_km(a2, o2, a1, o1)
    assert d12 == pytest.approx(d21, abs=1e-9)
    assert 0 <= d12 <= math.pi * geotime.EARTH_RADIUS_KM + 1e-6


@settings(max_examples=200)
@given(lats, lons, lats, lons, lats, lons)
def test_haversine_triangle_inequality(a1, o1, a2, o2, a3, o3):
    d = geotime.haversine_km
    assert d(a1, o1, a3, o3) <= d(a1, o1, a2, o2) + d(a2, o2, a3, o3) + 1e-6


@settings(max_examples=200)
@given(st.integers(0, 23), st.integers(0, 23), st.integers(-5, 5))
def test_hour_diff_symmetric_bounded_periodic(a, b, k):
    d = geotime.circular_diff("hour", a, b)
    assert d == geotime.circular_diff("hour", b, a)
    assert 0 <= d <= 12
    assert d == geotime.circular_diff("hour", a + 24 * k, b)


@settings(max_examples=200)
@given(st.integers(1, 12), st.integers(1, 12))
def test_month_diff_bounded(a, b):
    d = geotime.circular_diff("month", a, b)
    assert 0 <= d <= 6 and d == geotime.circular_diff("month", b, a)


@settings(max_examples=200)
@given(st.floats(-1e4, 1e4, allow_nan=False))
def test_wrap_lon_range_and_periodicity(lon):
    w = geotime.wrap_lon(lon)
    assert -180 <= w < 180
    assert math.cos(math.radians(w - lon)) == pytest.approx(1.0, abs=1e-9)


def test_time_onehot_vectorized_matches_scalar():
    t = Timestamp.from_month(7, 13)
    np.testing.assert_array_equal(geotime.encode_time_onehot(t), geotime.onehot_time_bins([t.time_bin])[0])
