"""Time and location encodings, output bin spaces and evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EARTH_RADIUS_KM = 6371.0

MONTHS = 12
HOURS = 24
TIME_BINS = MONTHS * HOURS

LAT_BINS = 37
LON_BINS = 72
LOC_BINS = LAT_BINS * LON_BINS
LAT_STEP = 180.0 / LAT_BINS
LON_STEP = 360.0 / LON_BINS

# non-leap calendar
DAYS_IN_MONTH = (31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)
_MONTH_START = np.cumsum((0,) + DAYS_IN_MONTH)  # day-of-year offsets, 13 entries


def month_of_day(day_of_year: int) -> int:
    if not 1 <= day_of_year <= 365:
        raise ValueError(f"day_of_year {day_of_year} outside [1, 365]")
    return int(np.searchsorted(_MONTH_START, day_of_year - 1, side="right"))


def first_day_of_month(month: int) -> int:
    return int(_MONTH_START[month - 1]) + 1


@dataclass(frozen=True)
class Timestamp:
    """GMT capture time. ``month`` is derived from ``day_of_year``."""

    day_of_year: int
    hour: int

    def __post_init__(self):
        if not 1 <= self.day_of_year <= 365:
            raise ValueError(f"day_of_year {self.day_of_year} outside [1, 365]")
        if not 0 <= self.hour <= 23:
            raise ValueError(f"hour {self.hour} outside [0, 23]")

    @property
    def month(self) -> int:
        return month_of_day(self.day_of_year)

    @classmethod
    def from_month(cls, month: int, hour: int, day_in_month: int = 15) -> "Timestamp":
        if not 1 <= month <= 12:
            raise ValueError(f"month {month} outside [1, 12]")
        return cls(first_day_of_month(month) + day_in_month - 1, hour)

    @property
    def time_bin(self) -> int:
        return time_to_bin(self.month, self.hour)


@dataclass(frozen=True)
class GeoLocation:
    lat_deg: float
    lon_deg: float

    def __post_init__(self):
        if not -90.0 <= self.lat_deg <= 90.0:
            raise ValueError(f"latitude {self.lat_deg} outside [-90, 90]")
        if not -180.0 <= self.lon_deg < 180.0:
            raise ValueError(f"longitude {self.lon_deg} outside [-180, 180)")

    @classmethod
    def wrapped(cls, lat_deg: float, lon_deg: float) -> "GeoLocation":
        """Build from an unwrapped longitude and a possibly out-of-range latitude (clamped)."""
        return cls(float(min(max(lat_deg, -90.0), 90.0)), wrap_lon(lon_deg))


def wrap_lon(lon_deg: float) -> float:
    w = (lon_deg + 180.0) % 360.0 - 180.0
    # float modulo can land exactly on +180 for tiny negative inputs
    return -180.0 if w >= 180.0 else float(w)


# ---------------------------------------------------------------------------
# time


def time_to_bin(month: int, hour: int) -> int:
    return (month - 1) * HOURS + hour


def bin_to_time(index: int) -> tuple[int, int]:
    if not 0 <= index < TIME_BINS:
        raise IndexError(f"time bin {index} outside [0, {TIME_BINS})")
    return index // HOURS + 1, index % HOURS


def encode_time_onehot(t: Timestamp) -> np.ndarray:
    out = np.zeros(TIME_BINS)
    out[t.time_bin] = 1.0
    return out


def onehot_time_bins(bins: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Batched one-hot encoding of time-bin indices -> (B, 288)."""
    bins = np.asarray(bins, dtype=np.int64)
    out = np.zeros((bins.size, TIME_BINS), dtype=dtype)
    out[np.arange(bins.size), bins] = 1
    return out


# ---------------------------------------------------------------------------
# location


def to_normalized_ecef(loc: GeoLocation) -> np.ndarray:
    return latlon_to_ecef(loc.lat_deg, loc.lon_deg)


def latlon_to_ecef(lat_deg, lon_deg) -> np.ndarray:
    """Unit-sphere ECEF for scalar or array inputs; last axis is (x, y, z)."""
    phi = np.radians(np.asarray(lat_deg, dtype=np.float64))
    lam = np.radians(np.asarray(lon_deg, dtype=np.float64))
    c = np.cos(phi)
    return np.stack([c * np.cos(lam), c * np.sin(lam), np.sin(phi)], axis=-1)


def latlon_to_bin(lat_deg, lon_deg):
    """Vectorized equal-angle bin index."""
    lat = np.asarray(lat_deg, dtype=np.float64)
    lon = np.asarray(lon_deg, dtype=np.float64)
    row = np.minimum(np.floor((lat + 90.0) / LAT_STEP), LAT_BINS - 1).astype(np.int64)
    col = np.minimum(np.floor((lon + 180.0) / LON_STEP), LON_BINS - 1).astype(np.int64)
    return row * LON_BINS + col


def location_to_bin(loc: GeoLocation) -> int:
    return int(latlon_to_bin(loc.lat_deg, loc.lon_deg))


def bin_centers() -> tuple[np.ndarray, np.ndarray]:
    """(lat, lon) of all bin centers in index order."""
    idx = np.arange(LOC_BINS)
    row, col = idx // LON_BINS, idx % LON_BINS
    return -90.0 + (row + 0.5) * LAT_STEP, -180.0 + (col + 0.5) * LON_STEP


def bin_to_center(index: int) -> GeoLocation:
    if not 0 <= index < LOC_BINS:
        raise IndexError(f"location bin {index} outside [0, {LOC_BINS})")
    row, col = divmod(int(index), LON_BINS)
    return GeoLocation(-90.0 + (row + 0.5) * LAT_STEP, -180.0 + (col + 0.5) * LON_STEP)


# ---------------------------------------------------------------------------
# metrics


def haversine_km(lat1, lon1, lat2, lon2):
    """Great-circle distance on a 6371 km sphere; accepts arrays."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(np.asarray(lon2) - np.asarray(lon1))
    h = np.sin(dp / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def great_circle_km(a: GeoLocation, b: GeoLocation) -> float:
    return float(haversine_km(a.lat_deg, a.lon_deg, b.lat_deg, b.lon_deg))


_PERIODS = {"month": 12, "hour": 24}


def circular_diff(kind: str, a, b):
    """Cyclic distance between months (1-12) or hours (0-23); vectorized."""
    period = _PERIODS[kind]
    d = np.abs(np.asarray(a) - np.asarray(b)) % period
    out = np.minimum(d, period - d)
    return int(out) if np.ndim(out) == 0 else out


def half_cell_diagonal_km() -> float:
    """Largest center-to-corner distance over all location cells."""
    lat_c = -90.0 + (np.arange(LAT_BINS) + 0.5) * LAT_STEP
    d = [haversine_km(lat_c, 0.0, lat_c + s * LAT_STEP / 2, LON_STEP / 2) for s in (-1, 1)]
    return float(np.max(d))
