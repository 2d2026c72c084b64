"""A synthetic world whose pictures are a known function of time and place.

Each scene is a fixed "webcam": a seeded ground texture at one location.
Rendering depends on location and time only through solar physics (sun
elevation, sun east/west direction, declination-driven snow) plus per-timestamp
weather (fog). Hour is therefore readable from an image only as *local* solar
time; recovering GMT hour needs the longitude, which is the effect the
location-conditioned time estimator is meant to exploit.

Scene longitudes follow a clustered prior by default, imitating the
geographic bias of photo collections; latitudes are uniform on the sphere.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import geotime
from .geotime import GeoLocation, Timestamp

MAX_DECLINATION = 23.44
N_ATTRIBUTES = 40
NOISE_SIGMA = 0.02
HORIZON = 0.375  # fraction of image height occupied by sky


# ---------------------------------------------------------------------------
# solar physics


def solar_declination(day_of_year) -> np.ndarray | float:
    """Degrees; cosine approximation with the solstice near day 172."""
    d = -MAX_DECLINATION * np.cos(2 * np.pi * (np.asarray(day_of_year, dtype=np.float64) + 10) / 365)
    return float(d) if np.ndim(d) == 0 else d


def hour_angle(lon_deg, gmt_hour):
    """Degrees west of the local meridian, wrapped to [-180, 180)."""
    h = 15.0 * (np.asarray(gmt_hour, dtype=np.float64) + np.asarray(lon_deg, dtype=np.float64) / 15.0 - 12.0)
    return (h + 180.0) % 360.0 - 180.0


def solar_elevation(loc: GeoLocation, day: int, gmt_hour: float) -> float:
    return float(_elevation(loc.lat_deg, loc.lon_deg, day, gmt_hour))


def _elevation(lat, lon, day, gmt_hour):
    phi = np.radians(lat)
    delta = np.radians(solar_declination(day))
    h = np.radians(hour_angle(lon, gmt_hour))
    s = np.sin(phi) * np.sin(delta) + np.cos(phi) * np.cos(delta) * np.cos(h)
    return np.degrees(np.arcsin(np.clip(s, -1.0, 1.0)))


def sun_direction(lat, lon, day, gmt_hour) -> tuple[float, float, float]:
    """Unit sun vector in local (east, north, up) coordinates."""
    phi = np.radians(lat)
    delta = np.radians(solar_declination(day))
    h = np.radians(hour_angle(lon, gmt_hour))
    east = -np.cos(delta) * np.sin(h)
    north = np.cos(phi) * np.sin(delta) - np.sin(phi) * np.cos(delta) * np.cos(h)
    up = np.sin(phi) * np.sin(delta) + np.cos(phi) * np.cos(delta) * np.cos(h)
    return float(east), float(north), float(up)


def smoothstep(x, lo, hi):
    t = np.clip((np.asarray(x, dtype=np.float64) - lo) / (hi - lo), 0.0, 1.0)
    return t * t * (3 - 2 * t)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


# ---------------------------------------------------------------------------
# scenes and rendering


@dataclass(frozen=True)
class SceneSpec:
    scene_id: str
    location: GeoLocation
    texture_seed: int
    fog_propensity: float
    snow_susceptibility: float

    def __post_init__(self):
        if not 0.0 <= self.fog_propensity <= 1.0:
            raise ValueError(f"fog_propensity {self.fog_propensity} outside [0, 1]")
        if not 0.0 <= self.snow_susceptibility <= 1.0:
            raise ValueError(f"snow_susceptibility {self.snow_susceptibility} outside [0, 1]")


@dataclass
class HiddenState:
    """Physical quantities behind one rendered image; attributes are derived from these."""

    gmt_hour: float
    elevation: float
    sun_east: float
    sun_north: float
    declination: float
    season_phase: float  # radians since the local vernal equinox
    hemisphere: float  # +1 north, -1 south
    abs_lat: float
    illumination: float
    golden: float
    fog: float
    snow_score: float
    snow_cover: float


@dataclass
class SyntheticSample:
    image: np.ndarray  # (3, H, W) in [-1, 1]
    timestamp: Timestamp
    location: GeoLocation
    attributes: np.ndarray  # (40,)
    scene_id: str
    hidden: HiddenState | None = None


def _texture(seed: int, size: int) -> np.ndarray:
    """Smooth seeded albedo (3, size, size) in roughly [0.15, 0.85]."""
    rng = np.random.default_rng(seed)
    coarse = rng.uniform(0.0, 1.0, size=(3, 5, 5))
    base_color = rng.uniform(0.25, 0.75, size=(3, 1, 1))
    pos = np.linspace(0, 4, size)
    i0 = np.minimum(np.floor(pos).astype(int), 3)
    frac = pos - i0
    rows = coarse[:, i0, :] * (1 - frac)[None, :, None] + coarse[:, i0 + 1, :] * frac[None, :, None]
    smooth = rows[:, :, i0] * (1 - frac)[None, None, :] + rows[:, :, i0 + 1] * frac[None, None, :]
    fine = rng.uniform(-1.0, 1.0, size=(3, size, size))
    return np.clip(0.6 * base_color + 0.35 * smooth + 0.06 * fine - 0.05, 0.05, 0.95)


_DAY_SKY = np.array([0.35, 0.55, 0.95])
_NIGHT_SKY = np.array([0.03, 0.04, 0.10])
_GOLD = np.array([1.0, 0.55, 0.25])
_SUN = np.array([1.0, 0.95, 0.8])


def physics(scene: SceneSpec, t: Timestamp, gmt_hour: float, fog_draw: float) -> HiddenState:
    lat, lon = scene.location.lat_deg, scene.location.lon_deg
    el = float(_elevation(lat, lon, t.day_of_year, gmt_hour))
    east, north, _ = sun_direction(lat, lon, t.day_of_year, gmt_hour)
    decl = solar_declination(t.day_of_year)
    hemi = 1.0 if lat >= 0 else -1.0
    season = (2 * np.pi * (t.day_of_year - 80) / 365 + (0.0 if lat >= 0 else np.pi)) % (2 * np.pi)
    cold_season = max(0.0, -decl * hemi) / MAX_DECLINATION
    snow_score = scene.snow_susceptibility * cold_season * float(smoothstep(abs(lat), 20.0, 60.0))
    return HiddenState(
        gmt_hour=gmt_hour,
        elevation=el,
        sun_east=east,
        sun_north=north,
        declination=decl,
        season_phase=float(season),
        hemisphere=hemi,
        abs_lat=abs(lat),
        illumination=0.06 + 0.94 * float(smoothstep(el, -10.0, 25.0)),
        golden=float(np.exp(-((el / 5.0) ** 2))),
        fog=scene.fog_propensity * fog_draw**2,
        snow_score=snow_score,
        snow_cover=float(np.clip((snow_score - 0.15) / 0.5, 0.0, 1.0)),
    )


def compose(hidden: HiddenState, texture: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Image in [-1, 1] from hidden state; location enters only through ``hidden``."""
    _, S, _ = texture.shape
    y = (np.arange(S) + 0.5) / S
    x = (np.arange(S) + 0.5) / S
    sky_rows = y < HORIZON
    el = hidden.elevation
    daylight = float(smoothstep(el, -12.0, 20.0))
    sunlit = float(smoothstep(el, -2.0, 10.0)) * (1.0 - hidden.fog)

    img = np.empty_like(texture)

    # sky: night/day blend, orange near the horizon when the sun is low, sun glow
    yy = y[sky_rows][:, None]
    horizon_boost = 1.0 + 0.3 * (yy / HORIZON)
    sky = (_NIGHT_SKY + (_DAY_SKY - _NIGHT_SKY) * daylight)[:, None, None] * horizon_boost[None]
    gold = 0.75 * hidden.golden * (0.4 + 0.6 * yy / HORIZON)
    sky = sky * (1 - gold[None]) + _GOLD[:, None, None] * gold[None] * max(daylight, 0.25)
    sx = 0.5 - 0.45 * hidden.sun_east  # east on the left
    sy = HORIZON * (1.0 - max(np.sin(np.radians(el)), -0.2) * 1.6)
    glow = float(smoothstep(el, -6.0, 2.0)) * np.exp(-((x[None, :] - sx) ** 2 + (yy - sy) ** 2) / (2 * 0.12**2))
    sky = sky + 0.8 * _SUN[:, None, None] * glow[None]
    img[:, sky_rows, :] = sky

    # ground: lit texture with directional shading toward the sun's side
    ground = texture[:, ~sky_rows, :]
    xc = 2 * x - 1
    shade = 1.0 + 0.45 * sunlit * hidden.sun_east * (-xc)
    lit = ground * hidden.illumination * shade[None, None, :]
    lit = lit * (1 - 0.35 * hidden.golden) + 0.35 * hidden.golden * _GOLD[:, None, None] * lit.mean(axis=0, keepdims=True)
    if hidden.snow_cover > 0:
        gy = y[~sky_rows]
        band = hidden.snow_cover * np.where(gy > 0.7, 1.0, 0.45)
        white = 0.95 * hidden.illumination
        lit = lit * (1 - band[None, :, None]) + white * band[None, :, None]
    img[:, ~sky_rows, :] = lit

    # fog veil
    veil = 0.55 * hidden.illumination + 0.2
    img = img * (1 - hidden.fog) + veil * hidden.fog

    return np.clip(2 * np.clip(img, 0.0, 1.0) - 1 + noise, -1.0, 1.0)


def render(scene: SceneSpec, t: Timestamp, rng: np.random.Generator, size: int = 32) -> SyntheticSample:
    """Deterministic given (scene, t, rng state)."""
    gmt_hour = t.hour + rng.uniform(0.0, 1.0)
    fog_draw = rng.uniform(0.0, 1.0)
    noise = rng.normal(0.0, NOISE_SIGMA, size=(3, size, size))
    hidden = physics(scene, t, gmt_hour, fog_draw)
    image = compose(hidden, _texture(scene.texture_seed, size), noise)
    return SyntheticSample(image, t, scene.location, attribute_vector(hidden), scene.scene_id, hidden)


# ---------------------------------------------------------------------------
# attributes


def _bump(phase, center, power=2):
    return ((1 + np.cos(phase - center)) / 2) ** power


# fixed mixing weights for the four filler channels, over the standardized base quantities
_FILLER_W = np.array(
    [
        [1.2, -0.8, 0.5, 0.0, -1.5, 0.7, 0.0, 0.9],
        [-0.6, 1.4, 0.0, -1.1, 0.4, 0.0, 1.3, -0.5],
        [0.3, 0.0, -1.6, 0.8, 0.9, -1.2, 0.5, 0.0],
        [-1.0, -0.7, 1.1, 0.6, 0.0, 1.5, -0.9, 0.4],
    ]
)
_FILLER_B = np.array([0.2, -0.3, 0.1, -0.1])

ATTRIBUTE_NAMES = (
    "daylight", "night", "golden_hour", "twilight", "sunny", "fog", "foggy_day", "snow",
    "snow_cover", "winter", "summer", "spring", "autumn", "midday", "morning", "afternoon",
    "bright", "dark", "warm", "cold", "glowing", "colorful", "dull", "gloomy",
    "shadows", "long_shadows", "clear", "ice", "moist", "dry", "lush", "bare",
    "calm", "mysterious", "high_sun", "low_sun", "mix_a", "mix_b", "mix_c", "mix_d",
)  # fmt: skip


def attribute_vector(h: HiddenState) -> np.ndarray:
    """40 transient attributes in [0, 1], each a fixed function of the hidden state.

    ``daylight`` is a logistic function of solar elevation (3 degree scale) and
    ``night`` its complement; ``fog`` is exactly the veil strength used by
    :func:`compose`; ``snow`` is the clipped snow score. ``mix_*`` are fixed
    logistic mixtures of the base quantities.
    """
    el = h.elevation
    daylight = float(_sigmoid(el / 3.0))
    night = 1.0 - daylight
    golden = h.golden
    twilight = float(np.exp(-(((el + 6.0) / 4.0) ** 2)))
    f = h.fog
    clear = 1.0 - f
    snow = float(np.clip(h.snow_score, 0.0, 1.0))
    cover = h.snow_cover
    hemi_decl = h.hemisphere * h.declination / MAX_DECLINATION
    winter = max(0.0, -hemi_decl)
    summer = max(0.0, hemi_decl)
    spring = float(_bump(h.season_phase, np.pi / 4))
    autumn = float(_bump(h.season_phase, 5 * np.pi / 4))
    lat_warm = 1.0 - float(smoothstep(h.abs_lat, 15.0, 60.0))
    sunny = daylight * clear
    east = h.sun_east
    midday = daylight * float(smoothstep(el, 25.0, 60.0))
    morning = daylight * max(0.0, east)
    afternoon = daylight * max(0.0, -east)
    shadows = daylight * clear * abs(east)
    high_sun = float(smoothstep(el, 40.0, 75.0))
    low_sun = daylight * (1.0 - float(smoothstep(el, 5.0, 25.0)))
    base = np.array(
        [
            np.sin(np.radians(el)),
            east,
            h.sun_north,
            hemi_decl,
            2 * f - 0.3,
            2 * cover - 0.5,
            np.cos(h.season_phase),
            2 * golden - 0.5,
        ]
    )
    fillers = _sigmoid(_FILLER_W @ base + _FILLER_B)
    attrs = [
        daylight, night, golden, twilight, sunny, f, f * daylight, snow,
        cover, winter, summer, spring, autumn, midday, morning, afternoon,
        h.illumination, 1.0 - h.illumination,
        daylight * (0.5 * lat_warm + 0.5 * summer), 0.5 * winter + 0.5 * (1.0 - lat_warm),
        golden * clear, min(1.0, golden + 0.5 * sunny * (1.0 - cover)), min(1.0, 0.7 * f + 0.3 * night),
        f * (1.0 - 0.5 * daylight),
        shadows, shadows * golden, clear, cover * (1.0 - summer), f * (1.0 - 0.5 * cover),
        clear * (1.0 - cover) * summer, summer * (1.0 - cover) * lat_warm, winter * (1.0 - cover),
        clear * (1.0 - golden) * daylight, f * night, high_sun, low_sun,
        *fillers,
    ]  # fmt: skip
    out = np.asarray(attrs, dtype=np.float64)
    assert out.shape == (N_ATTRIBUTES,)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# datasets


@dataclass
class WorldConfig:
    mode: str = "hybrid"  # webcam | roaming | hybrid
    n_scenes: int = 40
    samples_per_scene: int = 200
    n_roaming: int = 8000
    image_size: int = 32
    seed: int = 0
    test_fraction: float = 0.25
    location_prior: str = "clustered"  # clustered | uniform
    cluster_centers: tuple[float, ...] = (10.0,)
    cluster_sigma_deg: float = 25.0
    cluster_weight: float = 0.6
    texture_pool: int = 64  # distinct ground textures shared by all scenes; 0 gives every scene its own

    def __post_init__(self):
        if self.mode not in ("webcam", "roaming", "hybrid"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.location_prior not in ("clustered", "uniform"):
            raise ValueError(f"unknown location_prior {self.location_prior!r}")
        self.cluster_centers = tuple(float(c) for c in self.cluster_centers)
        counts = []
        if self.mode in ("webcam", "hybrid"):
            counts += [self.n_scenes, self.samples_per_scene]
        if self.mode in ("roaming", "hybrid"):
            counts.append(self.n_roaming)
        if min(counts) < 1 or self.image_size < 1:
            raise ValueError("sample counts and image_size must be positive")
        if self.texture_pool < 0:
            raise ValueError(f"texture_pool must be >= 0, got {self.texture_pool}")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ValueError(f"test_fraction {self.test_fraction} outside [0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cluster_centers"] = list(self.cluster_centers)
        return d

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def sample_locations(rng: np.random.Generator, n: int, cfg: WorldConfig) -> tuple[np.ndarray, np.ndarray]:
    """Latitudes uniform on the sphere; longitudes uniform or clustered."""
    lat = np.degrees(np.arcsin(rng.uniform(-1.0, 1.0, n)))
    lon = rng.uniform(-180.0, 180.0, n)
    if cfg.location_prior == "clustered":
        pick = rng.uniform(0.0, 1.0, n) < cfg.cluster_weight
        which = rng.integers(0, len(cfg.cluster_centers), n)
        centers = np.asarray(cfg.cluster_centers)[which]
        clustered = centers + rng.normal(0.0, cfg.cluster_sigma_deg, n)
        lon = np.where(pick, clustered, lon)
    lon = (lon + 180.0) % 360.0 - 180.0
    return lat, lon


def _make_scene(scene_id: str, lat: float, lon: float, rng: np.random.Generator, texture_pool: int = 0) -> SceneSpec:
    return SceneSpec(
        scene_id=scene_id,
        location=GeoLocation(float(lat), geotime.wrap_lon(float(lon))),
        texture_seed=int(rng.integers(0, texture_pool or 2**31 - 1)),
        fog_propensity=float(rng.beta(1.5, 3.0)),
        snow_susceptibility=float(rng.uniform(0.3, 1.0)),
    )


def _random_time(rng: np.random.Generator) -> Timestamp:
    return Timestamp(int(rng.integers(1, 366)), int(rng.integers(0, 24)))


@dataclass
class GeoTempDataset:
    """Samples held in memory as parallel arrays."""

    ids: list[str]
    scene_ids: list[str]
    images: np.ndarray  # (N, 3, H, W) float32
    day: np.ndarray
    hour: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    attributes: np.ndarray  # (N, 40)
    split: np.ndarray  # "train" / "test"
    kind: np.ndarray = field(default=None)  # "webcam" / "roaming"

    def __post_init__(self):
        if self.kind is None:
            self.kind = np.array(["webcam" if s.startswith("w") else "roaming" for s in self.scene_ids])

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def month(self) -> np.ndarray:
        return np.searchsorted(geotime._MONTH_START, self.day - 1, side="right")

    @property
    def time_bins(self) -> np.ndarray:
        return (self.month - 1) * geotime.HOURS + self.hour

    @property
    def loc_bins(self) -> np.ndarray:
        return geotime.latlon_to_bin(self.lat, self.lon)

    @property
    def ecef(self) -> np.ndarray:
        return geotime.latlon_to_ecef(self.lat, self.lon)

    def subset(self, mask_or_idx) -> "GeoTempDataset":
        idx = np.arange(len(self))[mask_or_idx] if np.asarray(mask_or_idx).dtype == bool else np.asarray(mask_or_idx)
        return GeoTempDataset(
            [self.ids[i] for i in idx],
            [self.scene_ids[i] for i in idx],
            self.images[idx],
            self.day[idx],
            self.hour[idx],
            self.lat[idx],
            self.lon[idx],
            self.attributes[idx],
            self.split[idx],
            self.kind[idx],
        )

    def train(self) -> "GeoTempDataset":
        return self.subset(self.split == "train")

    def test(self) -> "GeoTempDataset":
        return self.subset(self.split == "test")

    def scenes(self) -> dict[str, np.ndarray]:
        """scene id -> sample indices (chronological by day, hour)."""
        out: dict[str, list[int]] = {}
        for i, s in enumerate(self.scene_ids):
            out.setdefault(s, []).append(i)
        return {s: np.array(sorted(ix, key=lambda i: (self.day[i], self.hour[i], self.ids[i]))) for s, ix in out.items()}


def build_samples(cfg: WorldConfig) -> GeoTempDataset:
    """Render every sample of the configured world in memory."""
    layout_rng = np.random.default_rng([cfg.seed, 0])
    ids, scene_ids, images, day, hour, lat, lon, attrs, split = [], [], [], [], [], [], [], [], []

    def add(sample: SyntheticSample, sid: str, tag: str):
        ids.append(sid)
        scene_ids.append(sample.scene_id)
        images.append(sample.image.astype(np.float32))
        day.append(sample.timestamp.day_of_year)
        hour.append(sample.timestamp.hour)
        lat.append(sample.location.lat_deg)
        lon.append(sample.location.lon_deg)
        attrs.append(sample.attributes)
        split.append(tag)

    if cfg.mode in ("webcam", "hybrid"):
        slat, slon = sample_locations(layout_rng, cfg.n_scenes, cfg)
        n_test = int(round(cfg.test_fraction * cfg.n_scenes))
        test_scenes = set(layout_rng.permutation(cfg.n_scenes)[:n_test].tolist())
        for s in range(cfg.n_scenes):
            scene_rng = np.random.default_rng([cfg.seed, 1, s])
            scene = _make_scene(f"w{s:04d}", slat[s], slon[s], scene_rng, cfg.texture_pool)
            tag = "test" if s in test_scenes else "train"
            for k in range(cfg.samples_per_scene):
                rng = np.random.default_rng([cfg.seed, 2, s, k])
                t = _random_time(rng)
                add(render(scene, t, rng, cfg.image_size), f"{scene.scene_id}-{k:04d}", tag)

    if cfg.mode in ("roaming", "hybrid"):
        rlat, rlon = sample_locations(layout_rng, cfg.n_roaming, cfg)
        n_test = int(round(cfg.test_fraction * cfg.n_roaming))
        test_idx = set(layout_rng.permutation(cfg.n_roaming)[:n_test].tolist())
        for k in range(cfg.n_roaming):
            rng = np.random.default_rng([cfg.seed, 3, k])
            scene = _make_scene(f"r{k:06d}", rlat[k], rlon[k], rng, cfg.texture_pool)
            t = _random_time(rng)
            add(render(scene, t, rng, cfg.image_size), f"{scene.scene_id}-0000", "test" if k in test_idx else "train")

    return GeoTempDataset(
        ids,
        scene_ids,
        np.stack(images),
        np.array(day, dtype=np.int64),
        np.array(hour, dtype=np.int64),
        np.array(lat),
        np.array(lon),
        np.stack(attrs),
        np.array(split),
    )


# ---------------------------------------------------------------------------
# on-disk format: JSON Lines manifest + raw little-endian float32 images


MANIFEST_NAME = "manifest.jsonl"


@dataclass
class DatasetManifest:
    path: Path
    header: dict
    records: list[dict]

    def digest(self) -> str:
        return hashlib.sha256(self.path.read_bytes()).hexdigest()


def write_dataset(data: GeoTempDataset, out_dir: str | os.PathLike, cfg: WorldConfig | None = None) -> DatasetManifest:
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    _, C, H, W = data.images.shape
    header = {"shape": [C, H, W], "range": [-1, 1], "dtype": "<f4", "count": len(data)}
    if cfg is not None:
        header.update(seed=cfg.seed, config=cfg.to_dict(), config_hash=cfg.config_hash())
    records = []
    for i, sid in enumerate(data.ids):
        rel = f"images/{sid}.f32"
        (out / rel).write_bytes(data.images[i].astype("<f4").tobytes(order="C"))
        records.append(
            {
                "id": sid,
                "scene_id": data.scene_ids[i],
                "month": int(geotime.month_of_day(int(data.day[i]))),
                "day": int(data.day[i]),
                "hour": int(data.hour[i]),
                "lat": float(data.lat[i]),
                "lon": float(data.lon[i]),
                "attributes": [float(a) for a in data.attributes[i]],
                "image": rel,
                "split": str(data.split[i]),
            }
        )
    path = out / MANIFEST_NAME
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    return DatasetManifest(path, header, records)


def generate_dataset(cfg: WorldConfig, out_dir: str | os.PathLike) -> tuple[DatasetManifest, GeoTempDataset]:
    data = build_samples(cfg)
    return write_dataset(data, out_dir, cfg), data


def read_manifest(path: str | os.PathLike) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    with open(path) as fh:
        header = json.loads(fh.readline())
        records = [json.loads(line) for line in fh if line.strip()]
    ids = [r["id"] for r in records]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate ids in {path}")
    return DatasetManifest(path, header, records)


def load_dataset(path: str | os.PathLike) -> GeoTempDataset:
    man = read_manifest(path)
    root = man.path.parent
    shape = tuple(man.header["shape"])
    images = np.empty((len(man.records),) + shape, dtype=np.float32)
    for i, r in enumerate(man.records):
        f = root / r["image"]
        if not f.exists():
            raise FileNotFoundError(f"manifest references missing image {f}")
        images[i] = np.frombuffer(f.read_bytes(), dtype="<f4").reshape(shape)
    recs = man.records
    return GeoTempDataset(
        [r["id"] for r in recs],
        [r["scene_id"] for r in recs],
        images,
        np.array([r["day"] for r in recs], dtype=np.int64),
        np.array([r["hour"] for r in recs], dtype=np.int64),
        np.array([r["lat"] for r in recs], dtype=np.float64),
        np.array([r["lon"] for r in recs], dtype=np.float64),
        np.array([r["attributes"] for r in recs], dtype=np.float64),
        np.array([r["split"] for r in recs]),
    )
