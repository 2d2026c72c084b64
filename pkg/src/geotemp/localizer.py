"""Continuous localization from images with known capture times.

The location-conditioned time estimator scores how well a candidate location
explains the observed capture times. Summing its cross-entropy over images
gives a loss over the sphere whose minimum is the location estimate. The
gradient with respect to (lat, lon) comes from the same autodiff graph used in
training, through the lat/lon -> unit ECEF map.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import geotime
from . import ndgrad as nd
from .geotime import GeoLocation
from .net import GeoTempModel
from .optim import center_crop

LAT_LIMIT = 89.99
_ROW_CHUNK = 8192


class DivergenceError(RuntimeError):
    pass


@dataclass
class TimeLossField:
    """Query images, their known time bins and the model that scores them."""

    model: GeoTempModel
    images: np.ndarray
    time_bins: np.ndarray
    image_features: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.images = np.asarray(self.images)
        self.time_bins = np.asarray(self.time_bins, dtype=np.int64)
        if self.images.ndim != 4 or len(self.images) < 1:
            raise ValueError(f"need at least one (C, H, W) image, got shape {self.images.shape}")
        if self.time_bins.shape != (len(self.images),):
            raise ValueError(f"{len(self.images)} images but {self.time_bins.size} time bins")
        if self.time_bins.min() < 0 or self.time_bins.max() >= geotime.TIME_BINS:
            raise IndexError("time bin out of range")
        imgs = self.images
        if imgs.shape[-1] != self.model.config.image_size:
            imgs = center_crop(imgs, self.model.config.image_size)
        self.image_features = self.model.image_feature(np.asarray(imgs, dtype=self.model.dtype)).data

    @classmethod
    def from_dataset(cls, model: GeoTempModel, data, idx=None) -> "TimeLossField":
        idx = np.arange(len(data)) if idx is None else np.asarray(idx)
        return cls(model, data.images[idx], data.time_bins[idx])

    def __len__(self) -> int:
        return len(self.time_bins)

    def subset(self, idx) -> "TimeLossField":
        return TimeLossField(self.model, self.images[idx], self.time_bins[idx])


def _ecef(lat: nd.Tensor, lon: nd.Tensor) -> nd.Tensor:
    phi = nd.mul(lat, np.pi / 180.0)
    lam = nd.mul(lon, np.pi / 180.0)
    c = nd.cos(phi)
    return nd.concat([nd.mul(c, nd.cos(lam)), nd.mul(c, nd.sin(lam)), nd.sin(phi)])


def time_loss_grid(field: TimeLossField, lat, lon, grad: bool = False):
    """Summed time loss at M locations, optionally with d/dlat and d/dlon (per degree).

    Returns ``loss`` or ``(loss, dlat, dlon)``, each of shape (M,).
    Longitudes are wrapped before evaluation.
    """
    lat = np.atleast_1d(np.asarray(lat, dtype=np.float64))
    lon = np.atleast_1d(np.asarray(lon, dtype=np.float64))
    lon = (lon + 180.0) % 360.0 - 180.0
    M, N = lat.size, len(field)
    model, dt = field.model, field.model.dtype
    head = model.time_given_loc_head
    per_image = np.zeros((N, M))
    dlat = np.zeros(M)
    dlon = np.zeros(M)
    per_chunk = max(1, _ROW_CHUNK // M)
    for start in range(0, N, per_chunk):
        stop = min(start + per_chunk, N)
        lat_t = nd.Tensor(lat[:, None].astype(dt), requires_grad=grad)
        lon_t = nd.Tensor(lon[:, None].astype(dt), requires_grad=grad)
        f_loc = model.location_feature(_ecef(lat_t, lon_t))
        n = stop - start
        f_img = nd.Tensor(np.repeat(field.image_features[start:stop], M, axis=0))
        rows = nd.concat([f_img, nd.concat([f_loc] * n, axis=0) if n > 1 else f_loc])
        target = np.repeat(field.time_bins[start:stop], M)
        per = nd.softmax_cross_entropy(head(rows, False), target, reduction="none")
        per_image[start:stop] = per.data.reshape(n, M)
        if grad:
            nd.backward(nd.total(per), inputs=[lat_t, lon_t])
            dlat += lat_t.grad[:, 0]
            dlon += lon_t.grad[:, 0]
    # summing sorted terms makes the total independent of image order
    loss = np.sort(per_image, axis=0).sum(axis=0)
    return (loss, dlat, dlon) if grad else loss


def time_loss(field: TimeLossField, loc: GeoLocation) -> float:
    """Sum over images of the cross-entropy of the known time bin given ``loc``."""
    return float(time_loss_grid(field, loc.lat_deg, loc.lon_deg)[0])


def time_loss_and_grad(field: TimeLossField, lat: float, lon: float) -> tuple[float, float, float]:
    loss, dlat, dlon = time_loss_grid(field, lat, lon, grad=True)
    return float(loss[0]), float(dlat[0]), float(dlon[0])


# ---------------------------------------------------------------------------
# surfaces


def grid_centers(n_lat: int, n_lon: int) -> tuple[np.ndarray, np.ndarray]:
    """Cell centers of an equal-angle grid over [-90, 90] x [-180, 180)."""
    if n_lat < 2 or n_lon < 2:
        raise ValueError(f"grid resolution must be >= 2 per axis, got {(n_lat, n_lon)}")
    lats = -90.0 + (np.arange(n_lat) + 0.5) * 180.0 / n_lat
    lons = -180.0 + (np.arange(n_lon) + 0.5) * 360.0 / n_lon
    return lats, lons


@dataclass
class LossSurface:
    lats: np.ndarray
    lons: np.ndarray
    loss: np.ndarray  # (n_lat, n_lon)
    dlat: np.ndarray | None = None
    dlon: np.ndarray | None = None

    def argmin(self) -> GeoLocation:
        i, j = np.unravel_index(np.argmin(self.loss), self.loss.shape)
        return GeoLocation(float(self.lats[i]), float(self.lons[j]))

    def argmax(self) -> GeoLocation:
        i, j = np.unravel_index(np.argmax(self.loss), self.loss.shape)
        return GeoLocation(float(self.lats[i]), float(self.lons[j]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lat", "lon", "loss", "dlat", "dlon"])
            for i, la in enumerate(self.lats):
                for j, lo in enumerate(self.lons):
                    g = ("", "") if self.dlat is None else (repr(float(self.dlat[i, j])), repr(float(self.dlon[i, j])))
                    w.writerow([repr(float(la)), repr(float(lo)), repr(float(self.loss[i, j])), *g])


def loss_surface(field: TimeLossField, grid_res: tuple[int, int] = (37, 72), with_grad: bool = False) -> LossSurface:
    lats, lons = grid_centers(*grid_res)
    glat, glon = np.meshgrid(lats, lons, indexing="ij")
    out = time_loss_grid(field, glat.ravel(), glon.ravel(), grad=with_grad)
    if with_grad:
        loss, dlat, dlon = out
        return LossSurface(lats, lons, loss.reshape(glat.shape), dlat.reshape(glat.shape), dlon.reshape(glat.shape))
    return LossSurface(lats, lons, out.reshape(glat.shape))


# ---------------------------------------------------------------------------
# descent


@dataclass
class RestartTrace:
    start: GeoLocation
    end: GeoLocation
    start_loss: float
    end_loss: float
    steps_taken: int


@dataclass
class LocalizeResult:
    location: GeoLocation
    loss: float
    restarts: list[RestartTrace]


def _clamp(lat: float, lon: float) -> tuple[float, float]:
    return float(np.clip(lat, -LAT_LIMIT, LAT_LIMIT)), geotime.wrap_lon(lon)


def _descend(field: TimeLossField, lat: float, lon: float, steps: int, step_size: float,
             label: str, max_halvings: int = 12) -> RestartTrace:
    lat, lon = _clamp(lat, lon)
    f, glat, glon = time_loss_and_grad(field, lat, lon)
    if not np.isfinite(f):
        raise DivergenceError(f"non-finite loss at the start of restart {label}")
    start, f0 = GeoLocation(lat, lon), f
    taken = 0
    for _ in range(steps):
        norm = np.hypot(glat, glon)
        if not np.isfinite(norm):
            raise DivergenceError(f"non-finite gradient in restart {label}")
        if norm == 0:
            break
        alpha = step_size
        moved = False
        for _ in range(max_halvings):
            cand = _clamp(lat - alpha * glat / norm, lon - alpha * glon / norm)
            fc, gla, glo = time_loss_and_grad(field, *cand)
            if not np.isfinite(fc):
                raise DivergenceError(f"non-finite loss in restart {label}")
            if fc < f:
                (lat, lon), f, glat, glon = cand, fc, gla, glo
                moved = True
                break
            alpha *= 0.5
        if not moved:
            break
        taken += 1
    return RestartTrace(start, GeoLocation(lat, lon), f0, f, taken)


def continuous_localize(field: TimeLossField, restarts: int = 5, steps: int = 30, step_size: float = 1.0,
                        seed: int = 0, coarse_res: tuple[int, int] = (19, 36)) -> LocalizeResult:
    """Minimize the summed time loss over the sphere.

    Starts from the best cell of a coarse grid plus ``restarts`` random points
    (uniform on the sphere) and runs backtracking descent from each. Returns the
    lowest final loss; ties go to the earliest start.
    """
    coarse = loss_surface(field, coarse_res)
    best = coarse.argmin()
    starts = [(best.lat_deg, best.lon_deg)]
    rng = np.random.default_rng([seed, 303])
    for _ in range(restarts):
        starts.append((float(np.degrees(np.arcsin(rng.uniform(-1, 1)))), float(rng.uniform(-180, 180))))
    traces = [_descend(field, la, lo, steps, step_size, label=str(k)) for k, (la, lo) in enumerate(starts)]
    k = int(np.argmin([t.end_loss for t in traces]))
    return LocalizeResult(traces[k].end, traces[k].end_loss, traces)


# ---------------------------------------------------------------------------
# image-count experiments over held-out webcams


def nested_subsets(n_available: int, counts, seed: int, scene_index: int) -> dict[int, np.ndarray]:
    """Prefixes of one seeded permutation, so smaller sets are contained in larger ones."""
    if max(counts) > n_available:
        raise ValueError(f"{max(counts)} images requested, {n_available} available")
    perm = np.random.default_rng([seed, 505, scene_index]).permutation(n_available)
    return {c: np.sort(perm[:c]) for c in counts}


def errors_by_image_count(model: GeoTempModel, data, counts=(1, 5, 20), seed: int = 0, method: str = "descent",
                          grid_res: tuple[int, int] = (37, 72), **localize_kw) -> dict[int, np.ndarray]:
    """Great-circle error (km) per webcam scene for each image count.

    ``method`` is ``"descent"`` (continuous_localize) or ``"grid"`` (surface argmin).
    Scenes are the webcam scenes in ``data``, in sorted id order.
    """
    scenes = {s: ix for s, ix in data.scenes().items() if data.kind[ix[0]] == "webcam"}
    out: dict[int, list[float]] = {c: [] for c in counts}
    for k, s in enumerate(sorted(scenes)):
        ix = scenes[s]
        truth = (float(data.lat[ix[0]]), float(data.lon[ix[0]]))
        for c, sub in nested_subsets(len(ix), counts, seed, k).items():
            field = TimeLossField.from_dataset(model, data, ix[sub])
            if method == "descent":
                est = continuous_localize(field, seed=seed, **localize_kw).location
            elif method == "grid":
                est = loss_surface(field, grid_res).argmin()
            else:
                raise ValueError(f"unknown method {method!r}")
            out[c].append(float(geotime.haversine_km(est.lat_deg, est.lon_deg, *truth)))
    return {c: np.array(v) for c, v in out.items()}
