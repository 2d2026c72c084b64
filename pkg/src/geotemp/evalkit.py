"""Analyses of a trained model: localization and time-estimation error curves,
activation ranking, neuron time series, feature/attribute correlation,
frozen-trunk attribute regression and hour-marginal sweeps."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import geotime, net
from . import ndgrad as nd
from .net import GeoTempModel
from .optim import center_crop
from .synthworld import GeoTempDataset


@dataclass
class CumulativeErrorCurve:
    errors: np.ndarray  # sorted ascending
    label: str

    @classmethod
    def from_errors(cls, errors, label: str) -> "CumulativeErrorCurve":
        return cls(np.sort(np.asarray(errors, dtype=np.float64)), label)

    def fraction_below(self, thresholds) -> np.ndarray:
        """Fraction of errors <= each threshold."""
        return np.searchsorted(self.errors, np.asarray(thresholds, dtype=np.float64), side="right") / len(self.errors)

    @property
    def median(self) -> float:
        return float(np.median(self.errors))

    @property
    def mean(self) -> float:
        return float(np.mean(self.errors))

    def rows(self, thresholds=None) -> list[tuple[float, float]]:
        th = np.unique(self.errors) if thresholds is None else np.asarray(thresholds, dtype=np.float64)
        return list(zip(th.tolist(), self.fraction_below(th).tolist()))

    def to_csv(self, path, thresholds=None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["threshold", "fraction"])
            for t, f in self.rows(thresholds):
                w.writerow([repr(float(t)), repr(float(f))])


# ---------------------------------------------------------------------------
# batched inference


def eval_inputs(model: GeoTempModel, data: GeoTempDataset, idx=None) -> net.Batch:
    idx = np.arange(len(data)) if idx is None else np.asarray(idx)
    images = data.images[idx]
    size = model.config.image_size
    if images.shape[-1] != size:
        images = center_crop(images, size)
    tb = data.time_bins[idx]
    return net.Batch(
        images=np.ascontiguousarray(images, dtype=model.dtype),
        times=geotime.onehot_time_bins(tb, model.dtype),
        locations=geotime.latlon_to_ecef(data.lat[idx], data.lon[idx]).astype(model.dtype),
        time_bins=tb,
        loc_bins=data.loc_bins[idx],
    )


def predict_probs(model: GeoTempModel, data: GeoTempDataset, head: str, batch_size: int = 256) -> np.ndarray:
    """Softmax output of one estimator head for every sample (eval mode)."""
    out = []
    for start in range(0, len(data), batch_size):
        b = eval_inputs(model, data, np.arange(start, min(start + batch_size, len(data))))
        f_img = model.image_feature(b.images)
        if head == "loc":
            logits = model.loc_head(f_img, False)
        elif head == "time":
            logits = model.time_head(f_img, False)
        elif head == "loc_given_time":
            logits = model.loc_given_time_head(nd.concat([f_img, model.time_feature(b.times)]), False)
        elif head == "time_given_loc":
            logits = model.time_given_loc_head(nd.concat([f_img, model.location_feature(b.locations)]), False)
        else:
            raise ValueError(f"unknown head {head!r}")
        out.append(nd.softmax_np(logits.data.astype(np.float64)))
    return np.concatenate(out)


def trunk_features(model: GeoTempModel, data: GeoTempDataset, batch_size: int = 512) -> np.ndarray:
    feats = []
    for start in range(0, len(data), batch_size):
        b = eval_inputs(model, data, np.arange(start, min(start + batch_size, len(data))))
        feats.append(model.trunk_feature(b.images).astype(np.float64))
    return np.concatenate(feats)


# ---------------------------------------------------------------------------
# localization


def chance_location_errors(lat, lon, draws: int = 100_000, seed: int = 0) -> np.ndarray:
    """Errors of uniformly random bin-center guesses against randomly drawn ground truths."""
    rng = np.random.default_rng(seed)
    clat, clon = geotime.bin_centers()
    truth = rng.integers(0, len(lat), draws)
    guess = rng.integers(0, geotime.LOC_BINS, draws)
    return geotime.haversine_km(np.asarray(lat)[truth], np.asarray(lon)[truth], clat[guess], clon[guess])


@dataclass
class LocalizationResult:
    curve: CumulativeErrorCurve
    chance: CumulativeErrorCurve
    predicted_bins: np.ndarray


def eval_discrete_localization(model: GeoTempModel, testset: GeoTempDataset, conditioned: bool,
                               chance_draws: int = 100_000, seed: int = 0) -> LocalizationResult:
    probs = predict_probs(model, testset, "loc_given_time" if conditioned else "loc")
    pred = probs.argmax(axis=1)
    clat, clon = geotime.bin_centers()
    err = geotime.haversine_km(clat[pred], clon[pred], testset.lat, testset.lon)
    label = "km (time-conditioned)" if conditioned else "km (image only)"
    chance = chance_location_errors(testset.lat, testset.lon, chance_draws, seed)
    return LocalizationResult(
        CumulativeErrorCurve.from_errors(err, label),
        CumulativeErrorCurve.from_errors(chance, "km (random bin)"),
        pred,
    )


# ---------------------------------------------------------------------------
# time estimation


def time_marginals(probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(B, 288) joint -> (B, 12) month and (B, 24) hour marginals."""
    joint = probs.reshape(-1, geotime.MONTHS, geotime.HOURS)
    return joint.sum(axis=2), joint.sum(axis=1)


def chance_mean_hour_error() -> float:
    d = np.arange(24)
    return float(np.minimum(d, 24 - d).mean())


@dataclass
class TimeEstimationResult:
    month: CumulativeErrorCurve
    hour: CumulativeErrorCurve
    month_chance: CumulativeErrorCurve
    hour_chance: CumulativeErrorCurve
    month_marginals: np.ndarray
    hour_marginals: np.ndarray


def _uniform_guess_errors(kind: str, truth: np.ndarray) -> np.ndarray:
    """Exact error distribution of a uniform guess: every guess paired with every truth."""
    period = 12 if kind == "month" else 24
    base = 1 if kind == "month" else 0
    guesses = np.arange(period) + base
    return geotime.circular_diff(kind, truth[:, None], guesses[None, :]).ravel()


def eval_time_estimation(model: GeoTempModel, testset: GeoTempDataset, conditioned: bool) -> TimeEstimationResult:
    probs = predict_probs(model, testset, "time_given_loc" if conditioned else "time")
    pm, ph = time_marginals(probs)
    month_pred = pm.argmax(axis=1) + 1
    hour_pred = ph.argmax(axis=1)
    tag = "location-conditioned" if conditioned else "image only"
    return TimeEstimationResult(
        CumulativeErrorCurve.from_errors(geotime.circular_diff("month", month_pred, testset.month), f"months ({tag})"),
        CumulativeErrorCurve.from_errors(geotime.circular_diff("hour", hour_pred, testset.hour), f"hours ({tag})"),
        CumulativeErrorCurve.from_errors(_uniform_guess_errors("month", testset.month), "months (random)"),
        CumulativeErrorCurve.from_errors(_uniform_guess_errors("hour", testset.hour), "hours (random)"),
        pm,
        ph,
    )


# ---------------------------------------------------------------------------
# activations


def top_activations(features: np.ndarray, ids: Sequence[str], k: int = 10) -> dict[int, list[str]]:
    """Per channel, the ids of the ``k`` samples with the highest activation.

    Ties are broken by id so the ranking does not depend on sample order.
    """
    features = np.asarray(features)
    n = features.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds the {n} available images")
    ids = list(ids)
    id_rank = np.argsort(np.argsort(np.array(ids, dtype=object)))
    out = {}
    for c in range(features.shape[1]):
        order = np.lexsort((id_rank, -features[:, c]))
        out[c] = [ids[i] for i in order[:k]]
    return out


def model_top_activations(model: GeoTempModel, data: GeoTempDataset, k: int = 10) -> dict[int, list[str]]:
    return top_activations(trunk_features(model, data), data.ids, k)


@dataclass
class TimeSeries:
    day: np.ndarray
    hour: np.ndarray
    activation: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["day", "hour", "activation"])
            for d, h, a in zip(self.day, self.hour, self.activation):
                w.writerow([int(d), int(h), repr(float(a))])


def neuron_time_series(model: GeoTempModel, scene: GeoTempDataset, channel: int) -> TimeSeries:
    """Trunk activation of one channel over a single scene's samples, in chronological order."""
    if len(set(scene.scene_ids)) > 1:
        raise ValueError("neuron_time_series expects samples from a single scene")
    order = np.lexsort((scene.hour, scene.day))
    feats = trunk_features(model, scene.subset(order))
    return TimeSeries(scene.day[order], scene.hour[order], feats[:, channel])


def autocorrelation(x: np.ndarray, max_lag: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64) - np.mean(x)
    denom = float(x @ x)
    if denom == 0:
        return np.zeros(max_lag + 1)
    return np.array([float(x[: len(x) - k] @ x[k:]) / denom for k in range(max_lag + 1)])


# ---------------------------------------------------------------------------
# correlation with attributes


@dataclass
class CorrelationResult:
    matrix: np.ndarray  # (C, 40)
    per_attribute_max: np.ndarray  # (40,)
    rho_bar: float

    def to_csv(self, path, attribute_names: Sequence[str] | None = None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            names = list(attribute_names) if attribute_names else [f"attr{j}" for j in range(self.matrix.shape[1])]
            w.writerow(["channel", *names])
            for i, row in enumerate(self.matrix):
                w.writerow([i, *(repr(float(v)) for v in row)])


def pearson_matrix(features: np.ndarray, attributes: np.ndarray) -> np.ndarray:
    """Pearson correlation between every feature column and every attribute column.

    Columns with zero variance get correlation 0.
    """
    f = np.asarray(features, dtype=np.float64)
    a = np.asarray(attributes, dtype=np.float64)
    fc = f - f.mean(axis=0)
    ac = a - a.mean(axis=0)
    fs = np.sqrt((fc**2).sum(axis=0))
    as_ = np.sqrt((ac**2).sum(axis=0))
    num = fc.T @ ac
    den = np.outer(fs, as_)
    with np.errstate(invalid="ignore", divide="ignore"):
        m = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return np.clip(m, -1.0, 1.0)


def correlate_features(features: np.ndarray, attributes: np.ndarray) -> CorrelationResult:
    if len(features) < 3:
        raise ValueError(f"need at least 3 samples for correlation, got {len(features)}")
    m = pearson_matrix(features, attributes)
    best = np.abs(m).max(axis=0)
    return CorrelationResult(m, best, float(best.mean()))


def model_correlation(model: GeoTempModel, data: GeoTempDataset) -> CorrelationResult:
    return correlate_features(trunk_features(model, data), data.attributes)


# ---------------------------------------------------------------------------
# attribute head on a frozen trunk


@dataclass
class AttributeHead:
    hidden: net.Affine
    out: net.Affine
    feature_mean: np.ndarray
    feature_std: np.ndarray

    def params(self) -> list[nd.Tensor]:
        return [self.hidden.weight, self.hidden.bias, self.out.weight, self.out.bias]

    def __call__(self, features: np.ndarray) -> nd.Tensor:
        z = (features - self.feature_mean) / self.feature_std
        return self.out(nd.relu(self.hidden(nd.Tensor(z))))

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self(features).data


@dataclass
class AttributeHeadResult:
    head: AttributeHead
    trace: list[tuple[int, float]] = field(default_factory=list)  # (iteration, test MSE)
    baseline_mse: float = 0.0


def mean_label_mse(train_labels: np.ndarray, test_labels: np.ndarray) -> float:
    """MSE of always predicting the training label mean."""
    return float(((test_labels - train_labels.mean(axis=0)) ** 2).mean())


def train_attribute_head(train_features: np.ndarray, train_labels: np.ndarray, test_features: np.ndarray,
                         test_labels: np.ndarray, iterations: int, eval_every: int = 500, hidden: int = 128,
                         batch_size: int = 32, lr: float = 1e-3, seed: int = 0) -> AttributeHeadResult:
    """Fit a two-layer MLP from frozen features to 40 attributes with MSE and Adam.

    Features are standardized with training-set statistics.
    """
    from .optim import AdamState, adam_step

    rng = np.random.default_rng(seed)
    C = train_features.shape[1]
    n_out = train_labels.shape[1]
    std = train_features.std(axis=0)
    head = AttributeHead(
        net.Affine(C, hidden, rng, np.float64),
        net.Affine(hidden, n_out, rng, np.float64),
        train_features.mean(axis=0),
        np.where(std > 0, std, 1.0),
    )
    params = head.params()
    total = sum(p.data.size for p in params)
    state = AdamState(np.zeros(total), np.zeros(total))
    result = AttributeHeadResult(head, baseline_mse=mean_label_mse(train_labels, test_labels))
    n = len(train_features)
    perm = rng.permutation(n)
    pos = 0
    for it in range(1, iterations + 1):
        if pos + batch_size > n:
            perm, pos = rng.permutation(n), 0
        idx = perm[pos : pos + batch_size]
        pos += batch_size
        loss = nd.mse(head(train_features[idx]), train_labels[idx])
        nd.backward(loss, inputs=params)
        adam_step([p.data for p in params], [p.grad for p in params], state, lr, 0.0)
        if it % eval_every == 0:
            result.trace.append((it, float(((head.predict(test_features) - test_labels) ** 2).mean())))
    return result


# ---------------------------------------------------------------------------
# hour marginal sweeps


def hour_marginal_sweep(model: GeoTempModel, image: np.ndarray, true_location: geotime.GeoLocation,
                        axis: str, grid: Sequence[float]) -> np.ndarray:
    """(len(grid), 24) hour marginals of the location-conditioned time estimator.

    The swept axis takes each grid value; the other stays at the true location.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if axis == "lon":
        lat = np.full_like(grid, true_location.lat_deg)
        lon = grid
    elif axis == "lat":
        lat = grid
        lon = np.full_like(grid, true_location.lon_deg)
    else:
        raise ValueError(f"axis must be 'lat' or 'lon', got {axis!r}")
    img = np.asarray(image, dtype=model.dtype)[None]
    if img.shape[-1] != model.config.image_size:
        img = center_crop(img, model.config.image_size)
    f_img = model.image_feature(img)
    f_loc = model.location_feature(geotime.latlon_to_ecef(lat, lon).astype(model.dtype))
    logits = model.time_given_loc_head(nd.concat([nd.broadcast_rows(f_img, len(grid)), f_loc]), False)
    _, hours = time_marginals(nd.softmax_np(logits.data.astype(np.float64)))
    return hours


def circular_spread(hours: np.ndarray) -> float:
    """Circular variance of hour-of-day values (0 = identical, 1 = spread evenly)."""
    ang = 2 * np.pi * np.asarray(hours, dtype=np.float64) / 24
    return float(1 - np.hypot(np.cos(ang).mean(), np.sin(ang).mean()))


def write_matrix_csv(path: str | os.PathLike, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(header))
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
