"""Command-line entry point: ``geotemp <subcommand> --out DIR [--config FILE] [overrides]``.

Every run writes ``config.resolved.json`` and ``summary.json`` into its output
directory. Failures print a single ``error: <code>: <message>`` line, exit 1
and leave no partial outputs behind.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import tempfile
from pathlib import Path

SUMMARY_SCHEMA_VERSION = 1

_WORLD = {
    "mode": "hybrid",
    "n_scenes": 40,
    "samples_per_scene": 200,
    "n_roaming": 8000,
    "image_size": 32,
    "test_fraction": 0.25,
    "location_prior": "clustered",
    "cluster_centers": [10.0],
    "cluster_sigma_deg": 25.0,
    "cluster_weight": 0.6,
    "texture_pool": 64,
}
_EVAL = {"checkpoint": "", "data": "", "split": "test"}

SCHEMAS: dict[str, dict] = {
    "synth-gen": dict(_WORLD),
    "train": {
        "data": "",
        "split": "train",
        "resume": "",
        "dtype": "float32",
        "trunk_widths": [8, 16, 32],
        "trunk_batch_norm": True,
        "hidden_widths": [256, 512],
        "feature_dim": 128,
        "crop": 28,
        "base_lr": 1e-3,
        "halving_interval": 8000,
        "weight_decay": 1e-4,
        "batch_size": 32,
        "iterations": 20000,
        "checkpoint_every": 0,
    },
    "eval-loc": {**_EVAL, "chance_draws": 100000},
    "eval-time": dict(_EVAL),
    "features": {**_EVAL, "k": 10, "scene": "", "channel": -1},
    "correlate": {**_EVAL, "random_init": False},
    "attr-head": {
        "checkpoint": "",
        "data": "",
        "random_init": False,
        "iterations": 5000,
        "eval_every": 500,
        "hidden": 128,
        "batch_size": 32,
        "lr": 1e-3,
    },
    "surface": {**_EVAL, "scene": "", "n_images": 20, "grid_lat": 37, "grid_lon": 72, "gradients": True},
    "localize": {**_EVAL, "scene": "", "n_images": 20, "restarts": 5, "steps": 30, "step_size": 1.0},
    "render": {"input": "", "kind": "auto"},
}


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# config resolution


def _parse_value(text: str, default):
    if isinstance(default, bool):
        low = text.lower()
        if low not in ("true", "false", "1", "0"):
            raise CliError("config", f"expected a boolean, got {text!r}")
        return low in ("true", "1")
    if isinstance(default, list):
        kind = type(default[0]) if default else float
        return [kind(x) for x in text.split(",") if x]
    return type(default)(text)


def _coerce(key: str, value, default):
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, list):
            kind = type(default[0]) if default else float
            return [kind(v) for v in value]
        if isinstance(default, int):
            if isinstance(value, bool) or float(value) != int(value):
                raise TypeError
            return int(value)
        if isinstance(default, float):
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise CliError("config", f"bad value for {key!r}: {value!r}") from None


def resolve_config(command: str, config_path: str | None, overrides: dict) -> dict:
    schema = SCHEMAS[command]
    cfg = dict(schema)
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text())
        except FileNotFoundError:
            raise CliError("missing_input", f"config file not found: {config_path}") from None
        except json.JSONDecodeError as exc:
            raise CliError("config", f"config file is not valid JSON: {exc.msg}") from None
        if not isinstance(loaded, dict):
            raise CliError("config", "config file must hold a JSON object")
        for key, value in loaded.items():
            if key not in schema:
                raise CliError("config", f"unknown config key {key!r} for {command}")
            cfg[key] = _coerce(key, value, schema[key])
    for key, value in overrides.items():
        cfg[key] = _coerce(key, value, schema[key])
    return cfg


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="geotemp", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, schema in SCHEMAS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file of settings")
        p.add_argument("--seed", type=int, default=0, help="u64 seed")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=0, help="worker threads (0 = all available)")
        for key, default in schema.items():
            p.add_argument("--" + key.replace("_", "-"), dest="ov_" + key, default=None, metavar="V",
                           type=lambda s, d=default: _parse_value(s, d))
    return ap


def _limit_threads(n: int) -> None:
    if n > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
            os.environ[var] = str(n)


# ---------------------------------------------------------------------------
# shared loaders


def _load_data(cfg: dict, split: str | None = None):
    from .synthworld import load_dataset

    if not cfg["data"]:
        raise CliError("config", "'data' (dataset directory) is required")
    data = load_dataset(cfg["data"])
    split = cfg.get("split", "test") if split is None else split
    if split == "all":
        return data
    if split not in ("train", "test"):
        raise CliError("config", f"split must be train, test or all, got {split!r}")
    return data.subset(data.split == split)


def _load_model(cfg: dict, seed: int):
    from . import net, optim

    if cfg.get("random_init"):
        mcfg = net.ModelConfig()
        if cfg.get("checkpoint"):
            mcfg = net.ModelConfig(**optim.read_checkpoint_header(cfg["checkpoint"])[0]["model_config"])
        return net.init_model(mcfg, seed=seed)
    if not cfg.get("checkpoint"):
        raise CliError("config", "'checkpoint' is required")
    return optim.load_checkpoint(cfg["checkpoint"]).model


def _scene_indices(data, scene: str, n_images: int, seed: int):
    import numpy as np

    scenes = {s: ix for s, ix in data.scenes().items() if s.startswith("w")}
    if not scenes:
        raise CliError("invalid_argument", "dataset split has no webcam scenes")
    if scene and scene not in scenes:
        raise CliError("invalid_argument", f"unknown scene {scene!r}")
    names = [scene] if scene else sorted(scenes)
    out = {}
    for s in names:
        ix = scenes[s]
        if n_images > len(ix):
            raise CliError("invalid_argument", f"scene {s} has {len(ix)} images, {n_images} requested")
        out[s] = ix[np.random.default_rng([seed, 404]).permutation(len(ix))[:n_images]]
    return out


# ---------------------------------------------------------------------------
# subcommands; each writes into ``out`` and returns summary metrics


def cmd_synth_gen(cfg: dict, seed: int, out: Path) -> dict:
    from . import synthworld

    try:
        wcfg = synthworld.WorldConfig(seed=seed, **cfg)
    except ValueError as exc:
        raise CliError("config", str(exc)) from None
    manifest, data = synthworld.generate_dataset(wcfg, out)
    return {
        "samples": len(data),
        "train": int((data.split == "train").sum()),
        "test": int((data.split == "test").sum()),
        "manifest_sha256": manifest.digest(),
    }


def cmd_train(cfg: dict, seed: int, out: Path) -> dict:
    from . import net, optim

    data = _load_data(cfg)
    tcfg = optim.TrainConfig(
        base_lr=cfg["base_lr"], halving_interval=cfg["halving_interval"], weight_decay=cfg["weight_decay"],
        batch_size=cfg["batch_size"], iterations=cfg["iterations"], crop=cfg["crop"], seed=seed,
        checkpoint_every=cfg["checkpoint_every"],
    )
    image_size = min(cfg["crop"], data.images.shape[-1])
    start, opt = 0, None
    if cfg["resume"]:
        ck = optim.load_checkpoint(cfg["resume"])
        model, opt, start = ck.model, ck.optimizer, ck.iteration
    else:
        mcfg = net.ModelConfig(image_size=image_size, trunk_widths=tuple(cfg["trunk_widths"]),
                               hidden_widths=tuple(cfg["hidden_widths"]), feature_dim=cfg["feature_dim"],
                               trunk_batch_norm=cfg["trunk_batch_norm"], dtype=cfg["dtype"])
        model = net.init_model(mcfg, seed=seed)
    ckpt = out / "model.ckpt"
    res = optim.train(model, data, tcfg, optimizer=opt, start_iteration=start, checkpoint_path=ckpt, log_every=0)
    optim.save_checkpoint(ckpt, model, res.optimizer, res.iteration, tcfg)
    with open(out / "losses.csv", "w") as fh:
        fh.write("iteration,loss\n")
        for i, v in enumerate(res.losses):
            fh.write(f"{start + i},{v!r}\n")
    tail = res.losses[-min(100, len(res.losses)):] if res.losses else [float("nan")]
    return {
        "iterations": res.iteration,
        "initial_loss": res.losses[0] if res.losses else None,
        "final_loss": res.losses[-1] if res.losses else None,
        "final_loss_mean100": sum(tail) / len(tail),
    }


def cmd_eval_loc(cfg: dict, seed: int, out: Path) -> dict:
    from . import evalkit

    model, data = _load_model(cfg, seed), _load_data(cfg)
    summary = {}
    for cond, tag in ((False, "uncond"), (True, "cond")):
        r = evalkit.eval_discrete_localization(model, data, cond, chance_draws=cfg["chance_draws"], seed=seed)
        r.curve.to_csv(out / f"loc_{tag}.csv")
        summary[f"median_km_{tag}"] = r.curve.median
        if not cond:
            r.chance.to_csv(out / "loc_chance.csv", thresholds=range(0, 20001, 100))
            summary["median_km_chance"] = r.chance.median
    return summary


def cmd_eval_time(cfg: dict, seed: int, out: Path) -> dict:
    from . import evalkit

    model, data = _load_model(cfg, seed), _load_data(cfg)
    summary = {}
    for cond, tag in ((False, "uncond"), (True, "cond")):
        r = evalkit.eval_time_estimation(model, data, cond)
        r.month.to_csv(out / f"month_{tag}.csv", thresholds=range(7))
        r.hour.to_csv(out / f"hour_{tag}.csv", thresholds=range(13))
        summary[f"month_median_{tag}"] = r.month.median
        summary[f"hour_median_{tag}"] = r.hour.median
        summary[f"hour_mean_{tag}"] = r.hour.mean
        if cond:
            r.month_chance.to_csv(out / "month_chance.csv", thresholds=range(7))
            r.hour_chance.to_csv(out / "hour_chance.csv", thresholds=range(13))
            summary["hour_mean_chance"] = r.hour_chance.mean
    return summary


def cmd_features(cfg: dict, seed: int, out: Path) -> dict:
    import numpy as np

    from . import evalkit, synthworld

    model, data = _load_model(cfg, seed), _load_data(cfg)
    feats = evalkit.trunk_features(model, data)
    top = evalkit.top_activations(feats, data.ids, cfg["k"])
    with open(out / "top_activations.csv", "w") as fh:
        fh.write("channel,rank,id\n")
        for c, ids in top.items():
            for r, i in enumerate(ids):
                fh.write(f"{c},{r},{i}\n")
    channel = cfg["channel"]
    if channel < 0:
        daylight = synthworld.ATTRIBUTE_NAMES.index("daylight")
        corr = evalkit.pearson_matrix(feats, data.attributes[:, daylight : daylight + 1])
        channel = int(np.argmax(np.abs(corr[:, 0])))
    if not 0 <= channel < feats.shape[1]:
        raise CliError("invalid_argument", f"channel {channel} outside [0, {feats.shape[1]})")
    scene_ix = _scene_indices(data, cfg["scene"], 1, seed)
    scene = cfg["scene"] or sorted(scene_ix)[0]
    series = evalkit.neuron_time_series(model, data.subset(data.scenes()[scene]), channel)
    series.to_csv(out / "timeseries.csv")
    return {"channels": feats.shape[1], "k": cfg["k"], "series_scene": scene, "series_channel": channel,
            "series_length": len(series.activation)}


def cmd_correlate(cfg: dict, seed: int, out: Path) -> dict:
    from . import evalkit, synthworld

    model, data = _load_model(cfg, seed), _load_data(cfg)
    res = evalkit.model_correlation(model, data)
    res.to_csv(out / "correlation.csv", synthworld.ATTRIBUTE_NAMES)
    with open(out / "attribute_max.csv", "w") as fh:
        fh.write("attribute,max_abs_rho\n")
        for name, v in zip(synthworld.ATTRIBUTE_NAMES, res.per_attribute_max):
            fh.write(f"{name},{float(v)!r}\n")
    return {"rho_bar": res.rho_bar, "samples": len(data)}


def cmd_attr_head(cfg: dict, seed: int, out: Path) -> dict:
    from . import evalkit

    model = _load_model(cfg, seed)
    train, test = _load_data(cfg, "train"), _load_data(cfg, "test")
    res = evalkit.train_attribute_head(
        evalkit.trunk_features(model, train), train.attributes, evalkit.trunk_features(model, test),
        test.attributes, cfg["iterations"], cfg["eval_every"], cfg["hidden"], cfg["batch_size"], cfg["lr"], seed,
    )
    with open(out / "mse_trace.csv", "w") as fh:
        fh.write("iteration,test_mse\n")
        for it, v in res.trace:
            fh.write(f"{it},{v!r}\n")
    return {"final_mse": res.trace[-1][1] if res.trace else None, "baseline_mse": res.baseline_mse}


def cmd_surface(cfg: dict, seed: int, out: Path) -> dict:
    from . import localizer

    model, data = _load_model(cfg, seed), _load_data(cfg)
    scene, idx = next(iter(_scene_indices(data, cfg["scene"], cfg["n_images"], seed).items()))
    field = localizer.TimeLossField.from_dataset(model, data, idx)
    surf = localizer.loss_surface(field, (cfg["grid_lat"], cfg["grid_lon"]), with_grad=cfg["gradients"])
    surf.to_csv(out / "surface.csv")
    lo = surf.argmin()
    return {"scene": scene, "n_images": len(idx), "argmin_lat": lo.lat_deg, "argmin_lon": lo.lon_deg,
            "true_lat": float(data.lat[idx[0]]), "true_lon": float(data.lon[idx[0]])}


def cmd_localize(cfg: dict, seed: int, out: Path) -> dict:
    import numpy as np

    from . import geotime, localizer

    model, data = _load_model(cfg, seed), _load_data(cfg)
    errors = []
    with open(out / "estimates.csv", "w") as fh:
        fh.write("scene,n_images,lat,lon,loss,true_lat,true_lon,error_km\n")
        for scene, idx in _scene_indices(data, cfg["scene"], cfg["n_images"], seed).items():
            field = localizer.TimeLossField.from_dataset(model, data, idx)
            r = localizer.continuous_localize(field, cfg["restarts"], cfg["steps"], cfg["step_size"], seed)
            tl, tn = float(data.lat[idx[0]]), float(data.lon[idx[0]])
            err = float(geotime.haversine_km(r.location.lat_deg, r.location.lon_deg, tl, tn))
            errors.append(err)
            fh.write(f"{scene},{len(idx)},{r.location.lat_deg!r},{r.location.lon_deg!r},{r.loss!r},{tl!r},{tn!r},{err!r}\n")
    return {"scenes": len(errors), "median_error_km": float(np.median(errors))}


def cmd_render(cfg: dict, seed: int, out: Path) -> dict:
    from . import plots

    if not cfg["input"]:
        raise CliError("config", "'input' (CSV path) is required")
    src = Path(cfg["input"])
    if not src.exists():
        raise CliError("missing_input", f"input not found: {src}")
    svg, info = plots.render_csv(src.read_text(), cfg["kind"], title=src.stem)
    (out / f"{src.stem}.svg").write_text(svg)
    return info


COMMANDS = {
    "synth-gen": cmd_synth_gen,
    "train": cmd_train,
    "eval-loc": cmd_eval_loc,
    "eval-time": cmd_eval_time,
    "features": cmd_features,
    "correlate": cmd_correlate,
    "attr-head": cmd_attr_head,
    "surface": cmd_surface,
    "localize": cmd_localize,
    "render": cmd_render,
}


# ---------------------------------------------------------------------------


def _error_code(exc: BaseException) -> str:
    from .net import ConfigError
    from .optim import CheckpointError, DataError

    if isinstance(exc, CliError):
        return exc.code
    if isinstance(exc, ConfigError):
        return "config"
    if isinstance(exc, CheckpointError):
        return "checkpoint"
    if isinstance(exc, FileNotFoundError):
        return "missing_input"
    if isinstance(exc, DataError):
        return "data"
    if isinstance(exc, (ValueError, IndexError, TypeError)):
        return "invalid_argument"
    return "internal"


def _publish(stage: Path, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for entry in sorted(stage.iterdir()):
        target = out / entry.name
        if target.is_dir() and not target.is_symlink():
            shutil.rmtree(target)
        os.replace(entry, target)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _limit_threads(args.threads)
    out = Path(args.out)
    stage = None
    try:
        if not 0 <= args.seed < 2**64:
            raise CliError("config", f"seed must be a u64, got {args.seed}")
        overrides = {k[3:]: v for k, v in vars(args).items() if k.startswith("ov_") and v is not None}
        cfg = resolve_config(args.command, args.config, overrides)
        out.parent.mkdir(parents=True, exist_ok=True)
        stage = Path(tempfile.mkdtemp(prefix=f".{out.name}.partial-", dir=out.parent))
        metrics = COMMANDS[args.command](cfg, args.seed, stage)
        resolved = {"command": args.command, "seed": args.seed, "threads": args.threads, "settings": cfg}
        (stage / "config.resolved.json").write_text(_dump_json(resolved))
        summary = {"schema_version": SUMMARY_SCHEMA_VERSION, "command": args.command, "metrics": metrics}
        (stage / "summary.json").write_text(_dump_json(summary))
        _publish(stage, out)
        return 0
    except Exception as exc:  # noqa: BLE001 - every failure becomes one error line
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"error: {_error_code(exc)}: {msg}", file=sys.stderr)
        return 1
    finally:
        if stage is not None and stage.exists():
            shutil.rmtree(stage, ignore_errors=True)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
