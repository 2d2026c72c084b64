import csv
import json
import re

import numpy as np
import pytest

from geotemp import cli

from clichain import GOLDEN, TRAIN, WORLD, run_chain


def _ok(argv):
    assert cli.run(argv) == 0, argv


def _files(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def chain(tmp_path_factory):
    root = tmp_path_factory.mktemp("chain")
    values = run_chain(root)
    return root, values


def test_golden_hour_median(chain):
    _, values = chain
    assert values == json.loads(GOLDEN.read_text())


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n_scenes": 2, "bogus_knob": 1}))
    out = tmp_path / "o"
    assert cli.run(["synth-gen", "--config", str(cfg), "--out", str(out)]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    assert re.fullmatch(r"error: config: .*'bogus_knob'.*", err[0])
    assert not out.exists()


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"mode": "roaming", "n_roaming": 10, "image_size": 8}))
    out = tmp_path / "o"
    _ok(["synth-gen", "--config", str(cfg), "--n-roaming", "12", "--out", str(out)])
    resolved = json.loads((out / "config.resolved.json").read_text())
    assert resolved["settings"]["n_roaming"] == 12 and resolved["settings"]["image_size"] == 8
    summary = json.loads((out / "summary.json").read_text())
    assert summary["schema_version"] == cli.SUMMARY_SCHEMA_VERSION and summary["metrics"]["samples"] == 12


@pytest.mark.parametrize("argv, code", [
    (["eval-time", "--checkpoint", "nope.ckpt", "--data", "nope"], "missing_input"),
    (["render", "--input", "nope.csv"], "missing_input"),
    (["synth-gen", "--config", "nope.json"], "missing_input"),
    (["synth-gen", "--n-scenes", "-3"], "config"),
    (["train"], "config"),
])
def test_error_codes(tmp_path, capsys, argv, code):
    out = tmp_path / "o"
    assert cli.run([*argv, "--out", str(out)]) == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith(f"error: {code}: ") and "\n" not in err
    assert not out.exists()
    assert not list(tmp_path.glob(".o.partial-*"))


def test_corrupt_checkpoint_reports_checkpoint_code(chain, tmp_path, capsys):
    root, _ = chain
    bad = tmp_path / "bad.ckpt"
    raw = bytearray((root / "train" / "model.ckpt").read_bytes())
    raw[-1] ^= 1
    bad.write_bytes(bytes(raw))
    assert cli.run(["eval-time", "--checkpoint", str(bad), "--data", str(root / "data"), "--out", str(tmp_path / "o")]) == 1
    assert capsys.readouterr().err.startswith("error: checkpoint: ")


def test_failure_midway_leaves_no_partial_outputs(chain, tmp_path, monkeypatch):
    root, _ = chain

    def boom(cfg, seed, out):
        (out / "half.csv").write_text("x\n")
        raise RuntimeError("disk on fire")

    monkeypatch.setitem(cli.COMMANDS, "eval-loc", boom)
    out = tmp_path / "o"
    assert cli.run(["eval-loc", "--out", str(out)]) == 1
    assert not out.exists()
    assert list(tmp_path.iterdir()) == []


def test_inputs_not_mutated(chain, tmp_path):
    root, _ = chain
    before = _files(root / "data"), _files(root / "train")
    _ok(["eval-loc", "--checkpoint", str(root / "train" / "model.ckpt"), "--data", str(root / "data"),
         "--chance-draws", "2000", "--out", str(tmp_path / "o")])
    assert (_files(root / "data"), _files(root / "train")) == before


EVAL_COMMANDS = [
    ["eval-loc", "--chance-draws", "2000"],
    ["eval-time"],
    ["features", "--k", "3"],
    ["correlate", "--split", "all"],
    ["attr-head", "--iterations", "40", "--eval-every", "20", "--hidden", "8"],
    ["surface", "--n-images", "6", "--grid-lat", "7", "--grid-lon", "12"],
    ["localize", "--n-images", "4", "--restarts", "1", "--steps", "3"],
]


@pytest.mark.parametrize("extra", EVAL_COMMANDS, ids=lambda a: a[0])
def test_subcommands_byte_identical_on_rerun(chain, tmp_path, extra):
    root, _ = chain
    common = ["--checkpoint", str(root / "train" / "model.ckpt"), "--data", str(root / "data"), "--seed", "2"]
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        _ok([*extra, *common, "--out", str(out)])
        outs.append(_files(out))
    assert outs[0] == outs[1]
    assert "summary.json" in outs[0] and "config.resolved.json" in outs[0]


def test_generation_and_training_byte_identical(tmp_path):
    for k in range(2):
        _ok(["synth-gen", "--out", str(tmp_path / f"d{k}"), "--seed", "4", *WORLD])
        _ok(["train", "--out", str(tmp_path / f"t{k}"), "--seed", "4", "--data", str(tmp_path / "d0"),
             *TRAIN, "--iterations", "5"])
    assert _files(tmp_path / "d0") == _files(tmp_path / "d1")
    assert _files(tmp_path / "t0") == _files(tmp_path / "t1")


def test_render_surface_extrema_match_csv(chain, tmp_path):
    root, _ = chain
    surf = tmp_path / "surf"
    _ok(["surface", "--checkpoint", str(root / "train" / "model.ckpt"), "--data", str(root / "data"),
         "--n-images", "6", "--grid-lat", "9", "--grid-lon", "16", "--out", str(surf)])
    rows = list(csv.DictReader(open(surf / "surface.csv")))
    loss = np.array([float(r["loss"]) for r in rows])
    lo, hi = rows[int(np.argmin(loss))], rows[int(np.argmax(loss))]

    for k in range(2):
        _ok(["render", "--input", str(surf / "surface.csv"), "--out", str(tmp_path / f"svg{k}")])
    svg = (tmp_path / "svg0" / "surface.svg").read_text()
    assert svg == (tmp_path / "svg1" / "surface.svg").read_text()
    for tag, row in (("argmin", lo), ("argmax", hi)):
        m = re.search(rf'id="{tag}" data-lat="([^"]+)" data-lon="([^"]+)" data-loss="([^"]+)"', svg)
        assert m and m.groups() == (row["lat"], row["lon"], row["loss"])


def test_render_line_and_matrix(chain, tmp_path):
    root, _ = chain
    ev = root / "eval"
    for name in ("hour_cond.csv", "summary.json"):
        assert (ev / name).exists()
    _ok(["render", "--input", str(ev / "hour_cond.csv"), "--out", str(tmp_path / "r")])
    assert (tmp_path / "r" / "hour_cond.svg").read_text().startswith("<svg")


def test_summary_has_no_timings(chain):
    root, _ = chain
    for sub in ("data", "train", "eval"):
        text = (root / sub / "summary.json").read_text()
        assert "second" not in text and "time_s" not in text
