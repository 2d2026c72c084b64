import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geotemp import net, optim
from geotemp.net import ConfigError

from conftest import SMALL_MODEL
from test_net import bn_train_init_loss_oracle


def reference_adam(theta, grads, lr, wd, b1=0.9, b2=0.999, eps=1e-8):
    """Textbook Adam with coupled L2, written independently of the fused kernel."""
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    for t, g in enumerate(grads, start=1):
        g = g + wd * theta
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        theta = theta - lr * mhat / (np.sqrt(vhat) + eps)
    return theta


def test_lr_schedule():
    cfg = optim.TrainConfig(halving_interval=8000)
    assert optim.lr_at(0, cfg) == 0.001
    assert optim.lr_at(7999, cfg) == 0.001
    assert optim.lr_at(8000, cfg) == 0.0005
    assert optim.lr_at(16000, cfg) == 0.00025


@given(st.integers(0, 10**6), st.integers(0, 10**6))
def test_lr_non_increasing(a, b):
    cfg = optim.TrainConfig(halving_interval=777)
    lo, hi = sorted((a, b))
    assert optim.lr_at(hi, cfg) <= optim.lr_at(lo, cfg)


def test_first_adam_step_is_minus_lr():
    p = np.array([0.5])
    state = optim.AdamState(np.zeros(1), np.zeros(1))
    optim.adam_step([p], [np.array([1.0])], state, 1e-3, 0.0)
    assert p[0] - 0.5 == pytest.approx(-1e-3, abs=1e-9)


def test_zero_gradient_leaves_params_unchanged():
    p = np.arange(6.0).reshape(2, 3)
    before = p.copy()
    state = optim.AdamState(np.zeros(6), np.zeros(6))
    optim.adam_step([p], [np.zeros((2, 3))], state, 1e-3, 0.0)
    np.testing.assert_array_equal(p, before)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(0, 1e-2))
def test_adam_matches_reference(seed, wd):
    rng = np.random.default_rng(seed)
    theta0 = rng.standard_normal(7)
    grads = [rng.standard_normal(7) for _ in range(5)]
    p = theta0.copy()
    state = optim.AdamState(np.zeros(7), np.zeros(7))
    for g in grads:
        optim.adam_step([p], [g], state, 1e-3, wd)
    np.testing.assert_allclose(p, reference_adam(theta0, grads, 1e-3, wd), rtol=1e-12, atol=1e-15)


def test_decay_shrinks_weights_only():
    w, b = np.full((2, 2), 0.7), np.full(2, 0.7)
    state = optim.AdamState(np.zeros(6), np.zeros(6))
    for _ in range(3):
        before = np.abs(w).copy()
        optim.adam_step([w, b], [np.zeros((2, 2)), np.zeros(2)], state, 1e-3, 1e-4, [True, False])
        assert np.all(np.abs(w) < before)
    np.testing.assert_array_equal(b, 0.7)


def test_decay_mask_names():
    assert optim.decays("loc_head.fc0.weight")
    assert optim.decays("image_net.trunk.conv1")
    assert not optim.decays("image_net.trunk.conv1_bias")
    assert not optim.decays("loc_head.bn0.gamma")
    assert not optim.decays("loc_head.fc0.bias")


def test_adam_shape_mismatch():
    state = optim.AdamState(np.zeros(4), np.zeros(4))
    with pytest.raises(ValueError):
        optim.adam_step([np.zeros(4)], [np.zeros(3)], state, 1e-3, 0.0)


def test_augment_identity_and_errors():
    img = np.arange(3 * 5 * 5, dtype=np.float32).reshape(3, 5, 5)
    rng = np.random.default_rng(0)
    np.testing.assert_array_equal(optim.augment(img, 5, rng), img)
    with pytest.raises(ConfigError):
        optim.augment(img, 6, rng)


def test_augment_values_are_a_window():
    img = np.random.default_rng(1).standard_normal((3, 8, 8))
    out = optim.augment(img, 5, np.random.default_rng(2))
    for c in range(3):
        assert set(out[c].ravel()) <= set(img[c].ravel())


def test_augment_offsets_cover_all_positions():
    img = np.arange(6 * 6, dtype=np.float64).reshape(1, 6, 6)
    rng = np.random.default_rng(0)
    seen = {(int(o[0, 0, 0]) // 6, int(o[0, 0, 0]) % 6) for o in (optim.augment(img, 4, rng) for _ in range(10000))}
    assert seen == {(y, x) for y in range(3) for x in range(3)}


def test_batch_schedule_epochs_are_permutations():
    s = optim.BatchSchedule(10, 5, seed=1)
    first = np.concatenate([s.indices(0), s.indices(1)])
    assert sorted(first) == list(range(10))
    again = optim.BatchSchedule(10, 5, seed=1)
    np.testing.assert_array_equal(again.indices(3), s.indices(3))


def test_empty_dataset_rejected(tiny_world, small_model, small_train_cfg):
    with pytest.raises(optim.DataError):
        optim.train(small_model, tiny_world.subset(np.array([], dtype=np.int64)), small_train_cfg)


def test_zero_iterations_leave_model_identical(tiny_world, small_model):
    before = {n: p.data.copy() for n, p in small_model.named_parameters()}
    optim.train(small_model, tiny_world, optim.TrainConfig(iterations=0, crop=10))
    for n, p in small_model.named_parameters():
        np.testing.assert_array_equal(p.data, before[n])


def test_trace_starts_near_bn_init_oracle(tiny_world):
    model = net.init_model(net.ModelConfig(image_size=10, trunk_widths=(8, 16), dtype="float64"), seed=0)
    res = optim.train(model, tiny_world, optim.TrainConfig(iterations=1, batch_size=32, crop=10), log_every=0)
    assert res.losses[0] == pytest.approx(bn_train_init_loss_oracle(), rel=0.02)


def test_identical_runs_bit_identical(tiny_world, small_train_cfg):
    models = []
    for _ in range(2):
        m = net.init_model(SMALL_MODEL, seed=0)
        optim.train(m, tiny_world, small_train_cfg, log_every=0)
        models.append(m)
    for (_, a), (_, b) in zip(models[0].named_parameters(), models[1].named_parameters()):
        np.testing.assert_array_equal(a.data, b.data)


def test_checkpoint_round_trip_bit_exact(tmp_path, tiny_world, small_model, small_train_cfg):
    res = optim.train(small_model, tiny_world, small_train_cfg, log_every=0)
    path = tmp_path / "m.ckpt"
    optim.save_checkpoint(path, small_model, res.optimizer, res.iteration, small_train_cfg)
    ck = optim.load_checkpoint(path)
    assert ck.iteration == small_train_cfg.iterations
    for (na, a), (nb, b) in zip(small_model.named_parameters(), ck.model.named_parameters()):
        assert na == nb and a.data.dtype == b.data.dtype
        np.testing.assert_array_equal(a.data, b.data)
    for (_, a), (_, b) in zip(small_model.named_bn_states(), ck.model.named_bn_states()):
        np.testing.assert_array_equal(a.running_mean, b.running_mean)
        np.testing.assert_array_equal(a.running_var, b.running_var)
    np.testing.assert_array_equal(ck.optimizer.state.m, res.optimizer.state.m)
    np.testing.assert_array_equal(ck.optimizer.state.v, res.optimizer.state.v)
    assert ck.optimizer.state.step == res.optimizer.state.step
    raw = path.read_bytes()
    assert raw[:8] == b"GTFCKPT1"
    (hlen,) = struct.unpack("<Q", raw[8:16])
    assert hlen < len(raw)


def test_resume_matches_uninterrupted(tmp_path, tiny_world, small_train_cfg):
    cfg = optim.TrainConfig(**{**small_train_cfg.__dict__, "iterations": 60})
    full = net.init_model(SMALL_MODEL, seed=0)
    optim.train(full, tiny_world, cfg, log_every=0)

    first = net.init_model(SMALL_MODEL, seed=0)
    half = optim.TrainConfig(**{**cfg.__dict__, "iterations": 10})
    res = optim.train(first, tiny_world, half, log_every=0)
    optim.save_checkpoint(tmp_path / "r.ckpt", first, res.optimizer, res.iteration, cfg)
    ck = optim.load_checkpoint(tmp_path / "r.ckpt")
    optim.train(ck.model, tiny_world, cfg, optimizer=ck.optimizer, start_iteration=ck.iteration, log_every=0)
    for (_, a), (_, b) in zip(full.named_parameters(), ck.model.named_parameters()):
        np.testing.assert_array_equal(a.data, b.data)


def test_truncated_checkpoint_rejected(tmp_path, small_model):
    path = tmp_path / "t.ckpt"
    optim.save_checkpoint(path, small_model)
    raw = path.read_bytes()
    for cut in (4, 12, 100, len(raw) - 1):
        path.write_bytes(raw[:cut])
        with pytest.raises(optim.CheckpointError):
            optim.load_checkpoint(path)


def test_corrupt_payload_rejected(tmp_path, small_model):
    path = tmp_path / "c.ckpt"
    optim.save_checkpoint(path, small_model)
    raw = bytearray(path.read_bytes())
    raw[-3] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(optim.CheckpointError, match="checksum"):
        optim.load_checkpoint(path)


def test_version_mismatch_rejected(tmp_path, small_model):
    path = tmp_path / "v.ckpt"
    optim.save_checkpoint(path, small_model)
    raw = path.read_bytes()
    raw = raw.replace(b'"format_version": 1', b'"format_version": 9', 1)
    path.write_bytes(raw)
    with pytest.raises(optim.CheckpointVersionError):
        optim.load_checkpoint(path)


def test_float32_storage_loads(tmp_path, small_model):
    path = tmp_path / "f.ckpt"
    optim.save_checkpoint(path, small_model, storage="float32")
    ck = optim.load_checkpoint(path)
    for (_, a), (_, b) in zip(small_model.named_parameters(), ck.model.named_parameters()):
        np.testing.assert_allclose(a.data, b.data, rtol=1e-6, atol=1e-7)


@pytest.mark.parametrize("trunk_bn", [True, False])
def test_checkpoint_keeps_trunk_batch_norm(tmp_path, tiny_world, small_train_cfg, trunk_bn):
    model = net.init_model(net.ModelConfig(**{**SMALL_MODEL.__dict__, "trunk_batch_norm": trunk_bn}), seed=0)
    optim.train(model, tiny_world, small_train_cfg, log_every=0)
    optim.save_checkpoint(tmp_path / "b.ckpt", model)
    back = optim.load_checkpoint(tmp_path / "b.ckpt").model
    assert back.config.trunk_batch_norm is trunk_bn
    names = [n for n, _ in back.named_bn_states() if ".trunk." in n]
    assert bool(names) is trunk_bn
    x = tiny_world.images[:4, :, :10, :10]
    np.testing.assert_array_equal(back.trunk_feature(x), model.trunk_feature(x))
