from dataclasses import replace

import numpy as np
import pytest

from dpgan import serialization
from dpgan.errors import CheckpointError, ContractError, NumericAbort
from dpgan.models import DiscriminatorConfig, GeneratorConfig
from dpgan.synth import load_dataset
from dpgan.training import TrainConfig, TrainState, checkpoint_load, checkpoint_save, fit, sample_batch, train_step

SMALL_G = GeneratorConfig(width=8, variant="B4")
SMALL_D = DiscriminatorConfig(widths=(8, 8, 8))


def new_state(**train):
    return TrainState(SMALL_G, SMALL_D, None, TrainConfig(**{"steps": 10, **train}))


def params(state):
    return [p.data.copy() for p in state.generator.parameters() + state.discriminator.parameters()]


@pytest.fixture(scope="module")
def data(tiny_data):
    return load_dataset(tiny_data)


def test_step_counters(data):
    state = new_state()
    train_step(state, sample_batch(state, data))
    assert state.step == 1
    assert {p.t for p in state.generator.parameters() + state.discriminator.parameters()} == {1}


def test_zero_learning_rate_freezes_everything(data):
    state = new_state(lr_g=0.0, lr_d=0.0)
    before = params(state)
    fit(state, data)
    assert all(np.array_equal(a, b) for a, b in zip(before, params(state)))


def test_records_have_every_metric(data):
    recs = fit(new_state(steps=2), data)
    assert [r["step"] for r in recs] == [1, 2]
    assert all(np.isfinite(r[k]) for r in recs for k in ("loss_gan_d", "loss_gan_g", "loss_fm", "loss_p", "total"))


def test_reconstruction_mode_skips_discriminator(data):
    state = new_state(mode="reconstruction", steps=3)
    d_before = [p.data.copy() for p in state.discriminator.parameters()]
    recs = fit(state, data)
    assert recs[-1]["loss_gan_d"] is None and recs[-1]["loss_l1"] is not None
    assert all(np.array_equal(a, p.data) for a, p in zip(d_before, state.discriminator.parameters()))


def test_perceptual_net_untouched(data):
    state = new_state(steps=100, batch_size=2)
    before = [p.data.copy() for p in state.perceptual.parameters()]
    fit(state, data)
    assert all(np.array_equal(a, p.data) for a, p in zip(before, state.perceptual.parameters()))


def test_nan_aborts_without_saving(data, tmp_path):
    state = new_state(steps=4, checkpoint_every=1)
    ckpt = tmp_path / "c.ckpt"
    fit(state, data, checkpoint_path=str(ckpt), stop_after=2)
    good = ckpt.read_bytes()
    state.generator.parameters()[0].data[:] = np.nan
    with pytest.raises(NumericAbort) as info:
        fit(state, data, checkpoint_path=str(ckpt))
    assert info.value.step == 3
    assert ckpt.read_bytes() == good


def test_class_mismatch(data):
    state = TrainState(replace(SMALL_G, classes=6), SMALL_D)
    with pytest.raises(ContractError):
        fit(state, data)


class TestCheckpoint:
    def test_save_load_save_identical(self, data, tmp_path):
        state = new_state(steps=3)
        fit(state, data)
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        checkpoint_save(state, str(a))
        checkpoint_save(checkpoint_load(str(a)), str(b))
        assert a.read_bytes() == b.read_bytes()

    def test_resume_matches_straight_run(self, data, tmp_path):
        straight = new_state()
        fit(straight, data)
        ckpt = tmp_path / "half.ckpt"
        first = new_state()
        fit(first, data, checkpoint_path=str(ckpt), stop_after=5)
        resumed = checkpoint_load(str(ckpt))
        assert resumed.step == 5
        fit(resumed, data)
        assert all(np.array_equal(a, b) for a, b in zip(params(straight), params(resumed)))

    def test_truncated_file(self, data, tmp_path):
        path = tmp_path / "t.ckpt"
        checkpoint_save(new_state(), str(path))
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(CheckpointError):
            checkpoint_load(str(path))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.ckpt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(CheckpointError):
            checkpoint_load(str(path))

    def test_serialization_round_trip(self, rng):
        arrays = {"a": rng.standard_normal((2, 3)), "b/c": np.arange(4.0)}
        back, meta = serialization.loads(serialization.dumps(arrays, {"k": 1}))
        assert meta == {"k": 1} and all(np.array_equal(arrays[k], back[k]) for k in arrays)
