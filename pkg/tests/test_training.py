"""Adam updates, schedules, checkpoints, and the training loop."""

import numpy as np
import pytest

from stereomatch import autodiff as ad
from stereomatch import nn
from stereomatch.backbone import BackboneConfig
from stereomatch.correlation import MatchingConfig
from stereomatch.errors import DataFormatError
from stereomatch.model import ModelConfig, StereoModel
from stereomatch.synthetic import StereoSample, synth_stereo
from stereomatch.training import (
    Adam,
    OptimConfig,
    fit,
    load_checkpoint,
    make_dataset,
    sample_loss,
    save_checkpoint,
    stack_samples,
    train_step,
)

from reference import adam_trajectory_naive


def tiny_model(seed=0, **overrides):
    kw = dict(
        backbone=BackboneConfig(stem_channels=4, channels=(8, 10, 12, 14)),
        matching=MatchingConfig(max_disparity=32, corr_channels=4),
        seed=seed,
    )
    kw.update(overrides)
    return StereoModel(ModelConfig(**kw))


def tiny_sample(seed=0, mode="blobs"):
    return synth_stereo(seed, height=32, width=64, max_disparity=32, mode=mode)


class _Scalar(nn.Module):
    def __init__(self, value):
        super().__init__()
        self.w = nn.Parameter(np.array([value]))


class TestAdam:
    def test_matches_scalar_oracle_for_five_steps(self):
        holder = _Scalar(5.0)
        optim = Adam(holder, OptimConfig(lr=0.1, decay_steps=()))
        grads, history = [], []
        for _ in range(5):
            holder.zero_grad()
            err = ad.sub(holder.w, 3.0)
            loss = ad.tsum(ad.mul(err, err))
            grads.append(2.0 * (holder.w.data[0] - 3.0))
            ad.backward(loss)
            optim.step()
            history.append(holder.w.data[0])
        want = adam_trajectory_naive(5.0, grads, lr=0.1)
        assert np.abs(np.array(history) - np.array(want)).max() <= 1e-12

    def test_zero_lr_is_bitwise_noop(self):
        model = tiny_model()
        before = {k: v.copy() for k, v in model.state_arrays().items()}
        optim = Adam(model, OptimConfig(lr=0.0))
        s = tiny_sample()
        for _ in range(2):
            value, stepped = train_step(model, optim, s)
            assert stepped
        for name, p in model.named_parameters():
            assert np.array_equal(p.data, before[name]), name
        # the schedule state still advanced and moments accumulated
        assert optim.t == 2
        assert any(np.any(m != 0) for m in optim.m.values())

    def test_piecewise_schedule(self):
        optim = Adam(_Scalar(0.0), OptimConfig(lr=1e-3, decay_steps=(300, 400),
                                               decay_factor=0.5))
        for t, lr in [(1, 1e-3), (300, 1e-3), (301, 5e-4), (400, 5e-4), (401, 2.5e-4)]:
            optim.t = t
            assert optim.current_lr() == pytest.approx(lr, rel=0, abs=0)

    def test_none_grads_are_skipped(self):
        holder = _Scalar(1.0)
        optim = Adam(holder, OptimConfig(lr=0.1))
        optim.step()  # no backward ran; grad is None
        assert holder.w.data[0] == 1.0


class TestTrainStep:
    def test_nonfinite_loss_rejects_update(self, capsys):
        model = tiny_model()
        optim = Adam(model)
        s = tiny_sample()
        bad_gt = s.gt_disparity.copy()
        bad_gt[0, 0, 5, 5] = np.nan
        mask = s.valid_mask.copy()
        mask[0, 0, 5, 5] = True
        broken = StereoSample(s.left, s.right, bad_gt, mask, s.occlusion_mask)
        before = {k: v.copy() for k, v in model.state_arrays().items()}
        value, stepped = train_step(model, optim, broken)
        assert not stepped
        assert not np.isfinite(value)
        assert optim.t == 0
        assert "rejecting update" in capsys.readouterr().err
        for name, arr in model.state_arrays().items():
            if name.endswith(("running_mean", "running_var", "num_batches")):
                continue  # train-mode forward alone moves normalization stats
            assert np.array_equal(arr, before[name]), name

    def test_loss_decreases_on_fixed_batch(self):
        # median over 3 seeds: final loss under the initial loss
        wins = 0
        for seed in range(3):
            model = tiny_model(seed=seed)
            data = [tiny_sample(seed=100 + seed)]
            report = fit(model, Adam(model), data, steps=50)
            assert report.rejected_steps == 0
            wins += np.mean(report.losses[-5:]) < np.mean(report.losses[:5])
        assert wins >= 2

    def test_fit_requires_data(self):
        model = tiny_model()
        with pytest.raises(Exception):
            fit(model, Adam(model), [], steps=1)

    def test_data_seed_does_not_touch_init(self):
        a = tiny_model(seed=7)
        b = tiny_model(seed=7)
        make_dataset(1, 1, 32, 64, 32)
        make_dataset(2, 1, 32, 64, 32)
        for (name, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
            assert np.array_equal(pa.data, pb.data), name

    def test_stack_samples(self):
        batch = stack_samples([tiny_sample(0), tiny_sample(1)])
        assert batch.left.shape == (2, 3, 32, 64)
        assert batch.gt_disparity.shape == (2, 1, 32, 64)
        assert batch.valid_mask.dtype == bool


class TestCheckpoint:
    def test_roundtrip_restores_forward_bitwise(self, tmp_path):
        model = tiny_model(seed=1)
        data = [tiny_sample(2)]
        fit(model, Adam(model), data, steps=3)  # move params and BN buffers
        model.eval()
        s = tiny_sample(3)
        with ad.no_grad():
            want = model(s.left, s.right)[1].values.data
        path = str(tmp_path / "model.ckpt")
        save_checkpoint(model, path)

        fresh = tiny_model(seed=99)  # different init, same architecture
        load_checkpoint(fresh, path)
        fresh.eval()
        with ad.no_grad():
            got = fresh(s.left, s.right)[1].values.data
        assert np.array_equal(got, want)

    def test_shape_mismatch_rejected(self, tmp_path):
        path = str(tmp_path / "model.ckpt")
        save_checkpoint(tiny_model(), path)
        other = tiny_model(backbone=BackboneConfig(stem_channels=6,
                                                   channels=(8, 10, 12, 14)))
        with pytest.raises(DataFormatError, match="shape"):
            load_checkpoint(other, path)

    def test_missing_and_unknown_entries_rejected(self, tmp_path):
        path = str(tmp_path / "model.ckpt")
        save_checkpoint(tiny_model(afv_enabled=False), path)
        with pytest.raises(DataFormatError, match="missing"):
            load_checkpoint(tiny_model(afv_enabled=True), path)
        save_checkpoint(tiny_model(afv_enabled=True), path)
        with pytest.raises(DataFormatError, match="unknown"):
            load_checkpoint(tiny_model(afv_enabled=False), path)

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"garbage")
        with pytest.raises(DataFormatError, match="not a checkpoint"):
            load_checkpoint(tiny_model(), str(path))

    def test_truncated_checkpoint(self, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(tiny_model(), str(path))
        path.write_bytes(path.read_bytes()[:-100])
        with pytest.raises(DataFormatError, match="truncated"):
            load_checkpoint(tiny_model(), str(path))
