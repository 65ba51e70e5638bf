"""Whole-pipeline composition: shapes, determinism, config plumbing."""

import numpy as np
import pytest

from stereomatch import autodiff as ad
from stereomatch.backbone import BackboneConfig
from stereomatch.correlation import MatchingConfig
from stereomatch.errors import ConfigError, ShapeError
from stereomatch.model import ModelConfig, StereoModel
from stereomatch.synthetic import synth_stereo


def tiny_config(**overrides):
    kw = dict(
        backbone=BackboneConfig(stem_channels=4, channels=(8, 10, 12, 14)),
        matching=MatchingConfig(max_disparity=32, corr_channels=4),
        seed=0,
    )
    kw.update(overrides)
    return ModelConfig(**kw)


def tiny_pair(seed=0):
    s = synth_stereo(seed, height=32, width=64, max_disparity=32)
    return s


class TestForward:
    def test_output_shapes_and_resolutions(self):
        model = StereoModel(tiny_config())
        s = tiny_pair()
        d0, d1 = model(s.left, s.right)
        assert d0.values.shape == (1, 1, 8, 16)
        assert d0.resolution == "quarter"
        assert d1.values.shape == (1, 1, 32, 64)
        assert d1.resolution == "full"

    def test_same_config_builds_identical_models(self):
        a = StereoModel(tiny_config())
        b = StereoModel(tiny_config())
        for (name, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
            assert np.array_equal(pa.data, pb.data), name

    def test_forward_is_deterministic(self):
        model = StereoModel(tiny_config())
        model.eval()
        s = tiny_pair()
        first = model(s.left, s.right)[1].values.data
        second = model(s.left, s.right)[1].values.data
        assert np.array_equal(first, second)

    def test_seed_changes_parameters(self):
        a = StereoModel(tiny_config(seed=0))
        b = StereoModel(tiny_config(seed=1))
        assert not np.array_equal(a.backbone.stem.conv.weight.data,
                                  b.backbone.stem.conv.weight.data)

    def test_afv_toggle_changes_values_not_shapes(self):
        s = tiny_pair()
        with_afv = StereoModel(tiny_config(afv_enabled=True))
        without = StereoModel(tiny_config(afv_enabled=False))
        da = with_afv(s.left, s.right)[1].values
        db = without(s.left, s.right)[1].values
        assert da.shape == db.shape
        assert not np.array_equal(da.data, db.data)
        assert with_afv.param_count() > without.param_count()

    def test_mismatched_pair_rejected(self):
        model = StereoModel(tiny_config())
        a = ad.Tensor(np.zeros((1, 3, 32, 64)))
        b = ad.Tensor(np.zeros((1, 3, 32, 32)))
        with pytest.raises(ShapeError):
            model(a, b)

    def test_batch_of_two(self):
        model = StereoModel(tiny_config())
        s = tiny_pair()
        left = ad.Tensor(np.concatenate([s.left.data, s.left.data]))
        right = ad.Tensor(np.concatenate([s.right.data, s.right.data]))
        d0, d1 = model(left, right)
        assert d0.values.shape == (2, 1, 8, 16)
        assert d1.values.shape == (2, 1, 32, 64)


def test_max_disparity_must_fit_aggregation():
    with pytest.raises(ConfigError, match="multiple of 32"):
        StereoModel(tiny_config(matching=MatchingConfig(max_disparity=48, corr_channels=4)))


def test_every_parameter_receives_gradient():
    model = StereoModel(tiny_config())
    s = tiny_pair(seed=3)
    d0, d1 = model(s.left, s.right)
    loss = ad.add(ad.tsum(ad.mul(d0.values, d0.values)),
                  ad.tsum(ad.mul(d1.values, d1.values)))
    params = [p for _, p in model.named_parameters()]
    ad.backward(loss, ensure=params)
    for name, p in model.named_parameters():
        assert p.grad is not None and np.any(p.grad != 0.0), name
