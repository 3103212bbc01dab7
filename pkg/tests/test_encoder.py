import numpy as np
import pytest
import torch

from dpanet.encoder import (
    RESNET50_CHANNELS,
    STRIDES,
    BackboneConfig,
    FeaturePyramid,
    build_backbone,
    depth_to_3ch,
    encode_branch,
)


def test_toy_pyramid_strides_and_channels():
    cfg = BackboneConfig("toy", (4, 8, 8, 16, 16), 64)
    feats = encode_branch(torch.randn(2, 3, 64, 64), build_backbone(cfg))
    assert feats.channels == (4, 8, 8, 16, 16)
    for level, s in enumerate(STRIDES, start=1):
        assert tuple(feats[level].shape[-2:]) == (64 // s, 64 // s)


def test_resnet50_shape_pyramid():
    torch.manual_seed(0)
    net = build_backbone(BackboneConfig.resnet50(64)).eval()
    with torch.no_grad():
        feats = encode_branch(torch.randn(1, 3, 64, 64), net)
    assert feats.channels == RESNET50_CHANNELS
    assert [tuple(f.shape[-2:]) for f in feats.stages] == [(32, 32), (16, 16), (8, 8), (4, 4), (2, 2)]


def test_encode_rejects_bad_inputs():
    net = build_backbone(BackboneConfig())
    with pytest.raises(ValueError):
        encode_branch(torch.randn(1, 1, 64, 64), net)
    with pytest.raises(ValueError):
        encode_branch(torch.randn(1, 3, 48, 64), net)


def test_config_validation():
    with pytest.raises(ValueError):
        BackboneConfig("vgg")
    with pytest.raises(ValueError):
        BackboneConfig("toy", (8, 8, 8, 8))
    with pytest.raises(ValueError):
        BackboneConfig("toy", (8, 8, 8, 8, 128))
    with pytest.raises(ValueError):
        BackboneConfig("resnet50-shape", (8, 8, 8, 8, 8))
    with pytest.raises(ValueError):
        BackboneConfig("toy", input_size=40)


def test_pyramid_needs_five_stages():
    with pytest.raises(ValueError):
        FeaturePyramid([torch.zeros(1)] * 4)


def test_depth_to_3ch():
    d = np.arange(6, dtype=np.uint8).reshape(2, 3)
    out = depth_to_3ch(d)
    assert out.shape == (2, 3, 3) and all(np.array_equal(out[..., c], d) for c in range(3))
    t = torch.rand(2, 1, 4, 4)
    assert torch.equal(depth_to_3ch(t)[:, 2:3], t)
    with pytest.raises(ValueError):
        depth_to_3ch(torch.rand(2, 2, 4, 4))
    with pytest.raises(ValueError):
        depth_to_3ch(np.zeros((2, 2, 2)))
