"""Dual-branch model: shapes, stop-gradients, momentum updates, determinism."""

import numpy as np
import pytest
import torch

from dcpnet import (
    ConfigError,
    DualStreamModel,
    EncoderSpec,
    ImageChip,
    ViewTriple,
    forward_views,
    init_model,
    momentum_update,
    param_checksum,
)
from dcpnet.models import views_to_tensors

TINY = EncoderSpec(backbone_family="tiny", projection_dim=32)


def make_views(n, size=16, seed=0):
    rng = np.random.default_rng(seed)
    triples = []
    for _ in range(n):
        chips = [ImageChip(rng.uniform(0, 1, (size, size)).astype(np.float32)) for _ in range(3)]
        triples.append(ViewTriple(weak=chips[0], strong=chips[1], handcrafted=chips[2]))
    return triples


def test_spec_validation():
    with pytest.raises(ConfigError):
        EncoderSpec(backbone_family="vgg")
    with pytest.raises(ConfigError):
        EncoderSpec(projection_dim=0)
    with pytest.raises(ConfigError):
        EncoderSpec(feature_dim=64, projection_dim=128)


def test_probed_feature_dim_checks_projection_width():
    # the tiny backbone is 64-wide, so a 128-wide projector cannot attach
    with pytest.raises(ConfigError):
        init_model(EncoderSpec(backbone_family="tiny", projection_dim=128), n_classes=2, seed=0)


def test_tiny_forward_shapes_and_unit_norms():
    model = init_model(TINY, n_classes=5, seed=0)
    model.eval()
    outs = forward_views(model, make_views(2))
    for z in (outs.z_w, outs.z_s, outs.x_h, outs.z_pred):
        assert z.shape == (2, 32)
        assert torch.allclose(z.norm(dim=1), torch.ones(2), atol=1e-6)
    for key in ("weak", "strong", "handcrafted"):
        dist = outs.cluster_dists[key]
        assert dist.shape == (2, 5)
        assert torch.allclose(dist.sum(dim=1), torch.ones(2), atol=1e-6)
        assert dist.min() >= 0
    assert torch.equal(outs.class_probs_w, outs.cluster_dists["weak"])


def test_views_to_tensors_stacks_channel_first():
    weak, strong, hand = views_to_tensors(make_views(3, size=16))
    assert weak.shape == strong.shape == hand.shape == (3, 1, 16, 16)
    assert weak.dtype == torch.float32


def test_resnet18_probes_512_features():
    model = init_model(EncoderSpec(backbone_family="resnet18"), n_classes=2, seed=0)
    assert model.spec.feature_dim == 512
    assert model.classifier.in_features == 128


def test_eval_forward_is_deterministic_and_rowwise():
    model = init_model(TINY, n_classes=3, seed=1)
    model.eval()
    views = make_views(2, seed=3)
    doubled = views + views  # duplicated rows must embed identically
    a = forward_views(model, doubled)
    b = forward_views(model, doubled)
    assert torch.equal(a.z_w, b.z_w)
    assert torch.allclose(a.z_w[0], a.z_w[2], atol=1e-6)
    assert torch.allclose(a.z_s[1], a.z_s[3], atol=1e-6)


def test_target_branch_outputs_carry_no_gradient():
    model = init_model(TINY, n_classes=3, seed=1)
    outs = forward_views(model, make_views(2))
    assert outs.z_w.requires_grad
    assert outs.z_pred.requires_grad
    assert not outs.z_s.requires_grad
    assert not outs.x_h.requires_grad


def test_target_parameters_are_frozen_copies_at_init():
    model = init_model(TINY, n_classes=3, seed=2)
    assert all(not p.requires_grad for p in model.target_parameters())
    assert all(p.requires_grad for p in model.online_parameters())
    assert param_checksum(model.online_parameters()) == param_checksum(model.target_parameters())


def test_momentum_zero_copies_online_and_one_freezes():
    model = init_model(TINY, n_classes=3, seed=3)
    with torch.no_grad():
        for p in model.online_parameters():
            p.add_(0.5)

    model.momentum = 1.0
    before = param_checksum(model.target_parameters())
    momentum_update(model)
    assert param_checksum(model.target_parameters()) == before

    model.momentum = 0.0
    momentum_update(model)
    assert param_checksum(model.target_parameters()) == param_checksum(model.online_parameters())


def test_momentum_example_point_nine_nine_nine():
    model = init_model(TINY, n_classes=3, seed=4)
    model.momentum = 0.999
    with torch.no_grad():
        for p in model.target_parameters():
            p.fill_(1.0)
        for p in model.online_parameters():
            p.fill_(0.0)
    momentum_update(model)
    for p in model.target_parameters():
        assert torch.allclose(p, torch.full_like(p, 0.999), atol=1e-7)


def test_momentum_update_matches_elementwise_formula():
    model = init_model(TINY, n_classes=3, seed=5)
    model.momentum = 0.9
    targets = [p.detach().clone() for p in model.target_parameters()]
    with torch.no_grad():
        for p in model.online_parameters():
            p.mul_(1.3).add_(0.01)
    onlines = [p.detach().clone() for p in model.online_parameters()]
    momentum_update(model)
    for p, t0, w in zip(model.target_parameters(), targets, onlines):
        assert torch.allclose(p, 0.9 * t0 + 0.1 * w, atol=1e-6)


def test_init_is_seed_deterministic():
    a = init_model(TINY, n_classes=4, seed=9)
    b = init_model(TINY, n_classes=4, seed=9)
    c = init_model(TINY, n_classes=4, seed=10)
    assert param_checksum(a.parameters()) == param_checksum(b.parameters())
    assert param_checksum(a.parameters()) != param_checksum(c.parameters())


def test_init_does_not_disturb_global_rng():
    torch.manual_seed(123)
    expected = torch.rand(3)
    torch.manual_seed(123)
    init_model(TINY, n_classes=2, seed=77)
    assert torch.equal(torch.rand(3), expected)


def test_checksum_is_sensitive_to_single_parameter_change():
    model = init_model(TINY, n_classes=2, seed=0)
    before = param_checksum(model.parameters())
    with torch.no_grad():
        next(model.parameters()).view(-1)[0] += 1e-3
    assert param_checksum(model.parameters()) != before


def test_model_validates_classes_and_momentum():
    with pytest.raises(ConfigError):
        DualStreamModel(TINY, n_classes=1)
    with pytest.raises(ConfigError):
        DualStreamModel(TINY, n_classes=3, momentum=1.5)
