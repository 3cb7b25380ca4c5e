import math

import numpy as np
import pytest
import torch

from allweather.errors import ConfigError, ShapeError
from allweather.network import (
    NetworkConfig,
    RestorationNetwork,
    load_network_checkpoint,
    mapping_loss,
    restore,
    save_network_checkpoint,
    tiny_test_config,
)
from allweather.vq import Codebook

from tests.gradcheck import fd_gradient, relative_error


def tiny_net(seed=0, code_dim=16):
    torch.manual_seed(seed)
    return RestorationNetwork(tiny_test_config(code_dim))


def rand_book(k=32, dim=16, seed=1):
    rng = np.random.default_rng(seed)
    return Codebook(rng.normal(size=(k, dim)).astype(np.float32))


def test_config_validation():
    with pytest.raises(ConfigError):
        NetworkConfig(block_counts=(1, 1, 1))
    with pytest.raises(ConfigError):
        NetworkConfig(heads_per_level=(1, 2, 4))
    with pytest.raises(ConfigError):
        NetworkConfig(base_channels=6, heads_per_level=(4, 1, 1, 1))  # 6 % 4 != 0
    with pytest.raises(ConfigError):
        NetworkConfig(rv_mode="other")
    cfg = NetworkConfig()
    assert cfg.block_counts == (2, 4, 6, 4, 4, 2, 2, 2)
    assert cfg.heads_per_level == (1, 2, 4, 8)
    assert cfg.bottleneck_channels == 8 * cfg.base_channels


def test_encode_shapes_and_skips():
    net = tiny_net()
    x = torch.randn(1, 3, 64, 64)
    f_mi, skips = net.encode(x)
    assert f_mi.shape == (1, 64, 8, 8)  # 8C with C=8
    assert len(skips) == 3
    assert [tuple(s.shape) for s in skips] == [(1, 8, 64, 64), (1, 16, 32, 32), (1, 32, 16, 16)]


def test_encode_rejects_bad_dims():
    net = tiny_net()
    with pytest.raises(ShapeError):
        net.encode(torch.randn(1, 3, 60, 64))


def test_encode_deterministic():
    net = tiny_net()
    x = torch.randn(1, 3, 32, 32)
    a, _ = net.encode(x)
    b, _ = net.encode(x)
    assert torch.equal(a, b)


def test_map_features_contract():
    net = tiny_net()
    book = rand_book()
    x = torch.randn(1, 3, 32, 32)
    f_mi, _ = net.encode(x)
    out = net.map_features(f_mi, book.torch_vectors())
    assert out.predicted.shape == (1, 16, 4, 4)
    assert out.matched.shape == (1, 16, 4, 4)
    # every matched vector is literally a codebook row
    flat = out.matched[0].permute(1, 2, 0).reshape(-1, 16).numpy()
    idx = out.indices[0].reshape(-1).numpy()
    np.testing.assert_array_equal(flat, book.vectors[idx])


def test_map_features_matches_brute_force():
    net = tiny_net()
    book = rand_book()
    f_mi, _ = net.encode(torch.randn(2, 3, 32, 32))
    out = net.map_features(f_mi, book.torch_vectors())
    pred = out.predicted.detach().permute(0, 2, 3, 1).reshape(-1, 16).numpy()
    expected = np.array(
        [int(np.argmin(((book.vectors - v) ** 2).sum(axis=1))) for v in pred]
    )
    np.testing.assert_array_equal(out.indices.reshape(-1).numpy(), expected)


def test_map_features_dim_mismatch():
    net = tiny_net()
    book = rand_book(dim=8)
    f_mi, _ = net.encode(torch.randn(1, 3, 32, 32))
    with pytest.raises(ShapeError):
        net.map_features(f_mi, book.torch_vectors())


def test_mapping_loss_reference_points():
    a = torch.randn(1, 8, 4, 4, dtype=torch.float64)
    assert float(mapping_loss(a, a)) == pytest.approx(0.0, abs=1e-12)
    assert float(mapping_loss(a, -a)) == pytest.approx(2.0, abs=1e-12)

    x = torch.zeros(1, 2, 2, 2)
    y = torch.zeros(1, 2, 2, 2)
    x[:, 0] = 1.0  # constant field along channel 0
    y[:, 1] = 1.0  # orthogonal constant field
    assert float(mapping_loss(x, y)) == pytest.approx(1.0, abs=1e-12)


def test_mapping_loss_zero_norm_counts_as_zero_cosine():
    from allweather.network import ZERO_NORM_EVENTS

    before = ZERO_NORM_EVENTS["count"]
    x = torch.zeros(1, 4, 1, 1)
    y = torch.ones(1, 4, 1, 1)
    assert float(mapping_loss(x, y)) == pytest.approx(1.0)
    assert ZERO_NORM_EVENTS["count"] == before + 1


def test_mapping_loss_range():
    g = torch.Generator().manual_seed(3)
    for _ in range(5):
        a = torch.randn(1, 8, 3, 3, generator=g)
        b = torch.randn(1, 8, 3, 3, generator=g)
        v = float(mapping_loss(a, b))
        assert 0.0 <= v <= 2.0


def test_mapping_loss_gradient():
    torch.manual_seed(7)
    a = torch.randn(1, 4, 2, 2, dtype=torch.float64, requires_grad=True)
    b = torch.randn(1, 4, 2, 2, dtype=torch.float64)
    mapping_loss(a, b).backward()
    analytic = a.grad.clone()
    fd = fd_gradient(lambda t: mapping_loss(t, b), a.detach().clone())
    assert relative_error(analytic, fd) < 1e-4


def test_restore_shape_and_range():
    net = tiny_net()
    book = rand_book()
    img = np.random.default_rng(5).random((64, 64, 3)).astype(np.float32)
    out = restore(img, net, book)
    assert out.shape == img.shape
    assert out.min() >= 0 and out.max() <= 1
    np.testing.assert_array_equal(out, restore(img, net, book))


def test_forward_rv_modes_differ():
    net = tiny_net()
    book = rand_book()
    x = torch.randn(1, 3, 32, 32)
    with torch.no_grad():
        raw, _, _ = net(x, book.torch_vectors(), rv_mode="raw")
        qnt, _, _ = net(x, book.torch_vectors(), rv_mode="quantized")
    assert not torch.equal(raw, qnt)


def test_quantized_rv_detached_raw_rv_attached():
    net = tiny_net()
    book = rand_book()
    x = torch.randn(1, 3, 32, 32)

    out, _, _ = net(x, book.torch_vectors(), rv_mode="quantized")
    out.sum().backward()
    mapping_grads = [p.grad for p in net.mapping.parameters()]
    assert all(g is None or torch.all(g == 0) for g in mapping_grads)

    net.zero_grad()
    out, _, _ = net(x, book.torch_vectors(), rv_mode="raw")
    out.sum().backward()
    total = sum(float(p.grad.abs().sum()) for p in net.mapping.parameters() if p.grad is not None)
    assert total > 0


def test_end_to_end_gradient_matches_finite_differences():
    # L1(restore(D), C) gradient w.r.t. a sampled parameter, 16x16 toy config
    torch.manual_seed(11)
    net = RestorationNetwork(tiny_test_config(code_dim=8)).double()
    book = torch.from_numpy(
        np.random.default_rng(2).normal(size=(8, 8)).astype(np.float64)
    )
    d = torch.rand(1, 3, 16, 16, dtype=torch.float64)
    c = torch.rand(1, 3, 16, 16, dtype=torch.float64)

    def loss_fn():
        out, _, _ = net(d, book)
        return (out.clamp(0, 1) - c).abs().mean()

    loss_fn().backward()
    param = net.head.weight
    analytic = param.grad.reshape(-1)[:24].clone()

    h = 1e-6
    fd = torch.zeros_like(analytic)
    with torch.no_grad():
        flat = param.reshape(-1)
        for j in range(fd.numel()):
            orig = flat[j].item()
            flat[j] = orig + h
            fp = float(loss_fn())
            flat[j] = orig - h
            fm = float(loss_fn())
            flat[j] = orig
            fd[j] = (fp - fm) / (2 * h)

    assert relative_error(analytic, fd) < 1e-3


def test_checkpoint_round_trip(tmp_path):
    net = tiny_net(seed=13)
    book = rand_book()
    p = tmp_path / "net.pt"
    save_network_checkpoint(p, net)
    loaded = load_network_checkpoint(p)
    assert loaded.config == net.config
    img = np.random.default_rng(6).random((32, 32, 3)).astype(np.float32)
    np.testing.assert_array_equal(restore(img, net, book), restore(img, loaded, book))
