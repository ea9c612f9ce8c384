import numpy as np
import pytest

from disentangle.errors import ConfigError, ShapeError
from disentangle.layers import (ChannelAttention, Conv2d, Fusion, Module, ResBlock, channel_attention,
                                fuse_branches, resblock)
from disentangle.tensor import Tensor, finite_difference_check


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _ca_oracle(x, ca):
    """Straight-line squeeze-and-excitation evaluation."""
    pooled = x.mean(axis=(2, 3))                                      # N x C
    w1, b1 = ca.fc1.weight.data[:, :, 0, 0], ca.fc1.bias.data
    w2, b2 = ca.fc2.weight.data[:, :, 0, 0], ca.fc2.bias.data
    hidden = np.maximum(pooled @ w1.T + b1, 0.0)
    s = _sigmoid(hidden @ w2.T + b2)
    return x * s[:, :, None, None]


def test_ca_zero_params_halves(rng):
    ca = ChannelAttention(8, 4, rng=rng)
    for p in ca.parameters():
        p.data[...] = 0.0
    x = rng.standard_normal((2, 8, 4, 4))
    np.testing.assert_array_equal(channel_attention(Tensor(x), ca).data, x / 2)


def test_ca_saturated_is_near_identity(rng):
    ca = ChannelAttention(8, 4, rng=rng)
    ca.set_saturated(20.0)
    x = rng.standard_normal((2, 8, 4, 4))
    assert np.max(np.abs(ca(Tensor(x)).data - x)) < 1e-8 * np.max(np.abs(x))


def test_ca_matches_oracle(rng):
    ca = ChannelAttention(8, 4, rng=rng)
    ca.fc1.bias.data[...] += 0.3
    x = rng.standard_normal((3, 8, 5, 6))
    assert np.max(np.abs(ca(Tensor(x)).data - _ca_oracle(x, ca))) < 1e-12


def test_ca_is_per_channel_scaling(rng):
    ca = ChannelAttention(8, 2, rng=rng)
    x = rng.uniform(0.5, 2.0, (2, 8, 4, 5))
    ratio = ca(Tensor(x)).data / x
    assert np.allclose(ratio, ratio[:, :, :1, :1], rtol=0, atol=1e-15)
    assert np.all((ratio > 0) & (ratio < 1))


def test_ca_errors(rng):
    with pytest.raises(ConfigError):
        ChannelAttention(6, 4)
    with pytest.raises(ShapeError):
        ChannelAttention(8, 4, rng=rng)(Tensor(np.zeros((1, 4, 3, 3))))


def test_resblock_zero_is_identity_and_zero_maps_zero(rng):
    rb = ResBlock(4, rng=rng)
    x = rng.standard_normal((2, 4, 5, 5))
    rb_zero = ResBlock(4, rng=rng)
    rb_zero.set_zero()
    np.testing.assert_array_equal(resblock(Tensor(x), rb_zero).data, x)
    rb.conv1.bias.data[...] = 0.0
    rb.conv2.bias.data[...] = 0.0
    np.testing.assert_array_equal(rb(Tensor(np.zeros((1, 4, 3, 3)))).data, 0.0)
    with pytest.raises(ShapeError):
        rb(Tensor(np.zeros((1, 3, 3, 3))))


def test_resblock_gradient(rng):
    rb = ResBlock(3, rng=rng)
    x = Tensor(rng.standard_normal((2, 3, 5, 5)), requires_grad=True)
    r = Tensor(rng.standard_normal((2, 3, 5, 5)))
    assert finite_difference_check(lambda t: (rb(t) * r).sum(), x) < 1e-4


def test_fusion_duplicate_average_recovers_lower(rng):
    c = 4
    fu = Fusion(c, 4, rng=rng)
    fu.ca.set_saturated(40.0)
    fu.conv.set_zero()
    for i in range(c):
        fu.conv.weight.data[i, i, 0, 0] = 0.5
        fu.conv.weight.data[i, c + i, 0, 0] = 0.5
    x = rng.standard_normal((2, c, 4, 4))
    assert np.max(np.abs(fu(Tensor(x), Tensor(x)).data - x)) < 1e-12


def test_fusion_zero_inputs_zero_output(rng):
    fu = Fusion(4, 4, rng=rng)
    fu.conv.bias.data[...] = 0.0
    z = Tensor(np.zeros((1, 4, 3, 3)))
    np.testing.assert_array_equal(fu(z, z).data, 0.0)


def test_fusion_compositional_oracle(rng):
    fu = Fusion(4, 4, rng=rng)
    a, b = rng.standard_normal((2, 4, 5, 5)), rng.standard_normal((2, 4, 5, 5))
    gated = _ca_oracle(np.concatenate([a, b], axis=1), fu.ca)
    w, bias = fu.conv.weight.data[:, :, 0, 0], fu.conv.bias.data
    expected = np.einsum("oc,nchw->nohw", w, gated) + bias[None, :, None, None]
    got = fuse_branches(Tensor(a), Tensor(b), fu.ca, fu.conv).data
    assert np.max(np.abs(got - expected)) < 1e-12
    np.testing.assert_array_equal(got, fu(Tensor(a), Tensor(b)).data)
    with pytest.raises(ShapeError):
        fu(Tensor(a), Tensor(b[:, :, :4]))


def test_module_parameter_walk(rng):
    fu = Fusion(4, 2, rng=rng)
    names = [n for n, _ in fu.named_parameters()]
    assert names == ["ca.fc1.weight", "ca.fc1.bias", "ca.fc2.weight", "ca.fc2.bias", "conv.weight", "conv.bias"]
    assert fu.num_params() == (8 * 4 + 4) + (4 * 8 + 8) + (8 * 4 + 4)
    assert isinstance(fu, Module)


def test_conv_module_init_bound(rng):
    conv = Conv2d(3, 5, 3, rng=rng)
    assert np.all(np.abs(conv.weight.data) <= 1 / np.sqrt(27))
    with pytest.raises(ConfigError):
        conv.set_identity()
    with pytest.raises(ConfigError):
        Conv2d(3, 3, 2)
    square = Conv2d(3, 3, 3, rng=rng)
    square.set_identity()
    x = rng.standard_normal((1, 3, 4, 4))
    np.testing.assert_array_equal(square(Tensor(x)).data, x)
