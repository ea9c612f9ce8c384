import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from disentangle.errors import ConstraintError, ShapeError
from disentangle.gain_control import B_MIN, GDN, IGDN, GainControlParams, gdn_forward, igdn_forward, project_params
from disentangle.tensor import Tensor, finite_difference_check


def _params(w, b):
    return GainControlParams(Tensor(np.asarray(w, dtype=float), requires_grad=True),
                             Tensor(np.asarray(b, dtype=float), requires_grad=True))


def _gdn_oracle(s, w, b, inverse=False):
    out = np.empty_like(s)
    n, c, h, wd = s.shape
    for a in range(n):
        for y in range(h):
            for x in range(wd):
                v = s[a, :, y, x]
                for i in range(c):
                    rad = sum(w[j, i] * v[j] ** 2 for j in range(c)) + b[i]
                    out[a, i, y, x] = v[i] * np.sqrt(rad) if inverse else v[i] / np.sqrt(rad)
    return out


def test_identity_configuration_is_exact(rng):
    s = rng.standard_normal((2, 3, 4, 4))
    p = GainControlParams.identity(3)
    np.testing.assert_array_equal(gdn_forward(Tensor(s), p).data, s)
    np.testing.assert_array_equal(igdn_forward(Tensor(s), p).data, s)


def test_hand_evaluations():
    p = _params([[1.0]], [7.0])
    assert gdn_forward(Tensor(np.full((1, 1, 2, 2), 3.0)), p).data[0, 0, 0, 0] == 0.75
    assert igdn_forward(Tensor(np.full((1, 1, 2, 2), 0.75)), p).data[0, 0, 0, 0] == 2.0625


@pytest.mark.parametrize("inverse", [False, True])
def test_matches_per_pixel_oracle(rng, inverse):
    s = rng.standard_normal((2, 3, 3, 4))
    w, b = rng.uniform(0, 1, (3, 3)), rng.uniform(0.1, 2, 3)
    f = igdn_forward if inverse else gdn_forward
    got = f(Tensor(s), _params(w, b)).data
    assert np.max(np.abs(got - _gdn_oracle(s, w, b, inverse))) < 1e-12


@pytest.mark.parametrize("cls", [GDN, IGDN])
def test_gradients(rng, cls):
    layer = cls(3)
    layer.params.w.data[...] = rng.uniform(0, 0.5, (3, 3))
    layer.params.b.data[...] = rng.uniform(0.5, 1.5, 3)
    x = Tensor(rng.standard_normal((2, 3, 4, 4)), requires_grad=True)
    r = Tensor(rng.standard_normal((2, 3, 4, 4)))
    f = lambda _t: (layer(x) * r).sum()  # noqa: E731
    for t in (x, layer.params.w, layer.params.b):
        layer.zero_grad()
        assert finite_difference_check(f, t) < 1e-4


def test_inverse_in_decoupled_regime(rng):
    s = rng.standard_normal((2, 4, 5, 5)) * 100
    p = GainControlParams.identity(4)
    p.b.data[...] = rng.uniform(1e-6, 50, 4)
    back = igdn_forward(gdn_forward(Tensor(s), p), p).data
    assert np.max(np.abs(back - s) / np.maximum(1, np.abs(s))) <= 1e-12


def test_coupled_igdn_is_not_exact_inverse(rng):
    s = rng.standard_normal((1, 3, 4, 4))
    p = GainControlParams.initial(3)
    back = igdn_forward(gdn_forward(Tensor(s), p), p).data
    assert np.max(np.abs(back - s)) > 1e-6


def test_forward_rejects_infeasible_params(rng):
    s = Tensor(rng.standard_normal((1, 2, 3, 3)))
    with pytest.raises(ConstraintError):
        gdn_forward(s, _params([[0.1, -0.3], [0.0, 0.1]], [1.0, 1.0]))
    with pytest.raises(ConstraintError):
        igdn_forward(s, _params(np.zeros((2, 2)), [1.0, 1e-9]))
    with pytest.raises(ShapeError):
        gdn_forward(Tensor(np.ones((1, 3, 2, 2))), GainControlParams.initial(2))


def test_projection_examples():
    p = _params([[0.5, -0.3], [0.2, 0.0]], [1e-9, 2.0])
    project_params(p)
    np.testing.assert_array_equal(p.w.data, [[0.5, 0.0], [0.2, 0.0]])
    np.testing.assert_array_equal(p.b.data, [B_MIN, 2.0])
    before = (p.w.data.copy(), p.b.data.copy())
    project_params(p)
    assert p.w.data.tobytes() == before[0].tobytes() and p.b.data.tobytes() == before[1].tobytes()


def test_initialization():
    p = GainControlParams.initial(3)
    np.testing.assert_array_equal(p.w.data, 0.1 * np.eye(3) + 0.01)
    np.testing.assert_array_equal(p.b.data, np.ones(3))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**16), scale=st.floats(1e-3, 1e6), delta=st.floats(0.01, 1.0))
def test_bounded_under_self_coupling(seed, scale, delta):
    r = np.random.default_rng(seed)
    w = r.uniform(0, 1, (4, 4))
    np.fill_diagonal(w, delta + r.uniform(0, 1, 4))
    s = r.standard_normal((1, 4, 3, 3)) * scale
    d = gdn_forward(Tensor(s), _params(w, r.uniform(B_MIN, 1, 4))).data
    assert np.all(np.abs(d) <= 1 / np.sqrt(delta) + 1e-12)
    assert np.all(np.sign(d) == np.sign(s))
