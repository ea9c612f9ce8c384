import numpy as np
import pytest

from disentangle.errors import ShapeError, TrainingError
from disentangle.optim import AdamState, adam_step, loss_terms, lr_at, total_loss
from disentangle.svdo import svdo_loss
from disentangle.tensor import Tensor


def test_lr_schedule_examples():
    assert lr_at(0) == 1e-4
    assert lr_at(8999) == 1e-4
    assert lr_at(9000) == 8e-5
    assert lr_at(18000) == 6.4e-5
    assert lr_at(5, lr0=1.0, decay=0.5, interval=2) == 0.25
    with pytest.raises(ValueError):
        lr_at(-1)


def test_adam_zero_gradient_leaves_fresh_params():
    p = {"x": Tensor(np.array([1.0, -2.0]), requires_grad=True)}
    state = AdamState()
    adam_step(p, {"x": np.zeros(2)}, state, lr=0.1)
    np.testing.assert_array_equal(p["x"].data, [1.0, -2.0])
    adam_step(p, {"x": None}, state, lr=0.1)
    np.testing.assert_array_equal(p["x"].data, [1.0, -2.0])


def test_adam_moments_decay_under_zero_gradient():
    p = {"x": Tensor(np.ones(3), requires_grad=True)}
    state = AdamState()
    adam_step(p, {"x": np.full(3, 2.0)}, state, lr=0.01)
    m0, v0 = state.m["x"].copy(), state.v["x"].copy()
    adam_step(p, {"x": np.zeros(3)}, state, lr=0.01)
    np.testing.assert_allclose(state.m["x"], 0.9 * m0, rtol=1e-15)
    np.testing.assert_allclose(state.v["x"], 0.999 * v0, rtol=1e-15)


def test_adam_first_step_moves_by_lr(rng):
    g = rng.uniform(0.1, 5.0, 6) * rng.choice([-1, 1], 6)
    p = {"x": Tensor(np.zeros(6), requires_grad=True)}
    adam_step(p, {"x": g}, AdamState(), lr=0.01)
    np.testing.assert_allclose(p["x"].data, -0.01 * np.sign(g), rtol=1e-6)


def test_adam_converges_on_quadratic():
    x = Tensor(np.ones(4), requires_grad=True)
    state = AdamState()
    norms = []
    for _ in range(100):
        adam_step({"x": x}, {"x": 2.0 * x.data}, state, lr=0.1)
        norms.append(np.linalg.norm(x.data))
    norms = np.array(norms)
    # lr 0.1 overshoots and rings; the envelope of successive peaks shrinks monotonically
    peaks = [norms[i] for i in range(1, 99) if norms[i - 1] < norms[i] >= norms[i + 1]]
    assert len(peaks) >= 4 and np.all(np.diff(peaks) < 0)
    assert np.all(norms[:10] < 2.0) and norms[-1] < 0.01


def test_adam_errors():
    p = {"x": Tensor(np.ones(2), requires_grad=True)}
    state = AdamState()
    with pytest.raises(TrainingError, match="'x'"):
        adam_step(p, {"x": np.array([1.0, np.nan])}, state, lr=0.1)
    assert state.step == 0
    np.testing.assert_array_equal(p["x"].data, 1.0)
    with pytest.raises(ShapeError):
        adam_step(p, {"x": np.ones(3)}, state, lr=0.1)


def test_loss_examples(rng):
    target = rng.uniform(0, 1, (2, 3, 4, 4))
    iso = np.eye(4)[:, :, None, None].transpose(2, 0, 1, 3).reshape(1, 4, 2, 2)
    assert total_loss(Tensor(target), Tensor(target), [Tensor(iso)]).item() == 0.0

    pred = target + rng.standard_normal(target.shape) * 0.1
    feats = [Tensor(rng.standard_normal((2, 4, 3, 3))) for _ in range(3)]
    l1 = np.mean(np.abs(pred - target))
    assert total_loss(Tensor(pred), Tensor(target), feats, beta=0.0).item() == l1

    beta = 1e-3
    svdo = np.mean([svdo_loss(f).item() for f in feats])
    total, l1_t, svdo_t = loss_terms(Tensor(pred), Tensor(target), feats, beta)
    assert abs(total.item() - (l1 + beta * svdo)) < 1e-10
    assert l1_t.item() == l1 and svdo_t.item() == pytest.approx(svdo, rel=1e-14)
    with pytest.raises(ShapeError):
        total_loss(Tensor(pred), Tensor(target[:1]), feats)


def test_loss_gradient_reaches_features(rng):
    pred = Tensor(rng.uniform(0, 1, (1, 3, 4, 4)), requires_grad=True)
    feat = Tensor(rng.standard_normal((1, 4, 4, 4)), requires_grad=True)
    total_loss(pred, Tensor(np.zeros((1, 3, 4, 4))), [feat], beta=1e-2).backward()
    assert np.any(feat.grad) and np.any(pred.grad)
