import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from disentangle.errors import NumericalError, ShapeError
from disentangle.svdo import gram, svdo_grad, svdo_loss, sym_eigen
from disentangle.tensor import Tensor, finite_difference_check


def test_gram_examples(rng):
    q, _ = np.linalg.qr(rng.standard_normal((16, 16)))
    f = (np.sqrt(2.5) * q[:4]).reshape(1, 4, 4, 4)
    np.testing.assert_allclose(gram(f, 0), 2.5 * np.eye(4), atol=1e-14)

    u = rng.standard_normal(9)
    f = np.tile(u, (3, 1)).reshape(1, 3, 3, 3)
    np.testing.assert_allclose(gram(f, 0), (u @ u) * np.ones((3, 3)), rtol=1e-14)

    f = rng.standard_normal((2, 3, 4, 5))
    g = gram(f, 1)
    rows = f[1].reshape(3, -1)
    loop = np.array([[sum(rows[i, k] * rows[j, k] for k in range(20)) for j in range(3)] for i in range(3)])
    assert np.max(np.abs(g - loop)) < 1e-12
    assert np.array_equal(g, g.T)


def test_eigen_examples():
    eig = sym_eigen(np.diag([1.0, 4.0, 9.0]))
    np.testing.assert_array_equal(eig.values, [1.0, 4.0, 9.0])
    np.testing.assert_array_equal(np.abs(eig.vectors), np.eye(3))
    np.testing.assert_allclose(sym_eigen(np.array([[2.0, 1.0], [1.0, 2.0]])).values, [1.0, 3.0], atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 2**16))
def test_eigen_properties(n, seed):
    r = np.random.default_rng(seed)
    m = r.standard_normal((n, n))
    a = m + m.T
    eig = sym_eigen(a)
    norm = np.linalg.norm(a)
    assert np.all(np.diff(eig.values) >= 0)
    assert np.linalg.norm(a @ eig.vectors - eig.vectors * eig.values) <= 1e-8 * norm
    assert np.max(np.abs(eig.vectors.T @ eig.vectors - np.eye(n))) <= 1e-10


def test_eigen_batched_matches_single(rng):
    m = rng.standard_normal((3, 5, 5))
    a = m + m.transpose(0, 2, 1)
    batched = sym_eigen(a)
    for i in range(3):
        np.testing.assert_allclose(batched.values[i], sym_eigen(a[i]).values, rtol=1e-13, atol=1e-13)


def test_eigen_errors():
    with pytest.raises(ShapeError):
        sym_eigen(np.ones((2, 3)))
    with pytest.raises(NumericalError):
        sym_eigen(np.array([[1.0, np.nan], [np.nan, 1.0]]))
    m = np.random.default_rng(0).standard_normal((6, 6))
    with pytest.raises(NumericalError):
        sym_eigen(m + m.T, max_sweeps=1)


def test_loss_examples():
    f = np.ones((1, 2, 2, 2))  # two channels, both the row (1,1,1,1)
    assert svdo_loss(Tensor(f)).item() == pytest.approx(64.0, rel=1e-14)
    q = np.eye(4)[:, :, None, None].transpose(2, 0, 1, 3).reshape(1, 4, 2, 2) * 3.0
    assert svdo_loss(Tensor(q)).item() == 0.0
    np.testing.assert_array_equal(svdo_grad(Tensor(q)), 0.0)


def test_loss_matches_oracle_four_channels(rng):
    f = rng.standard_normal((1, 4, 5, 5))
    rows = f[0].reshape(4, -1)
    ev = np.linalg.eigvalsh(rows @ rows.T)
    assert abs(svdo_loss(Tensor(f)).item() - (ev[-1] - ev[0]) ** 2) <= 1e-10 * (ev[-1] - ev[0]) ** 2


def test_gradient_on_diagonal_gram():
    # orthogonal channels with distinct norms: Gram is diagonal
    f = np.zeros((1, 4, 2, 2))
    for i, norm in enumerate([1.0, 3.0, 2.0, 0.5]):
        f[0, i].reshape(-1)[i] = norm
    g = svdo_grad(Tensor(f))
    support = [i for i in range(4) if np.any(g[0, i] != 0)]
    assert support == [1, 3]  # max-norm and min-norm channels only


def test_gradient_finite_differences(rng):
    f = Tensor(rng.standard_normal((2, 5, 4, 4)), requires_grad=True)
    assert finite_difference_check(lambda t: svdo_loss(t), f) < 1e-4


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**16), alpha=st.floats(0.05, 20.0))
def test_invariances(seed, alpha):
    r = np.random.default_rng(seed)
    f = r.standard_normal((1, 5, 3, 4))
    base = svdo_loss(Tensor(f)).item()
    assert base >= 0
    q, _ = np.linalg.qr(r.standard_normal((5, 5)))
    rotated = (q @ f[0].reshape(5, -1)).reshape(1, 5, 3, 4)
    assert svdo_loss(Tensor(rotated)).item() == pytest.approx(base, rel=1e-9)
    assert svdo_loss(Tensor(alpha * f)).item() == pytest.approx(alpha ** 4 * base, rel=1e-9)


def test_batch_mean(rng):
    f = rng.standard_normal((3, 4, 3, 3))
    per = [svdo_loss(Tensor(f[i:i + 1])).item() for i in range(3)]
    assert svdo_loss(Tensor(f)).item() == pytest.approx(np.mean(per), rel=1e-13)
