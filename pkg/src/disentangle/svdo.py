"""Spectral value difference orthogonality (SVDO) penalty.

For a feature map flattened to a ``C x (H*W)`` matrix ``F``, the penalty is
``(lambda_max(F F^T) - lambda_min(F F^T))**2``, averaged over the batch.
Its gradient w.r.t. ``F`` is

    4 * gap * (v_max v_max^T - v_min v_min^T) @ F

using ``d lambda / dF = 2 v v^T F`` for a simple eigenvalue of ``F F^T``.
Eigenpairs come from a cyclic Jacobi solver, vectorized over the batch.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import NumericalError, ShapeError
from .tensor import Tensor

DEGENERACY_TOL = 1e-9
MAX_SWEEPS = 50
OFF_TOL = 1e-12


class EigenPair(NamedTuple):
    values: np.ndarray   # (..., C) ascending
    vectors: np.ndarray  # (..., C, C), column k pairs with values[..., k]


def gram(features, batch_index: int | None = None) -> np.ndarray:
    """Channel Gram matrix ``F F^T`` of one batch element (or all, if index is None)."""
    data = features.data if isinstance(features, Tensor) else np.asarray(features, dtype=np.float64)
    if data.ndim != 4:
        raise ShapeError(f"gram expects an N x C x H x W feature, got shape {data.shape}")
    if batch_index is not None:
        data = data[batch_index:batch_index + 1]
    mats = data.reshape(data.shape[0], data.shape[1], -1)
    g = mats @ mats.transpose(0, 2, 1)
    g = 0.5 * (g + g.transpose(0, 2, 1))
    return g[0] if batch_index is not None else g


def sym_eigen(a: np.ndarray, max_sweeps: int = MAX_SWEEPS, tol: float = OFF_TOL) -> EigenPair:
    """Eigen-decompose symmetric matrices with cyclic Jacobi rotations.

    Accepts a single ``C x C`` matrix or a stack ``B x C x C``. Sweeps until
    the off-diagonal Frobenius norm of every matrix falls below
    ``tol * ||A||_F``. Eigenvalues are returned ascending (stable sort).
    """
    a = np.array(a, dtype=np.float64)
    single = a.ndim == 2
    if single:
        a = a[None]
    if a.ndim != 3 or a.shape[1] != a.shape[2]:
        raise ShapeError(f"sym_eigen expects square matrices, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericalError("sym_eigen received non-finite entries")
    bsz, n, _ = a.shape
    a = 0.5 * (a + a.transpose(0, 2, 1))
    v = np.broadcast_to(np.eye(n), (bsz, n, n)).copy()
    scale = np.sqrt((a * a).sum(axis=(1, 2)))
    iu = np.triu_indices(n, 1)

    def off_norm():
        return np.sqrt(2.0 * (a[:, iu[0], iu[1]] ** 2).sum(axis=1))

    off = off_norm()
    sweeps = 0
    while np.any(off > tol * scale):
        if sweeps >= max_sweeps:
            worst = float(np.max(off / np.where(scale > 0, scale, 1.0)))
            raise NumericalError(
                f"Jacobi did not converge in {max_sweeps} sweeps (n={n}, relative off-norm {worst:.3e})")
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[:, p, q]
                active = apq != 0.0
                if not active.any():
                    continue
                safe = np.where(active, apq, 1.0)
                theta = (a[:, q, q] - a[:, p, p]) / (2.0 * safe)
                big = np.abs(theta) > 1e150
                small = np.where(big, 0.0, theta)
                root = np.sqrt(small * small + 1.0)
                t = np.where(big, 0.5 / np.where(big, theta, 1.0), np.sign(theta) / (np.abs(theta) + root))
                t = np.where(theta == 0.0, 1.0, t)
                t = np.where(active, t, 0.0)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                cc, ss = c[:, None], s[:, None]

                col_p, col_q = a[:, :, p].copy(), a[:, :, q].copy()
                a[:, :, p] = cc * col_p - ss * col_q
                a[:, :, q] = ss * col_p + cc * col_q
                row_p, row_q = a[:, p, :].copy(), a[:, q, :].copy()
                a[:, p, :] = cc * row_p - ss * row_q
                a[:, q, :] = ss * row_p + cc * row_q
                a[active, p, q] = 0.0
                a[active, q, p] = 0.0

                vp, vq = v[:, :, p].copy(), v[:, :, q].copy()
                v[:, :, p] = cc * vp - ss * vq
                v[:, :, q] = ss * vp + cc * vq
        sweeps += 1
        off = off_norm()

    values = np.diagonal(a, axis1=1, axis2=2).copy()
    order = np.argsort(values, axis=1, kind="stable")
    values = np.take_along_axis(values, order, axis=1)
    vectors = np.take_along_axis(v, order[:, None, :], axis=2)
    if single:
        return EigenPair(values[0], vectors[0])
    return EigenPair(values, vectors)


def _extremes(eig: EigenPair) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-matrix (gap, lambda_min vector, lambda_max vector, index of lambda_max).

    On ties the lowest sorted index holding the extreme value is chosen.
    """
    vals, vecs = eig.values, eig.vectors
    top = vals[:, -1:]
    imax = np.argmax(vals == top, axis=1)
    idx = np.arange(vals.shape[0])
    gap = vals[idx, imax] - vals[:, 0]
    return gap, vecs[:, :, 0], vecs[idx, :, imax], imax


def _loss_and_grad(data: np.ndarray) -> tuple[float, np.ndarray]:
    n, c = data.shape[:2]
    mats = data.reshape(n, c, -1)
    eig = sym_eigen(gram(data))
    gap, vmin, vmax, _ = _extremes(eig)
    # Gaps at the solver's resolution are rounding noise: treat them as an
    # exactly degenerate spectrum (zero loss and zero gradient).
    resolved = gap > np.maximum(DEGENERACY_TOL, OFF_TOL * np.abs(eig.values[:, -1]))
    gap = np.where(resolved, gap, 0.0)
    loss = float(np.mean(gap ** 2))
    proj = vmax[:, :, None] * vmax[:, None, :] - vmin[:, :, None] * vmin[:, None, :]
    coef = (4.0 * gap)[:, None, None]
    grad = (coef * proj) @ mats / n
    return loss, grad.reshape(data.shape)


def svdo_grad(features) -> np.ndarray:
    """Analytic gradient of :func:`svdo_loss`; exactly zero for near-degenerate spectra."""
    data = features.data if isinstance(features, Tensor) else np.asarray(features, dtype=np.float64)
    if data.ndim != 4:
        raise ShapeError(f"svdo expects an N x C x H x W feature, got shape {data.shape}")
    return _loss_and_grad(data)[1]


def svdo_loss(features: Tensor) -> Tensor:
    """Batch-mean squared eigen-gap of the channel Gram matrix, as a differentiable scalar."""
    if features.ndim != 4:
        raise ShapeError(f"svdo expects an N x C x H x W feature, got shape {features.shape}")
    loss, grad = _loss_and_grad(features.data)
    return Tensor._make(np.asarray(loss), (features,), lambda g: (float(g) * grad,))
