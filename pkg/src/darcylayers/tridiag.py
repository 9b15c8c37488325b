"""Batched tridiagonal solves.

A batch of ``m`` independent systems of size ``n`` is stacked into one
tridiagonal matrix of size ``m*n`` whose couplings across block boundaries are
zero, then factored once with LAPACK ``?gttrf`` and reused through ``?gttrs``.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import lapack


class SingularSystemError(np.linalg.LinAlgError):
    pass


class TridiagonalBatch:
    """Factorization of ``m`` real tridiagonal systems.

    Parameters
    ----------
    lower, diag, upper : array_like, shape (m, n)
        ``lower[:, i]`` multiplies ``x[i-1]`` in row ``i`` (``lower[:, 0]`` is
        ignored); ``upper[:, i]`` multiplies ``x[i+1]`` (``upper[:, -1]`` is
        ignored).
    """

    def __init__(self, lower, diag, upper):
        diag = np.atleast_2d(np.asarray(diag, dtype=float))
        lower = np.broadcast_to(np.asarray(lower, dtype=float), diag.shape).copy()
        upper = np.broadcast_to(np.asarray(upper, dtype=float), diag.shape).copy()
        m, n = diag.shape
        self.shape = (m, n)
        lower[:, 0] = 0.0
        upper[:, -1] = 0.0
        dl = lower.reshape(-1)[1:]
        du = upper.reshape(-1)[:-1]
        dl, d, du, du2, ipiv, info = lapack.dgttrf(dl, diag.reshape(-1).copy(), du)
        if info > 0:
            raise SingularSystemError(f"exactly zero pivot at row {info - 1}")
        if info < 0:
            raise ValueError(f"illegal argument {-info} to dgttrf")
        self._factors = (dl, d, du, du2, ipiv)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve for ``rhs`` of shape ``(m, n)``; complex right-hand sides are fine."""
        rhs = np.asarray(rhs)
        m, n = self.shape
        if rhs.shape != (m, n):
            raise ValueError(f"rhs shape {rhs.shape} != {(m, n)}")
        if np.iscomplexobj(rhs):
            b = np.stack([rhs.real.reshape(-1), rhs.imag.reshape(-1)], axis=1)
        else:
            b = rhs.reshape(-1, 1).astype(float)
        x, info = lapack.dgttrs(*self._factors, np.asfortranarray(b))
        if info != 0:
            raise ValueError(f"dgttrs failed with info={info}")
        if np.iscomplexobj(rhs):
            return (x[:, 0] + 1j * x[:, 1]).reshape(m, n)
        return x[:, 0].reshape(m, n)


def solve_tridiagonal(lower, diag, upper, rhs) -> np.ndarray:
    """One-shot solve of a single system (1-D arrays) or a batch (2-D arrays)."""
    rhs = np.asarray(rhs)
    single = rhs.ndim == 1
    fac = TridiagonalBatch(np.atleast_2d(lower), np.atleast_2d(diag), np.atleast_2d(upper))
    x = fac.solve(np.atleast_2d(rhs))
    return x[0] if single else x


def tridiagonal_matvec(lower, diag, upper, x) -> np.ndarray:
    """``A @ x`` for a batch of tridiagonal matrices in the same layout."""
    x = np.asarray(x)
    y = np.asarray(diag) * x
    y[..., 1:] += np.asarray(lower)[..., 1:] * x[..., :-1]
    y[..., :-1] += np.asarray(upper)[..., :-1] * x[..., 1:]
    return y
