import numpy as np
import pytest
from scipy.linalg import solve_banded

from darcylayers.tridiag import SingularSystemError, TridiagonalBatch, solve_tridiagonal, tridiagonal_matvec


def dense(lower, diag, upper):
    n = len(diag)
    A = np.diag(diag) + np.diag(lower[1:], -1) + np.diag(upper[:-1], 1)
    return A


def test_batch_matches_dense(rng):
    m, n = 5, 12
    lower, upper = rng.standard_normal((2, m, n))
    diag = 4 + rng.random((m, n))
    rhs = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
    x = TridiagonalBatch(lower, diag, upper).solve(rhs)
    for i in range(m):
        np.testing.assert_allclose(dense(lower[i], diag[i], upper[i]) @ x[i], rhs[i], atol=1e-12)
    np.testing.assert_allclose(tridiagonal_matvec(lower, diag, upper, x), rhs, atol=1e-12)


def test_single_matches_banded(rng):
    n = 30
    lower, upper = rng.standard_normal((2, n))
    diag = 5 + rng.random(n)
    b = rng.standard_normal(n)
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    np.testing.assert_allclose(solve_tridiagonal(lower, diag, upper, b), solve_banded((1, 1), ab, b), rtol=1e-12)


def test_singular():
    with pytest.raises(SingularSystemError):
        TridiagonalBatch(np.zeros((1, 3)), np.zeros((1, 3)), np.zeros((1, 3)))
