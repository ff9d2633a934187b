"""Dense linear algebra used throughout the collaboration pipeline.

Matrices are plain ``numpy.ndarray`` objects of dtype float64.  Dataset
matrices follow the column convention: column ``k`` is sample ``k``.
:func:`as_matrix` is the single gate through which external data enters;
it copies, checks shape and finiteness, and freezes the result.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DimensionError, ValidationError

EPS = np.finfo(np.float64).eps
TIE_RTOL = 1e-12


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return a read-only float64 2-D copy of ``a``.

    Raises ValidationError for empty, non-2-D or non-finite input.
    """
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got {arr.ndim}-D")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"{name} must have at least one row and column, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(arr))[0])
        raise ValidationError(f"{name} has a non-finite entry at {bad}")
    arr.setflags(write=False)
    return arr


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class SvdResult(NamedTuple):
    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray


def _fix_signs(u: np.ndarray, vt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Largest-magnitude entry of each left vector made nonnegative.  Entries
    # within TIE_RTOL of the maximum count as tied; the lowest index wins.
    mag = np.abs(u)
    tied = mag >= mag.max(axis=0) * (1.0 - TIE_RTOL)
    idx = np.argmax(tied, axis=0)
    signs = np.where(u[idx, np.arange(u.shape[1])] < 0, -1.0, 1.0)
    return u * signs, vt * signs[:, None]


def svd(a) -> SvdResult:
    """Thin SVD with the deterministic sign convention applied."""
    a = np.asarray(a, dtype=np.float64)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    u, vt = _fix_signs(u, vt)
    return SvdResult(_frozen(u), _frozen(s), _frozen(vt))


def svd_truncated(a, k: int) -> SvdResult:
    """The ``k`` dominant singular triplets of ``a``.

    Each left singular vector is sign-normalised so that its entry of
    largest magnitude is nonnegative (first index wins ties); the matching
    row of ``vt`` is flipped with it.  Repeated calls on the same input are
    bitwise identical.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got {a.ndim}-D")
    kmax = min(a.shape)
    if not 1 <= k <= kmax:
        raise DimensionError(f"k={k} out of range [1, {kmax}] for shape {a.shape}")
    u, s, vt = svd(a)
    return SvdResult(_frozen(u[:, :k]), _frozen(s[:k]), _frozen(vt[:k]))


def rank_tolerance(shape: tuple[int, int], sigma_max: float) -> float:
    """Singular values at or below this are treated as zero."""
    return max(shape) * EPS * sigma_max


def numerical_rank(sigma: np.ndarray, shape: tuple[int, int]) -> int:
    if len(sigma) == 0 or sigma[0] == 0.0:
        return 0
    return int(np.sum(sigma > rank_tolerance(shape, sigma[0])))


def pseudoinverse(a) -> np.ndarray:
    """Moore-Penrose pseudoinverse via the SVD.

    Singular values below ``max(rows, cols) * eps * sigma_max`` are
    dropped, so rank-deficient input is handled by truncation.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise DimensionError(f"pseudoinverse needs a nonempty 2-D matrix, got shape {a.shape}")
    u, s, vt = svd(a)
    rank = numerical_rank(s, a.shape)
    if rank == 0:
        return _frozen(np.zeros((a.shape[1], a.shape[0])))
    inv = (vt[:rank].T / s[:rank]) @ u[:, :rank].T
    return _frozen(inv)


def lstsq(a, b) -> np.ndarray:
    """Minimum-norm ``W`` minimising ``||B - W A||_F``.

    Both ``a`` (p x n) and ``b`` (q x n) store samples as columns, so the
    solution is ``B A^+`` with shape (q x p).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError("lstsq expects 2-D matrices")
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"column mismatch: A has {a.shape[1]} columns, B has {b.shape[1]}")
    return _frozen(b @ pseudoinverse(a))


def matmul_cols(a, b) -> np.ndarray:
    """``a @ b`` with a fixed per-column summation order.

    BLAS may pick different kernels (and so different rounding) for a
    single column than for a block of columns.  Accumulating one rank-1
    update per inner index keeps every output column bitwise independent
    of which other columns were computed alongside it.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]))
    for j in range(a.shape[1]):
        out += a[:, j, None] * b[None, j, :]
    return out
