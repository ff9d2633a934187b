"""Party-private map functions producing intermediate representations.

A mapper is an affine, column-wise map ``x -> P (x - mu)``.  It is fitted
once on a party's local data and then applied unchanged to that party's
training data, the shared anchor data and its test data.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from .errors import DimensionError, RankError, ValidationError
from .linalg import _frozen, as_matrix, matmul_cols, numerical_rank, svd_truncated

MapperKind = Literal["pca", "random-projection", "linear-explicit"]
KINDS = ("pca", "random-projection", "linear-explicit")


@dataclass(frozen=True, eq=False)
class Mapper:
    kind: str
    projection: np.ndarray  # (output_dim, input_dim)
    mean: np.ndarray  # (input_dim,)
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown mapper kind {self.kind!r}")
        p = as_matrix(self.projection, "projection")
        mu = np.array(self.mean, dtype=np.float64).reshape(-1)
        if mu.shape[0] != p.shape[1]:
            raise DimensionError(f"mean has length {mu.shape[0]}, projection expects {p.shape[1]}")
        if not np.all(np.isfinite(mu)):
            raise ValidationError("mean has non-finite entries")
        if p.shape[0] > p.shape[1]:
            raise DimensionError(f"output_dim {p.shape[0]} exceeds input_dim {p.shape[1]}")
        object.__setattr__(self, "projection", p)
        object.__setattr__(self, "mean", _frozen(mu))

    @property
    def input_dim(self) -> int:
        return self.projection.shape[1]

    @property
    def output_dim(self) -> int:
        return self.projection.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Mapper):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.seed == other.seed
            and np.array_equal(self.projection, other.projection)
            and np.array_equal(self.mean, other.mean)
        )

    def __call__(self, x) -> np.ndarray:
        return apply(self, x)

    def to_arrays(self) -> dict:
        return {
            "kind": np.array(self.kind),
            "projection": np.asarray(self.projection),
            "mean": np.asarray(self.mean),
            "seed": np.array(-1 if self.seed is None else self.seed, dtype=np.int64),
        }

    @classmethod
    def from_arrays(cls, arrays) -> "Mapper":
        seed = int(arrays["seed"])
        return cls(
            kind=str(arrays["kind"]),
            projection=arrays["projection"],
            mean=arrays["mean"],
            seed=None if seed < 0 else seed,
        )


def fit_pca(x, out_dim: int) -> Mapper:
    """Fit PCA on the columns of ``x`` (features x samples).

    The projection rows are the ``out_dim`` leading left singular vectors
    of the centred data, sign-normalised by :func:`svd_truncated`.
    """
    x = as_matrix(x, "x")
    m, n = x.shape
    if n < 2:
        raise DimensionError("PCA needs at least 2 samples")
    if not 1 <= out_dim <= min(m, n):
        raise DimensionError(f"out_dim={out_dim} must lie in [1, {min(m, n)}]")
    mu = x.mean(axis=1)
    centred = x - mu[:, None]
    res = svd_truncated(centred, min(m, n))
    rank = numerical_rank(res.sigma, centred.shape)
    if rank == 0:
        raise RankError("data has zero variance", sigma=res.sigma)
    if rank < out_dim:
        raise RankError(
            f"centred data has rank {rank}, cannot extract {out_dim} principal directions",
            sigma=res.sigma,
        )
    return Mapper("pca", res.u[:, :out_dim].T, mu)


def fit_random_projection(m: int, out_dim: int, seed: int) -> Mapper:
    """Seeded Gaussian projection with orthonormalised rows and no centring."""
    if not 1 <= out_dim <= m:
        raise DimensionError(f"out_dim={out_dim} must lie in [1, {m}]")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((out_dim, m))
    q, r = np.linalg.qr(g.T)
    # fix the QR sign ambiguity so the rows stay a function of g alone
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    return Mapper("random-projection", q.T, np.zeros(m), seed=seed)


def linear_explicit(projection, mean=None) -> Mapper:
    projection = as_matrix(projection, "projection")
    if mean is None:
        mean = np.zeros(projection.shape[1])
    return Mapper("linear-explicit", projection, mean)


def apply(f: Mapper, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] != f.input_dim:
        raise DimensionError(f"mapper expects {f.input_dim} rows, got shape {x.shape}")
    return _frozen(matmul_cols(f.projection, x - f.mean[:, None]))


def fit_mapper(kind: str, x, out_dim: int, seed: int = 0) -> Mapper:
    """Fit a mapper of the given kind on local data ``x``."""
    if kind == "pca":
        return fit_pca(x, out_dim)
    if kind == "random-projection":
        return fit_random_projection(np.shape(x)[0], out_dim, seed)
    raise ValidationError(f"cannot fit mapper kind {kind!r} from data")
