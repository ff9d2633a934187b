"""Anchor-based alignment of intermediate representations.

Every party maps the shared anchor matrix with its own private mapper.  The
coordinator stacks the transposed anchor images side by side, takes the
``ell`` dominant left singular vectors ``U1`` of that stack, and uses
``Z = U1^T`` as the common target.  Each party's alignment map is then the
least-squares solution ``G_i = Z pinv(anchor_i)``, and the collaboration
representation is ``[G_1 X_1, ..., G_d X_d]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError, RankError, ValidationError
from .linalg import _frozen, as_matrix, lstsq, matmul_cols, numerical_rank, svd

GENERATIONS = ("standard-normal", "uniform-in-box", "user-supplied")


@dataclass(frozen=True, eq=False)
class AnchorSet:
    x_anc: np.ndarray  # (m, r)
    seed: Optional[int]
    generation: str

    @property
    def m(self) -> int:
        return self.x_anc.shape[0]

    @property
    def r(self) -> int:
        return self.x_anc.shape[1]

    def __eq__(self, other):
        if not isinstance(other, AnchorSet):
            return NotImplemented
        return (
            self.seed == other.seed
            and self.generation == other.generation
            and np.array_equal(self.x_anc, other.x_anc)
        )


def generate_anchor(
    m: int,
    r: int,
    seed: Optional[int] = None,
    generation: str = "standard-normal",
    low=None,
    high=None,
    data=None,
) -> AnchorSet:
    """Build the shared anchor matrix (m features x r anchor samples).

    ``uniform-in-box`` needs per-feature bounds ``low``/``high`` (scalars are
    broadcast); ``user-supplied`` passes ``data`` through unchanged.
    """
    if m < 1 or r < 1:
        raise DimensionError(f"anchor shape must be positive, got m={m}, r={r}")
    if generation == "user-supplied":
        x = as_matrix(data, "anchor data")
        if x.shape != (m, r):
            raise DimensionError(f"supplied anchor has shape {x.shape}, expected {(m, r)}")
        return AnchorSet(x, seed, generation)
    if seed is None:
        raise ValidationError("random anchor generation requires a seed")
    rng = np.random.default_rng(seed)
    if generation == "standard-normal":
        x = rng.standard_normal((m, r))
    elif generation == "uniform-in-box":
        if low is None or high is None:
            raise ValidationError("uniform-in-box anchors need low and high bounds")
        lo = np.broadcast_to(np.asarray(low, dtype=np.float64), (m,))
        hi = np.broadcast_to(np.asarray(high, dtype=np.float64), (m,))
        if np.any(hi < lo):
            raise ValidationError("anchor box has high < low")
        x = lo[:, None] + (hi - lo)[:, None] * rng.random((m, r))
    else:
        raise ValidationError(f"unknown anchor generation {generation!r}")
    return AnchorSet(as_matrix(x, "anchor"), seed, generation)


@dataclass(frozen=True, eq=False)
class CollaborationTransform:
    g: tuple  # per-party (ell, ell_i) matrices
    ell: int
    sigma: np.ndarray
    alignment_residual: float
    z: np.ndarray = field(repr=False)
    # per-party numerical rank of the anchor image; < ell_i means G_i was
    # obtained through a truncated pseudoinverse
    anchor_ranks: tuple = ()

    @property
    def parties(self) -> int:
        return len(self.g)

    @property
    def rank_deficient(self) -> tuple:
        return tuple(rk < gi.shape[1] for rk, gi in zip(self.anchor_ranks, self.g))


def _stack(anchors_tilde: Sequence[np.ndarray]) -> np.ndarray:
    if len(anchors_tilde) == 0:
        raise ValidationError("need at least one party")
    r = anchors_tilde[0].shape[1]
    for i, a in enumerate(anchors_tilde):
        if a.ndim != 2 or a.shape[1] != r:
            raise DimensionError(f"party {i} anchor image has shape {a.shape}, expected {r} columns")
        if a.shape[0] > r:
            raise DimensionError(
                f"party {i} has dimension {a.shape[0]} > r={r}; need at least as many anchors"
            )
    return np.hstack([a.T for a in anchors_tilde])


def compute_target(anchors_tilde: Sequence, ell: int):
    """Common target ``Z`` (ell x r) and the singular values of the stack.

    The stack is ``[A_1^T, ..., A_d^T]`` (r x sum ell_i).  Its ``ell``
    dominant left singular vectors, transposed, form ``Z``.
    """
    anchors_tilde = [np.asarray(a, dtype=np.float64) for a in anchors_tilde]
    stacked = _stack(anchors_tilde)
    if not 1 <= ell <= min(stacked.shape):
        raise DimensionError(f"ell={ell} must lie in [1, {min(stacked.shape)}]")
    u, sigma, _ = svd(stacked)
    rank = numerical_rank(sigma, stacked.shape)
    if rank < ell:
        raise RankError(
            f"stacked anchor matrix has rank {rank} < ell={ell}; "
            f"singular values {np.array2string(sigma, precision=3)}",
            sigma=sigma,
        )
    return _frozen(u[:, :ell].T), sigma


def compute_g(z, anchor_tilde_i) -> np.ndarray:
    """Alignment map minimising ``||Z - G A_i||_F``: ``G = Z pinv(A_i)``."""
    z = np.asarray(z, dtype=np.float64)
    a = np.asarray(anchor_tilde_i, dtype=np.float64)
    if z.shape[1] != a.shape[1]:
        raise DimensionError(f"Z has {z.shape[1]} anchor columns, party image has {a.shape[1]}")
    return lstsq(a, z)


def alignment_residual(anchors_hat: Sequence[np.ndarray]) -> float:
    """Worst pairwise disagreement of aligned anchor images.

    For each pair ``i < j`` the mean column distance
    ``mean_k ||a_ik - a_jk||`` is divided by the average of the two
    parties' mean column norms, so the value does not depend on party
    order.  The maximum over pairs is returned; a single party gives 0.
    """
    norms = [float(np.mean(np.linalg.norm(a, axis=0))) for a in anchors_hat]
    worst = 0.0
    for i in range(len(anchors_hat)):
        for j in range(i + 1, len(anchors_hat)):
            dist = float(np.mean(np.linalg.norm(anchors_hat[i] - anchors_hat[j], axis=0)))
            scale = 0.5 * (norms[i] + norms[j])
            worst = max(worst, dist / scale if scale > 0 else dist)
    return worst


def build_collaboration(anchors_tilde: Sequence, trains_tilde: Sequence, ell: Optional[int] = None):
    """Phase 2: target, per-party maps and the stacked collaboration data.

    Returns ``(transform, x_hat)`` where ``x_hat`` holds the parties'
    aligned training columns in party order.  ``ell`` defaults to the
    smallest party dimension.
    """
    if len(anchors_tilde) != len(trains_tilde):
        raise ValidationError(
            f"{len(anchors_tilde)} anchor images but {len(trains_tilde)} training matrices"
        )
    anchors_tilde = [np.asarray(a, dtype=np.float64) for a in anchors_tilde]
    trains_tilde = [np.asarray(t, dtype=np.float64) for t in trains_tilde]
    for i, (a, t) in enumerate(zip(anchors_tilde, trains_tilde)):
        if t.ndim != 2 or t.shape[0] != a.shape[0]:
            raise DimensionError(
                f"party {i}: training image has {t.shape[0]} rows, anchor image {a.shape[0]}"
            )
    if ell is None:
        ell = min(a.shape[0] for a in anchors_tilde)
    z, sigma = compute_target(anchors_tilde, ell)

    gs = [compute_g(z, a) for a in anchors_tilde]
    ranks = tuple(numerical_rank(np.linalg.svd(a, compute_uv=False), a.shape) for a in anchors_tilde)
    anchors_hat = [matmul_cols(g, a) for g, a in zip(gs, anchors_tilde)]
    x_hat = _frozen(np.hstack([matmul_cols(g, t) for g, t in zip(gs, trains_tilde)]))
    transform = CollaborationTransform(
        g=tuple(gs),
        ell=ell,
        sigma=sigma,
        alignment_residual=alignment_residual(anchors_hat),
        z=z,
        anchor_ranks=ranks,
    )
    return transform, x_hat


def transform_test(t: CollaborationTransform, party: int, y_tilde) -> np.ndarray:
    """Map a party's intermediate test data into the collaboration space."""
    if not 0 <= party < t.parties:
        raise ValidationError(f"unknown party index {party}")
    y = np.asarray(y_tilde, dtype=np.float64)
    g = t.g[party]
    if y.ndim != 2 or y.shape[0] != g.shape[1]:
        raise DimensionError(f"party {party} expects {g.shape[1]} rows, got shape {y.shape}")
    return _frozen(matmul_cols(g, y))
