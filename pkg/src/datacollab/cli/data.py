"""Dataset IO and the synthetic imbalanced benchmark."""
from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..errors import LoadError, ValidationError
from ..learner import LabelMatrix
from ..linalg import as_matrix
from ..pipeline import PartyDataset


def load_dataset(path, label: str = "label"):
    """Read a CSV with a header row and one sample per row.

    Returns ``(x, labels)`` with ``x`` of shape (features, samples), i.e.
    transposed to the column-per-sample convention.  Row order is kept.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise LoadError(f"{path}: {exc}") from exc
    if not rows:
        raise LoadError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if label not in header:
        raise LoadError(f"{path}: missing label column {label!r} (header: {header})")
    if not body:
        raise LoadError(f"{path}: no data rows")
    li = header.index(label)
    feature_cols = [j for j in range(len(header)) if j != li]
    if not feature_cols:
        raise LoadError(f"{path}: no feature columns")
    x = np.empty((len(feature_cols), len(body)))
    names = []
    for i, row in enumerate(body):
        line = i + 2
        if len(row) != len(header):
            raise LoadError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
        names.append(row[li])
        for fi, j in enumerate(feature_cols):
            try:
                v = float(row[j])
            except ValueError:
                raise LoadError(f"{path}:{line}: column {header[j]!r} is not numeric: {row[j]!r}") from None
            if not math.isfinite(v):
                raise LoadError(f"{path}:{line}: column {header[j]!r} is not finite: {row[j]!r}")
            x[fi, i] = v
    return as_matrix(x, str(path)), LabelMatrix.from_names(names)


def save_dataset(path, x, labels: LabelMatrix, label: str = "label",
                 feature_names: Optional[Sequence[str]] = None) -> None:
    """Write ``x`` (features x samples) as one CSV row per sample.

    Floats are written with ``repr`` so a reload is bitwise exact.
    """
    x = np.asarray(x, dtype=np.float64)
    if feature_names is None:
        feature_names = [f"x{j}" for j in range(x.shape[0])]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(feature_names) + [label])
        for k, name in enumerate(labels.names):
            w.writerow([repr(float(v)) for v in x[:, k]] + [name])


def split_dataset(x, labels: LabelMatrix, test_fraction: float, seed: int, name: str = "party") -> PartyDataset:
    """Seeded random train/test split of a loaded dataset."""
    n = x.shape[1]
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError("test_fraction must lie strictly between 0 and 1")
    n_test = int(round(n * test_fraction))
    if n_test < 1 or n_test >= n:
        raise ValidationError(f"split of {n} samples leaves an empty side")
    order = np.random.default_rng(seed).permutation(n)
    test, train = np.sort(order[:n_test]), np.sort(order[n_test:])
    idx = labels.indices
    return PartyDataset(
        x[:, train], LabelMatrix(labels.classes, idx[train]),
        x[:, test], LabelMatrix(labels.classes, idx[test]), name,
    )


def _apportion(total: int, weights: np.ndarray) -> np.ndarray:
    # largest remainder; ties resolved by lower class index
    raw = total * weights / weights.sum()
    counts = np.floor(raw).astype(int)
    rest = total - counts.sum()
    order = sorted(range(len(raw)), key=lambda c: (-(raw[c] - counts[c]), c))
    for c in order[:rest]:
        counts[c] += 1
    return counts


def class_proportions(classes: int, dominant: int, skew: float) -> np.ndarray:
    """Dominant class gets ``1/C + skew (1 - 1/C)``; the rest share the remainder."""
    p = np.full(classes, (1.0 - skew) / classes)
    p[dominant] = 1.0 / classes + skew * (1.0 - 1.0 / classes)
    return p


def synth_imbalanced(
    m: int,
    classes: int,
    parties: int,
    per_party: int,
    skew: float,
    seed: int,
    test_per_party: Optional[int] = None,
    separation: float = 2.0,
    latent_dim: Optional[int] = None,
    noise: float = 0.2,
) -> list[PartyDataset]:
    """Gaussian class blobs split across parties with skewed class mixes.

    Party ``p`` is dominated by class ``p mod classes``; with ``parties`` a
    multiple of ``classes`` the pooled training data is balanced.  Test
    splits are class-balanced, so a party that trained almost only on its
    dominant class is handicapped when evaluated alone.  ``separation`` is
    the distance between class means in units of the within-class spread.
    The spread is 1 along ``latent_dim`` random orthogonal directions (the
    class means lie in the same subspace) and ``noise`` elsewhere.
    """
    if classes < 2:
        raise ValidationError("need at least 2 classes")
    if not 0.0 <= skew <= 1.0:
        raise ValidationError(f"skew must lie in [0, 1], got {skew}")
    if per_party < classes:
        raise ValidationError(f"per_party={per_party} is smaller than classes={classes}")
    if parties < 1 or m < 1:
        raise ValidationError("need at least one party and one feature")
    if test_per_party is None:
        test_per_party = max(classes, per_party // 2)
    if latent_dim is None:
        latent_dim = max(1, m // 2)
    if not 1 <= latent_dim <= m:
        raise ValidationError(f"latent_dim must lie in [1, {m}]")
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.standard_normal((m, m)))
    dirs = rng.standard_normal((classes, latent_dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    means = np.zeros((classes, m))
    means[:, :latent_dim] = dirs * (separation / math.sqrt(2.0))
    means = means @ basis.T
    spread = np.full(m, float(noise))
    spread[:latent_dim] = 1.0
    names = tuple(str(c) for c in range(classes))

    def draw(counts):
        y = np.repeat(np.arange(classes), counts)
        y = y[rng.permutation(len(y))]
        x = means[y].T + basis @ (spread[:, None] * rng.standard_normal((m, len(y))))
        return x, LabelMatrix(names, y)

    out = []
    uniform = np.ones(classes)
    for p in range(parties):
        xtr, ytr = draw(_apportion(per_party, class_proportions(classes, p % classes, skew)))
        xte, yte = draw(_apportion(test_per_party, uniform))
        out.append(PartyDataset(xtr, ytr, xte, yte, name=f"party{p}"))
    return out
