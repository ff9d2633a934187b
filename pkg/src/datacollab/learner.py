"""Phase 3 learners trained on the collaboration representation.

The reference learner is a closed-form ridge / least-squares classifier on
one-hot targets.  With ``ridge=0`` its argmax predictions are invariant to
any invertible re-parameterisation of the features, which is what makes the
collaboration target's inherent ambiguity harmless.  A k-nearest-neighbour
classifier is provided as a contrast learner without that invariance.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DimensionError, ValidationError
from .linalg import _frozen, lstsq, matmul_cols

DEFAULT_RIDGE = 1e-8
DEFAULT_K = 5


@dataclass(frozen=True, eq=False)
class LabelMatrix:
    classes: tuple
    indices: np.ndarray  # (n,) int64, position in ``classes``

    def __post_init__(self):
        classes = tuple(str(c) for c in self.classes)
        if len(set(classes)) != len(classes):
            raise ValidationError(f"duplicate class names in {classes}")
        idx = np.array(self.indices, dtype=np.int64).reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= len(classes)):
            raise ValidationError("label index out of range of the class table")
        idx.setflags(write=False)
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "indices", idx)

    @classmethod
    def from_names(cls, names: Iterable, classes: Optional[Sequence] = None) -> "LabelMatrix":
        names = [str(v) for v in names]
        if classes is None:
            classes = sorted(set(names))
        lookup = {c: i for i, c in enumerate(str(c) for c in classes)}
        try:
            idx = [lookup[v] for v in names]
        except KeyError as exc:
            raise ValidationError(f"label {exc.args[0]!r} not in class table") from None
        return cls(tuple(classes), np.array(idx, dtype=np.int64))

    @property
    def n(self) -> int:
        return int(self.indices.shape[0])

    @property
    def names(self) -> list:
        return [self.classes[i] for i in self.indices]

    @property
    def onehot(self) -> np.ndarray:
        out = np.zeros((len(self.classes), self.n))
        out[self.indices, np.arange(self.n)] = 1.0
        return out

    def with_classes(self, classes: Sequence) -> "LabelMatrix":
        return LabelMatrix.from_names(self.names, classes)

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, LabelMatrix):
            return NotImplemented
        return self.classes == other.classes and np.array_equal(self.indices, other.indices)


def concat_labels(blocks: Sequence[LabelMatrix]) -> LabelMatrix:
    """Concatenate label blocks over the sorted union of their classes."""
    classes = sorted(set().union(*(b.classes for b in blocks)))
    names = [name for b in blocks for name in b.names]
    return LabelMatrix.from_names(names, classes)


@dataclass(frozen=True, eq=False)
class TrainedModel:
    kind: str
    classes: tuple
    w: Optional[np.ndarray] = None  # (l, ell)
    b: Optional[np.ndarray] = None  # (l,)
    ridge: float = 0.0
    x_train: Optional[np.ndarray] = None
    y_train: Optional[np.ndarray] = None
    k: int = DEFAULT_K

    @property
    def input_dim(self) -> int:
        return self.w.shape[1] if self.kind == "least-squares" else self.x_train.shape[0]

    def to_arrays(self) -> dict:
        out = {
            "kind": np.array(self.kind),
            "classes": np.array(self.classes),
            "ridge": np.array(self.ridge),
            "k": np.array(self.k),
        }
        for name in ("w", "b", "x_train", "y_train"):
            val = getattr(self, name)
            if val is not None:
                out[name] = np.asarray(val)
        return out

    @classmethod
    def from_arrays(cls, arrays) -> "TrainedModel":
        get = lambda key: arrays[key] if key in arrays else None  # noqa: E731
        return cls(
            kind=str(arrays["kind"]),
            classes=tuple(str(c) for c in arrays["classes"]),
            w=get("w"),
            b=get("b"),
            ridge=float(arrays["ridge"]),
            x_train=get("x_train"),
            y_train=get("y_train"),
            k=int(arrays["k"]),
        )


def _fit_least_squares(x, targets, ridge, fit_intercept):
    xa = np.vstack([x, np.ones((1, x.shape[1]))]) if fit_intercept else x
    if ridge == 0.0:
        wa = lstsq(xa, targets)
    else:
        gram = xa @ xa.T + ridge * np.eye(xa.shape[0])
        wa = np.linalg.solve(gram, xa @ targets.T).T
    if fit_intercept:
        return wa[:, :-1], wa[:, -1]
    return wa, np.zeros(targets.shape[0])


def train(
    x_hat,
    labels: LabelMatrix,
    kind: str = "least-squares",
    ridge: float = DEFAULT_RIDGE,
    k: int = DEFAULT_K,
    fit_intercept: bool = True,
) -> TrainedModel:
    """Fit ``L ~ h(X)`` on samples stored as the columns of ``x_hat``.

    least-squares minimises ``||L - W X - b 1^T||^2 + ridge (||W||^2 + ||b||^2)``
    in closed form; ``ridge=0`` gives the minimum-norm solution.
    """
    x = np.asarray(x_hat, dtype=np.float64)
    if len(labels.classes) == 0 or labels.n == 0:
        raise ValidationError("cannot train on empty labels")
    if x.ndim != 2 or x.shape[1] != labels.n:
        raise DimensionError(f"{labels.n} labels for data of shape {x.shape}")
    if kind == "least-squares":
        if ridge < 0:
            raise ValidationError("ridge must be nonnegative")
        w, b = _fit_least_squares(x, labels.onehot, float(ridge), fit_intercept)
        return TrainedModel(kind, labels.classes, w=_frozen(w), b=_frozen(b), ridge=float(ridge))
    if kind == "knn":
        if k < 1:
            raise ValidationError("k must be at least 1")
        return TrainedModel(
            kind, labels.classes, x_train=_frozen(x.copy()), y_train=labels.indices, k=int(k)
        )
    raise ValidationError(f"unknown learner kind {kind!r}")


def decision_scores(model: TrainedModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return matmul_cols(model.w, x) + model.b[:, None]


def predict(model: TrainedModel, x) -> LabelMatrix:
    """Predicted labels for the columns of ``x``; ties go to the lowest class index."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != model.input_dim:
        raise DimensionError(f"model expects {model.input_dim} rows, got shape {x.shape}")
    if model.kind == "least-squares":
        idx = np.argmax(decision_scores(model, x), axis=0)
    else:
        ncls = len(model.classes)
        k = min(model.k, model.x_train.shape[1])
        idx = np.empty(x.shape[1], dtype=np.int64)
        for col in range(x.shape[1]):
            d2 = np.sum((model.x_train - x[:, col, None]) ** 2, axis=0)
            nearest = np.argsort(d2, kind="stable")[:k]
            votes = np.bincount(model.y_train[nearest], minlength=ncls)
            idx[col] = np.argmax(votes)
    return LabelMatrix(model.classes, idx)


def _names(labels):
    return labels.names if isinstance(labels, LabelMatrix) else [str(v) for v in labels]


def accuracy(predicted, truth) -> float:
    p, t = _names(predicted), _names(truth)
    if len(p) != len(t):
        raise ValidationError(f"length mismatch: {len(p)} predictions, {len(t)} labels")
    if not p:
        raise ValidationError("accuracy of an empty sequence is undefined")
    return sum(a == b for a, b in zip(p, t)) / len(p)
