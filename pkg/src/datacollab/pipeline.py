"""In-process drivers for the three analysis regimes.

The coordinator in :mod:`datacollab.protocol` calls the same
:func:`collaborate` used here, so the networked and in-process runs agree
bitwise whenever they are fed the same matrices.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import learner as lrn
from .collaboration import AnchorSet, CollaborationTransform, build_collaboration, transform_test
from .errors import DataCollabError, PhaseError, ValidationError
from .learner import LabelMatrix, TrainedModel, concat_labels
from .linalg import as_matrix
from .mappers import Mapper, apply, fit_mapper, fit_pca

PHASES = {
    0: "preparation",
    1: "individual preparation",
    2: "data collaboration",
    3: "analysis",
}


@dataclass(frozen=True, eq=False)
class PartyDataset:
    """One institution's private data: train/test features as columns plus labels."""

    x_train: np.ndarray
    y_train: LabelMatrix
    x_test: np.ndarray
    y_test: LabelMatrix
    name: str = "party"

    def __post_init__(self):
        object.__setattr__(self, "x_train", as_matrix(self.x_train, f"{self.name} x_train"))
        object.__setattr__(self, "x_test", as_matrix(self.x_test, f"{self.name} x_test"))
        if self.x_train.shape[1] != self.y_train.n:
            raise ValidationError(f"{self.name}: {self.y_train.n} labels for {self.x_train.shape[1]} samples")
        if self.x_test.shape[1] != self.y_test.n:
            raise ValidationError(f"{self.name}: {self.y_test.n} test labels for {self.x_test.shape[1]} samples")
        if self.x_train.shape[0] != self.x_test.shape[0]:
            raise ValidationError(f"{self.name}: train and test feature counts differ")

    @property
    def m(self) -> int:
        return self.x_train.shape[0]


@dataclass(frozen=True)
class MapperSpec:
    kind: str = "pca"
    out_dim: int = 2
    seed: int = 0


@dataclass(frozen=True)
class LearnerSpec:
    kind: str = "least-squares"
    ridge: float = lrn.DEFAULT_RIDGE
    k: int = lrn.DEFAULT_K
    fit_intercept: bool = True


@dataclass(frozen=True, eq=False)
class Collaboration:
    transform: CollaborationTransform
    x_hat: np.ndarray
    labels: LabelMatrix
    model: TrainedModel


class _phase:
    """Context manager tagging module errors with the phase they came from."""

    def __init__(self, number):
        self.number = number

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, DataCollabError) and not isinstance(exc, PhaseError):
            raise PhaseError(f"{self.number} ({PHASES[self.number]})", exc) from exc
        return False


def fit_party_mapper(data: PartyDataset, spec: MapperSpec) -> Mapper:
    return fit_mapper(spec.kind, data.x_train, spec.out_dim, spec.seed)


def train_model(x, labels: LabelMatrix, spec: LearnerSpec) -> TrainedModel:
    return lrn.train(x, labels, kind=spec.kind, ridge=spec.ridge, k=spec.k, fit_intercept=spec.fit_intercept)


def collaborate(
    anchors_tilde: Sequence,
    trains_tilde: Sequence,
    labels: Sequence[LabelMatrix],
    ell: Optional[int],
    learner: LearnerSpec,
) -> Collaboration:
    """Phase 2 alignment followed by Phase 3 training on the centralised images."""
    with _phase(2):
        transform, x_hat = build_collaboration(anchors_tilde, trains_tilde, ell)
    with _phase(3):
        pooled = concat_labels(labels)
        model = train_model(x_hat, pooled, learner)
    return Collaboration(transform, x_hat, pooled, model)


def predict_party(collab: Collaboration, party: int, y_tilde) -> LabelMatrix:
    with _phase(3):
        return lrn.predict(collab.model, transform_test(collab.transform, party, y_tilde))


@dataclass(frozen=True, eq=False)
class RegimeResult:
    predictions: tuple  # LabelMatrix per party
    collaboration: Optional[Collaboration] = None


def run_collaboration(
    parties: Sequence[PartyDataset],
    mappers: Sequence[MapperSpec],
    anchor: AnchorSet,
    ell: Optional[int] = None,
    learner: LearnerSpec = LearnerSpec(),
) -> RegimeResult:
    """All four phases in one process."""
    if len(parties) != len(mappers):
        raise ValidationError("one mapper spec per party required")
    with _phase(1):
        fitted = [fit_party_mapper(p, s) for p, s in zip(parties, mappers)]
        trains = [apply(f, p.x_train) for f, p in zip(fitted, parties)]
        anchors = [apply(f, anchor.x_anc) for f in fitted]
    collab = collaborate(anchors, trains, [p.y_train for p in parties], ell, learner)
    preds = tuple(
        predict_party(collab, i, apply(f, p.x_test)) for i, (f, p) in enumerate(zip(fitted, parties))
    )
    return RegimeResult(preds, collab)


def run_individual(
    parties: Sequence[PartyDataset],
    mappers: Sequence[MapperSpec],
    learner: LearnerSpec = LearnerSpec(),
) -> RegimeResult:
    """Each party learns alone on its own intermediate representation."""
    preds = []
    for p, s in zip(parties, mappers):
        with _phase(1):
            f = fit_party_mapper(p, s)
        with _phase(3):
            model = train_model(apply(f, p.x_train), p.y_train, learner)
            preds.append(lrn.predict(model, apply(f, p.x_test)))
    return RegimeResult(tuple(preds))


def run_centralized(
    parties: Sequence[PartyDataset],
    out_dim: int,
    learner: LearnerSpec = LearnerSpec(),
) -> RegimeResult:
    """Pool the raw data, fit one PCA of dimension ``out_dim`` and learn once."""
    with _phase(1):
        x = np.hstack([p.x_train for p in parties])
        f = fit_pca(x, out_dim)
    with _phase(3):
        model = train_model(apply(f, x), concat_labels([p.y_train for p in parties]), learner)
        preds = tuple(lrn.predict(model, apply(f, p.x_test)) for p in parties)
    return RegimeResult(preds)
