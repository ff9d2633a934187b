"""Data collaboration analysis over privately reduced datasets.

Parties map their data with private dimensionality reductions, share only
the mapped data and the mapped images of a common anchor set, and a
coordinator aligns the images into one collaboration representation for
joint supervised learning.
"""
from .collaboration import (
    AnchorSet,
    CollaborationTransform,
    alignment_residual,
    build_collaboration,
    compute_g,
    compute_target,
    generate_anchor,
    transform_test,
)
from .errors import (
    ConfigError,
    DataCollabError,
    DecodeError,
    DimensionError,
    LoadError,
    PhaseError,
    ProtocolError,
    RankError,
    ValidationError,
)
from .learner import LabelMatrix, TrainedModel, accuracy, predict, train
from .linalg import SvdResult, as_matrix, lstsq, pseudoinverse, svd_truncated
from .mappers import Mapper, apply, fit_pca, fit_random_projection, linear_explicit
from .pipeline import LearnerSpec, MapperSpec, PartyDataset

__version__ = "0.1.0"
