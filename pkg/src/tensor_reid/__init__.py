"""Tensor feature fusion, TXQDA multilinear subspace learning and CMC
evaluation for cross-camera person re-identification."""

__version__ = "0.1.0"

from .errors import ArgumentError, DataError, NumericError, TensorReidError
from .tensor_core import (
    fold,
    frobenius,
    inner,
    mode_product,
    project,
    read_tsr3,
    unfold,
    vectorize,
    write_tsr3,
)
from .spectral import EigenPairs, gen_eig, sym_eig
from .hdff import FeatureBlock, FusionConfig, build_view_tensor, fuse, hdff_pipeline
from .txqda import CrossViewSet, ProjectionSet, TxqdaConfig, fit, transform
from .matching import CmcCurve, RankingResult, cmc, cosine, rank_k, score_and_rank

__all__ = [
    "ArgumentError",
    "CmcCurve",
    "CrossViewSet",
    "DataError",
    "EigenPairs",
    "FeatureBlock",
    "FusionConfig",
    "NumericError",
    "ProjectionSet",
    "RankingResult",
    "TensorReidError",
    "TxqdaConfig",
    "build_view_tensor",
    "cmc",
    "cosine",
    "fit",
    "fold",
    "frobenius",
    "fuse",
    "gen_eig",
    "hdff_pipeline",
    "inner",
    "mode_product",
    "project",
    "rank_k",
    "read_tsr3",
    "score_and_rank",
    "sym_eig",
    "transform",
    "unfold",
    "vectorize",
    "write_tsr3",
]
