"""Nested-prefix embedding toolkit: verified loss kernels, level-wise
reciprocal agglomerative clustering, evaluation metrics, and c-TF-IDF
cluster labeling."""

from .cluster import Cluster, ClusterTree, TreeCluster, levelwise_rac, rac
from .core import (
    EmbeddingMatrix,
    LabeledPair,
    LossConfig,
    PrefixLevel,
    PrefixScheme,
    SimilarityLabel,
    binarize_label,
    prefix_cosine,
    validate_dataset,
)
from .losses import (
    LossBatch,
    LossResult,
    angie_loss,
    angle_delta,
    angle_objective,
    contrastive_objective,
    cos_objective,
    finite_difference_grad,
    mrl_loss,
    simcse_duplicate,
)
from .metrics import (
    EvalReport,
    auroc,
    auroc_at_levels,
    pairwise_prf,
    pearson,
    relational_similarity,
    tune_lambda,
)
from .keywords import ClassDocument, class_tf_idf, hierarchy_keywords, tokenize

__version__ = "0.1.0"

__all__ = [
    "Cluster",
    "ClusterTree",
    "ClassDocument",
    "EmbeddingMatrix",
    "EvalReport",
    "LabeledPair",
    "LossBatch",
    "LossConfig",
    "LossResult",
    "PrefixLevel",
    "PrefixScheme",
    "SimilarityLabel",
    "TreeCluster",
    "angie_loss",
    "angle_delta",
    "angle_objective",
    "auroc",
    "auroc_at_levels",
    "binarize_label",
    "class_tf_idf",
    "contrastive_objective",
    "cos_objective",
    "finite_difference_grad",
    "hierarchy_keywords",
    "levelwise_rac",
    "mrl_loss",
    "pairwise_prf",
    "pearson",
    "prefix_cosine",
    "rac",
    "relational_similarity",
    "simcse_duplicate",
    "tokenize",
    "tune_lambda",
    "validate_dataset",
]
