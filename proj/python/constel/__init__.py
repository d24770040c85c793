"""Metric-learning toolkit: embedding losses with analytic gradients, smart
batch construction with online triplet mining, a small trainable embedding
network, and clustering/classification quality metrics."""

from ._core import (
    MlpEmbedder,
    augment_grid,
    build_constellation_batch,
    build_npair_batch,
    classification_scores,
    constellation_loss,
    contrastive_loss,
    davies_bouldin,
    embed,
    gradcheck,
    gram_matrix,
    init_embedder,
    knn_classify,
    l2_normalize_rows,
    load_csv,
    load_model,
    log1p_sum_exp,
    mine_triplets,
    npair_loss,
    pairwise_sq_dists,
    pca_project_2d,
    run_experiment,
    sample_balanced_batch,
    save_model,
    silhouette,
    stratified_kfold,
    synth_gaussian_clusters,
    triplet_loss,
)

__all__ = [
    "MlpEmbedder",
    "augment_grid",
    "build_constellation_batch",
    "build_npair_batch",
    "classification_scores",
    "constellation_loss",
    "contrastive_loss",
    "davies_bouldin",
    "embed",
    "gradcheck",
    "gram_matrix",
    "init_embedder",
    "knn_classify",
    "l2_normalize_rows",
    "load_csv",
    "load_model",
    "log1p_sum_exp",
    "mine_triplets",
    "npair_loss",
    "pairwise_sq_dists",
    "pca_project_2d",
    "run_experiment",
    "sample_balanced_batch",
    "save_model",
    "silhouette",
    "stratified_kfold",
    "synth_gaussian_clusters",
    "triplet_loss",
]
