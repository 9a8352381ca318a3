"""Differentially private multi-layer graph message passing with a
convergent privacy accountant, a contractive aggregation layer, a small
trainable classifier, and an empirical membership-inference audit harness.
"""

from .accountant import (
    CalibrationError,
    ModuleBudgets,
    NoisePlan,
    PrivacySpec,
    brute_force_edge_sensitivity,
    brute_force_node_sensitivity,
    calibrate_sigma,
    convergent_factor,
    edge_sensitivity,
    gaussian_tradeoff,
    gdp_to_rdp,
    node_sensitivity,
    noise_table,
    rdp_epsilon_convergent,
    rdp_epsilon_linear,
    rdp_to_dp,
)
from .audit import (
    AuditConfig,
    AuditReport,
    auc,
    edge_influence_score,
    node_confidence_score,
    run_mia_game,
)
from .graphs import (
    DegreeStats,
    Graph,
    LabeledDataset,
    ParseError,
    build_graph,
    degree_stats,
    enumerate_edge_neighbors,
    enumerate_node_neighbors,
    gen_chain_dataset,
    load_dataset,
    normalized_adjacency,
    spectral_norm,
    stratified_split,
    write_dataset,
)
from .layers import (
    LayerParams,
    empirical_lipschitz,
    layer_forward,
    mean_aggregate,
    normalize_rows,
    project_rows,
)
from .model import (
    DpSgdConfig,
    LinearEncoder,
    MlpHead,
    TrainConfig,
    evaluate,
    grad_check,
    predict_proba,
    train_head,
    train_linear_encoder,
)
from .pipeline import PipelineConfig, RunArtifacts, run_pipeline, sample_gaussian_matrix
from .prng import stream

__version__ = "0.1.0"

__all__ = [
    "AuditConfig",
    "AuditReport",
    "CalibrationError",
    "DegreeStats",
    "DpSgdConfig",
    "Graph",
    "LabeledDataset",
    "LayerParams",
    "LinearEncoder",
    "MlpHead",
    "ModuleBudgets",
    "NoisePlan",
    "ParseError",
    "PipelineConfig",
    "PrivacySpec",
    "RunArtifacts",
    "TrainConfig",
    "auc",
    "brute_force_edge_sensitivity",
    "brute_force_node_sensitivity",
    "build_graph",
    "calibrate_sigma",
    "convergent_factor",
    "degree_stats",
    "edge_influence_score",
    "edge_sensitivity",
    "empirical_lipschitz",
    "enumerate_edge_neighbors",
    "enumerate_node_neighbors",
    "evaluate",
    "gaussian_tradeoff",
    "gdp_to_rdp",
    "gen_chain_dataset",
    "grad_check",
    "layer_forward",
    "load_dataset",
    "mean_aggregate",
    "node_confidence_score",
    "node_sensitivity",
    "noise_table",
    "normalize_rows",
    "normalized_adjacency",
    "predict_proba",
    "project_rows",
    "rdp_epsilon_convergent",
    "rdp_epsilon_linear",
    "rdp_to_dp",
    "run_mia_game",
    "run_pipeline",
    "sample_gaussian_matrix",
    "spectral_norm",
    "stratified_split",
    "stream",
    "train_head",
    "train_linear_encoder",
    "write_dataset",
]
