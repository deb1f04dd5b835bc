"""
Evaluation package initialization.
"""
from evaluation.metrics import rank_and_map, brute_force_oracle, RetrievalResult
from evaluation.protocols import (
    GalleryProtocol, EvalConfig, EmbeddingTable, MetricsReport,
    extract_embeddings, evaluate_table, run_protocol
)
from evaluation.style_probe import style_probe, ProbeReport
