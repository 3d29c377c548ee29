"""Label-free node classification with budgeted LLM annotation and GNN self-training."""
from .annotate import Annotation, AnnotationCache, BudgetLedger, LLMAnnotator, OracleAnnotator, PromptSpec
from .evalio import Dataset, all_metrics, load_dataset
from .gnn_engine import GnnHyper
from .graph_core import Graph
from .pipeline import InsufficientSeeds, PipelineConfig, run_pipeline
from .rewire import EncoderHyper

__all__ = [
    "Annotation", "AnnotationCache", "BudgetLedger", "Dataset", "EncoderHyper", "GnnHyper",
    "Graph", "InsufficientSeeds", "LLMAnnotator", "OracleAnnotator", "PipelineConfig",
    "PromptSpec", "all_metrics", "load_dataset", "run_pipeline",
]
