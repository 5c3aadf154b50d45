"""Minimally supervised, metadata-aware text categorization.

Documents, labels, words, and metadata instances are embedded jointly on a
unit sphere; synthetic labeled documents are drawn from class-conditioned
von Mises-Fisher distributions; a small CNN over the frozen embeddings does
the final classification.
"""

from .classifier import CnnModel, ConvTextClassifier, Prediction, TrainConfig
from .config import RunConfig, build_run_config, parse_config_file
from .corpus import (CorpusFormatError, CorpusSplit, Document, MetadataSchema,
                     Vocabulary, load_corpus, take_k_per_class, tokenize)
from .embedding import EmbedConfig, EmbeddingSpace, JointEmbedding, train_embeddings
from .evaluation import EvalReport, evaluate
from .generator import GenConfig, SyntheticDocument, generate_all
from .pipeline import Categorizer, PipelineError, run_pipeline, sweep
from .planted import PLANTED_SCHEMA, make_planted_corpus
from .vmf import VmfParams, log_bessel_i, log_density, log_norm_const, sample

__version__ = "0.1.0"

__all__ = [
    "Categorizer", "CnnModel", "ConvTextClassifier", "CorpusFormatError",
    "CorpusSplit", "Document", "EmbedConfig", "EmbeddingSpace", "EvalReport",
    "GenConfig", "JointEmbedding", "MetadataSchema", "PLANTED_SCHEMA",
    "PipelineError", "Prediction", "RunConfig", "SyntheticDocument",
    "TrainConfig", "VmfParams", "Vocabulary", "build_run_config", "evaluate",
    "generate_all", "load_corpus", "log_bessel_i", "log_density",
    "log_norm_const", "make_planted_corpus", "parse_config_file",
    "run_pipeline", "sample", "sweep", "take_k_per_class", "tokenize",
    "train_embeddings",
]
