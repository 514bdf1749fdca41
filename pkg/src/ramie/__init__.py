"""Retrieval-augmented multi-task information extraction for dietary-supplement mentions in clinical text."""

from .dataset import BlendedCorpus, Corpus, blend, load_corpus, validate_splits
from .embedding import EmbedderSpec, cosine, embed
from .evaluation import RunReport, aggregate_report, classify_errors, score_task
from .generation import ModelEndpointSpec, generate
from .model import GoldOutput, Record, TaskKind
from .parsing import ParsePolicy, Prediction, parse_generation
from .prompting import Prompt, build_prompt, load_templates, serialize_gold
from .retrieval import ExampleIndex, RetrievalMode, build_index, retrieve

__all__ = [
    "BlendedCorpus",
    "Corpus",
    "EmbedderSpec",
    "ExampleIndex",
    "GoldOutput",
    "ModelEndpointSpec",
    "ParsePolicy",
    "Prediction",
    "Prompt",
    "Record",
    "RetrievalMode",
    "RunReport",
    "TaskKind",
    "aggregate_report",
    "blend",
    "build_index",
    "build_prompt",
    "classify_errors",
    "cosine",
    "embed",
    "generate",
    "load_corpus",
    "load_templates",
    "parse_generation",
    "retrieve",
    "score_task",
    "serialize_gold",
    "validate_splits",
]
