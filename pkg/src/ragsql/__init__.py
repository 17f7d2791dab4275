"""Retrieval-augmented text-to-SQL over a local knowledge base."""

from .config import EngineConfig
from .engine import AskResult, Engine, IngestSummary
from .retrieval import Stage
from .sqlgen import Mode

__all__ = ["AskResult", "Engine", "EngineConfig", "IngestSummary", "Mode", "Stage"]
__version__ = "0.1.0"
