"""Interfaces to the chat model, the text embedder and the reranker."""

from .embedder import DEFAULT_DIMENSION, Embedder, HashingEmbedder, HttpEmbedder, tokenize
from .http import Endpoint
from .llm import DEFAULT_VOTES, ChatModel, FixtureLLM, HttpLLM
from .prompts import SHAPES, TEMPLATES, PromptRequest, StructuredResponse, fingerprint
from .reranker import CrossEncoderReranker, JaccardReranker, Reranker

__all__ = [
    "DEFAULT_DIMENSION",
    "DEFAULT_VOTES",
    "ChatModel",
    "CrossEncoderReranker",
    "Embedder",
    "Endpoint",
    "FixtureLLM",
    "HashingEmbedder",
    "HttpEmbedder",
    "HttpLLM",
    "JaccardReranker",
    "PromptRequest",
    "Reranker",
    "SHAPES",
    "StructuredResponse",
    "TEMPLATES",
    "fingerprint",
    "tokenize",
]
