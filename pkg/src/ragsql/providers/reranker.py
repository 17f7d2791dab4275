from __future__ import annotations

from typing import Protocol

from ..errors import InvalidInput
from .embedder import tokenize

# paraphrase-identification model trained on Quora duplicate questions
DEFAULT_CROSS_ENCODER = "cross-encoder/quora-distilroberta-base"


class Reranker(Protocol):
    def rerank(self, query: str, candidate: str) -> float: ...


def _check(query: str, candidate: str) -> None:
    if not query or not query.strip() or not candidate or not candidate.strip():
        raise InvalidInput("rerank needs two nonempty strings")


class JaccardReranker:
    """Offline surrogate: Jaccard overlap of lower-cased token sets."""

    def rerank(self, query: str, candidate: str) -> float:
        _check(query, candidate)
        a, b = set(tokenize(query)), set(tokenize(candidate))
        if not a and not b:
            return 1.0 if query.strip().casefold() == candidate.strip().casefold() else 0.0
        return len(a & b) / len(a | b)


class CrossEncoderReranker:
    """sentence-transformers cross-encoder; the model is loaded on first use."""

    def __init__(self, model_name: str = DEFAULT_CROSS_ENCODER) -> None:
        self.model_name = model_name
        self._model = None

    def _load(self):
        if self._model is None:
            from sentence_transformers import CrossEncoder

            self._model = CrossEncoder(self.model_name)
        return self._model

    def rerank(self, query: str, candidate: str) -> float:
        _check(query, candidate)
        score = float(self._load().predict([(query, candidate)])[0])
        return min(1.0, max(0.0, score))
