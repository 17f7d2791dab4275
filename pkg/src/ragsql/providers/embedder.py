"""Text embedders.

``HashingEmbedder`` is the offline implementation: every lower-cased word
token is hashed into one of ``dimension`` buckets with a hash-derived sign,
then the bucket vector is L2-normalized.  It is a pure function of the text.
"""

from __future__ import annotations

import hashlib
import re
from typing import Protocol

import numpy as np

from ..errors import DimensionMismatch, InvalidInput, ProviderUnavailable
from .http import Endpoint, post_json

DEFAULT_DIMENSION = 384

_TOKEN = re.compile(r"\w+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.casefold())


class Embedder(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


def _check_text(text: str) -> str:
    if not isinstance(text, str) or not text.strip():
        raise InvalidInput("cannot embed empty text")
    return text.strip()


class HashingEmbedder:
    """Deterministic signed feature-hashing bag of words."""

    def __init__(self, dimension: int = DEFAULT_DIMENSION) -> None:
        if dimension < 2:
            raise InvalidInput("dimension must be at least 2")
        self.dimension = dimension

    def _slot(self, token: str) -> tuple[int, float]:
        h = int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "big")
        sign = -1.0 if h >> 63 else 1.0
        return h % self.dimension, sign

    def embed(self, text: str) -> np.ndarray:
        text = _check_text(text)
        # punctuation-only text still needs a nonzero vector
        tokens = tokenize(text) or [text.casefold()]
        vec = np.zeros(self.dimension, dtype=np.float64)
        for tok in tokens:
            idx, sign = self._slot(tok)
            vec[idx] += sign
        norm = np.sqrt(np.sum(vec * vec))
        if norm == 0.0:
            # every token cancelled out against another in the same bucket
            idx, sign = self._slot(text.casefold())
            vec[idx] = sign
            norm = 1.0
        return vec / norm


class HttpEmbedder:
    """OpenAI-compatible ``/embeddings`` endpoint."""

    def __init__(self, endpoint: Endpoint, dimension: int = DEFAULT_DIMENSION, client=None) -> None:
        self.endpoint = endpoint
        self.dimension = dimension
        self._client = client

    def embed(self, text: str) -> np.ndarray:
        text = _check_text(text)
        body = post_json(self.endpoint, {"model": self.endpoint.model, "input": text}, client=self._client)
        try:
            values = body["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError):
            raise ProviderUnavailable("embedding response has no data[0].embedding") from None
        vec = np.asarray(values, dtype=np.float64)
        if vec.shape != (self.dimension,):
            raise DimensionMismatch(f"endpoint returned {vec.shape[0]} dims, expected {self.dimension}")
        return vec
