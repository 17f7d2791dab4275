"""Engine configuration and provider construction."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import InvalidInput
from .providers.embedder import DEFAULT_DIMENSION, Embedder, HashingEmbedder, HttpEmbedder
from .providers.http import Endpoint
from .providers.llm import DEFAULT_VOTES, ChatModel, FixtureLLM, HttpLLM
from .providers.reranker import CrossEncoderReranker, JaccardReranker, Reranker

CONFIG_ENV = "RAGSQL_CONFIG"
KB_ENV = "RAGSQL_KB"


@dataclass
class EngineConfig:
    kb_path: Path = Path("kb")
    embedder: dict[str, Any] = field(default_factory=lambda: {"kind": "hashing", "dimension": DEFAULT_DIMENSION})
    llm: dict[str, Any] = field(default_factory=lambda: {"kind": "fixture"})
    reranker: dict[str, Any] = field(default_factory=lambda: {"kind": "jaccard"})
    votes: int = DEFAULT_VOTES
    variations: int = 3
    per_query_limit: int = 10
    thresholds: dict[str, float] = field(default_factory=dict)
    offline: bool = False

    def __post_init__(self) -> None:
        self.kb_path = Path(self.kb_path)
        for name in ("votes", "variations", "per_query_limit"):
            if int(getattr(self, name)) < 1:
                raise InvalidInput(f"{name} must be positive")
        if int(self.embedder.get("dimension", DEFAULT_DIMENSION)) < 2:
            raise InvalidInput("embedding dimension must be at least 2")

    @property
    def dimension(self) -> int:
        return int(self.embedder.get("dimension", DEFAULT_DIMENSION))

    @property
    def fixtures_dir(self) -> Path:
        return Path(self.llm.get("fixtures") or self.kb_path / "fixtures")

    @classmethod
    def load(cls, path: str | Path | None = None, **overrides: Any) -> "EngineConfig":
        """Read a JSON config file (``path`` or ``$RAGSQL_CONFIG``); keyword overrides win."""
        path = path or os.environ.get(CONFIG_ENV)
        data: dict[str, Any] = {}
        if path:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        if "kb_path" not in data and os.environ.get(KB_ENV):
            data["kb_path"] = os.environ[KB_ENV]
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def build_embedder(self) -> Embedder:
        kind = "hashing" if self.offline else self.embedder.get("kind", "hashing")
        if kind == "hashing":
            return HashingEmbedder(self.dimension)
        if kind == "http":
            return HttpEmbedder(Endpoint.from_config(self.embedder), self.dimension)
        raise InvalidInput(f"unknown embedder kind {kind!r}")

    def build_llm(self) -> ChatModel:
        kind = "fixture" if self.offline else self.llm.get("kind", "fixture")
        if kind == "fixture":
            return FixtureLLM.from_dir(self.fixtures_dir)
        if kind == "http":
            return HttpLLM(
                Endpoint.from_config(self.llm),
                temperature=float(self.llm.get("temperature", 0.0)),
                vote_temperature=float(self.llm.get("vote_temperature", 0.7)),
            )
        raise InvalidInput(f"unknown llm kind {kind!r}")

    def build_reranker(self) -> Reranker:
        kind = "jaccard" if self.offline else self.reranker.get("kind", "jaccard")
        if kind == "jaccard":
            return JaccardReranker()
        if kind == "cross-encoder":
            return CrossEncoderReranker(self.reranker.get("model", CrossEncoderReranker().model_name))
        raise InvalidInput(f"unknown reranker kind {kind!r}")
