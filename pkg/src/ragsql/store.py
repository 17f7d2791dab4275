"""Flat (exhaustive-scan) vector store with category metadata and JSONL persistence."""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import CorruptStore, DimensionMismatch, DuplicateId, InvalidInput
from .providers.embedder import Embedder

DOCUMENT_CATEGORIES = frozenset({"description", "dependency", "table_name", "connected_tables", "entity"})
EXAMPLE_CATEGORIES = frozenset({"init", "normalized", "main_clause", "similar", "entity"})
CATEGORIES = DOCUMENT_CATEGORIES | EXAMPLE_CATEGORIES
SOURCE_KINDS = {"document": DOCUMENT_CATEGORIES, "example": EXAMPLE_CATEGORIES}

FORMAT = "ragsql.embeddings"
FORMAT_VERSION = 1


def _norm(v: np.ndarray) -> float:
    return float(np.sqrt(np.sum(v * v)))


def similarity(x: np.ndarray, y: np.ndarray) -> float:
    """(cos + 1) / 2, clipped to [0, 1].

    Uses the same element-wise-product-then-sum reduction as ``VectorStore.query``
    so a hit's similarity can be recomputed bit-identically.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionMismatch(f"cannot compare shapes {x.shape} and {y.shape}")
    nx, ny = _norm(x), _norm(y)
    if nx == 0.0 or ny == 0.0:
        raise InvalidInput("similarity is undefined for a zero vector")
    cos = float(np.sum(x * y)) / (nx * ny)
    return min(1.0, max(0.0, (cos + 1.0) / 2.0))


@dataclass(eq=False)
class EmbeddingEntry:
    id: str
    vector: np.ndarray
    text: str
    category: str
    source_kind: str
    ref_id: str

    def __post_init__(self) -> None:
        self.vector = np.asarray(self.vector, dtype=np.float64)
        allowed = SOURCE_KINDS.get(self.source_kind)
        if allowed is None:
            raise InvalidInput(f"unknown source_kind {self.source_kind!r}")
        if self.category not in allowed:
            raise InvalidInput(f"category {self.category!r} is not valid for {self.source_kind} entries")
        if not self.id:
            raise InvalidInput("entry id must be nonempty")
        if self.vector.ndim != 1:
            raise InvalidInput(f"entry {self.id}: vector must be a 1-d array")
        with np.errstate(over="ignore", under="ignore"):
            norm = _norm(self.vector)
        # the norm must survive squaring: no zero, non-finite or over/underflowing vectors
        if not (np.isfinite(norm) and norm > 0.0):
            raise InvalidInput(f"entry {self.id}: vector norm is zero or not finite")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingEntry):
            return NotImplemented
        return (
            (self.id, self.text, self.category, self.source_kind, self.ref_id)
            == (other.id, other.text, other.category, other.source_kind, other.ref_id)
            and self.vector.shape == other.vector.shape
            and self.vector.tobytes() == other.vector.tobytes()
        )

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "category": self.category,
            "source_kind": self.source_kind,
            "ref_id": self.ref_id,
            "text": self.text,
            "vector": self.vector.tolist(),
        }


@dataclass(frozen=True)
class MetadataFilter:
    categories: frozenset[str] = field(default_factory=frozenset)
    source_kind: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "categories", frozenset(self.categories))
        unknown = self.categories - CATEGORIES
        if unknown:
            raise InvalidInput(f"unknown categories {sorted(unknown)}")
        if self.source_kind is not None and self.source_kind not in SOURCE_KINDS:
            raise InvalidInput(f"unknown source_kind {self.source_kind!r}")

    def accepts(self, entry: EmbeddingEntry) -> bool:
        if self.categories and entry.category not in self.categories:
            return False
        return self.source_kind is None or entry.source_kind == self.source_kind


NO_FILTER = MetadataFilter()


@dataclass(frozen=True)
class QueryHit:
    entry: EmbeddingEntry
    similarity: float


class VectorStore:
    """In-memory collection searched by exhaustive scan.

    Ties in similarity are broken by ascending entry id so results do not
    depend on insertion order.  ``query_count`` counts calls to ``query``.
    """

    def __init__(self, dimension: int, embedder: Embedder | None = None) -> None:
        if embedder is not None and embedder.dimension != dimension:
            raise DimensionMismatch(f"embedder emits {embedder.dimension} dims, store holds {dimension}")
        self.dimension = dimension
        self.embedder = embedder
        self.query_count = 0
        self.query_log: list[MetadataFilter] = []
        self._entries: dict[str, EmbeddingEntry] = {}
        self._lock = threading.RLock()
        self._matrix: np.ndarray | None = None
        self._norms: np.ndarray | None = None
        self._order: list[EmbeddingEntry] = []

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, entry_id: str) -> bool:
        return entry_id in self._entries

    def __iter__(self) -> Iterator[EmbeddingEntry]:
        with self._lock:
            return iter(list(self._entries.values()))

    def get(self, entry_id: str) -> EmbeddingEntry:
        return self._entries[entry_id]

    def add(self, entry: EmbeddingEntry) -> str:
        if entry.vector.shape != (self.dimension,):
            raise DimensionMismatch(f"entry {entry.id} has {entry.vector.shape[0]} dims, store holds {self.dimension}")
        with self._lock:
            if entry.id in self._entries:
                raise DuplicateId(entry.id)
            self._entries[entry.id] = entry
            self._matrix = None
        return entry.id

    def add_many(self, entries: Iterable[EmbeddingEntry]) -> list[str]:
        """All-or-nothing insertion of several entries."""
        entries = list(entries)
        with self._lock:
            seen = set()
            for e in entries:
                if e.id in self._entries or e.id in seen:
                    raise DuplicateId(e.id)
                if e.vector.shape != (self.dimension,):
                    raise DimensionMismatch(f"entry {e.id} has {e.vector.shape[0]} dims, store holds {self.dimension}")
                seen.add(e.id)
            for e in entries:
                self._entries[e.id] = e
            self._matrix = None
        return [e.id for e in entries]

    def purge(self, ref_id: str, source_kind: str | None = None) -> int:
        with self._lock:
            doomed = [
                k
                for k, e in self._entries.items()
                if e.ref_id == ref_id and (source_kind is None or e.source_kind == source_kind)
            ]
            for k in doomed:
                del self._entries[k]
            if doomed:
                self._matrix = None
        return len(doomed)

    def has_ref(self, ref_id: str, source_kind: str | None = None) -> bool:
        return any(
            e.ref_id == ref_id and (source_kind is None or e.source_kind == source_kind)
            for e in self._entries.values()
        )

    def _snapshot(self) -> tuple[list[EmbeddingEntry], np.ndarray, np.ndarray]:
        with self._lock:
            if self._matrix is None:
                self._order = list(self._entries.values())
                if self._order:
                    self._matrix = np.stack([e.vector for e in self._order])
                else:
                    self._matrix = np.zeros((0, self.dimension))
                self._norms = np.sqrt(np.sum(self._matrix * self._matrix, axis=1))
            return self._order, self._matrix, self._norms

    def _as_vector(self, query: str | np.ndarray) -> np.ndarray:
        if isinstance(query, str):
            if self.embedder is None:
                raise InvalidInput("text query needs a store with an embedder")
            query = self.embedder.embed(query)
        vec = np.asarray(query, dtype=np.float64)
        if vec.shape != (self.dimension,):
            raise DimensionMismatch(f"query has shape {vec.shape}, store holds {self.dimension} dims")
        return vec

    def query(
        self, query: str | np.ndarray, filter: MetadataFilter = NO_FILTER, n: int = 10
    ) -> list[QueryHit]:
        if n < 1:
            raise InvalidInput("n must be >= 1")
        vec = self._as_vector(query)
        qnorm = _norm(vec)
        if qnorm == 0.0:
            raise InvalidInput("query vector is zero")
        with self._lock:
            self.query_count += 1
            self.query_log.append(filter)
        order, matrix, norms = self._snapshot()
        if not order:
            return []
        mask = np.fromiter((filter.accepts(e) for e in order), dtype=bool, count=len(order))
        if not mask.any():
            return []
        idx = np.flatnonzero(mask)
        cos = np.sum(matrix[idx] * vec, axis=1) / (norms[idx] * qnorm)
        sims = np.clip((cos + 1.0) / 2.0, 0.0, 1.0)
        ranked = sorted(zip(sims.tolist(), idx.tolist()), key=lambda t: (-t[0], order[t[1]].id))
        return [QueryHit(order[i], s) for s, i in ranked[:n]]

    # persistence

    def persist(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with self._lock:
            entries = sorted(self._entries.values(), key=lambda e: e.id)
            with tmp.open("w", encoding="utf-8") as fh:
                header = {"format": FORMAT, "version": FORMAT_VERSION, "dimension": self.dimension, "count": len(entries)}
                fh.write(json.dumps(header) + "\n")
                for e in entries:
                    fh.write(json.dumps(e.to_record(), ensure_ascii=False) + "\n")
            os.replace(tmp, path)

    @classmethod
    def load(
        cls, path: str | Path, dimension: int | None = None, embedder: Embedder | None = None
    ) -> "VectorStore":
        path = Path(path)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except FileNotFoundError:
            raise CorruptStore(f"{path} does not exist") from None
        except (OSError, UnicodeDecodeError) as exc:
            raise CorruptStore(f"{path}: {exc}") from None
        try:
            header = json.loads(lines[0])
            if header.get("format") != FORMAT or header.get("version") != FORMAT_VERSION:
                raise CorruptStore(f"{path}: unrecognised header {header!r}")
            stored_dim = int(header["dimension"])
            count = int(header["count"])
        except (IndexError, ValueError, KeyError, TypeError, AttributeError) as exc:
            raise CorruptStore(f"{path}: bad header ({exc})") from None
        if dimension is not None and stored_dim != dimension:
            raise DimensionMismatch(f"{path} holds {stored_dim}-d vectors, config expects {dimension}")
        store = cls(stored_dim, embedder)
        body = [ln for ln in lines[1:] if ln.strip()]
        if len(body) != count:
            raise CorruptStore(f"{path}: header promises {count} entries, found {len(body)}")
        for lineno, line in enumerate(body, start=2):
            try:
                rec = json.loads(line)
                entry = EmbeddingEntry(
                    id=rec["id"],
                    vector=np.array(rec["vector"], dtype=np.float64),
                    text=rec["text"],
                    category=rec["category"],
                    source_kind=rec["source_kind"],
                    ref_id=rec["ref_id"],
                )
                store.add(entry)
            except (ValueError, KeyError, TypeError, InvalidInput, DimensionMismatch, DuplicateId) as exc:
                raise CorruptStore(f"{path}:{lineno}: {exc}") from None
        return store
