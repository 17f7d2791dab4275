"""On-disk knowledge base: a directory of line-delimited record files.

Layout::

    embeddings.jsonl        vector store (header line + one entry per line)
    documents.jsonl         TableDocument catalog
    examples.jsonl          ExampleRecord catalog
    profile.json            ThresholdProfile
    calibration_report.json similarity distributions and retrieval overlap
    instructions.json/.txt  domain entity mappings and their rendered text
    rules.txt               business rules, one per line
    class_rules.txt         entity classification rules (prompt fragment)
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Iterator

from filelock import FileLock

from .calibration import ThresholdProfile
from .documents import TableDocument
from .errors import CorruptStore
from .example_pipeline import ExampleRecord
from .instructions import DomainInstruction
from .providers.embedder import Embedder
from .store import VectorStore

EMBEDDINGS = "embeddings.jsonl"
DOCUMENTS = "documents.jsonl"
EXAMPLES = "examples.jsonl"
PROFILE = "profile.json"
REPORT = "calibration_report.json"
RULES = "rules.txt"
CLASS_RULES = "class_rules.txt"


def read_jsonl(path: Path) -> Iterator[dict]:
    if not path.exists():
        return
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptStore(f"{path}:{lineno}: {exc}") from None


def write_jsonl(path: Path, records) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    os.replace(tmp, path)


def read_lines(path: Path) -> list[str]:
    if not path.exists():
        return []
    return [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip() and not ln.startswith("#")]


class KnowledgeBase:
    def __init__(self, path: str | Path, embedder: Embedder, store: VectorStore | None = None) -> None:
        self.path = Path(path)
        self.embedder = embedder
        self.store = store if store is not None else VectorStore(embedder.dimension, embedder)
        self.documents: dict[str, TableDocument] = {}
        self.examples: dict[str, ExampleRecord] = {}

    @classmethod
    def open(cls, path: str | Path, embedder: Embedder) -> "KnowledgeBase":
        path = Path(path)
        store_file = path / EMBEDDINGS
        store = VectorStore.load(store_file, embedder.dimension, embedder) if store_file.exists() else None
        kb = cls(path, embedder, store)
        for rec in read_jsonl(path / DOCUMENTS):
            doc = TableDocument.from_record(rec)
            kb.documents[doc.name] = doc
        for rec in read_jsonl(path / EXAMPLES):
            ex = ExampleRecord.from_record(rec)
            kb.examples[ex.id] = ex
        return kb

    def lock(self, timeout: float = 10.0) -> FileLock:
        self.path.mkdir(parents=True, exist_ok=True)
        return FileLock(str(self.path / ".lock"), timeout=timeout)

    def save(self) -> None:
        self.path.mkdir(parents=True, exist_ok=True)
        self.store.persist(self.path / EMBEDDINGS)
        write_jsonl(self.path / DOCUMENTS, (d.to_record() for _, d in sorted(self.documents.items())))
        write_jsonl(self.path / EXAMPLES, (e.to_record() for _, e in sorted(self.examples.items())))

    # catalog access

    def document(self, name: str) -> TableDocument | None:
        doc = self.documents.get(name)
        if doc is not None:
            return doc
        folded = name.casefold()
        for key, d in self.documents.items():
            if key.casefold() == folded:
                return d
        return None

    def is_empty(self) -> bool:
        return not self.documents and not self.examples and len(self.store) == 0

    @property
    def profile(self) -> ThresholdProfile:
        return ThresholdProfile.load(self.path / PROFILE)

    @property
    def instructions(self) -> DomainInstruction:
        return DomainInstruction.load(self.path)

    @property
    def rules(self) -> list[str]:
        return read_lines(self.path / RULES)

    @property
    def class_rules(self) -> str:
        path = self.path / CLASS_RULES
        return path.read_text(encoding="utf-8").strip() if path.exists() else ""
