"""Question/SQL example ingestion: normalization, main clause, variations, embeddings."""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import asdict, dataclass, field
from typing import Any

from .errors import DegenerateVariations, InvalidInput, NoTablesFound, NormalizationLeak, RetrainConflict
from .providers.embedder import Embedder
from .providers.llm import ChatModel
from .providers.prompts import PromptRequest
from .sqltables import extract_sql_tables
from .store import EmbeddingEntry, VectorStore

log = logging.getLogger(__name__)

DEFAULT_VARIATIONS = 3
ENTITY_JOINER = "; "
ENTITY_KINDS = ("category", "metric", "identifier")


@dataclass
class EntitySpec:
    label: str
    kind: str
    attributes: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.label.strip():
            raise InvalidInput("entity label is empty")
        if self.kind not in ENTITY_KINDS:
            raise InvalidInput(f"entity kind must be one of {ENTITY_KINDS}, got {self.kind!r}")


@dataclass
class DataSourceRef:
    table: str
    columns: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.table.strip():
            raise InvalidInput("data source table is empty")
        self.columns = list(dict.fromkeys(self.columns))


@dataclass
class OperationSpec:
    operation: str
    target: str = ""
    condition: str = ""


@dataclass
class ExampleRecord:
    id: str
    initial_question: str
    sql: str | None
    normalized: str
    main_clause: str
    details: str = ""
    entities: list[EntitySpec] = field(default_factory=list)
    data_sources: list[DataSourceRef] = field(default_factory=list)
    operations: list[OperationSpec] = field(default_factory=list)
    variations: list[str] = field(default_factory=list)

    @property
    def entity_labels(self) -> list[str]:
        return [e.label for e in self.entities]

    def tables(self) -> set[str]:
        """Tables the example touches: its SQL plus its recorded data sources."""
        names = {d.table.casefold() for d in self.data_sources}
        if self.sql:
            try:
                names |= extract_sql_tables(self.sql)
            except NoTablesFound:
                pass
        return names

    def to_record(self) -> dict:
        return asdict(self)

    @classmethod
    def from_record(cls, rec: dict) -> "ExampleRecord":
        rec = dict(rec)
        rec["entities"] = [EntitySpec(**e) for e in rec.get("entities", [])]
        rec["data_sources"] = [DataSourceRef(**d) for d in rec.get("data_sources", [])]
        rec["operations"] = [OperationSpec(**o) for o in rec.get("operations", [])]
        return cls(**rec)


def example_id(question: str, sql: str | None = None) -> str:
    digest = hashlib.sha1(f"{question.strip()}\x00{(sql or '').strip()}".encode("utf-8")).hexdigest()
    return f"ex-{digest[:12]}"


def _is_db_identifier(name: str) -> bool:
    # plain words such as "events" double as English; only identifier-shaped names can leak
    return bool(re.search(r"[^A-Za-z]", name))


def find_leaks(normalized: str, identifiers: set[str]) -> list[str]:
    found = []
    for ident in sorted(identifiers):
        for part in {ident, ident.rsplit(".", 1)[-1]}:
            if _is_db_identifier(part) and re.search(
                rf"(?<![\w]){re.escape(part)}(?![\w])", normalized, re.IGNORECASE
            ):
                found.append(part)
    return sorted(set(found))


def normalize_and_extract(
    question: str, sql: str | None, llm: ChatModel
) -> tuple[str, list[EntitySpec], list[DataSourceRef], list[OperationSpec]]:
    if not question or not question.strip():
        raise InvalidInput("question is empty")
    sql = sql.strip() if sql and sql.strip() else None
    resp = llm.complete(PromptRequest("normalize", {"question": question, "sql": sql or ""}))
    p = resp.payload
    normalized = p["normalized"].strip()
    entities = [EntitySpec(e["label"].strip(), e["kind"], dict(e.get("attributes") or {})) for e in p["entities"]]
    operations = [OperationSpec(o["operation"], o.get("target", ""), o.get("condition", "")) for o in p["operations"]]
    if sql is None:
        sources: list[DataSourceRef] = []
    else:
        sql_tables = extract_sql_tables(sql)
        sources = []
        for d in p["data_sources"]:
            if d["table"].casefold() in sql_tables:
                sources.append(DataSourceRef(d["table"].casefold(), list(d["columns"])))
            else:
                log.warning("dropping data source %r: not referenced by the SQL", d["table"])
        identifiers = sql_tables | {c for d in sources for c in d.columns}
        leaks = find_leaks(normalized, identifiers)
        if leaks:
            raise NormalizationLeak(leaks)
    return normalized, entities, sources, operations


def split_main_clause(question: str, llm: ChatModel) -> tuple[str, str]:
    if not question or not question.strip():
        raise InvalidInput("question is empty")
    p = llm.complete(PromptRequest("split_main_clause", {"question": question})).payload
    return p["main_clause"].strip(), p["details"].strip()


def _clean_variations(raw: list[str], normalized: str) -> list[str]:
    out: list[str] = []
    for v in raw:
        v = v.strip()
        if v and v != normalized and v not in out:
            out.append(v)
    return out


def generate_variations(normalized: str, sql: str | None, llm: ChatModel, k: int = DEFAULT_VARIATIONS) -> list[str]:
    if not normalized or not normalized.strip():
        raise InvalidInput("normalized question is empty")
    if k < 1:
        raise InvalidInput("k must be >= 1")
    request = PromptRequest("generate_variations", {"normalized": normalized, "sql": sql or "(none)", "k": str(k)})
    found = _clean_variations(llm.complete(request).payload["variations"], normalized)
    if len(found) < k:
        feedback = f"Give {k} distinct questions, none identical to the original."
        found = _clean_variations(llm.complete(request, feedback=feedback).payload["variations"], normalized)
        if len(found) < k:
            raise DegenerateVariations(f"needed {k} distinct variations, got {len(found)}")
    return found[:k]


def build_example(
    question: str, sql: str | None, llm: ChatModel, k: int = DEFAULT_VARIATIONS, example_id_: str | None = None
) -> ExampleRecord:
    normalized, entities, sources, operations = normalize_and_extract(question, sql, llm)
    main, details = split_main_clause(question, llm)
    variations = generate_variations(normalized, sql, llm, k)
    return ExampleRecord(
        id=example_id_ or example_id(question, sql),
        initial_question=question,
        sql=sql,
        normalized=normalized,
        main_clause=main,
        details=details,
        entities=entities,
        data_sources=sources,
        operations=operations,
        variations=variations,
    )


def entity_text(record: ExampleRecord) -> str:
    # an example without entities still gets its entity point, anchored on the main clause
    return ENTITY_JOINER.join(record.entity_labels) or record.main_clause


def example_entries(record: ExampleRecord, embedder: Embedder) -> list[EmbeddingEntry]:
    rid = record.id
    texts = [
        (f"ex:{rid}:init", "init", record.initial_question),
        (f"ex:{rid}:normalized", "normalized", record.normalized),
        (f"ex:{rid}:main_clause", "main_clause", record.main_clause),
    ]
    texts += [(f"ex:{rid}:similar:{i}", "similar", v) for i, v in enumerate(record.variations)]
    texts.append((f"ex:{rid}:entity", "entity", entity_text(record)))
    return [
        EmbeddingEntry(id=eid, vector=embedder.embed(text), text=text, category=cat, source_kind="example", ref_id=rid)
        for eid, cat, text in texts
    ]


def train_example(record: ExampleRecord, store: VectorStore, embedder: Embedder) -> list[EmbeddingEntry]:
    if not record.normalized.strip():
        raise InvalidInput(f"example {record.id} has no normalized question")
    if not record.variations:
        raise InvalidInput(f"example {record.id} has no variations")
    if store.has_ref(record.id, "example"):
        raise RetrainConflict(f"example {record.id} is already trained; purge it first")
    entries = example_entries(record, embedder)
    store.add_many(entries)
    return entries
