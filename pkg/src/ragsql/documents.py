"""Table documentation: structuring, entity voting, schema-driven drafting, embedding."""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InconsistentExtraction, InvalidInput, MalformedResponse, RetrainConflict
from .providers.embedder import Embedder
from .providers.llm import ChatModel
from .providers.prompts import PromptRequest
from .store import EmbeddingEntry, VectorStore

log = logging.getLogger(__name__)

REQUIRED_SECTIONS = ("Table Description", "Columns Description", "Potential Dependencies")

# versioned description templates; bump the suffix when the wording changes
SHORT_TEMPLATE_V1 = "Table {name}: {summary}"
LONG_TEMPLATE_V1 = "Table {name}\nSummary: {summary}\nPurpose: {purpose}\nColumns:\n{columns}"
DEPENDENCY_TEMPLATE_V1 = "Table {name} dependencies: {thoughts}\nKeys: {keys}"
CONNECTED_TEMPLATE_V1 = "{name} ↔ {other}"


@dataclass
class ColumnDescription:
    column: str
    description: str = ""


@dataclass
class TableDocument:
    name: str
    summary: str = ""
    purpose: str = ""
    dependencies_thoughts: str = ""
    keys: list[str] = field(default_factory=list)
    connected_tables: list[str] = field(default_factory=list)
    columns: list[ColumnDescription] = field(default_factory=list)
    entities: list[str] = field(default_factory=list)
    strong_entities: list[str] = field(default_factory=list)
    raw_text: str = ""

    @property
    def column_names(self) -> list[str]:
        return [c.column for c in self.columns]

    def validate(self) -> None:
        if not self.name or not self.name.strip():
            raise InconsistentExtraction("name", "table name is empty")
        names = self.column_names
        dupes = sorted(n for n, c in Counter(names).items() if c > 1)
        if dupes:
            raise InconsistentExtraction("columns", f"duplicate columns {dupes}")
        if any(not n.strip() for n in names):
            raise InconsistentExtraction("columns", "empty column name")
        unknown = [k for k in self.keys if k not in names]
        if unknown:
            raise InconsistentExtraction("keys", f"{unknown} are not columns of {self.name}")
        if self.name in self.connected_tables:
            raise InconsistentExtraction("connected_tables", "table lists itself")
        if not set(self.strong_entities) <= set(self.entities):
            raise InconsistentExtraction("strong_entities", "not a subset of entities")

    def to_record(self) -> dict:
        return asdict(self)

    @classmethod
    def from_record(cls, rec: dict) -> "TableDocument":
        rec = dict(rec)
        rec["columns"] = [ColumnDescription(**c) for c in rec.get("columns", [])]
        return cls(**rec)

    def render(self) -> str:
        """Full-text description used as prompt context."""
        lines = [f"Table: {self.name}", f"Summary: {self.summary}", f"Purpose: {self.purpose}"]
        if self.dependencies_thoughts:
            lines.append(f"Dependencies: {self.dependencies_thoughts}")
        if self.keys:
            lines.append("Keys: " + ", ".join(self.keys))
        if self.connected_tables:
            lines.append("Connected tables: " + ", ".join(self.connected_tables))
        lines.append("Columns:")
        lines.extend(f"  - {c.column}: {c.description}" for c in self.columns)
        return "\n".join(lines)


@dataclass
class SchemaColumn:
    name: str
    data_type: str = ""
    key: str | None = None  # "primary" | "sort" | "foreign"


@dataclass
class TableSchema:
    table: str
    columns: list[SchemaColumn]

    def __post_init__(self) -> None:
        if not self.table:
            raise InvalidInput("schema needs a table name")
        if not self.columns:
            raise InvalidInput(f"schema for {self.table} has no columns")
        names = [c.name.casefold() for c in self.columns]
        if len(set(names)) != len(names):
            raise InvalidInput(f"schema for {self.table} repeats a column name")

    def render_columns(self) -> str:
        out = []
        for c in self.columns:
            marker = f" [{c.key} key]" if c.key else ""
            out.append(f"- {c.name} {c.data_type}{marker}".rstrip())
        return "\n".join(out)


def _dedupe(items: Iterable[str]) -> list[str]:
    seen: dict[str, None] = {}
    for it in items:
        it = it.strip()
        if it and it not in seen:
            seen[it] = None
    return list(seen)


def structure_document(raw_text: str, llm: ChatModel) -> TableDocument:
    if not raw_text or not raw_text.strip():
        raise InvalidInput("documentation text is empty")
    resp = llm.complete(PromptRequest("structure_document", {"raw_text": raw_text}))
    p = resp.payload
    doc = TableDocument(
        name=p["name"].strip(),
        summary=p["summary"].strip(),
        purpose=p["purpose"].strip(),
        dependencies_thoughts=p["dependencies_thoughts"].strip(),
        keys=_dedupe(p["keys"]),
        connected_tables=_dedupe(p["connected_tables"]),
        columns=[ColumnDescription(c["column"].strip(), c["description"].strip()) for c in p["columns"]],
        raw_text=raw_text,
    )
    doc.validate()
    return doc


def normalize_label(label: str) -> str:
    return " ".join(label.split()).casefold()


def aggregate_votes(runs: Sequence[Iterable[str]], unanimity: bool = True) -> tuple[list[str], list[str]]:
    """Frequency vote over several entity lists.

    A label's support is the number of runs mentioning it.  Labels seen in a
    single run are dropped; the strong tier needs every run (or, with
    ``unanimity=False``, a strict majority).  A single run is taken as is.
    """
    v = len(runs)
    support: Counter[str] = Counter()
    for run in runs:
        support.update({normalize_label(x) for x in run if x and x.strip()})
    ranked = sorted(support.items(), key=lambda kv: (-kv[1], kv[0]))
    if v == 1:
        labels = [label for label, _ in ranked]
        return labels, list(labels)
    entities = [label for label, n in ranked if n >= 2]
    if unanimity:
        strong = [label for label, n in ranked if n == v]
    else:
        strong = [label for label, n in ranked if n >= 2 and 2 * n > v]
    return entities, strong


def extract_entities(
    doc: TableDocument, llm: ChatModel, v: int = 5, unanimity: bool = True
) -> tuple[list[str], list[str]]:
    request = PromptRequest(
        "extract_entities",
        {
            "name": doc.name,
            "summary": doc.summary,
            "purpose": doc.purpose,
            "columns": "\n".join(f"- {c.column}: {c.description}" for c in doc.columns),
        },
    )
    runs = [r.payload["entities"] for r in llm.vote_complete(request, v)]
    return aggregate_votes(runs, unanimity)


def _mentions(text: str, word: str) -> bool:
    return re.search(rf"(?<![\w]){re.escape(word)}(?![\w])", text, re.IGNORECASE) is not None


def _document_problems(text: str, schema: TableSchema) -> list[str]:
    problems = [f"missing section {s!r}" for s in REQUIRED_SECTIONS if s.casefold() not in text.casefold()]
    missing_cols = [c.name for c in schema.columns if not _mentions(text, c.name)]
    if missing_cols:
        problems.append(f"columns not described: {missing_cols}")
    return problems


def generate_document_from_schema(schema: TableSchema, llm: ChatModel, domain_hint: str | None = None) -> str:
    request = PromptRequest(
        "generate_document",
        {"table": schema.table, "columns": schema.render_columns(), "domain_hint": domain_hint or "none"},
    )
    text = llm.complete(request).payload["text"]
    problems = _document_problems(text, schema)
    if problems:
        text = llm.complete(request, feedback="Fix the description: " + "; ".join(problems)).payload["text"]
        problems = _document_problems(text, schema)
        if problems:
            raise MalformedResponse(f"generated description of {schema.table}: " + "; ".join(problems))
    return text


def document_entries(doc: TableDocument, embedder: Embedder) -> list[EmbeddingEntry]:
    """The multi-category embeddings of one table (without storing them)."""
    name = doc.name
    digest = "\n".join(f"- {c.column}: {c.description}" for c in doc.columns) or "(none)"
    texts: list[tuple[str, str, str]] = [
        (
            f"doc:{name}:description",
            "description",
            LONG_TEMPLATE_V1.format(name=name, summary=doc.summary, purpose=doc.purpose, columns=digest),
        ),
        (
            f"doc:{name}:dependency",
            "dependency",
            DEPENDENCY_TEMPLATE_V1.format(
                name=name, thoughts=doc.dependencies_thoughts or "none stated", keys=", ".join(doc.keys) or "none"
            ),
        ),
        (f"doc:{name}:table_name", "table_name", SHORT_TEMPLATE_V1.format(name=name, summary=doc.summary)),
    ]
    texts += [
        (f"doc:{name}:connected_tables:{i}", "connected_tables", CONNECTED_TEMPLATE_V1.format(name=name, other=other))
        for i, other in enumerate(doc.connected_tables)
    ]
    texts += [(f"doc:{name}:entity:{i}", "entity", label) for i, label in enumerate(doc.entities)]
    return [
        EmbeddingEntry(id=eid, vector=embedder.embed(text), text=text, category=cat, source_kind="document", ref_id=name)
        for eid, cat, text in texts
    ]


def train_document(doc: TableDocument, store: VectorStore, embedder: Embedder) -> list[EmbeddingEntry]:
    doc.validate()
    if store.has_ref(doc.name, "document"):
        raise RetrainConflict(f"table {doc.name} is already trained; purge it first")
    entries = document_entries(doc, embedder)
    store.add_many(entries)
    return entries


# schema input

_CREATE = re.compile(
    r"CREATE\s+(?:OR\s+REPLACE\s+)?(?:TEMP(?:ORARY)?\s+)?TABLE\s+(?:IF\s+NOT\s+EXISTS\s+)?"
    r"(?P<name>[\w.\"`\[\]]+)\s*\(",
    re.IGNORECASE,
)
_CONSTRAINT_START = re.compile(r"^(PRIMARY\s+KEY|FOREIGN\s+KEY|UNIQUE|CONSTRAINT|KEY|INDEX|CHECK|SORTKEY|DISTKEY)\b", re.I)


def _split_top_level(body: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in body:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def _ident(raw: str) -> str:
    return raw.strip().strip('"`[]')


def _paren_names(text: str) -> list[str]:
    m = re.search(r"\(([^)]*)\)", text)
    return [_ident(x) for x in m.group(1).split(",")] if m else []


def parse_ddl(ddl: str) -> list[TableSchema]:
    """``CREATE TABLE`` statements to schemas; key markers from PRIMARY KEY / SORTKEY / REFERENCES."""
    schemas = []
    for m in _CREATE.finditer(ddl):
        start = m.end()
        depth, i = 1, start
        while i < len(ddl) and depth:
            depth += {"(": 1, ")": -1}.get(ddl[i], 0)
            i += 1
        body, tail = ddl[start : i - 1], ddl[i : ddl.find(";", i) if ";" in ddl[i:] else len(ddl)]
        columns: list[SchemaColumn] = []
        markers: dict[str, str] = {}
        for item in _split_top_level(body):
            head = _CONSTRAINT_START.match(item)
            if head:
                kind = head.group(1).upper()
                if kind.startswith("PRIMARY"):
                    markers.update({c.casefold(): "primary" for c in _paren_names(item)})
                elif kind.startswith("FOREIGN"):
                    markers.update({c.casefold(): "foreign" for c in _paren_names(item)})
                elif kind == "SORTKEY":
                    markers.update({c.casefold(): "sort" for c in _paren_names(item)})
                continue
            bits = item.split(None, 1)
            name = _ident(bits[0])
            rest = bits[1] if len(bits) > 1 else ""
            type_match = re.match(r"[\w]+(?:\s*\([^)]*\))?", rest)
            key = None
            upper = rest.upper()
            if "PRIMARY KEY" in upper:
                key = "primary"
            elif "SORTKEY" in upper:
                key = "sort"
            elif "REFERENCES" in upper:
                key = "foreign"
            columns.append(SchemaColumn(name, type_match.group(0) if type_match else "", key))
        for opt in re.finditer(r"(?:COMPOUND\s+|INTERLEAVED\s+)?SORTKEY\s*\(([^)]*)\)", tail, re.I):
            markers.update({_ident(c).casefold(): "sort" for c in opt.group(1).split(",")})
        for col in columns:
            if col.key is None and col.name.casefold() in markers:
                col.key = markers[col.name.casefold()]
        schemas.append(TableSchema(_ident(m.group("name")), columns))
    return schemas


def load_schemas(path: str | Path) -> list[TableSchema]:
    """Read DDL (``.sql``/``.ddl``) or table-schema records (``.json``/``.jsonl``)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() in {".json", ".jsonl"}:
        if path.suffix.lower() == ".jsonl":
            records = [json.loads(ln) for ln in text.splitlines() if ln.strip()]
        else:
            data = json.loads(text)
            records = data if isinstance(data, list) else [data]
        return [
            TableSchema(
                r["table"],
                [SchemaColumn(c["name"], c.get("type", c.get("data_type", "")), c.get("key")) for c in r["columns"]],
            )
            for r in records
        ]
    return parse_ddl(text)
