"""Prompt templates and the JSON schemas of their structured responses.

Templates use ``string.Template`` ``$slot`` placeholders.  Each template
declares its *key slots*: the subset of slots that identifies a request.
Context slots (rendered table documentation, retrieved SQL, instructions)
are excluded so offline fixtures stay small and hand-writable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from string import Template
from typing import Any

import jsonschema

from ..errors import InvalidInput

_STR = {"type": "string"}
_STR_LIST = {"type": "array", "items": {"type": "string"}}

SHAPES: dict[str, dict[str, Any]] = {
    "table_document": {
        "type": "object",
        "required": [
            "name",
            "summary",
            "purpose",
            "dependencies_thoughts",
            "keys",
            "connected_tables",
            "columns",
        ],
        "properties": {
            "name": {"type": "string", "minLength": 1},
            "summary": _STR,
            "purpose": _STR,
            "dependencies_thoughts": _STR,
            "keys": _STR_LIST,
            "connected_tables": _STR_LIST,
            "columns": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["column", "description"],
                    "properties": {"column": {"type": "string", "minLength": 1}, "description": _STR},
                },
            },
        },
    },
    "entity_list": {
        "type": "object",
        "required": ["entities"],
        "properties": {"entities": _STR_LIST},
    },
    "document_text": {
        "type": "object",
        "required": ["text"],
        "properties": {"text": {"type": "string", "minLength": 1}},
    },
    "example_structure": {
        "type": "object",
        "required": ["normalized", "entities", "data_sources", "operations"],
        "properties": {
            "normalized": {"type": "string", "minLength": 1},
            "entities": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["label", "kind"],
                    "properties": {
                        "label": {"type": "string", "minLength": 1},
                        "kind": {"enum": ["category", "metric", "identifier"]},
                        "attributes": {"type": "object"},
                    },
                },
            },
            "data_sources": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["table", "columns"],
                    "properties": {"table": {"type": "string", "minLength": 1}, "columns": _STR_LIST},
                },
            },
            "operations": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["operation"],
                    "properties": {
                        "operation": {"type": "string", "minLength": 1},
                        "target": _STR,
                        "condition": _STR,
                    },
                },
            },
        },
    },
    "main_clause": {
        "type": "object",
        "required": ["main_clause", "details"],
        "properties": {"main_clause": {"type": "string", "minLength": 1}, "details": _STR},
    },
    "variations": {
        "type": "object",
        "required": ["variations"],
        "properties": {"variations": _STR_LIST},
    },
    "table_justifications": {
        "type": "object",
        "required": ["tables"],
        "properties": {
            "tables": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["table", "justification"],
                    "properties": {"table": _STR, "justification": _STR},
                },
            }
        },
    },
    "entity_mappings": {
        "type": "object",
        "required": ["entities"],
        "properties": {
            "entities": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["entity", "tables", "classification"],
                    "properties": {
                        "entity": {"type": "string", "minLength": 1},
                        "role": _STR,
                        "tables": _STR_LIST,
                        "classification": {"enum": ["minor", "major"]},
                        "access": _STR,
                    },
                },
            }
        },
    },
    "table_list": {
        "type": "object",
        "required": ["tables"],
        "properties": {"tables": _STR_LIST, "reasoning": _STR},
    },
    "sql": {
        "type": "object",
        "required": ["sql"],
        "properties": {"sql": {"type": "string", "minLength": 1}, "notes": _STR},
    },
}


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    text: str
    shape: str
    key_slots: tuple[str, ...]
    slots: tuple[str, ...] = field(default=())

    def render(self, slots: dict[str, str]) -> str:
        return Template(self.text).substitute(slots)


@dataclass(frozen=True)
class PromptRequest:
    template_id: str
    slots: dict[str, str]
    expected_shape: str = ""

    def __post_init__(self) -> None:
        tpl = TEMPLATES.get(self.template_id)
        if tpl is None:
            raise InvalidInput(f"unknown template {self.template_id!r}")
        missing = [s for s in tpl.slots if s not in self.slots]
        if missing:
            raise InvalidInput(f"{self.template_id}: unfilled slots {missing}")
        if not self.expected_shape:
            object.__setattr__(self, "expected_shape", tpl.shape)
        elif self.expected_shape != tpl.shape:
            raise InvalidInput(f"{self.template_id} answers {tpl.shape}, not {self.expected_shape}")

    @property
    def template(self) -> PromptTemplate:
        return TEMPLATES[self.template_id]

    def key(self) -> dict[str, str]:
        return {name: self.slots[name] for name in self.template.key_slots}

    def fingerprint(self) -> str:
        return fingerprint(self.key())

    def render(self) -> str:
        return self.template.render(self.slots)


@dataclass(frozen=True)
class StructuredResponse:
    shape_id: str
    payload: Any


def fingerprint(key_slots: dict[str, str]) -> str:
    blob = json.dumps(key_slots, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def validate_payload(shape_id: str, payload: Any) -> None:
    """Raise ``jsonschema.ValidationError`` when *payload* does not fit *shape_id*."""
    jsonschema.validate(payload, SHAPES[shape_id])


_JSON_ONLY = "Answer with a single JSON object and nothing else."

_MAIN_CLAUSE_SHOTS = """\
Question: "Show me a list of sales transactions for Q4, including product details and revenue"
{"main_clause": "list of sales transactions", "details": "for Q4, including product details and revenue"}

Question: "Display the number of active users by country over the past month"
{"main_clause": "number of active users", "details": "by country over the past month"}

Question: "Get the total revenue for each department last year"
{"main_clause": "total revenue for each department", "details": "over a defined timeframe"}"""

_REFINE_SCAFFOLD = """\
Reason step by step before answering:
1. Coverage analysis: read each candidate's description and columns and decide which
   parts of the request it can serve.
2. Comprehensive coverage: keep every table that may hold needed data even when the
   question does not name it, plus tables required to join them.
3. Business logic: apply the domain instructions and business rules to settle ambiguity."""


def _tpl(template_id: str, shape: str, key: tuple[str, ...], text: str) -> PromptTemplate:
    slots = tuple(sorted({m.group("named") or m.group("braced") for m in Template.pattern.finditer(text)
                          if m.group("named") or m.group("braced")}))
    return PromptTemplate(template_id, text, shape, key, slots)


TEMPLATES: dict[str, PromptTemplate] = {
    t.template_id: t
    for t in [
        _tpl(
            "structure_document",
            "table_document",
            ("raw_text",),
            f"""You convert free-form documentation of one database table into JSON.
Fields: name, summary (one sentence), purpose (why the table exists),
dependencies_thoughts (informal notes on how columns relate to other tables),
keys (columns used to join other tables, often named <name>_id),
connected_tables (tables reached through those keys),
columns (list of {{"column": ..., "description": ...}} for every column).
{_JSON_ONLY}

Documentation:
$raw_text""",
        ),
        _tpl(
            "extract_entities",
            "entity_list",
            ("name",),
            f"""Table $name: $summary
Purpose: $purpose
Columns:
$columns

List the higher-level domain entities that can be inferred from this table's purpose.
Prefer meaningful concepts that are implied rather than raw column names.
Return {{"entities": [...]}}. {_JSON_ONLY}""",
        ),
        _tpl(
            "generate_document",
            "document_text",
            ("table", "columns"),
            f"""Write documentation for the database table `$table`.
Domain hint: $domain_hint
Columns (name, type, key marker):
$columns

Use exactly these section headers: "Table Description", "Columns Description",
"Potential Dependencies".  Describe every column by name, point out primary and
sort keys, and list likely relationships with other tables.
Return {{"text": "..."}}. {_JSON_ONLY}""",
        ),
        _tpl(
            "normalize",
            "example_structure",
            ("question", "sql"),
            f"""Analyse the question and (optional) SQL answer.

Question: $question
SQL: $sql

normalized: restate the question generically. Drop database identifiers and display
verbs (show, display, chart), replace concrete dates, ids, names and numbers with
generic terms, and keep it a directive phrase.
entities: the data elements requested, each {{"label", "kind": category|metric|identifier,
"attributes": {{}}}}; ignore time filters that do not change what is requested.
data_sources: tables and columns used by the SQL as {{"table", "columns"}}; leave the list
empty when no SQL is given.
operations: aggregations, groupings and filters as {{"operation", "target", "condition"}}
with conditions written in plain language.
{_JSON_ONLY}""",
        ),
        _tpl(
            "split_main_clause",
            "main_clause",
            ("question",),
            f"""Split a question into its main clause (the core data request) and details
(filters, grouping, ordering, timeframe).  Details are "" when there are none.

{_MAIN_CLAUSE_SHOTS}

Question: "$question"
{_JSON_ONLY}""",
        ),
        _tpl(
            "generate_variations",
            "variations",
            ("normalized", "k"),
            f"""Here is a generalized question and the SQL that answers it.

Question: $normalized
SQL: $sql

Write $k different questions with the same meaning that the same SQL would answer.
Do not repeat the question itself. Return {{"variations": [...]}}. {_JSON_ONLY}""",
        ),
        _tpl(
            "select_tables",
            "table_justifications",
            ("question",),
            f"""Question: $question
Normalized: $normalized
Reference SQL (for validation only): $sql
Business rules:
$rules

Candidate tables:
$tables

Choose the tables required to answer the question and justify each one.
Return {{"tables": [{{"table", "justification"}}]}}. {_JSON_ONLY}""",
        ),
        _tpl(
            "classify_entities",
            "entity_mappings",
            ("tables",),
            f"""Selected tables: $tables
Why they are needed:
$selections

Classification rules:
$class_rules

Derive the domain entities these tables expose.  A minor entity is a single attribute
or data point served by one table (a column or a simple aggregation).  A major entity is
a broader concept that needs several tables or business logic.
Return {{"entities": [{{"entity", "role", "tables", "classification": minor|major,
"access": column / aggregation / join description}}]}}. {_JSON_ONLY}""",
        ),
        _tpl(
            "rule_tables",
            "table_list",
            ("normalized",),
            f"""Request: $normalized
Business rules:
$rules
Known tables: $tables

Which tables do the business rules require for this request?
Return {{"tables": [...]}}. {_JSON_ONLY}""",
        ),
        _tpl(
            "refine_tables",
            "table_list",
            ("normalized",),
            f"""Request: $normalized

Domain instructions:
$instructions

Business rules:
$rules

Candidate tables:
$candidates

{_REFINE_SCAFFOLD}
Return {{"tables": [...], "reasoning": "..."}} using only candidate table names. {_JSON_ONLY}""",
        ),
        _tpl(
            "generate_sql_examples",
            "sql",
            ("question",),
            f"""Write SQL answering the request by adapting the reference queries.

Request: $question
Normalized request: $normalized
Reference SQL:
$examples

Supporting table documentation:
$tables

Follow the patterns of the reference SQL, check the documentation for details, and
handle table dependencies correctly.  Use as few tables as possible, do not add
operations the request does not ask for, and use only the documented schema.
Return {{"sql": "...", "notes": "..."}}. {_JSON_ONLY}""",
        ),
        _tpl(
            "generate_sql_docs",
            "sql",
            ("question",),
            f"""Write SQL answering the request from the table documentation.

Request: $question
Normalized request: $normalized
Tables (the only tables you may use):
$tables

Optional reference SQL (may mention other tables; do not copy those):
$examples

Pick the tables from the documentation, verify their dependencies and build joins only
along documented relationships, check the combination answers the request, and avoid
unnecessary tables.  Use only the tables listed above.
Return {{"sql": "...", "notes": "..."}}. {_JSON_ONLY}""",
        ),
    ]
}
