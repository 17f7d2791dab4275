"""Choosing a generation mode and producing validated SQL."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .documents import TableDocument
from .errors import InvalidGeneration, NoContext, NoTablesFound
from .providers.llm import ChatModel
from .providers.prompts import PromptRequest
from .retrieval import QuestionViews, RetrievalOutcome, Stage
from .sqltables import extract_sql_tables

log = logging.getLogger(__name__)


class Mode(str, Enum):
    DIRECT = "Direct"
    EXACT_EXAMPLES = "ExactExampleBased"
    ALIGNED_EXAMPLES = "StronglyAlignedExampleBased"
    DOCUMENTATION = "DocumentationDriven"


@dataclass
class GenerationPlan:
    mode: Mode
    sql_examples: list[str]
    tables: list[TableDocument]
    example_ids: list[str] = field(default_factory=list)
    # tables generated SQL may reference
    allowed_tables: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.mode is Mode.DIRECT and len(self.sql_examples) != 1:
            raise ValueError("a direct plan carries exactly one SQL statement")
        if self.mode is Mode.DOCUMENTATION and not self.tables:
            raise NoContext("documentation-driven generation needs refined tables")

    @property
    def provenance(self) -> dict:
        return {"examples": list(self.example_ids), "tables": [t.name for t in self.tables]}


@dataclass
class SqlValidation:
    ok: bool
    referenced: list[str]
    offenders: list[str] = field(default_factory=list)
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


@dataclass
class GeneratedSql:
    sql: str
    mode: Mode
    referenced_tables: list[str]
    notes: str = ""
    provenance: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "sql": self.sql,
            "mode": self.mode.value,
            "referenced_tables": self.referenced_tables,
            "notes": self.notes,
            "provenance": self.provenance,
        }


def _example_tables(sqls: Iterable[str]) -> set[str]:
    names: set[str] = set()
    for sql in sqls:
        try:
            names |= extract_sql_tables(sql)
        except NoTablesFound:
            pass
    return names


def plan_generation(outcome: RetrievalOutcome, refined: Sequence[TableDocument] = ()) -> GenerationPlan:
    ids = [m.example_id for m in outcome.matches]
    t_code = list(outcome.tables_from_examples)
    if outcome.stage is Stage.EXACT:
        mode, sqls, tables = Mode.DIRECT, [outcome.direct_sql], t_code
    elif outcome.stage is Stage.NORMALIZED:
        mode, sqls, tables = Mode.EXACT_EXAMPLES, list(outcome.sql_exact), t_code
    elif outcome.stage in (Stage.MAIN_CLAUSE, Stage.RERANKED):
        mode, sqls, tables = Mode.ALIGNED_EXAMPLES, list(outcome.sql_strong), t_code
    else:
        if not refined:
            raise NoContext("no examples and no tables retrieved")
        mode, sqls, tables = Mode.DOCUMENTATION, list(outcome.sql_templates), list(refined)
    allowed = {t.name.casefold() for t in tables}
    if mode in (Mode.EXACT_EXAMPLES, Mode.ALIGNED_EXAMPLES):
        # matched examples are trusted sources of table names even when undocumented
        allowed |= _example_tables(sqls)
    return GenerationPlan(mode, sqls, tables, ids, sorted(allowed))


def validate_sql(sql: str, allowed_tables: Iterable[str]) -> SqlValidation:
    allowed = {t.casefold() for t in allowed_tables}
    try:
        referenced = extract_sql_tables(sql)
    except NoTablesFound:
        return SqlValidation(False, [], [], "SQL references no tables")
    offenders = sorted(referenced - allowed)
    if offenders:
        return SqlValidation(False, sorted(referenced), offenders, "tables outside the allowed set: " + ", ".join(offenders))
    return SqlValidation(True, sorted(referenced))


def _render_examples(sqls: Sequence[str]) -> str:
    if not sqls:
        return "(none)"
    return "\n\n".join(f"-- example {i + 1}\n{s.strip()}" for i, s in enumerate(sqls))


def generate_sql(views: QuestionViews, plan: GenerationPlan, llm: ChatModel) -> GeneratedSql:
    if plan.mode is Mode.DIRECT:
        sql = plan.sql_examples[0]
        return GeneratedSql(sql, plan.mode, sorted(_example_tables([sql])), "stored SQL returned unchanged", plan.provenance)
    template = "generate_sql_docs" if plan.mode is Mode.DOCUMENTATION else "generate_sql_examples"
    request = PromptRequest(
        template,
        {
            "question": views.initial,
            "normalized": views.normalized,
            "examples": _render_examples(plan.sql_examples),
            "tables": "\n\n".join(t.render() for t in plan.tables) or "(none)",
        },
    )
    payload = llm.complete(request).payload
    check = validate_sql(payload["sql"], plan.allowed_tables)
    if not check:
        log.info("generated SQL rejected (%s); asking for a correction", check.reason)
        feedback = f"The SQL is invalid: {check.reason}. Allowed tables: {', '.join(plan.allowed_tables)}."
        payload = llm.complete(request, feedback=feedback).payload
        check = validate_sql(payload["sql"], plan.allowed_tables)
        if not check:
            raise InvalidGeneration(f"generated SQL failed validation: {check.reason}", check)
    return GeneratedSql(payload["sql"], plan.mode, check.referenced, payload.get("notes", ""), plan.provenance)
