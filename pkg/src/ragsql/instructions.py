"""Domain-specific instructions derived from question/SQL examples."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .documents import TableDocument
from .errors import InvalidInput, NoTablesFound, NoTablesSelected
from .example_pipeline import ExampleRecord
from .providers.llm import ChatModel
from .providers.prompts import PromptRequest
from .sqltables import extract_sql_tables

log = logging.getLogger(__name__)

INSTRUCTIONS_HEADER = "Domain-specific instructions"


@dataclass
class TableJustification:
    table: str
    justification: str
    in_sql: bool = True

    def __post_init__(self) -> None:
        if not self.table.strip() or not self.justification.strip():
            raise InvalidInput("table selection needs a table and a justification")


@dataclass
class DomainEntityMapping:
    entity: str
    tables: list[str]
    classification: str
    access: str = ""
    role: str = ""
    examples: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.tables:
            raise InvalidInput(f"mapping {self.entity!r} names no tables")
        if self.classification not in ("minor", "major"):
            raise InvalidInput(f"classification must be minor or major, got {self.classification!r}")

    def key(self) -> tuple[str, tuple[str, ...], str]:
        return (self.entity.casefold(), tuple(sorted(self.tables)), self.classification)


@dataclass
class DomainInstruction:
    text: str
    mappings: list[DomainEntityMapping]

    def save(self, kb_dir: str | Path) -> None:
        kb_dir = Path(kb_dir)
        data = [m.__dict__ for m in self.mappings]
        (kb_dir / "instructions.json").write_text(json.dumps(data, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        (kb_dir / "instructions.txt").write_text(self.text, encoding="utf-8")

    @classmethod
    def load(cls, kb_dir: str | Path) -> "DomainInstruction":
        path = Path(kb_dir) / "instructions.json"
        if not path.exists():
            return synthesize_instructions([])
        mappings = [DomainEntityMapping(**m) for m in json.loads(path.read_text(encoding="utf-8"))]
        return synthesize_instructions(mappings)


def select_tables_with_justification(
    example: ExampleRecord,
    candidate_tables: Sequence[TableDocument],
    rules: Sequence[str],
    llm: ChatModel,
) -> list[TableJustification]:
    if not example.sql:
        raise InvalidInput(f"example {example.id} has no SQL to validate against")
    if not candidate_tables:
        raise InvalidInput("no candidate tables")
    names = {d.name.casefold(): d.name for d in candidate_tables}
    request = PromptRequest(
        "select_tables",
        {
            "question": example.initial_question,
            "normalized": example.normalized,
            "sql": example.sql,
            "rules": "\n".join(f"- {r}" for r in rules) or "(none)",
            "tables": "\n\n".join(d.render() for d in candidate_tables),
        },
    )
    payload = llm.complete(request).payload
    try:
        sql_tables = extract_sql_tables(example.sql)
    except NoTablesFound:
        sql_tables = set()
    selected: list[TableJustification] = []
    for item in payload["tables"]:
        key = item["table"].strip().casefold()
        if key not in names:
            log.warning("example %s: selected table %r is not a candidate; dropped", example.id, item["table"])
            continue
        if any(s.table == names[key] for s in selected):
            continue
        in_sql = key in sql_tables
        if not in_sql:
            log.warning("example %s: selected table %r does not appear in the SQL", example.id, names[key])
        selected.append(TableJustification(names[key], item["justification"].strip(), in_sql))
    if not selected:
        raise NoTablesSelected(f"no tables selected for example {example.id}")
    return selected


def classify_entities(
    selections: Sequence[TableJustification], class_rules: str, llm: ChatModel, example_id: str | None = None
) -> list[DomainEntityMapping]:
    if not selections:
        raise InvalidInput("no table selections to classify")
    allowed = {s.table.casefold(): s.table for s in selections}
    request = PromptRequest(
        "classify_entities",
        {
            "tables": ", ".join(sorted(s.table for s in selections)),
            "selections": "\n".join(f"- {s.table}: {s.justification}" for s in selections),
            "class_rules": class_rules or "(none)",
        },
    )
    mappings = []
    for item in llm.complete(request).payload["entities"]:
        tables = []
        for t in item["tables"]:
            if t.strip().casefold() in allowed:
                canon = allowed[t.strip().casefold()]
                if canon not in tables:
                    tables.append(canon)
            else:
                log.warning("entity %r: table %r was not selected; dropped", item["entity"], t)
        if not tables:
            log.warning("entity %r maps to no selected table; dropped", item["entity"])
            continue
        cls = item["classification"]
        if cls == "minor" and len(tables) > 1:
            log.warning("entity %r spans %d tables; reclassified as major", item["entity"], len(tables))
            cls = "major"
        mappings.append(
            DomainEntityMapping(
                entity=item["entity"].strip(),
                tables=tables,
                classification=cls,
                access=item.get("access", "").strip(),
                role=item.get("role", "").strip(),
                examples=[example_id] if example_id else [],
            )
        )
    return mappings


def merge_mappings(mappings: Iterable[DomainEntityMapping]) -> list[DomainEntityMapping]:
    """Deduplicate by (entity, tables, classification), pooling provenance."""
    merged: dict[tuple, DomainEntityMapping] = {}
    for m in mappings:
        if m.classification == "minor" and len(set(m.tables)) > 1:
            m = DomainEntityMapping(m.entity, m.tables, "major", m.access, m.role, m.examples)
        k = m.key()
        if k in merged:
            cur = merged[k]
            cur.examples = sorted(set(cur.examples) | set(m.examples))
            if not cur.access and m.access:
                cur.access = m.access
        else:
            merged[k] = DomainEntityMapping(
                m.entity, sorted(m.tables), m.classification, m.access, m.role, sorted(set(m.examples))
            )
    return sorted(merged.values(), key=lambda m: (m.entity.casefold(), m.classification, m.tables, m.access))


def synthesize_instructions(all_mappings: Iterable[DomainEntityMapping]) -> DomainInstruction:
    mappings = merge_mappings(all_mappings)
    majors = [m for m in mappings if m.classification == "major"]
    minors = [m for m in mappings if m.classification == "minor"]
    lines = [INSTRUCTIONS_HEADER, "=" * len(INSTRUCTIONS_HEADER), ""]
    lines += ["Major entities", "--------------"]
    for m in majors:
        lines.append(f"## {m.entity}")
        if m.role:
            lines.append(f"role: {m.role}")
        lines.append("tables: " + " + ".join(m.tables))
        if m.access:
            lines.append(f"access: {m.access}")
        lines.append("")
    lines += ["", "Minor entities", "--------------"]
    for m in minors:
        lines.append(f"- {m.entity} → table: {m.tables[0]}, column/aggregation: {m.access or 'n/a'}")
    return DomainInstruction("\n".join(lines).rstrip() + "\n", mappings)
