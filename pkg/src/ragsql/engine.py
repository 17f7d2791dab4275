"""Orchestration of training, calibration and question answering over one KB."""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .calibration import (
    ThresholdProfile,
    calibrate,
    overlap_report,
    pairwise_similarities,
    stats_summary,
)
from .config import EngineConfig
from .documents import (
    TableDocument,
    extract_entities,
    generate_document_from_schema,
    load_schemas,
    structure_document,
    train_document,
)
from .errors import InconsistentExtraction, InvalidInput, NoContext, RagSqlError, RefinementEmpty
from .example_pipeline import ExampleRecord, build_example, train_example
from .instructions import (
    DomainEntityMapping,
    classify_entities,
    select_tables_with_justification,
    synthesize_instructions,
)
from .kb import PROFILE, REPORT, KnowledgeBase
from .providers.embedder import Embedder
from .providers.llm import ChatModel
from .providers.reranker import Reranker
from .retrieval import (
    QuestionViews,
    RetrievalOutcome,
    Stage,
    TableCandidates,
    derive_views,
    refine_tables,
    retrieve_documents_detailed,
    retrieve_examples,
    select_tables_by_rules,
)
from .sqlgen import GeneratedSql, generate_sql, plan_generation

log = logging.getLogger(__name__)

DOC_SUFFIXES = (".md", ".txt")
NO_CONTEXT_MESSAGE = "no examples and no tables retrieved"


@dataclass
class IngestSummary:
    documents: int = 0
    examples: int = 0
    entries: int = 0
    failures: list[dict[str, str]] = field(default_factory=list)
    instruction_failures: list[dict[str, str]] = field(default_factory=list)

    def fail(self, unit: str, exc: Exception) -> None:
        log.warning("%s: %s: %s", unit, type(exc).__name__, exc)
        self.failures.append({"unit": unit, "error": type(exc).__name__, "message": str(exc)})

    def to_record(self) -> dict[str, Any]:
        return {
            "documents": self.documents,
            "examples": self.examples,
            "entries": self.entries,
            "failures": self.failures,
            "instruction_failures": self.instruction_failures,
        }


@dataclass
class AskResult:
    views: QuestionViews
    outcome: RetrievalOutcome
    candidates: TableCandidates | None
    generated: GeneratedSql
    trace: dict[str, Any]

    def to_record(self) -> dict[str, Any]:
        rec = self.generated.to_record()
        rec["stage"] = self.outcome.stage.value
        return rec


def _read_units(path: Path) -> list[dict[str, Any]]:
    """Question/SQL pairs from a JSON list or a JSON-lines file."""
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        data = json.loads(text)
        return data if isinstance(data, list) else [data]
    units = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.strip():
            try:
                units.append(json.loads(line))
            except json.JSONDecodeError as exc:
                units.append({"_error": f"line {lineno}: {exc}"})
    return units


class Engine:
    """Binds a configured set of providers to a knowledge-base directory."""

    def __init__(
        self,
        config: EngineConfig,
        *,
        embedder: Embedder | None = None,
        llm: ChatModel | None = None,
        reranker: Reranker | None = None,
    ) -> None:
        self.config = config
        self.embedder = embedder or config.build_embedder()
        self._llm = llm
        self.reranker = reranker or config.build_reranker()
        self._kb: KnowledgeBase | None = None

    @property
    def llm(self) -> ChatModel:
        # built lazily so commands that never prompt do not need fixtures or credentials
        if self._llm is None:
            self._llm = self.config.build_llm()
        return self._llm

    @property
    def kb(self) -> KnowledgeBase:
        if self._kb is None:
            self._kb = KnowledgeBase.open(self.config.kb_path, self.embedder)
        return self._kb

    # training

    def _add_document(self, doc: TableDocument, summary: IngestSummary, replace: bool) -> None:
        kb = self.kb
        if replace:
            kb.store.purge(doc.name, "document")
        if not doc.entities:
            doc.entities, doc.strong_entities = extract_entities(doc, self.llm, self.config.votes)
        entries = train_document(doc, kb.store, self.embedder)
        kb.documents[doc.name] = doc
        summary.documents += 1
        summary.entries += len(entries)

    def _run_units(self, units: list[tuple[str, Callable[[], None]]], summary: IngestSummary) -> IngestSummary:
        with self.kb.lock():
            try:
                for name, work in units:
                    try:
                        work()
                    except RagSqlError as exc:
                        summary.fail(name, exc)
            finally:
                self.kb.save()
        return summary

    def train_docs(self, path: str | Path, *, replace: bool = False) -> IngestSummary:
        """Each ``.md``/``.txt`` file is one table description; ``.json``/``.jsonl`` hold structured records."""
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"no such file or directory: {path}")
        files = sorted(p for p in path.iterdir() if p.is_file()) if path.is_dir() else [path]
        summary = IngestSummary()
        units: list[tuple[str, Callable[[], None]]] = []
        for f in files:
            if f.suffix in DOC_SUFFIXES:
                units.append((str(f), lambda f=f: self._add_document(
                    structure_document(f.read_text(encoding="utf-8"), self.llm), summary, replace)))
            elif f.suffix in (".json", ".jsonl"):
                for i, rec in enumerate(_read_units(f)):
                    units.append((f"{f}#{i}", lambda rec=rec: self._add_structured(rec, summary, replace)))
        return self._run_units(units, summary)

    def _add_structured(self, rec: dict[str, Any], summary: IngestSummary, replace: bool) -> None:
        if "_error" in rec:
            raise InvalidInput(rec["_error"])
        try:
            doc = TableDocument.from_record(rec)
        except TypeError as exc:
            raise InvalidInput(f"not a table document record: {exc}") from None
        self._add_document(doc, summary, replace)

    def train_schema(self, path: str | Path, *, domain_hint: str | None = None, replace: bool = False) -> IngestSummary:
        schemas = load_schemas(path)
        summary = IngestSummary()

        def one(schema) -> None:
            text = generate_document_from_schema(schema, self.llm, domain_hint)
            doc = structure_document(text, self.llm)
            got = {c.casefold() for c in doc.column_names}
            want = {c.name.casefold() for c in schema.columns}
            if got != want:
                raise InconsistentExtraction("columns", f"structured columns {sorted(got)} differ from schema {sorted(want)}")
            self._add_document(doc, summary, replace)

        return self._run_units([(s.table, lambda s=s: one(s)) for s in schemas], summary)

    def train_examples(self, path: str | Path, *, replace: bool = False, derive_instructions: bool = True) -> IngestSummary:
        path = Path(path)
        units = _read_units(path)
        summary = IngestSummary()
        mappings: list[DomainEntityMapping] = []

        def one(rec: dict[str, Any]) -> None:
            if "_error" in rec:
                raise InvalidInput(rec["_error"])
            if not isinstance(rec, dict) or "question" not in rec:
                raise InvalidInput("example record needs a 'question' field")
            record = build_example(rec["question"], rec.get("sql"), self.llm, self.config.variations, rec.get("id"))
            kb = self.kb
            if replace:
                kb.store.purge(record.id, "example")
            entries = train_example(record, kb.store, self.embedder)
            kb.examples[record.id] = record
            summary.examples += 1
            summary.entries += len(entries)
            if derive_instructions:
                self._derive_mappings(record, summary, mappings)

        self._run_units([(f"{path}#{i}", lambda r=r: one(r)) for i, r in enumerate(units)], summary)
        if mappings:
            merged = synthesize_instructions(self.kb.instructions.mappings + mappings)
            merged.save(self.kb.path)
        return summary

    def _derive_mappings(self, record: ExampleRecord, summary: IngestSummary, out: list[DomainEntityMapping]) -> None:
        kb = self.kb
        candidates = [d for d in (kb.document(t) for t in sorted(record.tables())) if d is not None]
        if not record.sql or not candidates:
            return
        try:
            selections = select_tables_with_justification(record, candidates, kb.rules, self.llm)
            out.extend(classify_entities(selections, kb.class_rules, self.llm, record.id))
        except RagSqlError as exc:
            log.warning("instructions for %s: %s", record.id, exc)
            summary.instruction_failures.append({"unit": record.id, "error": type(exc).__name__, "message": str(exc)})

    # calibration

    def calibrate(self) -> ThresholdProfile:
        kb = self.kb
        groups: dict[str, list] = defaultdict(list)
        for entry in kb.store:
            if entry.source_kind == "example":
                groups[entry.ref_id].append((entry.category, entry.vector))
        overrides = self.config.thresholds
        report: dict[str, Any] = {"groups": len(groups)}
        if len(groups) < 2:
            profile = calibrate(None, overrides)
        else:
            stats = pairwise_similarities(sorted(groups.items()))
            profile = calibrate(stats, overrides)
            report["summary"] = stats_summary(stats)
            report["raw"] = {
                name: {k: getattr(g, k) for k in ("intra_nn", "inter_nn", "intra_full", "inter_full")}
                for name, g in stats.by_view.items()
            }
        report["overlap"] = self._overlap()
        with kb.lock():
            profile.save(kb.path / PROFILE)
            (kb.path / REPORT).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
        return profile

    def _overlap(self) -> list[dict[str, Any]]:
        """Documentation-query overlap per stored example, from catalog views (no prompting)."""
        kb = self.kb
        if len(kb.documents) < 2:
            return []
        out = []
        for ex in sorted(kb.examples.values(), key=lambda e: e.id):
            views = QuestionViews(ex.initial_question, ex.normalized, ex.main_clause, ex.entity_labels)
            found = retrieve_documents_detailed(views, kb, self.config.per_query_limit)
            rep = overlap_report(found.per_query, kb.documents)
            out.append(
                {
                    "example_id": ex.id,
                    "sets": rep.sets,
                    "rand": rep.rand,
                    "mean_rand": rep.mean_rand,
                    "unique_counts": rep.unique_counts,
                    "union_count": rep.union_count,
                }
            )
        return out

    # answering

    def ask(self, question: str) -> AskResult:
        kb = self.kb
        if kb.is_empty():
            raise NoContext(NO_CONTEXT_MESSAGE)
        profile = ThresholdProfile.load(kb.path / PROFILE)
        n = self.config.per_query_limit
        views = derive_views(question, self.llm)
        outcome = retrieve_examples(views, kb, profile, self.reranker, n)
        candidates = None
        refined: list[TableDocument] = []
        docs_trace: dict[str, Any] = {}
        if outcome.stage is Stage.NONE:
            found = retrieve_documents_detailed(views, kb, n)
            docs_trace = {"per_query": found.per_query, "best": found.best}
            rule_based = select_tables_by_rules(views.normalized, kb.rules, kb, self.llm)
            candidates = TableCandidates([d.name for d in found.tables], rule_based)
            pool = [d for d in (kb.document(t) for t in candidates.total) if d is not None]
            if pool:
                try:
                    refined = refine_tables(views, kb.instructions, kb.rules, pool, self.llm)
                except RefinementEmpty as exc:
                    log.warning("%s; keeping all %d candidates", exc, len(pool))
                    refined = pool
                candidates.refined = [d.name for d in refined]
        plan = plan_generation(outcome, refined)
        generated = generate_sql(views, plan, self.llm)
        trace = {
            "question": question,
            "views": {
                "initial": views.initial,
                "normalized": views.normalized,
                "main_clause": views.main_clause,
                "concepts": views.concepts,
            },
            "profile": {k: getattr(profile, k) for k in ("tau_exact", "t_stage2", "t_stage3", "t_stage4", "tau_rerank")},
            "profile_provenance": profile.provenance,
            "stage": outcome.stage.value,
            "example_stages": outcome.trace,
            "documents": docs_trace,
            "tables": None
            if candidates is None
            else {
                "detected": candidates.detected,
                "rule_based": candidates.rule_based,
                "total": candidates.total,
                "refined": candidates.refined,
            },
            "mode": plan.mode.value,
            "allowed_tables": plan.allowed_tables,
            "result": generated.to_record(),
        }
        return AskResult(views, outcome, candidates, generated, trace)

    def inspect(self, table: str) -> dict[str, Any]:
        doc = self.kb.document(table)
        if doc is None:
            raise InvalidInput(f"table {table!r} is not in the knowledge base")
        counts: dict[str, int] = defaultdict(int)
        for entry in self.kb.store:
            if entry.source_kind == "document" and entry.ref_id == doc.name:
                counts[entry.category] += 1
        return {"document": doc.to_record(), "entries": dict(sorted(counts.items()))}
