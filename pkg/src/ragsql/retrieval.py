"""Staged example retrieval, documentation retrieval and table refinement."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .calibration import ThresholdProfile
from .documents import TableDocument
from .errors import InvalidInput, RefinementEmpty, StoreUnavailable
from .example_pipeline import ENTITY_JOINER, normalize_and_extract, split_main_clause
from .instructions import DomainInstruction
from .kb import KnowledgeBase
from .providers.llm import ChatModel
from .providers.prompts import PromptRequest
from .providers.reranker import Reranker
from .store import EXAMPLE_CATEGORIES, MetadataFilter

log = logging.getLogger(__name__)

DEFAULT_N = 10


class Stage(str, Enum):
    EXACT = "ExactMatch"
    NORMALIZED = "NormalizedMatch"
    MAIN_CLAUSE = "MainClauseMatch"
    RERANKED = "ExpandedReranked"
    NONE = "NoExamples"


@dataclass
class QuestionViews:
    initial: str
    normalized: str
    main_clause: str
    concepts: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.normalized.strip():
            raise InvalidInput("normalized view is empty")

    @property
    def concepts_text(self) -> str:
        return ENTITY_JOINER.join(self.concepts)


def derive_views(question: str, llm: ChatModel) -> QuestionViews:
    """Normalized form, main clause and concepts of a live question (no SQL available)."""
    if not question or not question.strip():
        raise InvalidInput("question is empty")
    normalized, entities, _, _ = normalize_and_extract(question, None, llm)
    main, _details = split_main_clause(question, llm)
    return QuestionViews(question, normalized, main, [e.label for e in entities])


@dataclass
class ExampleMatch:
    example_id: str
    similarity: float
    rerank_score: float | None = None


@dataclass
class RetrievalOutcome:
    stage: Stage
    direct_sql: str | None = None
    sql_exact: list[str] = field(default_factory=list)
    sql_strong: list[str] = field(default_factory=list)
    sql_templates: list[str] = field(default_factory=list)
    tables_from_examples: list[TableDocument] = field(default_factory=list)
    matches: list[ExampleMatch] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)

    @property
    def sql_examples(self) -> list[str]:
        return {
            Stage.EXACT: [self.direct_sql] if self.direct_sql else [],
            Stage.NORMALIZED: self.sql_exact,
            Stage.MAIN_CLAUSE: self.sql_strong,
            Stage.RERANKED: self.sql_strong,
            Stage.NONE: self.sql_templates,
        }[self.stage]


def _unique(items: Iterable[str]) -> list[str]:
    return list(dict.fromkeys(items))


class ExampleRetriever:
    """The cascade: exact → normalized → normalized+main clause → expanded + rerank.

    Each stage runs only if the previous one accepted nothing.
    """

    def __init__(self, kb: KnowledgeBase, profile: ThresholdProfile, reranker: Reranker, n: int = DEFAULT_N):
        self.kb = kb
        self.profile = profile
        self.reranker = reranker
        self.n = n

    def _hits(self, texts: Sequence[str], categories: Iterable[str]) -> dict[str, float]:
        """Best similarity per example over every (text, category) query."""
        best: dict[str, float] = {}
        for text in texts:
            if not text or not text.strip():
                continue
            vec = self.kb.embedder.embed(text)
            for cat in sorted(categories):
                flt = MetadataFilter(frozenset({cat}), "example")
                for hit in self.kb.store.query(vec, flt, self.n):
                    rid = hit.entry.ref_id
                    if hit.similarity > best.get(rid, -1.0):
                        best[rid] = hit.similarity
        return best

    def _accept(self, hits: dict[str, float], threshold: float) -> list[ExampleMatch]:
        ok = [
            ExampleMatch(rid, sim)
            for rid, sim in hits.items()
            if sim >= threshold and rid in self.kb.examples and self.kb.examples[rid].sql
        ]
        return sorted(ok, key=lambda m: (-m.similarity, m.example_id))

    def _tables(self, matches: Sequence[ExampleMatch]) -> list[TableDocument]:
        names: set[str] = set()
        for m in matches:
            names |= self.kb.examples[m.example_id].tables()
        docs = {}
        for name in sorted(names):
            doc = self.kb.document(name)
            if doc is not None:
                docs[doc.name] = doc
        return [docs[k] for k in sorted(docs)]

    def _sqls(self, matches: Sequence[ExampleMatch]) -> list[str]:
        return _unique(self.kb.examples[m.example_id].sql for m in matches)

    @staticmethod
    def _trace(stage: str, threshold: float, hits: dict[str, float], accepted: Sequence[ExampleMatch]) -> dict:
        return {
            "stage": stage,
            "threshold": threshold,
            "hits": [{"example_id": k, "similarity": v} for k, v in sorted(hits.items(), key=lambda kv: (-kv[1], kv[0]))],
            "accepted": [m.example_id for m in accepted],
        }

    def retrieve(self, views: QuestionViews) -> RetrievalOutcome:
        if self.kb.store is None:
            raise StoreUnavailable("knowledge base store is not loaded")
        p = self.profile
        trace: list[dict] = []

        hits = self._hits([views.initial], {"init"})
        accepted = self._accept(hits, p.tau_exact)
        trace.append(self._trace(Stage.EXACT.value, p.tau_exact, hits, accepted))
        if accepted:
            best = accepted[0]
            return RetrievalOutcome(
                Stage.EXACT,
                direct_sql=self.kb.examples[best.example_id].sql,
                tables_from_examples=self._tables([best]),
                matches=[best],
                trace=trace,
            )

        hits = self._hits([views.normalized], {"init", "normalized"})
        accepted = self._accept(hits, p.t_stage2)
        trace.append(self._trace(Stage.NORMALIZED.value, p.t_stage2, hits, accepted))
        if accepted:
            return RetrievalOutcome(
                Stage.NORMALIZED,
                sql_exact=self._sqls(accepted),
                tables_from_examples=self._tables(accepted),
                matches=accepted,
                trace=trace,
            )

        hits = self._hits([views.normalized, views.main_clause], {"init", "normalized", "main_clause"})
        accepted = self._accept(hits, p.t_stage3)
        trace.append(self._trace(Stage.MAIN_CLAUSE.value, p.t_stage3, hits, accepted))
        if accepted:
            return RetrievalOutcome(
                Stage.MAIN_CLAUSE,
                sql_strong=self._sqls(accepted),
                tables_from_examples=self._tables(accepted),
                matches=accepted,
                trace=trace,
            )

        texts = [views.initial, views.normalized, views.main_clause, views.concepts_text]
        hits = self._hits(texts, EXAMPLE_CATEGORIES)
        expanded = self._accept(hits, p.t_stage4)
        trace.append(self._trace("Expanded", p.t_stage4, hits, expanded))
        survivors = []
        for m in expanded:
            m.rerank_score = self.reranker.rerank(views.initial, self.kb.examples[m.example_id].initial_question)
            if m.rerank_score > p.tau_rerank:
                survivors.append(m)
        trace.append(
            {
                "stage": "Rerank",
                "threshold": p.tau_rerank,
                "scores": [{"example_id": m.example_id, "score": m.rerank_score} for m in expanded],
                "accepted": [m.example_id for m in survivors],
            }
        )
        if survivors:
            return RetrievalOutcome(
                Stage.RERANKED,
                sql_strong=self._sqls(survivors),
                tables_from_examples=self._tables(survivors),
                matches=survivors,
                trace=trace,
            )
        return RetrievalOutcome(Stage.NONE, sql_templates=self._sqls(expanded), matches=expanded, trace=trace)


def retrieve_examples(
    views: QuestionViews, kb: KnowledgeBase, profile: ThresholdProfile, reranker: Reranker, n: int = DEFAULT_N
) -> RetrievalOutcome:
    return ExampleRetriever(kb, profile, reranker, n).retrieve(views)


# documentation retrieval

DOC_DESCRIPTION = frozenset({"description", "entity"})
DOC_CONNECTED = frozenset({"connected_tables", "entity"})
DOC_NAME = frozenset({"table_name"})


def documentation_queries(views: QuestionViews) -> list[tuple[str, str, frozenset[str]]]:
    """(label, text, categories) for the documentation queries; concept queries need concepts."""
    queries = [
        ("z1_normalized_description", views.normalized, DOC_DESCRIPTION),
        ("z2_main_description", views.main_clause, DOC_DESCRIPTION),
        ("z3_concepts_connected", views.concepts_text, DOC_CONNECTED),
        ("z4_normalized_name", views.normalized, DOC_NAME),
        ("z5_main_name", views.main_clause, DOC_NAME),
        ("z6_concepts_name", views.concepts_text, DOC_NAME),
    ]
    return [q for q in queries if q[1] and q[1].strip()]


@dataclass
class DocumentRetrieval:
    tables: list[TableDocument]
    per_query: dict[str, list[str]]
    best: dict[str, float]


def retrieve_documents_detailed(views: QuestionViews, kb: KnowledgeBase, n: int = DEFAULT_N) -> DocumentRetrieval:
    per_query: dict[str, list[str]] = {}
    best: dict[str, float] = {}
    for label, text, cats in documentation_queries(views):
        hits = kb.store.query(text, MetadataFilter(cats, "document"), n)
        per_query[label] = _unique(h.entry.ref_id for h in hits)
        for h in hits:
            best[h.entry.ref_id] = max(best.get(h.entry.ref_id, -1.0), h.similarity)
    docs = []
    for name in sorted(best, key=lambda k: (-best[k], k)):
        doc = kb.document(name)
        if doc is not None:
            docs.append(doc)
    return DocumentRetrieval(docs, per_query, best)


def retrieve_documents(views: QuestionViews, kb: KnowledgeBase, n: int = DEFAULT_N) -> list[TableDocument]:
    return retrieve_documents_detailed(views, kb, n).tables


def select_tables_by_rules(normalized: str, rules: Sequence[str], kb: KnowledgeBase, llm: ChatModel) -> list[str]:
    if not rules:
        return []
    request = PromptRequest(
        "rule_tables",
        {
            "normalized": normalized,
            "rules": "\n".join(f"- {r}" for r in rules),
            "tables": ", ".join(sorted(kb.documents)),
        },
    )
    chosen = []
    for name in llm.complete(request).payload["tables"]:
        doc = kb.document(name.strip())
        if doc is None:
            log.warning("business-rule selection named unknown table %r; dropped", name)
        elif doc.name not in chosen:
            chosen.append(doc.name)
    return sorted(chosen)


@dataclass
class TableCandidates:
    detected: list[str]
    rule_based: list[str]
    refined: list[str] = field(default_factory=list)

    @property
    def total(self) -> list[str]:
        return sorted(set(self.detected) | set(self.rule_based))


def refine_tables(
    views: QuestionViews,
    instructions: DomainInstruction,
    rules: Sequence[str],
    candidates: Sequence[TableDocument],
    llm: ChatModel,
) -> list[TableDocument]:
    if not candidates:
        raise InvalidInput("refinement needs at least one candidate table")
    by_name = {}
    for d in candidates:
        by_name.setdefault(d.name.casefold(), d)
    if len(by_name) == 1:
        return list(by_name.values())
    request = PromptRequest(
        "refine_tables",
        {
            "normalized": views.normalized,
            "instructions": instructions.text,
            "rules": "\n".join(f"- {r}" for r in rules) or "(none)",
            "candidates": "\n\n".join(d.render() for d in by_name.values()),
        },
    )
    refined: list[TableDocument] = []
    for name in llm.complete(request).payload["tables"]:
        doc = by_name.get(name.strip().casefold())
        if doc is None:
            log.warning("refinement named %r, which is not a candidate; dropped", name)
        elif doc not in refined:
            refined.append(doc)
    if not refined:
        raise RefinementEmpty("refinement kept none of the candidate tables")
    return sorted(refined, key=lambda d: d.name)
