from __future__ import annotations

import json
import shutil

import httpx
import pytest

import golden
from ragsql import Engine, EngineConfig, Mode, Stage
from ragsql.cli import main
from ragsql.errors import InvalidInput, NoContext
from ragsql.kb import PROFILE, REPORT, KnowledgeBase
from ragsql.providers import FixtureLLM, HashingEmbedder


@pytest.fixture
def kb_dir(tmp_path):
    return tmp_path / "kb"


def cli(kb_dir, *args, fixtures=golden.FIXTURES_DIR):
    return main(["--kb", str(kb_dir), "--offline", "--fixtures", str(fixtures), *args])


def trained(kb_dir):
    assert cli(kb_dir, "train-docs", str(golden.DOCS_DIR)) == 0
    assert cli(kb_dir, "train-examples", str(golden.EXAMPLES_FILE)) == 0


def test_fixtures_are_current(tmp_path):
    fresh = tmp_path / "fixtures"
    golden.golden_llm().save(fresh)
    on_disk = sorted(p.relative_to(golden.FIXTURES_DIR) for p in golden.FIXTURES_DIR.rglob("*.json"))
    assert on_disk == sorted(p.relative_to(fresh) for p in fresh.rglob("*.json"))
    for rel in on_disk:
        assert (golden.FIXTURES_DIR / rel).read_text() == (fresh / rel).read_text(), rel


def test_train_docs_summary(kb_dir, capsys):
    assert cli(kb_dir, "train-docs", str(golden.DOCS_DIR)) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["documents"] == 1 and summary["entries"] == 9 and summary["failures"] == []


def test_train_examples_summary(kb_dir, capsys):
    assert cli(kb_dir, "train-examples", str(golden.EXAMPLES_FILE)) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["examples"] == 1 and summary["entries"] == 7


def test_empty_directory_is_a_zero_summary(kb_dir, tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert cli(kb_dir, "train-docs", str(empty)) == 0
    assert json.loads(capsys.readouterr().out)["documents"] == 0


def test_unreadable_path(kb_dir, tmp_path, capsys):
    assert cli(kb_dir, "train-docs", str(tmp_path / "nope")) == 1
    assert "no such file" in capsys.readouterr().err


def test_retraining_is_reported_and_replace_works(kb_dir, capsys):
    trained(kb_dir)
    capsys.readouterr()
    assert cli(kb_dir, "train-examples", str(golden.EXAMPLES_FILE)) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["examples"] == 0 and summary["failures"][0]["error"] == "RetrainConflict"
    assert cli(kb_dir, "train-examples", str(golden.EXAMPLES_FILE), "--replace") == 0
    assert json.loads(capsys.readouterr().out)["examples"] == 1
    kb = KnowledgeBase.open(kb_dir, HashingEmbedder())
    assert len(kb.store) == 9 + 7


def test_malformed_units_do_not_stop_ingestion(kb_dir, tmp_path, capsys):
    path = tmp_path / "ex.jsonl"
    path.write_text("{broken\n" + json.dumps({"question": golden.EVENTS_QUESTION, "sql": golden.EVENTS_SQL}) + "\n")
    assert cli(kb_dir, "train-examples", str(path)) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["examples"] == 1 and len(summary["failures"]) == 1


def test_calibrate_single_example_uses_defaults(kb_dir, capsys):
    trained(kb_dir)
    capsys.readouterr()
    assert cli(kb_dir, "calibrate") == 0
    profile = json.loads(capsys.readouterr().out)
    assert profile["provenance"] == "default"
    assert (profile["t_stage3"], profile["t_stage4"]) == (0.96, 0.82)
    assert (kb_dir / PROFILE).exists() and (kb_dir / REPORT).exists()


def test_calibrate_two_groups_is_deterministic(kb_dir):
    engine = Engine(EngineConfig(kb_path=kb_dir, offline=True), llm=golden.golden_llm())
    engine.train_examples(golden.BOTH_EXAMPLES_FILE)
    first = engine.calibrate()
    report = json.loads((kb_dir / REPORT).read_text())
    second = Engine(EngineConfig(kb_path=kb_dir, offline=True), llm=FixtureLLM()).calibrate()
    assert first.provenance == "calibrated"
    keys = ("tau_exact", "t_stage2", "t_stage3", "t_stage4", "tau_rerank")
    assert [getattr(first, k) for k in keys] == [getattr(second, k) for k in keys]
    raw = report["raw"]
    assert first.t_stage3 in raw["normalized_main"]["inter_nn"]
    assert first.t_stage4 in raw["full"]["intra_full"]


def test_ask_exact_question_returns_stored_sql(kb_dir, capsys):
    trained(kb_dir)
    assert cli(kb_dir, "calibrate") == 0
    capsys.readouterr()
    assert cli(kb_dir, "ask", golden.EVENTS_QUESTION) == 0
    assert capsys.readouterr().out == golden.EVENTS_SQL + "\n"


def test_ask_json_and_explain(kb_dir, tmp_path, capsys):
    trained(kb_dir)
    capsys.readouterr()
    trace = tmp_path / "trace.json"
    assert cli(kb_dir, "ask", golden.PARAPHRASE, "--json", "--explain", str(trace)) == 0
    record = json.loads(capsys.readouterr().out)
    assert record["mode"] == "ExactExampleBased"
    assert record["stage"] == "NormalizedMatch"
    assert record["sql"] == golden.EVENTS_SQL
    assert set(record) >= {"sql", "mode", "provenance", "trace"}
    steps = json.loads(trace.read_text())
    assert [s["stage"] for s in steps["example_stages"]] == ["ExactMatch", "NormalizedMatch"]


def test_ask_empty_kb_exits_2(kb_dir, capsys):
    assert cli(kb_dir, "ask", "anything at all") == 2
    assert "no examples and no tables retrieved" in capsys.readouterr().err


def test_provider_failure_exits_3(kb_dir, capsys):
    trained(kb_dir)
    assert cli(kb_dir, "ask", "a question nobody scripted") == 3


def test_inspect(kb_dir, capsys):
    trained(kb_dir)
    capsys.readouterr()
    assert cli(kb_dir, "inspect", "SMS_STATUSES") == 0
    out = json.loads(capsys.readouterr().out)
    assert out["entries"] == {"connected_tables": 2, "dependency": 1, "description": 1, "entity": 4, "table_name": 1}
    assert cli(kb_dir, "inspect", "missing") == 1


def test_offline_makes_no_network_calls(kb_dir, tmp_path, monkeypatch, capsys):
    trained(kb_dir)
    config = tmp_path / "config.json"
    config.write_text(json.dumps({
        "embedder": {"kind": "http", "url": "http://embed.invalid", "model": "e", "dimension": 384},
        "llm": {"kind": "http", "url": "http://chat.invalid", "model": "m"},
        "reranker": {"kind": "cross-encoder"},
    }))
    sent = []

    def refuse(self, request, **kw):
        sent.append(request)
        raise httpx.ConnectError("network disabled in tests")

    monkeypatch.setattr(httpx.Client, "send", refuse)
    args = ["--config", str(config), "--kb", str(kb_dir), "--fixtures", str(golden.FIXTURES_DIR)]
    assert main(args + ["ask", golden.EVENTS_QUESTION, "--offline"]) == 0
    assert sent == []
    assert main(args + ["ask", golden.EVENTS_QUESTION]) == 3
    assert sent  # without --offline the configured remote model is used


def test_config_env_and_validation(tmp_path, monkeypatch):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"kb_path": str(tmp_path / "k"), "votes": 3}))
    monkeypatch.setenv("RAGSQL_CONFIG", str(path))
    config = EngineConfig.load()
    assert config.votes == 3 and config.kb_path == tmp_path / "k"
    with pytest.raises(InvalidInput):
        EngineConfig(votes=0)


# engine paths beyond the golden one

EVENTS_DOC = {"name": "events", "summary": "Events hosted by groups, with start and end times",
              "purpose": "Track events", "keys": ["id"], "connected_tables": ["rsvps"],
              "columns": [{"column": "id"}, {"column": "name"}, {"column": "start_date"}],
              "entities": ["event"], "strong_entities": ["event"]}
RSVPS_DOC = {"name": "rsvps", "summary": "People signing up for events", "purpose": "Track sign-ups",
             "keys": ["event_id"], "connected_tables": ["events"],
             "columns": [{"column": "id"}, {"column": "event_id"}],
             "entities": ["rsvp", "signup"], "strong_entities": ["rsvp"]}


def structured_kb(tmp_path, llm):
    docs = tmp_path / "docs.jsonl"
    docs.write_text(json.dumps(EVENTS_DOC) + "\n" + json.dumps(RSVPS_DOC) + "\n")
    engine = Engine(EngineConfig(kb_path=tmp_path / "kb", offline=True), llm=llm)
    summary = engine.train_docs(docs)
    assert summary.documents == 2 and summary.failures == []
    return engine


def test_documentation_driven_answer(tmp_path):
    q = "How many signups did the spring rally get?"
    llm = FixtureLLM()
    llm.script("normalize", {"question": q, "sql": ""}, {
        "normalized": "Count the signups for a named event", "entities": [{"label": "signup count", "kind": "metric"}],
        "data_sources": [], "operations": []})
    llm.script("split_main_clause", {"question": q}, {"main_clause": "signups for an event", "details": ""})
    llm.script("refine_tables", {"normalized": "Count the signups for a named event"},
               {"tables": ["rsvps", "events"], "reasoning": "count rsvps joined to the named event"})
    sql = "SELECT COUNT(r.id) FROM rsvps r JOIN events e ON r.event_id = e.id WHERE e.name = 'spring rally'"
    llm.script("generate_sql_docs", {"question": q}, {"sql": sql})
    result = structured_kb(tmp_path, llm).ask(q)
    assert result.outcome.stage is Stage.NONE
    assert result.generated.mode is Mode.DOCUMENTATION
    assert result.generated.referenced_tables == ["events", "rsvps"]
    assert result.candidates.refined == ["events", "rsvps"]
    assert result.trace["tables"]["total"] == ["events", "rsvps"]


def test_instructions_derived_while_training_examples(tmp_path):
    llm = golden.golden_llm()
    llm.script("select_tables", {"question": golden.CLIMATE_QUESTION}, {"tables": [
        {"table": "events", "justification": "To identify the specific climate march event and its timing"},
        {"table": "rsvps", "justification": "To count the number of people who RSVP'd to the event"}]})
    llm.script("classify_entities", {"tables": "events, rsvps"}, {"entities": [
        {"entity": "RSVP count", "tables": ["rsvps"], "classification": "minor", "access": "COUNT(id)"},
        {"entity": "event participation", "tables": ["events", "rsvps"], "classification": "major",
         "access": "joined on event_id"}]})
    engine = structured_kb(tmp_path, llm)
    path = tmp_path / "climate.jsonl"
    path.write_text(json.dumps({"question": golden.CLIMATE_QUESTION, "sql": golden.CLIMATE_SQL}) + "\n")
    summary = engine.train_examples(path)
    assert summary.examples == 1 and summary.instruction_failures == []
    text = (tmp_path / "kb" / "instructions.txt").read_text()
    assert "## event participation" in text and "- RSVP count → table: rsvps" in text


def test_train_schema(tmp_path):
    ddl = tmp_path / "schema.sql"
    ddl.write_text("CREATE TABLE rsvps (id INT PRIMARY KEY, event_id INT);")
    text = "Table Description: sign-ups.\nColumns Description: id, event_id.\nPotential Dependencies: events."
    llm = FixtureLLM()
    llm.script("generate_document", {"table": "rsvps", "columns": "- id INT [primary key]\n- event_id INT"},
               {"text": text})
    llm.script("structure_document", {"raw_text": text}, {
        "name": "rsvps", "summary": "Sign-ups", "purpose": "Track sign-ups", "dependencies_thoughts": "",
        "keys": ["event_id"], "connected_tables": ["events"],
        "columns": [{"column": "id", "description": "key"}, {"column": "event_id", "description": "event"}]})
    llm.script("extract_entities", {"name": "rsvps"}, {"entities": ["signup"]})
    engine = Engine(EngineConfig(kb_path=tmp_path / "kb", offline=True), llm=llm)
    summary = engine.train_schema(ddl)
    assert summary.documents == 1 and summary.failures == []
    assert engine.kb.documents["rsvps"].entities == ["signup"]


def test_engine_ask_on_empty_kb_makes_no_model_calls(tmp_path):
    llm = FixtureLLM()
    with pytest.raises(NoContext):
        Engine(EngineConfig(kb_path=tmp_path / "kb", offline=True), llm=llm).ask("q")
    assert llm.calls == 0


def test_kb_reopen_preserves_queries(kb_dir):
    trained(kb_dir)
    emb = HashingEmbedder()
    a = KnowledgeBase.open(kb_dir, emb)
    copy = kb_dir.parent / "copy"
    shutil.copytree(kb_dir, copy)
    b = KnowledgeBase.open(copy, emb)
    for text in (golden.EVENTS_QUESTION, "subscription status of activists"):
        assert [(h.entry.id, h.similarity) for h in a.store.query(text, n=20)] == [
            (h.entry.id, h.similarity) for h in b.store.query(text, n=20)]
    assert a.documents == b.documents and a.examples == b.examples
