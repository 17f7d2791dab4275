from __future__ import annotations

import httpx
import numpy as np
import pytest

from ragsql.errors import DimensionMismatch, InvalidInput, MalformedResponse, MissingFixture, ProviderUnavailable
from ragsql.providers import FixtureLLM, HashingEmbedder, JaccardReranker
from ragsql.providers.embedder import HttpEmbedder
from ragsql.providers.http import Endpoint, post_json
from ragsql.providers.llm import ChatModel, HttpLLM, parse_json_object
from ragsql.providers.prompts import TEMPLATES, PromptRequest, fingerprint


def test_hashing_embedder_is_deterministic_and_unit_norm():
    emb = HashingEmbedder(64)
    a, b = emb.embed("list of events"), emb.embed("list of events")
    assert a.shape == (64,)
    assert np.array_equal(a, b)
    assert np.sqrt(np.sum(a * a)) == pytest.approx(1.0, abs=1e-12)


def test_hashing_embedder_ignores_case_and_punctuation():
    emb = HashingEmbedder()
    assert np.array_equal(emb.embed("List of Events!"), emb.embed("list of events"))


def test_hashing_embedder_rejects_empty_text():
    with pytest.raises(InvalidInput):
        HashingEmbedder().embed("   ")


def test_punctuation_only_text_still_embeds():
    v = HashingEmbedder(16).embed("???")
    assert np.sqrt(np.sum(v * v)) == pytest.approx(1.0)


def test_jaccard_reranker_token_overlap():
    r = JaccardReranker()
    # {list, of, events} vs {events, list, of, rsvps}: 3 shared of 4 distinct
    assert r.rerank("list of events", "events list of rsvps") == pytest.approx(0.75)
    assert r.rerank("a b", "a b") == 1.0
    assert r.rerank("a", "b") == 0.0
    with pytest.raises(InvalidInput):
        r.rerank("", "x")


def test_prompt_request_validates_slots():
    with pytest.raises(InvalidInput):
        PromptRequest("no_such_template", {})
    with pytest.raises(InvalidInput):
        PromptRequest("split_main_clause", {})
    req = PromptRequest("split_main_clause", {"question": "how many events?"})
    assert req.expected_shape == "main_clause"
    assert "how many events?" in req.render()


def test_every_template_renders_with_its_slots():
    for tid, tpl in TEMPLATES.items():
        req = PromptRequest(tid, {s: f"<{s}>" for s in tpl.slots})
        text = req.render()
        assert all(f"<{s}>" in text for s in tpl.slots), tid
        assert set(tpl.key_slots) <= set(tpl.slots)


def test_fingerprint_uses_key_slots_only():
    a = PromptRequest("select_tables", {"question": "q", "normalized": "n", "sql": "s", "rules": "r", "tables": "t"})
    b = PromptRequest("select_tables", {"question": "q", "normalized": "N", "sql": "S", "rules": "R", "tables": "T"})
    assert a.fingerprint() == b.fingerprint() == fingerprint({"question": "q"})


def test_fixture_llm_answers_and_counts():
    llm = FixtureLLM()
    llm.script("split_main_clause", {"question": "q"}, {"main_clause": "m", "details": ""})
    resp = llm.complete(PromptRequest("split_main_clause", {"question": "q"}))
    assert resp.payload == {"main_clause": "m", "details": ""}
    assert llm.calls == 1
    with pytest.raises(MissingFixture):
        llm.complete(PromptRequest("split_main_clause", {"question": "other"}))


def test_fixture_llm_rejects_wrong_key_slots():
    with pytest.raises(InvalidInput):
        FixtureLLM().script("split_main_clause", {"question": "q", "extra": "x"}, {})


def test_fixture_llm_vote_runs_pick_their_response():
    llm = FixtureLLM()
    llm.script("extract_entities", {"name": "t"}, responses=[{"entities": [str(i)]} for i in range(3)])
    req = PromptRequest("extract_entities", {"name": "t", "summary": "", "purpose": "", "columns": ""})
    runs = llm.vote_complete(req, 5)
    assert [r.payload["entities"] for r in runs] == [["0"], ["1"], ["2"], ["0"], ["1"]]
    assert llm.calls == 5


def test_vote_failure_surfaces_as_provider_unavailable():
    llm = FixtureLLM()
    req = PromptRequest("extract_entities", {"name": "t", "summary": "", "purpose": "", "columns": ""})
    with pytest.raises(ProviderUnavailable):
        llm.vote_complete(req, 3)


def test_vote_count_must_be_positive():
    req = PromptRequest("extract_entities", {"name": "t", "summary": "", "purpose": "", "columns": ""})
    with pytest.raises(InvalidInput):
        FixtureLLM().vote_complete(req, 0)


def test_malformed_response_gets_one_reprompt():
    llm = FixtureLLM()
    llm.script("split_main_clause", {"question": "q"}, {"wrong": 1}, retry={"main_clause": "m", "details": "d"})
    assert llm.complete(PromptRequest("split_main_clause", {"question": "q"})).payload["main_clause"] == "m"
    assert llm.calls == 2

    bad = FixtureLLM()
    bad.script("split_main_clause", {"question": "q"}, {"wrong": 1})
    with pytest.raises(MalformedResponse):
        bad.complete(PromptRequest("split_main_clause", {"question": "q"}))
    assert bad.calls == 2


def test_fixture_directory_round_trip(tmp_path):
    llm = FixtureLLM()
    llm.script("split_main_clause", {"question": "q"}, {"main_clause": "m", "details": ""})
    llm.script("extract_entities", {"name": "t"}, responses=[{"entities": ["a"]}, {"entities": ["b"]}])
    paths = llm.save(tmp_path)
    assert len(paths) == 2
    again = FixtureLLM.from_dir(tmp_path)
    assert len(again) == 2
    assert again.complete(PromptRequest("split_main_clause", {"question": "q"})).payload["main_clause"] == "m"


def test_missing_fixture_directory_gives_empty_model(tmp_path):
    assert len(FixtureLLM.from_dir(tmp_path / "absent")) == 0


def test_parse_json_object_handles_fences_and_prose():
    assert parse_json_object('```json\n{"a": 1}\n```') == {"a": 1}
    assert parse_json_object('Sure! {"a": 2} hope that helps') == {"a": 2}
    assert parse_json_object("no json here") == "no json here"


class _Recorder:
    def __init__(self, responses):
        self.responses = list(responses)
        self.requests = []

    def __call__(self, request: httpx.Request) -> httpx.Response:
        self.requests.append(request)
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


ENDPOINT = Endpoint(url="http://model.test/v1/chat/completions", model="m")


def _client(handler) -> httpx.Client:
    return httpx.Client(transport=httpx.MockTransport(handler))


def test_post_json_retries_server_errors_then_succeeds():
    rec = _Recorder([httpx.Response(503), httpx.ConnectError("down"), httpx.Response(200, json={"ok": True})])
    sleeps = []
    assert post_json(ENDPOINT, {}, client=_client(rec), sleep=sleeps.append) == {"ok": True}
    assert len(rec.requests) == 3
    assert sleeps == [0.5, 1.0]


def test_post_json_gives_up_after_two_retries():
    rec = _Recorder([httpx.Response(500)] * 3)
    with pytest.raises(ProviderUnavailable) as info:
        post_json(ENDPOINT, {}, client=_client(rec), sleep=lambda s: None)
    assert info.value.attempts == 3


def test_post_json_does_not_retry_client_errors():
    rec = _Recorder([httpx.Response(401)])
    with pytest.raises(ProviderUnavailable):
        post_json(ENDPOINT, {}, client=_client(rec), sleep=lambda s: None)
    assert len(rec.requests) == 1


def test_http_llm_parses_chat_completion():
    content = '{"main_clause": "events", "details": ""}'
    rec = _Recorder([httpx.Response(200, json={"choices": [{"message": {"content": content}}]})])
    llm = HttpLLM(ENDPOINT, client=_client(rec))
    resp = llm.complete(PromptRequest("split_main_clause", {"question": "q"}))
    assert resp.payload["main_clause"] == "events"


def test_http_embedder_checks_dimension():
    rec = _Recorder([httpx.Response(200, json={"data": [{"embedding": [0.1, 0.2]}]})])
    emb = HttpEmbedder(Endpoint(url="http://e.test/v1/embeddings", model="e"), dimension=3, client=_client(rec))
    with pytest.raises(DimensionMismatch):
        emb.embed("text")


def test_chat_model_base_is_abstract():
    with pytest.raises(NotImplementedError):
        ChatModel().complete(PromptRequest("split_main_clause", {"question": "q"}))
