"""Chat-model providers returning schema-validated JSON payloads."""

from __future__ import annotations

import copy
import json
import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any

import jsonschema

from ..errors import InvalidInput, MalformedResponse, MissingFixture, ProviderError, ProviderUnavailable
from .http import Endpoint, post_json
from .prompts import TEMPLATES, PromptRequest, StructuredResponse, fingerprint, validate_payload

log = logging.getLogger(__name__)

DEFAULT_VOTES = 5


class ChatModel:
    """Shared request handling: schema validation with a single reprompt, voting."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.calls = 0

    def _generate(self, request: PromptRequest, *, run: int, feedback: str | None) -> Any:
        raise NotImplementedError

    def _count(self) -> None:
        with self._lock:
            self.calls += 1

    def complete(
        self, request: PromptRequest, *, run: int = 0, feedback: str | None = None
    ) -> StructuredResponse:
        self._count()
        payload = self._generate(request, run=run, feedback=feedback)
        try:
            validate_payload(request.expected_shape, payload)
        except jsonschema.ValidationError as exc:
            log.info("%s: invalid response (%s), reprompting", request.template_id, exc.message)
            hint = f"Your previous answer did not match the required JSON shape: {exc.message}"
            if feedback:
                hint = f"{feedback}\n{hint}"
            self._count()
            payload = self._generate(request, run=run, feedback=hint)
            try:
                validate_payload(request.expected_shape, payload)
            except jsonschema.ValidationError as exc2:
                raise MalformedResponse(f"{request.template_id}: {exc2.message}") from None
        return StructuredResponse(request.expected_shape, payload)

    def vote_complete(self, request: PromptRequest, v: int = DEFAULT_VOTES) -> list[StructuredResponse]:
        """Issue *v* independent completions; results come back in run order."""
        if v < 1:
            raise InvalidInput("vote count must be >= 1")
        if v == 1:
            runs = [self._vote_run(request, 0)]
        else:
            with ThreadPoolExecutor(max_workers=min(v, 8)) as pool:
                runs = list(pool.map(lambda i: self._vote_run(request, i), range(v)))
        return runs

    def _vote_run(self, request: PromptRequest, run: int) -> StructuredResponse:
        try:
            return self.complete(request, run=run)
        except ProviderUnavailable:
            raise
        except ProviderError as exc:
            raise ProviderUnavailable(f"vote run {run} failed: {exc}") from exc


class FixtureLLM(ChatModel):
    """Offline model answering from scripted fixtures.

    A fixture is keyed by ``(template_id, fingerprint(key slots))`` and holds
    either one ``response`` or a list of ``responses`` (picked by vote run
    index), plus an optional ``retry`` payload returned on reprompts.
    On disk: ``<root>/<template_id>/<fingerprint>.json``.
    """

    def __init__(self) -> None:
        super().__init__()
        self._fixtures: dict[tuple[str, str], dict[str, Any]] = {}

    def script(
        self,
        template_id: str,
        key_slots: dict[str, str],
        response: Any = None,
        *,
        responses: list[Any] | None = None,
        retry: Any = None,
    ) -> str:
        if template_id not in TEMPLATES:
            raise InvalidInput(f"unknown template {template_id!r}")
        expected = set(TEMPLATES[template_id].key_slots)
        if set(key_slots) != expected:
            raise InvalidInput(f"{template_id} is keyed by {sorted(expected)}, got {sorted(key_slots)}")
        if (response is None) == (responses is None):
            raise InvalidInput("give exactly one of response / responses")
        fp = fingerprint(key_slots)
        record: dict[str, Any] = {"template_id": template_id, "slots": dict(key_slots)}
        if responses is not None:
            record["responses"] = list(responses)
        else:
            record["response"] = response
        if retry is not None:
            record["retry"] = retry
        self._fixtures[(template_id, fp)] = record
        return fp

    def __len__(self) -> int:
        return len(self._fixtures)

    def _generate(self, request: PromptRequest, *, run: int, feedback: str | None) -> Any:
        fp = request.fingerprint()
        record = self._fixtures.get((request.template_id, fp))
        if record is None:
            raise MissingFixture(request.template_id, fp)
        if feedback and "retry" in record:
            return copy.deepcopy(record["retry"])
        if "responses" in record:
            options = record["responses"]
            return copy.deepcopy(options[run % len(options)])
        return copy.deepcopy(record["response"])

    @classmethod
    def from_dir(cls, root: str | Path) -> "FixtureLLM":
        model = cls()
        root = Path(root)
        if not root.is_dir():
            return model
        for path in sorted(root.glob("*/*.json")):
            record = json.loads(path.read_text(encoding="utf-8"))
            template_id = record.get("template_id", path.parent.name)
            if "slots" in record:
                fp = fingerprint(record["slots"])
            else:
                fp = path.stem
            if template_id not in TEMPLATES:
                log.warning("ignoring fixture for unknown template: %s", path)
                continue
            record["template_id"] = template_id
            model._fixtures[(template_id, fp)] = record
        return model

    def save(self, root: str | Path) -> list[Path]:
        root = Path(root)
        written = []
        for (template_id, fp), record in sorted(self._fixtures.items()):
            path = root / template_id / f"{fp}.json"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(record, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
            written.append(path)
        return written


_FENCE = re.compile(r"^```(?:json)?\s*|\s*```$", re.MULTILINE)


def parse_json_object(text: str) -> Any:
    """Best-effort extraction of the JSON object in a chat reply; returns the raw text on failure."""
    body = _FENCE.sub("", text.strip())
    try:
        return json.loads(body)
    except json.JSONDecodeError:
        start, end = body.find("{"), body.rfind("}")
        if 0 <= start < end:
            try:
                return json.loads(body[start : end + 1])
            except json.JSONDecodeError:
                pass
    return text


class HttpLLM(ChatModel):
    """OpenAI-compatible chat-completions endpoint."""

    system_prompt = "You are a careful data engineer. You always answer with valid JSON."

    def __init__(self, endpoint: Endpoint, *, temperature: float = 0.0, vote_temperature: float = 0.7, client=None):
        super().__init__()
        self.endpoint = endpoint
        self.temperature = temperature
        self.vote_temperature = vote_temperature
        self._client = client

    def _generate(self, request: PromptRequest, *, run: int, feedback: str | None) -> Any:
        messages = [
            {"role": "system", "content": self.system_prompt},
            {"role": "user", "content": request.render()},
        ]
        if feedback:
            messages.append({"role": "user", "content": feedback})
        body = post_json(
            self.endpoint,
            {
                "model": self.endpoint.model,
                "messages": messages,
                "temperature": self.vote_temperature if run else self.temperature,
            },
            client=self._client,
        )
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise ProviderUnavailable("chat response has no choices[0].message.content") from None
        return parse_json_object(content)
