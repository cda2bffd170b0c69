import base64
import json
import logging

import httpx
import pytest

from momentsampler.errors import BackendError, ConfigurationError, HarnessError, ReplayMissError
from momentsampler.models import BackendConfig, BackendKind, QAItem, QueryPayload
from momentsampler.pipelines.llm_gateway import (
    EchoBackend,
    HttpChatBackend,
    ReplayBackend,
    create_backend,
    query,
    run_batch,
)
from tests.conftest import qa_items, write_json_lines

ENDPOINT = "https://llm.example.com/v1/chat/completions"


def _http_config(**kwargs) -> BackendConfig:
    values = dict(kind=BackendKind.HTTP_CHAT, endpoint_url=ENDPOINT, model_name="test-model")
    values.update(kwargs)
    return BackendConfig(**values)


def _completion(content) -> httpx.Response:
    return httpx.Response(200, json={"choices": [{"message": {"content": content}}]})


def _payload(item: QAItem) -> QueryPayload:
    return QueryPayload(prompt=f"prompt for {item.item_id}", item_id=item.item_id)


class _Sequence:
    """Transport handler answering with the given responses in order and recording requests."""

    def __init__(self, *responses):
        self.responses = list(responses)
        self.requests: list[httpx.Request] = []

    def __call__(self, request: httpx.Request) -> httpx.Response:
        self.requests.append(request)
        response = self.responses.pop(0)
        if isinstance(response, Exception):
            raise response
        return response


def _http_backend(handler, delays: list[float], **kwargs) -> HttpChatBackend:
    return HttpChatBackend(
        _http_config(**kwargs), transport=httpx.MockTransport(handler), sleep=delays.append
    )


# region Configuration


def test_backend_config_validation(tmp_path):
    assert BackendConfig().kind == BackendKind.ECHO
    with pytest.raises(ValueError, match="endpoint_url and model_name"):
        BackendConfig(kind=BackendKind.HTTP_CHAT, model_name="m")
    with pytest.raises(ValueError, match="Invalid endpoint URL"):
        _http_config(endpoint_url="llm.example.com")
    with pytest.raises(ValueError, match="replay_path"):
        BackendConfig(kind=BackendKind.REPLAY)
    with pytest.raises(FileNotFoundError):
        BackendConfig(kind=BackendKind.REPLAY, replay_path=str(tmp_path / "missing.jsonl"))


def test_create_backend_by_kind(tmp_path):
    replay_file = write_json_lines(tmp_path / "replay.jsonl", [])
    assert isinstance(create_backend(BackendConfig()), EchoBackend)
    assert isinstance(
        create_backend(BackendConfig(kind=BackendKind.REPLAY, replay_path=str(replay_file))),
        ReplayBackend,
    )
    with create_backend(_http_config()) as backend:
        assert isinstance(backend, HttpChatBackend)


# endregion


# region Echo and Replay


def test_echo_backend_returns_the_prompt():
    item = qa_items()[0]
    assert query(_payload(item), EchoBackend(BackendConfig())) == "prompt for q0"


def test_replay_backend(tmp_path):
    replay_file = write_json_lines(
        tmp_path / "replay.jsonl", [{"item_id": "q0", "raw_answer": "B"}]
    )
    backend = ReplayBackend(BackendConfig(kind=BackendKind.REPLAY, replay_path=str(replay_file)))
    items = qa_items()
    assert backend.answer(_payload(items[0])) == "B"
    with pytest.raises(ReplayMissError, match="no replay entry for item_id 'q1'"):
        backend.answer(_payload(items[1]))


# endregion


# region HTTP Chat


def test_http_backend_sends_prompt_and_images_in_order(monkeypatch):
    monkeypatch.setenv("MOMENTSAMPLER_TEST_KEY", "secret-key")
    handler = _Sequence(_completion("C"))
    backend = _http_backend(handler, [], api_key_env_var="MOMENTSAMPLER_TEST_KEY", temperature=0.2)
    payload = QueryPayload(prompt="Which one?", images=[b"first", b"second"], item_id="q0")

    assert backend.answer(payload) == "C"

    request = handler.requests[0]
    assert str(request.url) == ENDPOINT
    assert request.headers["Authorization"] == "Bearer secret-key"
    body = json.loads(request.content)
    assert body["model"] == "test-model"
    assert body["temperature"] == 0.2
    content = body["messages"][0]["content"]
    assert content[0] == {"type": "text", "text": "Which one?"}
    assert [part["image_url"]["url"] for part in content[1:]] == [
        "data:image/jpeg;base64," + base64.b64encode(b"first").decode(),
        "data:image/jpeg;base64," + base64.b64encode(b"second").decode(),
    ]


def test_http_backend_requires_the_api_key_variable(monkeypatch):
    monkeypatch.delenv("MOMENTSAMPLER_MISSING_KEY", raising=False)
    with pytest.raises(ConfigurationError, match="MOMENTSAMPLER_MISSING_KEY"):
        HttpChatBackend(_http_config(api_key_env_var="MOMENTSAMPLER_MISSING_KEY"))


def test_http_backend_retries_with_exponential_backoff():
    delays: list[float] = []
    handler = _Sequence(httpx.Response(500), httpx.Response(429), _completion("A"))
    backend = _http_backend(handler, delays)
    assert backend.answer(QueryPayload(prompt="p", item_id="q0")) == "A"
    assert delays == [0.5, 1.0]
    assert len(handler.requests) == 3


def test_http_backend_gives_up_after_max_retries():
    delays: list[float] = []
    handler = _Sequence(*[httpx.Response(503, text="busy") for _ in range(4)])
    backend = _http_backend(handler, delays)
    with pytest.raises(BackendError, match="after 4 attempts") as e:
        backend.answer(QueryPayload(prompt="p", item_id="q0"))
    assert e.value.status_code == 503
    assert delays == [0.5, 1.0, 2.0]


def test_http_backend_does_not_retry_client_errors():
    delays: list[float] = []
    handler = _Sequence(httpx.Response(400, text="bad request"))
    backend = _http_backend(handler, delays)
    with pytest.raises(BackendError, match="status 400") as e:
        backend.answer(QueryPayload(prompt="p", item_id="q0"))
    assert e.value.status_code == 400
    assert delays == []


def test_http_backend_retries_transport_errors():
    delays: list[float] = []
    handler = _Sequence(httpx.ConnectError("refused"), _completion("E"))
    backend = _http_backend(handler, delays, backoff_base_ms=100)
    assert backend.answer(QueryPayload(prompt="p", item_id="q0")) == "E"
    assert delays == [0.1]


def test_http_backend_joins_content_parts():
    handler = _Sequence(_completion([{"type": "text", "text": "The answer "}, {"text": "is D"}]))
    backend = _http_backend(handler, [])
    assert backend.answer(QueryPayload(prompt="p", item_id="q0")) == "The answer is D"


def test_http_backend_rejects_unexpected_responses():
    handler = _Sequence(httpx.Response(200, json={"error": "nope"}))
    backend = _http_backend(handler, [])
    with pytest.raises(BackendError, match="Unexpected"):
        backend.answer(QueryPayload(prompt="p", item_id="q0"))


def test_http_backend_logs_bodies_in_debug_mode(caplog):
    handler = _Sequence(_completion("B"))
    backend = _http_backend(handler, [], debug_http=True)
    with caplog.at_level(logging.INFO, logger="momentsampler"):
        backend.answer(QueryPayload(prompt="secret prompt", item_id="q0"))
    assert "secret prompt" in caplog.text
    assert "choices" in caplog.text


# endregion


# region Batches


def test_run_batch_keeps_input_order():
    items = qa_items()
    records = run_batch(items, _payload, EchoBackend(BackendConfig()), show_progress=False)
    assert [record.item_id for record in records] == [item.item_id for item in items]


def test_run_batch_records_failures(tmp_path):
    items = qa_items()[:3]
    replay_file = write_json_lines(
        tmp_path / "replay.jsonl",
        [{"item_id": "q0", "raw_answer": "A"}, {"item_id": "q2", "raw_answer": "C"}],
    )
    backend = ReplayBackend(BackendConfig(kind=BackendKind.REPLAY, replay_path=str(replay_file)))
    records = run_batch(items, _payload, backend, show_progress=False)
    assert [record.failed for record in records] == [False, True, False]
    assert "no replay entry" in records[1].error
    assert records[0].correct and records[2].correct


def test_run_batch_does_not_depend_on_concurrency(tmp_path, qa_dir):
    items = qa_items()
    results = []
    for concurrency in (1, 4):
        config = BackendConfig(
            kind=BackendKind.REPLAY,
            replay_path=str(qa_dir / "replay_mixed.jsonl"),
            max_concurrency=concurrency,
        )
        results.append(run_batch(items, _payload, ReplayBackend(config), show_progress=False))
    assert results[0] == results[1]


def test_run_batch_fails_when_every_item_fails(tmp_path):
    replay_file = write_json_lines(tmp_path / "replay.jsonl", [])
    backend = ReplayBackend(BackendConfig(kind=BackendKind.REPLAY, replay_path=str(replay_file)))
    with pytest.raises(BackendError, match="All 2 queries failed"):
        run_batch(qa_items()[:2], _payload, backend, show_progress=False)


def test_run_batch_rejects_empty_batches():
    with pytest.raises(HarnessError):
        run_batch([], _payload, EchoBackend(BackendConfig()), show_progress=False)


# endregion
