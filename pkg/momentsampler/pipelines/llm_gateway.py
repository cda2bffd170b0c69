"""
Answer backends: an OpenAI-style chat completions endpoint, a replay file and an echo stub.
"""

from abc import ABC, abstractmethod
import base64
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor, as_completed
import json
import logging
import time

import httpx
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn, TimeElapsedColumn

from momentsampler.artifacts import load_replay
from momentsampler.errors import BackendError, ConfigurationError, HarnessError, ReplayMissError
from momentsampler.models import BackendConfig, BackendKind, EvalRecord, QAItem, QueryPayload
from momentsampler.pipelines.qa_harness import evaluate_answer, failed_record
from momentsampler.utils import get_env

logger = logging.getLogger(__name__)

RETRYABLE_STATUS_CODES = {429, 500, 502, 503, 504}


# region Backends


class IAnswerBackend(ABC):
    """Interface for answer sources."""

    def __init__(self, config: BackendConfig):
        self.config = config

    @abstractmethod
    def answer(self, payload: QueryPayload) -> str:
        """Return the raw answer text for the payload."""
        pass

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_value, exc_traceback):
        self.close()


class EchoBackend(IAnswerBackend):
    """Returns the prompt verbatim."""

    def answer(self, payload: QueryPayload) -> str:
        return payload.prompt


class ReplayBackend(IAnswerBackend):
    """Looks answers up by item id in a recorded replay file."""

    def __init__(self, config: BackendConfig):
        super().__init__(config)
        self._answers = load_replay(config.replay_path)
        logger.debug("Loaded %d replay answers from '%s'", len(self._answers), config.replay_path)

    def answer(self, payload: QueryPayload) -> str:
        if payload.item_id not in self._answers:
            raise ReplayMissError(f"no replay entry for item_id '{payload.item_id}'")
        return self._answers[payload.item_id]


class HttpChatBackend(IAnswerBackend):
    """
    Chat completions client. Images are sent as base64 data URLs after the prompt, in the
    payload order. Transport errors, 429 and 5xx responses are retried with exponential backoff.
    """

    def __init__(
        self,
        config: BackendConfig,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        super().__init__(config)
        headers = {"Content-Type": "application/json"}
        if config.api_key_env_var:
            api_key = get_env(config.api_key_env_var)
            if not api_key:
                raise ConfigurationError(
                    f"Environment variable '{config.api_key_env_var}' is not set (API key)"
                )
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(
            headers=headers, timeout=config.request_timeout_s, transport=transport
        )
        self._sleep = sleep

    def build_request_body(self, payload: QueryPayload) -> dict:
        content: list[dict] = [{"type": "text", "text": payload.prompt}]
        for image in payload.images:
            encoded = base64.b64encode(image).decode("ascii")
            content.append(
                {
                    "type": "image_url",
                    "image_url": {"url": f"data:{payload.image_media_type};base64,{encoded}"},
                }
            )
        return {
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": content}],
            "temperature": self.config.temperature,
        }

    def backoff_delay_s(self, attempt: int) -> float:
        """Delay after failed attempt `attempt` (0-based): backoff_base_ms * 2^attempt."""
        return self.config.backoff_base_ms * (2**attempt) / 1000.0

    def answer(self, payload: QueryPayload) -> str:
        body = self.build_request_body(payload)
        if self.config.debug_http:
            logger.info("Request body for '%s': %s", payload.item_id, json.dumps(body))

        last_status: int | None = None
        last_error = ""
        for attempt in range(self.config.max_retries + 1):
            try:
                response = self._client.post(self.config.endpoint_url, json=body)
            except httpx.TransportError as e:
                last_status, last_error = None, f"{e.__class__.__name__}: {e}"
            else:
                if self.config.debug_http:
                    logger.info("Response for '%s' (%d): %s", payload.item_id, response.status_code, response.text)
                if response.status_code < 400:
                    return self._parse_response(response)
                last_status, last_error = response.status_code, response.text[:200]
                if response.status_code not in RETRYABLE_STATUS_CODES:
                    raise BackendError(
                        f"Request for '{payload.item_id}' failed with status {last_status}: {last_error}",
                        status_code=last_status,
                    )

            if attempt < self.config.max_retries:
                delay = self.backoff_delay_s(attempt)
                logger.warning(
                    "Attempt %d for '%s' failed (%s); retrying in %.2fs",
                    attempt + 1,
                    payload.item_id,
                    last_status or last_error,
                    delay,
                )
                self._sleep(delay)

        raise BackendError(
            f"Request for '{payload.item_id}' failed after {self.config.max_retries + 1} attempts "
            f"(last status: {last_status}): {last_error}",
            status_code=last_status,
        )

    @staticmethod
    def _parse_response(response: httpx.Response) -> str:
        try:
            content = response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise BackendError(
                f"Unexpected chat completions response: {response.text[:200]}",
                status_code=response.status_code,
            ) from e
        if isinstance(content, list):
            # Some servers return content parts instead of a string
            content = "".join(part.get("text", "") for part in content if isinstance(part, dict))
        if not isinstance(content, str):
            raise BackendError("Chat completions response has no text content.")
        return content

    def close(self) -> None:
        self._client.close()


BACKENDS: dict[BackendKind, type[IAnswerBackend]] = {
    BackendKind.HTTP_CHAT: HttpChatBackend,
    BackendKind.REPLAY: ReplayBackend,
    BackendKind.ECHO: EchoBackend,
}


def create_backend(config: BackendConfig) -> IAnswerBackend:
    return BACKENDS[config.kind](config)


# endregion


# region Querying


def query(payload: QueryPayload, backend: IAnswerBackend) -> str:
    return backend.answer(payload)


def run_batch(
    items: Sequence[QAItem],
    build_payload: Callable[[QAItem], QueryPayload],
    backend: IAnswerBackend,
    show_progress: bool = True,
) -> list[EvalRecord]:
    """
    Query the backend for every item with at most `max_concurrency` requests in flight.

    Records come back in input order. A failing item becomes a failed record; only a batch
    where every item fails raises `BackendError`.
    """
    if not items:
        raise HarnessError("Cannot run an empty batch.")

    def evaluate(item: QAItem) -> EvalRecord:
        try:
            return evaluate_answer(item, query(build_payload(item), backend))
        except Exception as e:
            logger.warning("Item '%s' failed: %s", item.item_id, e)
            return failed_record(item, str(e))

    records: list[EvalRecord | None] = [None] * len(items)
    with (
        Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            BarColumn(style="yellow1", pulse_style="white"),
            TimeElapsedColumn(),
            disable=not show_progress,
        ) as progress,
        ThreadPoolExecutor(max_workers=backend.config.max_concurrency) as executor,
    ):
        task = progress.add_task("[yellow]Querying backend...", total=len(items))
        futures = {executor.submit(evaluate, item): position for position, item in enumerate(items)}
        for future in as_completed(futures):
            records[futures[future]] = future.result()
            progress.advance(task)
        progress.update(task, description="[green]Backend queries done.")

    if all(record.failed for record in records):
        raise BackendError(f"All {len(items)} queries failed; first error: {records[0].error}")
    return records


# endregion
