from abc import ABC, abstractmethod
import argparse
from enum import StrEnum
import json
from pathlib import Path
from typing import Any, Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from momentsampler.errors import ConfigurationError
from momentsampler.utils import FilePath, deep_merge, is_url


# region Base Models


class ICommandHandler(ABC):
    """Interface for command handlers."""

    name: str
    """Command name."""

    description: str
    """Command description."""

    @abstractmethod
    def configure_args(self, parser: argparse.ArgumentParser) -> None:
        """Configure the command line arguments for the command."""
        pass

    @abstractmethod
    def run(self, args: argparse.Namespace) -> None:
        """Run the command with the given arguments."""
        pass

    def __str__(self):
        return self.name


def _as_readonly_array(value: Any, dtype=np.float64) -> np.ndarray:
    array = np.array(value, dtype=dtype)
    array.setflags(write=False)
    return array


class _ArrayModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


# endregion


# region Timeline Models


class Moment(BaseModel):
    """A temporal segment predicted by a moment retrieval model."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    start_s: float = Field(ge=0)
    """Segment start (in seconds)."""

    end_s: float
    """Segment end (in seconds, exclusive)."""

    relevance: float = Field(ge=0)
    """Query relevance of the segment (clamped to 0 at ingestion)."""

    @model_validator(mode="after")
    def _validate_bounds(self) -> Self:
        if self.end_s <= self.start_s:
            raise ValueError(f"end_s ({self.end_s}) must be greater than start_s ({self.start_s})")
        return self


class FrameGrid(_ArrayModel):
    """Candidate frame timestamps of a video."""

    timestamps_s: np.ndarray
    """Strictly increasing frame timestamps (in seconds)."""

    duration_s: float = Field(ge=0, allow_inf_nan=False)
    """Video duration (in seconds)."""

    @field_validator("timestamps_s", mode="before")
    @classmethod
    def _to_array(cls, v):
        return _as_readonly_array(v)

    @model_validator(mode="after")
    def _validate_timestamps(self) -> Self:
        timestamps = self.timestamps_s
        if timestamps.ndim != 1 or timestamps.size == 0:
            raise ValueError("Frame grid must contain at least one timestamp.")
        if not np.all(np.isfinite(timestamps)):
            raise ValueError("Frame timestamps must be finite.")
        if timestamps[0] < 0:
            raise ValueError("Frame timestamps must be non-negative.")
        if np.any(np.diff(timestamps) <= 0):
            raise ValueError("timestamps not increasing")
        if self.duration_s < timestamps[-1]:
            raise ValueError(
                f"duration_s ({self.duration_s}) is smaller than the last timestamp ({timestamps[-1]})"
            )
        return self

    @property
    def frame_count(self) -> int:
        return int(self.timestamps_s.size)

    @property
    def median_spacing_s(self) -> float:
        """Median distance between consecutive frames (1 second for single-frame grids)."""
        if self.frame_count < 2:
            return 1.0
        return float(np.median(np.diff(self.timestamps_s)))

    def normalized_timestamps(self) -> np.ndarray:
        """Timestamps divided by the duration, in [0, 1]."""
        if self.duration_s <= 0:
            return np.zeros(self.frame_count)
        return self.timestamps_s / self.duration_s

    @classmethod
    def uniform(cls, frame_count: int, fps: float = 1.0) -> "FrameGrid":
        """Evenly spaced grid starting at 0, with duration equal to frame_count / fps."""
        return cls(timestamps_s=np.arange(frame_count) / fps, duration_s=frame_count / fps)


class SignalStage(StrEnum):
    STEP = "step"
    SMOOTHED = "smoothed"
    NORMALIZED = "normalized"


class RelevanceSignal(_ArrayModel):
    """Per-frame relevance values together with the processing stage they come from."""

    values: np.ndarray
    stage: SignalStage

    @field_validator("values", mode="before")
    @classmethod
    def _to_array(cls, v):
        return _as_readonly_array(v)

    @model_validator(mode="after")
    def _validate_values(self) -> Self:
        if self.values.ndim != 1:
            raise ValueError("Relevance values must be one-dimensional.")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("Relevance values must be finite and non-negative.")
        if self.stage == SignalStage.NORMALIZED and self.values.size:
            peak = float(self.values.max())
            if peak > 1.0 or (peak != 0.0 and not np.isclose(peak, 1.0)):
                raise ValueError("Normalized relevance must peak at 1 (or be all zero).")
        return self

    @property
    def frame_count(self) -> int:
        return int(self.values.size)


# endregion


# region Frame Metric Models


class GrayImage(_ArrayModel):
    """Single-channel image with intensities in [0, 255]."""

    pixels: np.ndarray
    """Row-major intensities, shape (height, width)."""

    @field_validator("pixels", mode="before")
    @classmethod
    def _to_array(cls, v):
        return _as_readonly_array(v)

    @model_validator(mode="after")
    def _validate_pixels(self) -> Self:
        if self.pixels.ndim != 2 or self.pixels.size == 0:
            raise ValueError("Gray image must be a non-empty 2D array.")
        if np.any(self.pixels < 0) or np.any(self.pixels > 255):
            raise ValueError("Gray image intensities must be in [0, 255].")
        return self

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])


class QualityConfig(BaseModel):
    gamma: float = Field(default=0.5, gt=0)
    """Exponent applied to the normalized Laplacian variance."""


class FrameMetrics(_ArrayModel):
    """Per-frame metrics computed from the frame images of one video."""

    laplacian_variances: np.ndarray
    quality: np.ndarray
    features: np.ndarray
    """Fallback feature vectors, shape (frames, 64)."""


# endregion


# region Sampling Models


class Strategy(StrEnum):
    MOMENT = "moment"
    UNIFORM = "uniform"
    RELEVANCE = "relevance"


class SamplingConfig(BaseModel):
    """Tunables of the greedy moment sampler."""

    model_config = ConfigDict(allow_inf_nan=False)

    n_frames: int = Field(default=8, ge=1)
    """Number of frames to select."""

    w_relevance: float = Field(default=1.0, ge=0)
    w_quality: float = Field(default=0.3, ge=0)
    w_uniformity: float = Field(default=0.3, ge=0)

    sigma_s: float = Field(default=2.0, ge=0)
    """Gaussian smoothing width for the relevance signal (in seconds)."""

    gamma: float = Field(default=0.5, gt=0)
    """Quality exponent."""

    k_clusters: int | None = Field(default=None, ge=1)
    """Number of frame clusters. Defaults to 2 * n_frames, clamped to the frame count."""

    seed: int = 0
    """Seed for the k-means++ initialization."""

    enforce_clusters: bool = True
    """Select at most one frame per cluster."""

    @model_validator(mode="after")
    def _validate_weights(self) -> Self:
        if self.w_relevance == 0 and self.w_quality == 0 and self.w_uniformity == 0:
            raise ValueError("At least one of the sampling weights must be positive.")
        return self

    @property
    def weights(self) -> tuple[float, float, float]:
        return (self.w_relevance, self.w_quality, self.w_uniformity)

    @property
    def quality_config(self) -> QualityConfig:
        return QualityConfig(gamma=self.gamma)

    def resolve_k_clusters(self, frame_count: int) -> int:
        """Cluster count to use for a video with `frame_count` frames."""
        if self.k_clusters is None:
            return max(1, min(2 * self.n_frames, frame_count))
        return self.k_clusters


class FrameTimeline(_ArrayModel):
    """Per-frame working state of the sampler."""

    grid: FrameGrid
    relevance: RelevanceSignal
    quality: np.ndarray
    """Per-frame quality in [0, 1]."""

    cluster_id: np.ndarray
    """Per-frame cluster id in [0, K)."""

    @field_validator("quality", mode="before")
    @classmethod
    def _quality_to_array(cls, v):
        return _as_readonly_array(v)

    @field_validator("cluster_id", mode="before")
    @classmethod
    def _clusters_to_array(cls, v):
        return _as_readonly_array(v, dtype=np.int64)

    @model_validator(mode="after")
    def _validate_lengths(self) -> Self:
        n = self.grid.frame_count
        if self.relevance.stage != SignalStage.NORMALIZED:
            raise ValueError("Timeline relevance must be normalized.")
        for name, array in (
            ("relevance", self.relevance.values),
            ("quality", self.quality),
            ("cluster_id", self.cluster_id),
        ):
            if array.shape != (n,):
                raise ValueError(f"{name} has {array.size} values, expected {n}")
        if np.any(self.quality < 0) or np.any(self.quality > 1):
            raise ValueError("Quality values must be in [0, 1].")
        if np.any(self.cluster_id < 0):
            raise ValueError("Cluster ids must be non-negative.")
        return self

    @property
    def frame_count(self) -> int:
        return self.grid.frame_count

    @property
    def timestamp_norm(self) -> np.ndarray:
        return self.grid.normalized_timestamps()

    @property
    def cluster_count(self) -> int:
        return int(self.cluster_id.max()) + 1


class StepSnapshot(BaseModel):
    """Channel values of a selected frame at the moment it was selected."""

    frame: int
    relevance: float
    quality: float
    uniformity: float
    """Normalized uniformity (in [0, 1])."""

    combined: float


class SelectionResult(BaseModel):
    order: list[int]
    """Frame indices in selection order."""

    per_step: list[StepSnapshot]

    @model_validator(mode="after")
    def _validate_order(self) -> Self:
        if len(set(self.order)) != len(self.order):
            raise ValueError("Selection order contains duplicate frames.")
        if len(self.per_step) != len(self.order):
            raise ValueError("Selection needs one snapshot per selected frame.")
        if any(step.frame != frame for step, frame in zip(self.per_step, self.order)):
            raise ValueError("Snapshots do not match the selection order.")
        return self

    @property
    def chronological(self) -> list[int]:
        """Selected frame indices sorted by time."""
        return sorted(self.order)


# endregion


# region QA Models


OPTION_LETTERS = ("A", "B", "C", "D", "E")


class QAItem(BaseModel):
    """One multiple-choice question about a video."""

    item_id: str = Field(min_length=1)
    video_id: str = Field(min_length=1)
    question: str
    options: list[str]
    """Exactly 5 answer options, rendered as A to E."""

    answer_index: int = Field(ge=0, le=4)
    category: str | None = None
    """Question category (eg. 'Tem.', 'Cau.', 'Des.' for NextQA or 'CRD' for CinePile)."""

    subtitles: str | None = None

    @field_validator("options")
    @classmethod
    def _validate_options(cls, v: list[str]) -> list[str]:
        if len(v) != len(OPTION_LETTERS):
            raise ValueError(f"Expected exactly {len(OPTION_LETTERS)} options, got {len(v)}")
        if any(not option.strip() for option in v):
            raise ValueError("Options must not be empty.")
        return v

    @property
    def answer_letter(self) -> str:
        return OPTION_LETTERS[self.answer_index]


class PromptMode(StrEnum):
    WITH_VIDEO = "with_video"
    NO_VIDEO = "no_video"
    WITH_SUBTITLES = "with_subtitles"


class MatchMethod(StrEnum):
    EXACT_LETTER = "exact_letter"
    LETTER_IN_TEXT = "letter_in_text"
    LCS_FALLBACK = "lcs_fallback"


class EvalRecord(BaseModel):
    """A model prediction for one QA item. Failed queries have no prediction and an error."""

    item_id: str
    predicted_index: int | None = Field(default=None, ge=0, le=4)
    match_method: MatchMethod | None = None
    correct: bool = False
    raw_answer: str | None = None
    error: str | None = None

    @model_validator(mode="after")
    def _validate_prediction(self) -> Self:
        if self.predicted_index is None:
            if self.correct:
                raise ValueError("A record without prediction cannot be correct.")
            if self.error is None:
                raise ValueError("A record without prediction must carry an error.")
        return self

    @property
    def failed(self) -> bool:
        return self.predicted_index is None


class CategoryAccuracy(BaseModel):
    total: int
    correct: int
    accuracy: float


class AccuracyReport(BaseModel):
    total: int
    correct: int
    failed: int
    """Records with no parsed answer (counted as incorrect)."""

    accuracy: float
    per_category: dict[str, CategoryAccuracy] = {}


class AccuracyDrop(BaseModel):
    with_video: float
    no_video: float
    absolute_drop: float
    relative_drop: float
    """Drop as a fraction of the with-video accuracy (0 when that accuracy is 0)."""


class VisualRelianceReport(BaseModel):
    overall: AccuracyDrop
    per_category: dict[str, AccuracyDrop] = {}


# endregion


# region Backend Models


class BackendKind(StrEnum):
    HTTP_CHAT = "http_chat"
    REPLAY = "replay"
    ECHO = "echo"


class BackendConfig(BaseModel):
    """Answer source configuration."""

    kind: BackendKind = BackendKind.ECHO

    endpoint_url: str | None = None
    """Chat completions URL (eg. 'https://api.openai.com/v1/chat/completions')."""

    api_key_env_var: str | None = None
    """Name of the environment variable holding the API key. Keys are never stored in config files."""

    model_name: str | None = None

    max_retries: int = Field(default=3, ge=0)
    backoff_base_ms: float = Field(default=500, ge=0)
    """Delay before the first retry; doubles on every further attempt."""

    max_concurrency: int = Field(default=4, ge=1)
    request_timeout_s: float = Field(default=120, gt=0)
    temperature: float = Field(default=0.0, ge=0)

    replay_path: str | None = None
    """JSON Lines file with {"item_id", "raw_answer"} entries."""

    debug_http: bool = False
    """Log request and response bodies verbatim."""

    @model_validator(mode="after")
    def _validate_kind(self) -> Self:
        if self.kind == BackendKind.HTTP_CHAT:
            if not self.endpoint_url or not self.model_name:
                raise ValueError("The http_chat backend requires endpoint_url and model_name.")
            if not is_url(self.endpoint_url):
                raise ValueError(f"Invalid endpoint URL: '{self.endpoint_url}'")
        if self.kind == BackendKind.REPLAY:
            if not self.replay_path:
                raise ValueError("The replay backend requires replay_path.")
            if not FilePath(self.replay_path).file_exists():
                raise FileNotFoundError(f"File not found: '{FilePath(self.replay_path)}'")
        return self


class QueryPayload(BaseModel):
    prompt: str
    images: list[bytes] = []
    """Encoded frame images in chronological order (empty in no_video mode)."""

    item_id: str
    image_media_type: str = "image/jpeg"


# endregion


# region Artifact Models


class FrameEntry(BaseModel):
    index: int = Field(ge=0)
    timestamp_s: float = Field(ge=0, allow_inf_nan=False)
    image_path: str
    """Image path (resolved against the manifest directory when loaded)."""


class FrameManifest(BaseModel):
    video_id: str
    duration_s: float = Field(ge=0, allow_inf_nan=False)
    frames: list[FrameEntry] = Field(min_length=1)

    @model_validator(mode="after")
    def _validate_frames(self) -> Self:
        for position, frame in enumerate(self.frames):
            if frame.index != position:
                raise ValueError(
                    f"frame indices must be contiguous from 0 (found {frame.index} at position {position})"
                )
        timestamps = [frame.timestamp_s for frame in self.frames]
        if any(b <= a for a, b in zip(timestamps, timestamps[1:])):
            raise ValueError("timestamps not increasing")
        if self.duration_s < timestamps[-1]:
            raise ValueError(
                f"duration_s ({self.duration_s}) is smaller than the last timestamp ({timestamps[-1]})"
            )
        return self

    @property
    def grid(self) -> FrameGrid:
        return FrameGrid(
            timestamps_s=[frame.timestamp_s for frame in self.frames], duration_s=self.duration_s
        )

    @property
    def image_paths(self) -> list[str]:
        return [frame.image_path for frame in self.frames]


class MomentsFile(BaseModel):
    """Moment retrieval output for one (video, question) pair."""

    video_id: str
    query: str = ""
    question_id: str | None = None
    moments: list[Moment]


class SelectionFile(BaseModel):
    """Durable record of one frame selection, consumed by the evaluation step."""

    video_id: str
    question_id: str
    strategy: Strategy = Strategy.MOMENT
    order: list[int]
    per_step: list[StepSnapshot]
    config: dict[str, Any] = {}
    frames: list[FrameEntry] = []
    """Manifest entries of the selected frames, in chronological order."""

    meta: dict[str, Any] = {}

    @property
    def selection(self) -> SelectionResult:
        return SelectionResult(order=self.order, per_step=self.per_step)


class DiagnosticsRow(BaseModel):
    timestamp_s: float
    relevance: float
    quality: float
    uniformity: float
    """Normalized uniformity against the final selection."""

    cluster: int
    selected_order: int = Field(default=-1, ge=-1)
    """Position in the selection order, or -1 when the frame was not selected."""


class DiagnosticsTable(BaseModel):
    rows: list[DiagnosticsRow] = []

    @model_validator(mode="after")
    def _validate_order(self) -> Self:
        orders = sorted(row.selected_order for row in self.rows if row.selected_order >= 0)
        if orders != list(range(len(orders))):
            raise ValueError("selected_order values must be a permutation of 0..m-1")
        return self

    @property
    def selected_count(self) -> int:
        return sum(1 for row in self.rows if row.selected_order >= 0)


class SweepRow(BaseModel):
    budget: int
    strategy: Strategy
    mean_recall: float
    stddev: float
    trials: int


# endregion


# region Synthetic Benchmark Models


class SynthParams(BaseModel):
    """Synthetic video generator parameters."""

    n_frames: int = Field(default=180, ge=1)
    """Frame count (180 frames at 1 fps is a 3-minute video)."""

    fps: float = Field(default=1.0, gt=0)

    n_key_segments: int = Field(default=2, ge=1)
    key_coverage: float = Field(default=0.08, gt=0, lt=1)
    """Fraction of the timeline covered by key segments."""

    boundary_jitter_s: float = Field(default=3.0, ge=0)
    relevance_noise_sd: float = Field(default=0.1, ge=0)
    distractor_moments: int = Field(default=2, ge=0)
    seed: int = 0


class SynthCase(_ArrayModel):
    grid: FrameGrid
    key_frame_mask: np.ndarray
    key_segments: list[tuple[float, float]]
    """Planted segments as (start_s, end_s)."""

    moments: list[Moment]

    @field_validator("key_frame_mask", mode="before")
    @classmethod
    def _to_array(cls, v):
        return _as_readonly_array(v, dtype=bool)

    @model_validator(mode="after")
    def _validate_mask(self) -> Self:
        if self.key_frame_mask.shape != (self.grid.frame_count,):
            raise ValueError("Key frame mask length must match the frame count.")
        if not self.key_frame_mask.any():
            raise ValueError("A synthetic case needs at least one key frame.")
        return self

    @property
    def key_frame_count(self) -> int:
        return int(self.key_frame_mask.sum())


# endregion


# region Run Configuration


class RunConfig(BaseModel):
    """
    Everything a command needs, loaded from an optional JSON file and command-line overrides.
    API keys are never part of it (see `BackendConfig.api_key_env_var`).
    """

    sampling: SamplingConfig = SamplingConfig()
    backend: BackendConfig = BackendConfig()
    synth: SynthParams = SynthParams()

    strategy: Strategy = Strategy.MOMENT
    mode: PromptMode = PromptMode.WITH_VIDEO

    manifest: str | None = None
    moments: str | None = None
    features: str | None = None
    dataset: str | None = None
    selections: str | None = None
    """Directory with one selection file per question."""

    out: str = "out"
    """Output directory."""

    question_id: str | None = None
    dataset_name: str | None = None
    """Known dataset name (egoschema, nextqa, intentqa, cinepile) for scale checks."""

    budgets: list[int] = [4, 8, 16, 32]
    trials: int = Field(default=200, ge=1)
    collage: bool = False
    max_workers: int | None = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _validate_paths(self) -> Self:
        for name in ("manifest", "moments", "features", "dataset"):
            value = getattr(self, name)
            if value is not None and not FilePath(value).file_exists():
                raise FileNotFoundError(f"File not found ({name}): '{FilePath(value)}'")
        if self.selections is not None and not Path(self.selections).is_dir():
            raise FileNotFoundError(f"Directory not found (selections): '{self.selections}'")
        return self

    @classmethod
    def load(cls, config_file: str | None, overrides: dict[str, Any]) -> "RunConfig":
        """Deep-merge `overrides` over the JSON config file (overrides win) and validate."""
        base: dict[str, Any] = {}
        if config_file:
            try:
                with open(config_file, encoding="utf8") as fp:
                    base = json.load(fp)
            except FileNotFoundError:
                raise ConfigurationError(f"Config file not found: '{config_file}'")
            except json.JSONDecodeError as e:
                raise ConfigurationError(
                    f"{config_file}:{e.lineno}: invalid JSON ({e.msg})"
                ) from e
            if not isinstance(base, dict):
                raise ConfigurationError(f"{config_file}: expected a JSON object")
        return cls.model_validate(deep_merge(base, overrides))


# endregion
