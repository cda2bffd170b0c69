"""
Greedy frame selection over relevance, quality, uniformity and cluster constraints,
plus the uniform-sampling baseline.
"""

from collections.abc import Sequence
import logging

import numpy as np
from pydantic import BaseModel, ConfigDict

from momentsampler.errors import ConfigurationError, ParameterError, SelectionError
from momentsampler.models import (
    FrameTimeline,
    SamplingConfig,
    SelectionResult,
    StepSnapshot,
    Strategy,
)

logger = logging.getLogger(__name__)


class CandidateScores(BaseModel):
    """Channel values of the eligible candidates of one selection round."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    candidates: np.ndarray
    """Eligible frame indices, ascending."""

    relevance: np.ndarray
    quality: np.ndarray
    uniformity: np.ndarray
    """Uniformity divided by its maximum over the candidates (zero when all are zero)."""

    combined: np.ndarray

    @property
    def is_empty(self) -> bool:
        return self.candidates.size == 0


# region Scores


def uniformity_scores(
    candidate_timestamps: Sequence[float] | np.ndarray,
    selected_timestamps: Sequence[float] | np.ndarray,
) -> np.ndarray:
    """Sum of squared distances from each candidate timestamp to every selected timestamp."""
    candidates = np.asarray(candidate_timestamps, dtype=np.float64)
    selected = np.asarray(selected_timestamps, dtype=np.float64)
    if selected.size == 0:
        return np.zeros(candidates.size)
    return ((candidates[:, None] - selected[None, :]) ** 2).sum(axis=1)


def _max_normalize(values: np.ndarray) -> np.ndarray:
    peak = values.max() if values.size else 0.0
    return values / peak if peak > 0 else np.zeros_like(values)


def combined_scores(
    timeline: FrameTimeline, selected: Sequence[int], config: SamplingConfig
) -> CandidateScores:
    """
    Weighted sum of relevance, quality and normalized uniformity for every eligible frame.

    Eligible frames are the unselected ones, minus frames whose cluster was already used
    when `config.enforce_clusters` is set.
    """
    eligible = np.ones(timeline.frame_count, dtype=bool)
    selected_indices = np.asarray(selected, dtype=np.int64)
    eligible[selected_indices] = False
    if config.enforce_clusters and selected_indices.size:
        used_clusters = timeline.cluster_id[selected_indices]
        eligible &= ~np.isin(timeline.cluster_id, used_clusters)

    candidates = np.flatnonzero(eligible)
    timestamps = timeline.timestamp_norm
    relevance = timeline.relevance.values[candidates]
    quality = timeline.quality[candidates]
    uniformity = _max_normalize(
        uniformity_scores(timestamps[candidates], timestamps[selected_indices])
    )
    combined = (
        config.w_relevance * relevance
        + config.w_quality * quality
        + config.w_uniformity * uniformity
    )
    return CandidateScores(
        candidates=candidates,
        relevance=relevance,
        quality=quality,
        uniformity=uniformity,
        combined=combined,
    )


def final_uniformity(timeline: FrameTimeline, order: Sequence[int]) -> np.ndarray:
    """Normalized uniformity of every frame against the complete selection."""
    timestamps = timeline.timestamp_norm
    raw = uniformity_scores(timestamps, timestamps[np.asarray(order, dtype=np.int64)])
    return _max_normalize(raw)


# endregion


# region Selection


def _snapshot(scores: CandidateScores, position: int) -> StepSnapshot:
    return StepSnapshot(
        frame=int(scores.candidates[position]),
        relevance=float(scores.relevance[position]),
        quality=float(scores.quality[position]),
        uniformity=float(scores.uniformity[position]),
        combined=float(scores.combined[position]),
    )


def check_cluster_budget(config: SamplingConfig) -> None:
    """An explicit cluster count below the frame budget cannot satisfy the cluster constraint."""
    if (
        config.enforce_clusters
        and config.k_clusters is not None
        and config.k_clusters < config.n_frames
    ):
        raise ConfigurationError(
            f"k_clusters must be ≥ n_frames (got k_clusters={config.k_clusters}, n_frames={config.n_frames})"
        )


def greedy_select(timeline: FrameTimeline, config: SamplingConfig) -> SelectionResult:
    """
    Select up to `config.n_frames` frames, one per round, by highest combined score.

    Ties go to the earliest timestamp (then the smallest index). Only the uniformity channel
    changes between rounds. Stops early, with a warning, when no eligible frame is left.
    """
    if timeline.frame_count == 0:
        raise SelectionError("Cannot select frames from an empty timeline.")
    check_cluster_budget(config)

    order: list[int] = []
    per_step: list[StepSnapshot] = []
    for _ in range(config.n_frames):
        scores = combined_scores(timeline, order, config)
        if scores.is_empty:
            logger.warning(
                "Candidates exhausted after %d of %d frames (frames: %d, clusters: %d)",
                len(order),
                config.n_frames,
                timeline.frame_count,
                timeline.cluster_count,
            )
            break
        # Candidates are ascending in index and therefore in time
        best = int(np.flatnonzero(scores.combined == scores.combined.max())[0])
        snapshot = _snapshot(scores, best)
        order.append(snapshot.frame)
        per_step.append(snapshot)

    return SelectionResult(order=order, per_step=per_step)


def uniform_select(frame_count: int, n_frames: int) -> list[int]:
    """Center-of-stride indices: floor((i + 0.5) * n / N) for i in [0, N)."""
    if n_frames < 1:
        raise ParameterError(f"N must be at least 1, got {n_frames}")
    if n_frames > frame_count:
        raise ParameterError(f"N ({n_frames}) exceeds the frame count ({frame_count})")
    return [
        min(((2 * i + 1) * frame_count) // (2 * n_frames), frame_count - 1)
        for i in range(n_frames)
    ]


def describe_selection(
    timeline: FrameTimeline, order: Sequence[int], config: SamplingConfig
) -> SelectionResult:
    """
    Per-step channel values for an externally chosen order, as if the greedy loop had picked
    the same frames. Cluster eligibility is ignored.
    """
    unconstrained = config.model_copy(update={"enforce_clusters": False})
    per_step: list[StepSnapshot] = []
    for step, frame in enumerate(order):
        scores = combined_scores(timeline, order[:step], unconstrained)
        position = int(np.searchsorted(scores.candidates, frame))
        if position >= scores.candidates.size or scores.candidates[position] != frame:
            raise SelectionError(f"Frame {frame} is not a valid candidate at step {step}")
        per_step.append(_snapshot(scores, position))
    return SelectionResult(order=list(order), per_step=per_step)


def relevance_config(config: SamplingConfig) -> SamplingConfig:
    """Relevance-only ranking: weights (1, 0, 0) without the cluster constraint."""
    return config.model_copy(
        update={"w_relevance": 1.0, "w_quality": 0.0, "w_uniformity": 0.0, "enforce_clusters": False}
    )


def select_frames(
    timeline: FrameTimeline, config: SamplingConfig, strategy: Strategy = Strategy.MOMENT
) -> SelectionResult:
    match strategy:
        case Strategy.MOMENT:
            return greedy_select(timeline, config)
        case Strategy.RELEVANCE:
            return greedy_select(timeline, relevance_config(config))
        case Strategy.UNIFORM:
            order = uniform_select(timeline.frame_count, config.n_frames)
            return describe_selection(timeline, order, config)
    raise ValueError(f"Unknown strategy: {strategy}")


# endregion
