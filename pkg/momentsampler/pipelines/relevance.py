"""
Per-frame relevance from moment retrieval predictions.

Moments are accumulated into a step signal (half-open membership), smoothed with a truncated
Gaussian and max-normalized to [0, 1].
"""

from collections.abc import Mapping, Sequence
import logging
import math
from numbers import Real
from typing import Any

import numpy as np
from scipy.ndimage import correlate1d

from momentsampler.errors import MomentIngestionError, ParameterError
from momentsampler.models import FrameGrid, Moment, RelevanceSignal, SignalStage

logger = logging.getLogger(__name__)

KERNEL_RADIUS_SIGMAS = 3.0


# region Ingestion


def _read_number(value: Any, name: str, index: int) -> float:
    if isinstance(value, bool) or not isinstance(value, Real):
        raise MomentIngestionError(
            f"malformed moment at index {index}: {name} is not a number", index
        )
    number = float(value)
    if not math.isfinite(number):
        raise MomentIngestionError(f"malformed moment at index {index}: {name} is not finite", index)
    return number


def _read_entry(entry: Any, index: int) -> tuple[float, float, float]:
    # Accepts {"start_s", "end_s", "relevance"} objects and [start, end, score] triples
    if isinstance(entry, Mapping):
        missing = [key for key in ("start_s", "end_s", "relevance") if key not in entry]
        if missing:
            raise MomentIngestionError(
                f"malformed moment at index {index}: missing {', '.join(missing)}", index
            )
        values = (entry["start_s"], entry["end_s"], entry["relevance"])
    elif isinstance(entry, Sequence) and not isinstance(entry, str) and len(entry) == 3:
        values = tuple(entry)
    else:
        raise MomentIngestionError(f"malformed moment at index {index}", index)

    start_s, end_s, relevance = (
        _read_number(value, name, index)
        for value, name in zip(values, ("start_s", "end_s", "relevance"))
    )
    return start_s, end_s, relevance


def ingest_moments(raw_moments: Sequence[Any]) -> list[Moment]:
    """
    Validate raw moment predictions.

    Negative relevances are clamped to 0 and the result is sorted by start time (stable).
    Raises `MomentIngestionError` naming the index of the first malformed or degenerate entry.
    """
    moments: list[Moment] = []
    clamped = 0
    for index, entry in enumerate(raw_moments):
        start_s, end_s, relevance = _read_entry(entry, index)
        if start_s < 0:
            raise MomentIngestionError(
                f"malformed moment at index {index}: start_s must be non-negative", index
            )
        if end_s <= start_s:
            raise MomentIngestionError(f"degenerate moment at index {index}", index)
        if relevance < 0:
            clamped += 1
            relevance = 0.0
        moments.append(Moment(start_s=start_s, end_s=end_s, relevance=relevance))

    if clamped:
        logger.debug("Clamped %d negative moment relevance score(s) to 0", clamped)
    return sorted(moments, key=lambda moment: moment.start_s)


# endregion


# region Signal Stages


def build_step_relevance(moments: Sequence[Moment], grid: FrameGrid) -> RelevanceSignal:
    """Sum of the relevance of every moment containing the frame timestamp."""
    timestamps = grid.timestamps_s
    values = np.zeros(grid.frame_count)
    for moment in moments:
        mask = (timestamps >= moment.start_s) & (timestamps < moment.end_s)
        values[mask] += moment.relevance
    return RelevanceSignal(values=values, stage=SignalStage.STEP)


def gaussian_kernel(sigma_frames: float) -> np.ndarray:
    """Gaussian weights truncated at ceil(3 sigma) and renormalized to sum 1."""
    if sigma_frames <= 0:
        return np.ones(1)
    radius = math.ceil(KERNEL_RADIUS_SIGMAS * sigma_frames)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    weights = np.exp(-(offsets**2) / (2.0 * sigma_frames**2))
    return weights / weights.sum()


def gaussian_smooth(signal: RelevanceSignal, sigma_s: float, grid: FrameGrid) -> RelevanceSignal:
    """
    Smooth a step signal with a Gaussian of width `sigma_s` seconds.

    The width is converted to frames with the grid's median spacing. Boundaries are reflected,
    so constant signals stay constant. `sigma_s = 0` returns the values unchanged.
    """
    if sigma_s < 0:
        raise ParameterError(f"sigma_s must be non-negative, got {sigma_s}")
    if signal.stage != SignalStage.STEP:
        raise ParameterError(f"Expected a step signal, got stage '{signal.stage}'")
    if signal.frame_count != grid.frame_count:
        raise ParameterError(
            f"Signal has {signal.frame_count} values but the grid has {grid.frame_count} frames"
        )

    sigma_frames = sigma_s / grid.median_spacing_s
    if sigma_frames == 0:
        return RelevanceSignal(values=signal.values, stage=SignalStage.SMOOTHED)

    smoothed = correlate1d(signal.values, gaussian_kernel(sigma_frames), mode="reflect")
    # Rounding can leave values like -1e-18 next to zero runs
    return RelevanceSignal(values=np.clip(smoothed, 0.0, None), stage=SignalStage.SMOOTHED)


def normalize_relevance(signal: RelevanceSignal) -> RelevanceSignal:
    if signal.stage != SignalStage.SMOOTHED:
        raise ParameterError(f"Expected a smoothed signal, got stage '{signal.stage}'")
    peak = float(signal.values.max()) if signal.frame_count else 0.0
    if peak <= 0:
        return RelevanceSignal(values=np.zeros(signal.frame_count), stage=SignalStage.NORMALIZED)
    return RelevanceSignal(values=signal.values / peak, stage=SignalStage.NORMALIZED)


def compute_relevance(
    moments: Sequence[Moment], grid: FrameGrid, sigma_s: float
) -> RelevanceSignal:
    """Step relevance, smoothed and normalized."""
    step = build_step_relevance(moments, grid)
    return normalize_relevance(gaussian_smooth(step, sigma_s, grid))


# endregion
