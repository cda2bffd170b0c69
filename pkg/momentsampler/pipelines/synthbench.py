"""
Synthetic sample-efficiency benchmark: videos with planted key segments and noisy moment
predictions, scored by the key-frame recall of moment sampling against uniform sampling.
"""

from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
import logging

import numpy as np
from pydantic import BaseModel
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn, TimeElapsedColumn

from momentsampler.errors import ParameterError
from momentsampler.models import (
    FrameGrid,
    FrameTimeline,
    Moment,
    SamplingConfig,
    Strategy,
    SweepRow,
    SynthCase,
    SynthParams,
)
from momentsampler.pipelines.frame_metrics import kmeans_cluster
from momentsampler.pipelines.greedy_sampler import greedy_select, uniform_select
from momentsampler.pipelines.relevance import compute_relevance

logger = logging.getLogger(__name__)

DEFAULT_BUDGETS = [4, 8, 16, 32]
DEFAULT_TRIALS = 200


class PipelineParams(BaseModel):
    synth: SynthParams = SynthParams()
    budgets: list[int] = DEFAULT_BUDGETS
    trials: int = DEFAULT_TRIALS
    sampling: SamplingConfig | None = None
    """Sampler settings (n_frames is replaced by each budget). Defaults to `synthetic_sampling_config`."""

    max_workers: int | None = None


# region Case Generation


def _segment_lengths(params: SynthParams) -> list[int]:
    key_total = round(params.key_coverage * params.n_frames)
    if key_total < params.n_key_segments:
        raise ParameterError(
            f"key_coverage {params.key_coverage} gives {key_total} key frames, "
            f"fewer than {params.n_key_segments} segments"
        )
    if key_total + params.n_key_segments - 1 > params.n_frames:
        raise ParameterError(
            f"Cannot place {params.n_key_segments} separated segments covering {key_total} "
            f"of {params.n_frames} frames"
        )
    base, extra = divmod(key_total, params.n_key_segments)
    return [base + 1 if i < extra else base for i in range(params.n_key_segments)]


def _place_segments(
    lengths: list[int], frame_count: int, rng: np.random.Generator
) -> list[tuple[int, int]]:
    """
    Uniformly random non-overlapping placement with at least one free frame between segments
    (stars and bars over the free frames). Returns (first frame, end frame exclusive) pairs.
    """
    segment_count = len(lengths)
    free = frame_count - sum(lengths) - (segment_count - 1)
    bars = np.sort(rng.choice(free + segment_count, size=segment_count, replace=False))
    gaps = np.diff(np.concatenate(([-1], bars))) - 1

    segments = []
    position = 0
    for gap, length in zip(gaps, rng.permutation(lengths)):
        position += int(gap)
        segments.append((position, position + int(length)))
        position += int(length) + 1
    return segments


def _jittered_moment(
    start_s: float, end_s: float, params: SynthParams, duration_s: float, rng: np.random.Generator
) -> Moment:
    jitter = params.boundary_jitter_s
    start = float(np.clip(start_s + rng.uniform(-jitter, jitter), 0.0, duration_s))
    end = float(np.clip(end_s + rng.uniform(-jitter, jitter), 0.0, duration_s))
    if end <= start:
        # Keep a one-frame moment around the jittered start
        frame_s = 1.0 / params.fps
        start = min(start, duration_s - frame_s)
        end = start + frame_s
    relevance = max(0.0, 1.0 + rng.normal(0.0, params.relevance_noise_sd))
    return Moment(start_s=start, end_s=end, relevance=relevance)


def _generate(params: SynthParams, rng: np.random.Generator) -> SynthCase:
    grid = FrameGrid.uniform(params.n_frames, params.fps)
    lengths = _segment_lengths(params)
    segments = _place_segments(lengths, params.n_frames, rng)

    mask = np.zeros(params.n_frames, dtype=bool)
    key_segments = []
    for first, end in segments:
        mask[first:end] = True
        key_segments.append((first / params.fps, end / params.fps))

    moments = [
        _jittered_moment(start_s, end_s, params, grid.duration_s, rng)
        for start_s, end_s in key_segments
    ]
    for _ in range(params.distractor_moments):
        start_s, end_s = key_segments[int(rng.integers(len(key_segments)))]
        length_s = end_s - start_s
        start = float(rng.uniform(0.0, grid.duration_s - length_s))
        moments.append(
            Moment(
                start_s=start,
                end_s=start + length_s,
                relevance=abs(float(rng.normal(0.0, params.relevance_noise_sd))),
            )
        )

    return SynthCase(
        grid=grid,
        key_frame_mask=mask,
        key_segments=key_segments,
        moments=sorted(moments, key=lambda moment: moment.start_s),
    )


def gen_case(params: SynthParams) -> SynthCase:
    """Generate one synthetic case from `params.seed`."""
    return _generate(params, np.random.default_rng(params.seed))


# endregion


# region Recall Sweep


def keyframe_recall(selected: Sequence[int], key_frame_mask: Sequence[bool] | np.ndarray) -> float:
    """Selected key frames over min(selected count, key frame count)."""
    mask = np.asarray(key_frame_mask, dtype=bool)
    hits = int(mask[np.asarray(selected, dtype=np.int64)].sum()) if len(selected) else 0
    return hits / max(1, min(len(selected), int(mask.sum())))


def synthetic_sampling_config(n_frames: int, frame_count: int) -> SamplingConfig:
    """One cluster per frame, narrow smoothing and a stronger uniformity channel."""
    return SamplingConfig(
        n_frames=n_frames,
        w_relevance=1.0,
        w_quality=0.3,
        w_uniformity=0.6,
        sigma_s=1.0,
        k_clusters=frame_count,
        enforce_clusters=True,
    )


def build_synthetic_timeline(case: SynthCase, config: SamplingConfig) -> FrameTimeline:
    """Timeline without images: quality fixed to 1, clusters from timestamps only."""
    grid = case.grid
    k_clusters = min(config.resolve_k_clusters(grid.frame_count), grid.frame_count)
    return FrameTimeline(
        grid=grid,
        relevance=compute_relevance(case.moments, grid, config.sigma_s),
        quality=np.ones(grid.frame_count),
        cluster_id=kmeans_cluster(grid.timestamps_s[:, None], k_clusters, config.seed),
    )


def _run_trial(params: PipelineParams, trial: int) -> dict[tuple[int, Strategy], float]:
    case = _generate(params.synth, np.random.default_rng([params.synth.seed, trial]))
    frame_count = case.grid.frame_count
    base_config = params.sampling or synthetic_sampling_config(max(params.budgets), frame_count)
    timeline = build_synthetic_timeline(case, base_config)

    recalls = {}
    for budget in params.budgets:
        config = base_config.model_copy(update={"n_frames": budget})
        moment_order = greedy_select(timeline, config).order
        recalls[(budget, Strategy.MOMENT)] = keyframe_recall(moment_order, case.key_frame_mask)
        uniform_order = uniform_select(frame_count, budget)
        recalls[(budget, Strategy.UNIFORM)] = keyframe_recall(uniform_order, case.key_frame_mask)
    return recalls


def run_sweep(params: PipelineParams) -> list[SweepRow]:
    """Mean and population standard deviation of key-frame recall per (budget, strategy)."""
    for budget in params.budgets:
        if budget < 1 or budget > params.synth.n_frames:
            raise ParameterError(
                f"Budget {budget} must be between 1 and the frame count ({params.synth.n_frames})"
            )
    if params.trials < 1:
        raise ParameterError(f"trials must be at least 1, got {params.trials}")

    with (
        Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            BarColumn(style="yellow1", pulse_style="white"),
            TimeElapsedColumn(),
        ) as progress,
        ThreadPoolExecutor(max_workers=params.max_workers) as executor,
    ):
        task = progress.add_task("[yellow]Running synthetic trials...", total=params.trials)
        trial_recalls = []
        # map keeps trial order, so parallel and serial runs agree
        for recalls in executor.map(lambda trial: _run_trial(params, trial), range(params.trials)):
            trial_recalls.append(recalls)
            progress.advance(task)
        progress.update(task, description="[green]Synthetic trials done.")

    rows = []
    for budget in params.budgets:
        for strategy in (Strategy.MOMENT, Strategy.UNIFORM):
            values = np.array([recalls[(budget, strategy)] for recalls in trial_recalls])
            rows.append(
                SweepRow(
                    budget=budget,
                    strategy=strategy,
                    mean_recall=float(values.mean()),
                    stddev=float(values.std()),
                    trials=params.trials,
                )
            )
    logger.debug("Sweep finished: %d rows", len(rows))
    return rows


# endregion
