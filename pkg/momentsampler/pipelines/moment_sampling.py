import logging
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn, TimeElapsedColumn

from momentsampler import artifacts
from momentsampler.models import (
    DiagnosticsRow,
    DiagnosticsTable,
    FrameManifest,
    FrameTimeline,
    MomentsFile,
    SamplingConfig,
    SelectionResult,
    Strategy,
)
from momentsampler.pipelines.frame_metrics import compute_frame_metrics, kmeans_cluster
from momentsampler.pipelines.greedy_sampler import (
    check_cluster_budget,
    final_uniformity,
    select_frames,
)
from momentsampler.pipelines.relevance import compute_relevance

logger = logging.getLogger(__name__)


class PipelineParams(BaseModel):
    manifest_file: str
    moments_file: str
    features_file: str | None = None
    """Precomputed features CSV. When omitted, 8x8 pooled frames are clustered."""

    sampling: SamplingConfig = SamplingConfig()
    strategy: Strategy = Strategy.MOMENT
    max_workers: int | None = None


class PipelineResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    manifest: FrameManifest
    moments: MomentsFile
    timeline: FrameTimeline
    selection: SelectionResult
    diagnostics: DiagnosticsTable


def build_timeline(
    manifest: FrameManifest,
    moments: MomentsFile,
    quality: np.ndarray,
    features: np.ndarray,
    config: SamplingConfig,
) -> FrameTimeline:
    grid = manifest.grid
    return FrameTimeline(
        grid=grid,
        relevance=compute_relevance(moments.moments, grid, config.sigma_s),
        quality=quality,
        cluster_id=kmeans_cluster(features, config.resolve_k_clusters(grid.frame_count), config.seed),
    )


def build_diagnostics(timeline: FrameTimeline, selection: SelectionResult) -> DiagnosticsTable:
    uniformity = final_uniformity(timeline, selection.order)
    selected_order = {frame: position for position, frame in enumerate(selection.order)}
    return DiagnosticsTable(
        rows=[
            DiagnosticsRow(
                timestamp_s=float(timeline.grid.timestamps_s[frame]),
                relevance=float(timeline.relevance.values[frame]),
                quality=float(timeline.quality[frame]),
                uniformity=float(uniformity[frame]),
                cluster=int(timeline.cluster_id[frame]),
                selected_order=selected_order.get(frame, -1),
            )
            for frame in range(timeline.frame_count)
        ]
    )


def run(config: PipelineParams) -> PipelineResult:
    if config.strategy == Strategy.MOMENT:
        check_cluster_budget(config.sampling)

    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(style="yellow1", pulse_style="white"),
        TimeElapsedColumn(),
    ) as progress:
        task = progress.add_task("[yellow]Loading inputs...", total=None)
        manifest = artifacts.load_manifest(config.manifest_file)
        moments = artifacts.load_moments(config.moments_file)
        if moments.video_id != manifest.video_id:
            logger.warning(
                "Moments are for video '%s' but the manifest is for '%s'",
                moments.video_id,
                manifest.video_id,
            )

        progress.update(task, description="[yellow]Measuring frames...")
        metrics = compute_frame_metrics(
            manifest.image_paths, config.sampling.quality_config, max_workers=config.max_workers
        )
        features = (
            artifacts.load_features(Path(config.features_file), len(manifest.frames))
            if config.features_file
            else metrics.features
        )

        progress.update(task, description="[yellow]Selecting frames...")
        timeline = build_timeline(manifest, moments, metrics.quality, features, config.sampling)
        selection = select_frames(timeline, config.sampling, config.strategy)

        progress.update(task, description="[green]Frames selected.", completed=1, total=1)

    return PipelineResult(
        manifest=manifest,
        moments=moments,
        timeline=timeline,
        selection=selection,
        diagnostics=build_diagnostics(timeline, selection),
    )
