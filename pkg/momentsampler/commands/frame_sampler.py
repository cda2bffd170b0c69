from pathlib import Path
from typing import Self

from pydantic import BaseModel, ConfigDict, computed_field, model_validator
from rich import print as rprint
from rich.table import Table

from momentsampler import __version__, artifacts
from momentsampler.commands.options import (
    add_config_arguments,
    add_sampling_arguments,
    run_overrides,
    sampling_overrides,
)
from momentsampler.models import ICommandHandler, RunConfig, SelectionFile
from momentsampler.pipelines import moment_sampling
from momentsampler.utils import FilePath, format_duration


# region Parameters


class _CommandParams(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: RunConfig

    @computed_field
    @property
    def output_directory(self) -> Path:
        return Path(self.config.out).resolve()

    @computed_field
    @property
    def manifest_file_path(self) -> FilePath:
        return FilePath(self.config.manifest)

    @computed_field
    @property
    def moments_file_path(self) -> FilePath:
        return FilePath(self.config.moments)

    @model_validator(mode="before")
    @classmethod
    def _validate_inputs(cls, data):
        config = data.get("config") if isinstance(data, dict) else None
        if isinstance(config, RunConfig):
            if not config.manifest:
                raise ValueError("A frame manifest is required (--manifest).")
            if not config.moments:
                raise ValueError("A moments file is required (--moments).")
        return data

    @model_validator(mode="after")
    def _create_output_directory(self) -> Self:
        if self.output_directory.exists() and not self.output_directory.is_dir():
            raise ValueError(f"Output path is not a directory: '{self.output_directory}'")
        self.output_directory.mkdir(parents=True, exist_ok=True)
        return self


# endregion


# region Command


class _SampleCommand:
    """Select frames for one (video, question) pair and write the selection and diagnostics."""

    def __init__(self, params: _CommandParams):
        self.params = params

    def execute(self) -> list[Path]:
        config = self.params.config
        result = moment_sampling.run(
            moment_sampling.PipelineParams(
                manifest_file=config.manifest,
                moments_file=config.moments,
                features_file=config.features,
                sampling=config.sampling,
                strategy=config.strategy,
                max_workers=config.max_workers,
            )
        )
        manifest = result.manifest
        question_id = (
            config.question_id or result.moments.question_id or self.params.moments_file_path.base_name
        )

        output_directory = self.params.output_directory
        selection_file = artifacts.selection_path(output_directory, question_id)
        diagnostics_file = output_directory / f"{question_id}.diagnostics.csv"
        chart_file = output_directory / f"{question_id}.svg"

        selection = SelectionFile(
            video_id=manifest.video_id,
            question_id=question_id,
            strategy=config.strategy,
            order=result.selection.order,
            per_step=result.selection.per_step,
            config=config.sampling.model_dump(mode="json"),
            frames=[manifest.frames[index] for index in result.selection.chronological],
            meta={
                "version": __version__,
                "manifest": str(self.params.manifest_file_path),
                "moments": str(self.params.moments_file_path),
                "features": str(FilePath(config.features)) if config.features else None,
                "frame_count": result.timeline.frame_count,
                "k_clusters": result.timeline.cluster_count,
            },
        )
        artifacts.write_selection(selection_file, selection)
        artifacts.write_diagnostics_csv(result.diagnostics, diagnostics_file)
        artifacts.render_score_chart_svg(result.diagnostics, chart_file)
        written = [selection_file, diagnostics_file, chart_file]

        if config.collage:
            collage_file = output_directory / f"{question_id}.collage.jpg"
            artifacts.render_collage([frame.image_path for frame in selection.frames], collage_file)
            written.append(collage_file)

        self._print_selection(selection)
        return written

    @staticmethod
    def _print_selection(selection: SelectionFile) -> None:
        table = Table(title=f"Selected frames ({selection.strategy})")
        table.add_column("Order", justify="right")
        table.add_column("Frame", justify="right")
        table.add_column("Time")
        table.add_column("Relevance", justify="right")
        table.add_column("Quality", justify="right")
        table.add_column("Uniformity", justify="right")
        timestamps = {frame.index: frame.timestamp_s for frame in selection.frames}
        for order, step in enumerate(selection.per_step):
            table.add_row(
                str(order),
                str(step.frame),
                format_duration(timestamps[step.frame], include_milliseconds=True),
                f"{step.relevance:.3f}",
                f"{step.quality:.3f}",
                f"{step.uniformity:.3f}",
            )
        rprint(table)


# endregion


# region Handler


class SampleCommandHandler(ICommandHandler):
    def __init__(self):
        self.name = "sample"
        self.description = "Select query-relevant frames of a video from moment predictions."

    def configure_args(self, parser):
        add_config_arguments(parser)
        parser.add_argument(
            "--manifest",
            required=False,
            default=None,
            type=str,
            help="Frame manifest (JSON) listing the extracted frames of the video.",
        )
        parser.add_argument(
            "--moments",
            required=False,
            default=None,
            type=str,
            help="Moment retrieval predictions (JSON) for the question.",
        )
        parser.add_argument(
            "--features",
            required=False,
            default=None,
            type=str,
            help="Optional per-frame features (CSV: frame_index,f0,...). If not provided, downscaled frames are clustered.",
        )
        parser.add_argument(
            "--question-id",
            required=False,
            default=None,
            type=str,
            help="Name of the selection. Defaults to the moments file's question_id or its file name.",
        )
        parser.add_argument(
            "--collage",
            action="store_true",
            default=None,
            help="Also save a collage of the selected frames.",
        )
        add_sampling_arguments(parser)

    def run(self, args) -> None:
        overrides = run_overrides(
            args,
            manifest=args.manifest,
            moments=args.moments,
            features=args.features,
            question_id=args.question_id,
            strategy=args.strategy,
            collage=args.collage,
            sampling=sampling_overrides(args),
        )
        command_params = _CommandParams(config=RunConfig.load(args.config, overrides))
        written = _SampleCommand(command_params).execute()

        rprint(f"[bold green]Selection saved to '{written[0]}'[/bold green]")
        for path in written[1:]:
            rprint(f"[green]Saved '{path}'[/green]")


# endregion
