import json
from pathlib import Path
from typing import Self

from pydantic import BaseModel, ConfigDict, computed_field, model_validator
from rich import print as rprint
from rich.table import Table

from momentsampler import artifacts
from momentsampler.models import ICommandHandler, VisualRelianceReport
from momentsampler.pipelines.qa_harness import aggregate, visual_reliance
from momentsampler.utils import FilePath

RELIANCE_FILE_NAME = "reliance.json"


# region Parameters


class _CommandParams(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    dataset: str
    with_video_results: str
    no_video_results: str
    out: str = "out"

    @computed_field
    @property
    def output_file(self) -> Path:
        return Path(self.out).resolve() / RELIANCE_FILE_NAME

    @model_validator(mode="after")
    def _validate_files(self) -> Self:
        for path in (self.dataset, self.with_video_results, self.no_video_results):
            if not FilePath(path).file_exists():
                raise FileNotFoundError(f"File not found: '{FilePath(path)}'")
        self.output_file.parent.mkdir(parents=True, exist_ok=True)
        return self


# endregion


# region Command


class _RelianceCommand:
    """Measure how much accuracy depends on the video (with-video vs. no-video answers)."""

    def __init__(self, params: _CommandParams):
        self.params = params

    def execute(self) -> VisualRelianceReport:
        items = artifacts.load_qa_dataset(self.params.dataset)
        _, with_video_records = artifacts.load_results(self.params.with_video_results)
        _, no_video_records = artifacts.load_results(self.params.no_video_results)

        report = visual_reliance(
            aggregate(with_video_records, items), aggregate(no_video_records, items)
        )
        with open(self.params.output_file, "w", encoding="utf8") as fp:
            json.dump(report.model_dump(mode="json"), fp, indent=2)

        table = Table(title="Visual reliance")
        table.add_column("Category")
        table.add_column("With video", justify="right")
        table.add_column("No video", justify="right")
        table.add_column("Drop", justify="right")
        for category, drop in [*report.per_category.items(), ("Overall", report.overall)]:
            table.add_row(
                category,
                f"{drop.with_video:.2%}",
                f"{drop.no_video:.2%}",
                f"{drop.absolute_drop:+.2%}",
            )
        rprint(table)
        return report


# endregion


# region Handler


class RelianceCommandHandler(ICommandHandler):
    def __init__(self):
        self.name = "reliance"
        self.description = "Compare with-video and no-video results of the same dataset."

    def configure_args(self, parser):
        parser.add_argument(
            "--dataset", required=True, type=str, help="QA dataset (JSON Lines)."
        )
        parser.add_argument(
            "--with-video",
            required=True,
            type=str,
            help="Results file of a with_video (or with_subtitles) evaluation.",
        )
        parser.add_argument(
            "--no-video", required=True, type=str, help="Results file of a no_video evaluation."
        )
        parser.add_argument(
            "--out", required=False, default="out", type=str, help="Output directory."
        )

    def run(self, args) -> None:
        command_params = _CommandParams(
            dataset=args.dataset,
            with_video_results=args.with_video,
            no_video_results=args.no_video,
            out=args.out,
        )
        _RelianceCommand(command_params).execute()

        rprint(f"[bold green]Report saved to '{command_params.output_file}'[/bold green]")


# endregion
