import logging
from pathlib import Path
from typing import Any, Self

from pydantic import BaseModel, ConfigDict, computed_field, model_validator
from rich import print as rprint
from rich.table import Table

from momentsampler import __version__, artifacts
from momentsampler.commands.options import (
    add_backend_arguments,
    add_config_arguments,
    backend_overrides,
    run_overrides,
)
from momentsampler.errors import HarnessError
from momentsampler.models import (
    AccuracyReport,
    ICommandHandler,
    PromptMode,
    QAItem,
    QueryPayload,
    RunConfig,
    SelectionFile,
)
from momentsampler.pipelines.llm_gateway import create_backend, run_batch
from momentsampler.pipelines.qa_harness import PROMPT_TEMPLATE_VERSION, aggregate, build_prompt
from momentsampler.utils import FilePath

logger = logging.getLogger(__name__)

RESULTS_FILE_NAME = "results.jsonl"
REPORT_FILE_NAME = "report.json"


# region Parameters


class _CommandParams(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: RunConfig

    @computed_field
    @property
    def dataset_file_path(self) -> FilePath:
        return FilePath(self.config.dataset)

    @computed_field
    @property
    def output_directory(self) -> Path:
        return Path(self.config.out).resolve()

    @property
    def uses_video(self) -> bool:
        return self.config.mode != PromptMode.NO_VIDEO

    @model_validator(mode="after")
    def _validate_inputs(self) -> Self:
        if not self.config.dataset:
            raise ValueError("A QA dataset is required (--dataset).")
        if self.uses_video and not self.config.selections:
            raise ValueError(
                f"A selections directory is required in '{self.config.mode}' mode (--selections)."
            )
        if self.output_directory.exists() and not self.output_directory.is_dir():
            raise ValueError(f"Output path is not a directory: '{self.output_directory}'")
        self.output_directory.mkdir(parents=True, exist_ok=True)
        return self


# endregion


# region Command


class _EvaluateCommand:
    """Ask the backend every question of a dataset and score the answers."""

    def __init__(self, params: _CommandParams):
        self.params = params
        self._selections: dict[str, SelectionFile] = {}

    def execute(self) -> tuple[Path, Path, AccuracyReport]:
        config = self.params.config
        items = artifacts.load_qa_dataset(self.params.dataset_file_path.full_path)
        artifacts.check_dataset_scale(items, config.dataset_name)

        if self.params.uses_video:
            items = self._load_selections(items)

        with create_backend(config.backend) as backend:
            records = run_batch(items, self._build_payload, backend)
        report = aggregate(records, items)

        meta = self._build_meta(len(items))
        results_file = self.params.output_directory / RESULTS_FILE_NAME
        report_file = self.params.output_directory / REPORT_FILE_NAME
        artifacts.write_results(results_file, records, meta)
        artifacts.write_report(report_file, report, meta)

        print_accuracy_report(report, title=f"Accuracy ({config.mode})")
        return results_file, report_file, report

    def _load_selections(self, items: list[QAItem]) -> list[QAItem]:
        """Keep the items that have a selection file; list and skip the others."""
        selections_directory = Path(self.params.config.selections)
        missing = []
        for item in items:
            path = artifacts.selection_path(selections_directory, item.item_id)
            if not path.is_file():
                missing.append(item.item_id)
                continue
            selection = artifacts.load_selection(path)
            if selection.video_id != item.video_id:
                logger.warning(
                    "Selection for '%s' is for video '%s', expected '%s'",
                    item.item_id,
                    selection.video_id,
                    item.video_id,
                )
            self._selections[item.item_id] = selection

        if missing:
            logger.warning(
                "Skipping %d item(s) without a selection: %s", len(missing), ", ".join(missing)
            )
        remaining = [item for item in items if item.item_id in self._selections]
        if not remaining:
            raise HarnessError(f"No item has a selection in '{selections_directory}'")
        return remaining

    def _build_payload(self, item: QAItem) -> QueryPayload:
        prompt = build_prompt(item, self.params.config.mode)
        if not self.params.uses_video:
            return QueryPayload(prompt=prompt, item_id=item.item_id)
        frames = self._selections[item.item_id].frames
        images = [artifacts.encode_frame_image(frame.image_path) for frame in frames]
        return QueryPayload(prompt=prompt, images=images, item_id=item.item_id)

    def _build_meta(self, item_count: int) -> dict[str, Any]:
        config = self.params.config
        return {
            "version": __version__,
            "dataset": str(self.params.dataset_file_path),
            "dataset_name": config.dataset_name,
            "selections": config.selections,
            "mode": config.mode.value,
            "prompt_template_version": PROMPT_TEMPLATE_VERSION,
            "backend": config.backend.kind.value,
            "model_name": config.backend.model_name,
            "n_frames": config.sampling.n_frames if self.params.uses_video else 0,
            "items": item_count,
        }


def print_accuracy_report(report: AccuracyReport, title: str = "Accuracy") -> None:
    table = Table(title=title)
    table.add_column("Category")
    table.add_column("Correct", justify="right")
    table.add_column("Total", justify="right")
    table.add_column("Accuracy", justify="right")
    for category, accuracy in report.per_category.items():
        table.add_row(
            category, str(accuracy.correct), str(accuracy.total), f"{accuracy.accuracy:.2%}"
        )
    table.add_row(
        "[bold]Overall[/bold]",
        str(report.correct),
        str(report.total),
        f"[bold]{report.accuracy:.2%}[/bold]",
    )
    rprint(table)
    if report.failed:
        rprint(f"[yellow]{report.failed} item(s) had no answer and were counted as incorrect.[/yellow]")


# endregion


# region Handler


class EvaluateCommandHandler(ICommandHandler):
    def __init__(self):
        self.name = "evaluate"
        self.description = "Answer a multiple-choice QA dataset with selected frames and score it."

    def configure_args(self, parser):
        add_config_arguments(parser)
        parser.add_argument(
            "--dataset",
            required=False,
            default=None,
            type=str,
            help="QA dataset (JSON Lines, one question per line).",
        )
        parser.add_argument(
            "--selections",
            required=False,
            default=None,
            type=str,
            help="Directory with the selection files written by 'sample' (one per question id). Not needed in no_video mode.",
        )
        parser.add_argument(
            "--dataset-name",
            required=False,
            default=None,
            type=str,
            help="Dataset name for the size sanity check (egoschema, nextqa, intentqa, cinepile).",
        )
        parser.add_argument(
            "--n-frames",
            required=False,
            default=None,
            type=int,
            help="Frame budget recorded in the results metadata.",
        )
        add_backend_arguments(parser)

    def run(self, args) -> None:
        overrides = run_overrides(
            args,
            dataset=args.dataset,
            selections=args.selections,
            dataset_name=args.dataset_name,
            mode=args.mode,
            backend=backend_overrides(args),
            sampling={"n_frames": args.n_frames} if args.n_frames is not None else {},
        )
        command_params = _CommandParams(config=RunConfig.load(args.config, overrides))
        results_file, report_file, _ = _EvaluateCommand(command_params).execute()

        rprint(f"[bold green]Results saved to '{results_file}'[/bold green]")
        rprint(f"[bold green]Report saved to '{report_file}'[/bold green]")


# endregion
