from pathlib import Path
from typing import Self

from pydantic import BaseModel, ConfigDict, computed_field, model_validator
from rich import print as rprint
from rich.table import Table

from momentsampler import artifacts
from momentsampler.commands.options import add_config_arguments, run_overrides
from momentsampler.models import ICommandHandler, RunConfig, SweepRow
from momentsampler.pipelines import synthbench
from momentsampler.utils import parse_number_list

SWEEP_FILE_NAME = "sweep.csv"


# region Parameters


class _CommandParams(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: RunConfig

    @computed_field
    @property
    def output_file(self) -> Path:
        return Path(self.config.out).resolve() / SWEEP_FILE_NAME

    @model_validator(mode="after")
    def _validate_budgets(self) -> Self:
        n_frames = self.config.synth.n_frames
        for budget in self.config.budgets:
            if budget < 1 or budget > n_frames:
                raise ValueError(f"Budget {budget} must be between 1 and n_frames ({n_frames}).")
        self.output_file.parent.mkdir(parents=True, exist_ok=True)
        return self


# endregion


# region Command


class _SynthCommand:
    """Compare moment sampling with uniform sampling on synthetic videos."""

    def __init__(self, params: _CommandParams):
        self.params = params

    def execute(self) -> list[SweepRow]:
        config = self.params.config
        rows = synthbench.run_sweep(
            synthbench.PipelineParams(
                synth=config.synth,
                budgets=config.budgets,
                trials=config.trials,
                max_workers=config.max_workers,
            )
        )
        artifacts.write_sweep_csv(rows, self.params.output_file)
        self._print_rows(rows)
        return rows

    @staticmethod
    def _print_rows(rows: list[SweepRow]) -> None:
        table = Table(title="Key-frame recall")
        table.add_column("Budget", justify="right")
        table.add_column("Strategy")
        table.add_column("Mean recall", justify="right")
        table.add_column("Std. dev.", justify="right")
        for row in rows:
            table.add_row(
                str(row.budget), row.strategy.value, f"{row.mean_recall:.4f}", f"{row.stddev:.4f}"
            )
        rprint(table)


# endregion


# region Handler


class SynthCommandHandler(ICommandHandler):
    def __init__(self):
        self.name = "synth"
        self.description = "Run the synthetic sample-efficiency benchmark (key-frame recall sweep)."

    def configure_args(self, parser):
        add_config_arguments(parser)
        parser.add_argument(
            "--budgets",
            required=False,
            default=None,
            type=lambda value: parse_number_list(value, int),
            metavar="LIST",
            help="Comma-separated frame budgets (default: 4,8,16,32).",
        )
        parser.add_argument(
            "--trials", required=False, default=None, type=int, help="Trials per budget (default: 200)."
        )
        parser.add_argument(
            "--seed", required=False, default=None, type=int, help="Master seed (default: 0)."
        )
        parser.add_argument(
            "--synth-frames",
            required=False,
            default=None,
            type=int,
            help="Frames per synthetic video (default: 180, a 3-minute video at 1 fps).",
        )
        parser.add_argument(
            "--max-workers",
            required=False,
            default=None,
            type=int,
            help="Worker threads for the trials. Results do not depend on it.",
        )

    def run(self, args) -> None:
        synth = {
            key: value
            for key, value in {"seed": args.seed, "n_frames": args.synth_frames}.items()
            if value is not None
        }
        overrides = run_overrides(
            args,
            budgets=args.budgets,
            trials=args.trials,
            max_workers=args.max_workers,
            synth=synth,
        )
        command_params = _CommandParams(config=RunConfig.load(args.config, overrides))
        _SynthCommand(command_params).execute()

        rprint(f"[bold green]Sweep saved to '{command_params.output_file}'[/bold green]")


# endregion
