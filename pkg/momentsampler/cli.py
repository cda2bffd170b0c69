import argparse
from collections import Counter
from collections.abc import Sequence

from momentsampler import __version__
from momentsampler.commands.answer_evaluator import EvaluateCommandHandler
from momentsampler.commands.frame_sampler import SampleCommandHandler
from momentsampler.commands.synthetic_benchmark import SynthCommandHandler
from momentsampler.commands.visual_reliance import RelianceCommandHandler
from momentsampler.models import ICommandHandler
from momentsampler.utils import ArgumentHelpFormatter, configure_logging, handle_errors

CLI_VERSION = __version__

# Registered subcommands, in the order they appear in --help
COMMANDS: list[ICommandHandler] = [
    SampleCommandHandler(),
    EvaluateCommandHandler(),
    SynthCommandHandler(),
    RelianceCommandHandler(),
]


def _check_commands():
    """
    Fail fast when two handlers register the same command name.
    """

    counts = Counter(command.name for command in COMMANDS)
    duplicates = sorted(name for name, count in counts.items() if count > 1)
    if duplicates:
        raise ValueError(
            f"Duplicate command name(s): {', '.join(duplicates)}. Command names must be unique."
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="momentsampler",
        description="Moment Sampler CLI - query-focused frame selection and VideoQA evaluation",
        formatter_class=ArgumentHelpFormatter,
    )
    parser.add_argument(
        "-v",
        "--version",
        action="version",
        version=f"v{CLI_VERSION}",
        help="Show current version of the CLI",
    )
    parser.add_argument(
        "--verbose",
        action="store_true",
        help="Show debug logs and full tracebacks on errors",
    )
    subparsers = parser.add_subparsers(title="Commands", dest="command")

    for command in COMMANDS:
        command_parser = subparsers.add_parser(
            command.name, help=command.description, formatter_class=ArgumentHelpFormatter
        )
        command.configure_args(command_parser)
        command_parser.set_defaults(func=command.run)

    return parser


def main(argv: Sequence[str] | None = None):
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)

    @handle_errors(debug=args.verbose)
    def dispatch():
        _check_commands()
        if hasattr(args, "func"):
            args.func(args)
        else:
            parser.print_help()

    dispatch()


if __name__ == "__main__":
    main()
