import argparse
from collections.abc import Callable, Mapping
from functools import wraps
import logging
from pathlib import Path
import os
import sys
from typing import Any, ParamSpec, overload
from typing_extensions import TypeVar
import dotenv
from pydantic_core import ErrorDetails, ValidationError
from rich import print as rprint
from rich.logging import RichHandler

from momentsampler.errors import MomentSamplerError

LOGGER_NAME = "momentsampler"


# region Helper Functions


def get_env(key: str, default: str | None = None) -> str | None:
    """Read `key` from the environment, then from a `.env` file in the working directory."""
    value = os.environ.get(key)
    if value is None:
        value = dotenv.dotenv_values().get(key)
    return default if value is None else value


def is_url(value: str) -> bool:
    return value.startswith(("http://", "https://"))


def format_duration(duration: float, include_milliseconds: bool = False) -> str:
    """HH:MM:SS for a duration in seconds, optionally followed by .mmm (truncated at 999)."""
    if duration < 0:
        raise ValueError("Duration must be a positive number.")

    minutes, seconds = divmod(int(duration), 60)
    hours, minutes = divmod(minutes, 60)
    text = f"{hours:02}:{minutes:02}:{seconds:02}"
    if not include_milliseconds:
        return text
    milliseconds = min(round((duration - int(duration)) * 1000), 999)
    return f"{text}.{milliseconds:03}"


def parse_number_list(value: str, cast: Callable[[str], Any] = float) -> list:
    """
    Parse a comma-separated list of numbers (eg. '1,0.3,0.3' or '4,8,16').
    Used as an argparse `type`, so invalid values raise `argparse.ArgumentTypeError`.
    """
    items = [item for item in map(str.strip, value.split(",")) if item]
    if not items:
        raise argparse.ArgumentTypeError("Expected a comma-separated list of numbers.")
    try:
        return list(map(cast, items))
    except ValueError:
        raise argparse.ArgumentTypeError(f"Invalid number list: '{value}'") from None


def resolve_path(path: Path | str, base_directory: Path | str) -> Path:
    """Resolve a manifest-relative path. Absolute paths are returned as given."""
    path = Path(path)
    return path if path.is_absolute() else (Path(base_directory) / path).resolve()


def deep_merge(base: Mapping, overrides: Mapping) -> dict:
    """Recursively merge `overrides` into a copy of `base` (config file values under CLI values)."""
    merged = dict(base)
    for key, value in overrides.items():
        current = merged.get(key)
        if isinstance(value, Mapping) and isinstance(current, Mapping):
            value = deep_merge(current, value)
        merged[key] = value
    return merged


def configure_logging(verbose: bool = False) -> None:
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    if any(isinstance(handler, RichHandler) for handler in logger.handlers):
        return
    handler = RichHandler(show_path=False, markup=False, rich_tracebacks=True)
    handler.setFormatter(logging.Formatter("%(message)s", datefmt="[%X]"))
    logger.addHandler(handler)


# endregion


# region Decorators

EXIT_FAILURE = 1
EXIT_CANCELLED = 130


def _describe_error_details(details: ErrorDetails) -> str:
    message = details["msg"].removeprefix("Value error, ")
    field = ".".join(map(str, details["loc"]))
    return f"{message} (field: {field})" if field else message


def _format_validation_error(error: ValidationError, debug: bool) -> str:
    messages = [
        str(details) if debug else _describe_error_details(details)
        for details in error.errors(include_context=False)
    ]
    if len(messages) == 1:
        return f"[bold red]Validation Error:[/bold red] {messages[0]}"
    bullets = "\n".join(f"  - {message}" for message in messages)
    return f"[bold red]Validation Errors:[/bold red]\n{bullets}"


def _error_label(error: Exception) -> str:
    # ConfigurationError -> "Configuration Error"; the base class keeps the plain label
    if isinstance(error, MomentSamplerError) and type(error) is not MomentSamplerError:
        name = type(error).__name__.removesuffix("Error")
        words = "".join(f" {char}" if char.isupper() else char for char in name).strip()
        return f"{words} Error"
    return "Error"


P = ParamSpec("P")
R = TypeVar("R")


@overload
def handle_errors(func: Callable[P, R]) -> Callable[P, R]: ...


@overload
def handle_errors(*, debug: bool) -> Callable[[Callable[P, R]], Callable[P, R]]: ...


def handle_errors(
    func: Callable[P, R] | None = None, *, debug: bool = False
) -> Callable[P, R] | Callable[[Callable[P, R]], Callable[P, R]]:
    """
    Print errors raised by the wrapped function and exit with `EXIT_FAILURE`
    (`EXIT_CANCELLED` on Ctrl+C). With `debug=True` the error is re-raised after printing.

    Usage
    -----
    @handle_errors
    def run(): ...

    @handle_errors(debug=args.verbose)
    def run(): ...
    """

    def decorator(wrapped: Callable[P, R]) -> Callable[P, R]:
        @wraps(wrapped)
        def wrapper(*args: P.args, **kwargs: P.kwargs) -> R:
            try:
                return wrapped(*args, **kwargs)
            except KeyboardInterrupt:
                rprint("[bold red]Operation cancelled by the user.[/bold red]")
                sys.exit(EXIT_CANCELLED)
            except ValidationError as e:
                rprint(_format_validation_error(e, debug))
                if debug:
                    raise
                sys.exit(EXIT_FAILURE)
            except Exception as e:
                rprint(f"[bold red]{_error_label(e)}:[/bold red] {e}")
                if debug:
                    raise
                sys.exit(EXIT_FAILURE)

        return wrapper

    if func is None:
        return decorator
    if not callable(func):
        raise TypeError("handle_errors expects a function. Pass options as keyword arguments.")
    return decorator(func)


# endregion


# region Helper Classes


class FilePath:
    """Absolute path to an input file, as shown in messages and selection metadata."""

    def __init__(self, path: Path | str):
        self._path = Path(path).resolve()

    @property
    def full_path(self) -> Path:
        return self._path

    @property
    def base_name(self) -> str:
        """File name without the extension."""
        return self._path.stem

    def file_exists(self) -> bool:
        return self._path.is_file()

    def __str__(self) -> str:
        return str(self._path)


class ArgumentHelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    """Appends "(default: ...)" to option help, except for unset and False defaults."""

    def _get_help_string(self, action: argparse.Action) -> str:
        help_text = action.help or ""
        default = action.default
        if default is None or default is False or default is argparse.SUPPRESS:
            return help_text
        if "%(default)" in help_text:
            return help_text
        if default == "":
            return f'{help_text} (default: "")'
        if action.option_strings or action.nargs in (argparse.OPTIONAL, argparse.ZERO_OR_MORE):
            return f"{help_text} (default: %(default)s)"
        return help_text


# endregion
