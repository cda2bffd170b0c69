import argparse

import pytest
from pydantic import BaseModel, Field

from momentsampler.errors import MomentIngestionError
from momentsampler.utils import (
    EXIT_CANCELLED,
    EXIT_FAILURE,
    FilePath,
    deep_merge,
    format_duration,
    get_env,
    handle_errors,
    is_url,
    parse_number_list,
    resolve_path,
)


# region Helper Functions


@pytest.mark.parametrize(
    "duration, include_milliseconds, expected",
    [
        (0, False, "00:00:00"),
        (3725.5, False, "01:02:05"),
        (3725.5, True, "01:02:05.500"),
        (59.9996, True, "00:00:59.999"),
    ],
)
def test_format_duration(duration, include_milliseconds, expected):
    assert format_duration(duration, include_milliseconds) == expected


def test_format_duration_rejects_negative_values():
    with pytest.raises(ValueError):
        format_duration(-1)


def test_parse_number_list():
    assert parse_number_list("1,0.3, 0.3") == [1.0, 0.3, 0.3]
    assert parse_number_list("4,8,16", int) == [4, 8, 16]
    with pytest.raises(argparse.ArgumentTypeError, match="Invalid number list"):
        parse_number_list("4,eight", int)
    with pytest.raises(argparse.ArgumentTypeError):
        parse_number_list(" , ")


def test_resolve_path(tmp_path):
    assert resolve_path("frames/0.pgm", tmp_path) == (tmp_path / "frames" / "0.pgm").resolve()
    absolute = tmp_path / "elsewhere.pgm"
    assert resolve_path(absolute, "/unused") == absolute


def test_deep_merge_keeps_inputs_untouched():
    base = {"sampling": {"n_frames": 4, "sigma_s": 1.0}, "out": "a"}
    overrides = {"sampling": {"n_frames": 6}, "strategy": "uniform"}
    merged = deep_merge(base, overrides)
    assert merged == {
        "sampling": {"n_frames": 6, "sigma_s": 1.0},
        "out": "a",
        "strategy": "uniform",
    }
    assert base["sampling"]["n_frames"] == 4


def test_get_env(monkeypatch):
    monkeypatch.setenv("MOMENTSAMPLER_TEST_VALUE", "42")
    assert get_env("MOMENTSAMPLER_TEST_VALUE") == "42"
    monkeypatch.delenv("MOMENTSAMPLER_TEST_VALUE")
    assert get_env("MOMENTSAMPLER_TEST_VALUE", "default") == "default"


def test_is_url():
    assert is_url("https://api.example.com/v1")
    assert not is_url("api.example.com")


# endregion


# region File Paths


def test_file_path(tmp_path):
    path = tmp_path / "moments.json"
    file_path = FilePath(path)
    assert file_path.full_path == path.resolve()
    assert file_path.base_name == "moments"
    assert not file_path.file_exists()
    path.write_text("{}", encoding="utf8")
    assert file_path.file_exists()
    assert str(file_path) == str(path.resolve())


# endregion


# region Error Handling


class _Params(BaseModel):
    n_frames: int = Field(ge=1)


@pytest.mark.parametrize(
    "error, code",
    [
        (ValueError("bad value"), EXIT_FAILURE),
        (KeyboardInterrupt(), EXIT_CANCELLED),
    ],
)
def test_handle_errors_exit_codes(error, code):
    @handle_errors
    def failing():
        raise error

    with pytest.raises(SystemExit) as e:
        failing()
    assert e.value.code == code


def test_handle_errors_formats_validation_errors(capsys):
    @handle_errors
    def validate():
        _Params(n_frames=0)

    with pytest.raises(SystemExit):
        validate()
    assert "(field: n_frames)" in capsys.readouterr().out


def test_handle_errors_reraises_in_debug_mode():
    @handle_errors(debug=True)
    def failing():
        raise RuntimeError("boom")

    with pytest.raises(RuntimeError, match="boom"):
        failing()


def test_handle_errors_returns_values():
    @handle_errors
    def succeeding(value):
        return value * 2

    assert succeeding(21) == 42


def test_handle_errors_labels_package_errors(capsys):
    @handle_errors
    def failing():
        raise MomentIngestionError("degenerate moment at index 3", 3)

    with pytest.raises(SystemExit):
        failing()
    assert "Moment Ingestion Error: degenerate moment at index 3" in capsys.readouterr().out


# endregion
