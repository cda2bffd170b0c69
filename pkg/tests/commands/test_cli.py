import pytest

from momentsampler import __version__
from momentsampler.cli import COMMANDS, build_parser, main


def test_command_names_are_unique():
    names = [command.name for command in COMMANDS]
    assert sorted(names) == ["evaluate", "reliance", "sample", "synth"]


def test_version(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--version"])
    assert e.value.code == 0
    assert f"v{__version__}" in capsys.readouterr().out


def test_no_command_prints_help(capsys):
    main([])
    assert "Commands" in capsys.readouterr().out


def test_unknown_command_exits_with_usage_error():
    with pytest.raises(SystemExit) as e:
        main(["resample"])
    assert e.value.code == 2


def test_every_command_has_help():
    parser = build_parser()
    for command in COMMANDS:
        with pytest.raises(SystemExit) as e:
            parser.parse_args([command.name, "--help"])
        assert e.value.code == 0


def test_invalid_config_file(tmp_path, capsys):
    config_file = tmp_path / "config.json"
    config_file.write_text("[1, 2]", encoding="utf8")
    with pytest.raises(SystemExit) as e:
        main(["synth", "--config", str(config_file), "--out", str(tmp_path)])
    assert e.value.code == 1
    assert "expected a JSON object" in capsys.readouterr().out
