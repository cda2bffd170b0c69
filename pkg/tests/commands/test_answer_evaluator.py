import json
import logging

import pytest

from momentsampler import artifacts
from momentsampler.cli import main


def _evaluate(qa_dir, out, *extra: str) -> None:
    main(["evaluate", "--dataset", str(qa_dir / "dataset.jsonl"), "--out", str(out), *extra])


def _replay(qa_dir, name: str) -> list[str]:
    return ["--backend", "replay", "--replay", str(qa_dir / name)]


def test_evaluate_with_video_replay(qa_dir, selections_dir, tmp_path):
    out = tmp_path / "out"
    _evaluate(qa_dir, out, "--selections", str(selections_dir), *_replay(qa_dir, "replay_correct.jsonl"))

    report = artifacts.load_report(out / "report.json")
    assert (report.total, report.correct, report.accuracy) == (10, 10, 1.0)
    meta, records = artifacts.load_results(out / "results.jsonl")
    assert meta["mode"] == "with_video"
    assert meta["backend"] == "replay"
    assert meta["prompt_template_version"] == "v1"
    assert [record.item_id for record in records] == [f"q{i}" for i in range(10)]


def test_evaluate_per_category_tally(qa_dir, selections_dir, tmp_path):
    out = tmp_path / "out"
    _evaluate(qa_dir, out, "--selections", str(selections_dir), *_replay(qa_dir, "replay_mixed.jsonl"))

    report = artifacts.load_report(out / "report.json")
    assert (report.total, report.correct, report.failed) == (10, 5, 0)
    assert {category: (c.correct, c.total) for category, c in report.per_category.items()} == {
        "Cau.": (2, 3),
        "Des.": (1, 3),
        "Tem.": (2, 4),
    }


def test_evaluate_without_video_needs_no_selections(qa_dir, tmp_path):
    out = tmp_path / "out"
    _evaluate(qa_dir, out, "--mode", "no_video", *_replay(qa_dir, "replay_mixed.jsonl"))
    meta, records = artifacts.load_results(out / "results.jsonl")
    assert meta["mode"] == "no_video"
    assert meta["n_frames"] == 0
    assert sum(record.correct for record in records) == 5


def test_evaluate_is_reproducible(qa_dir, selections_dir, tmp_path):
    outputs = []
    for name in ("first", "second"):
        out = tmp_path / name
        _evaluate(
            qa_dir, out, "--selections", str(selections_dir), *_replay(qa_dir, "replay_mixed.jsonl")
        )
        outputs.append((out / "results.jsonl").read_bytes())
    assert outputs[0] == outputs[1]


def test_evaluate_skips_items_without_selection(qa_dir, selections_dir, tmp_path, caplog):
    (selections_dir / "q9.json").unlink()
    out = tmp_path / "out"
    with caplog.at_level(logging.WARNING, logger="momentsampler"):
        _evaluate(
            qa_dir, out, "--selections", str(selections_dir), *_replay(qa_dir, "replay_correct.jsonl")
        )
    assert "Skipping 1 item(s) without a selection: q9" in caplog.text
    assert json.loads((out / "report.json").read_text(encoding="utf8"))["total"] == 9


def test_evaluate_records_replay_misses_as_failures(qa_dir, selections_dir, tmp_path):
    replay_file = qa_dir / "replay_partial.jsonl"
    replay_file.write_text('{"item_id": "q0", "raw_answer": "A"}\n', encoding="utf8")
    out = tmp_path / "out"
    _evaluate(qa_dir, out, "--selections", str(selections_dir), "--backend", "replay", "--replay", str(replay_file))
    report = artifacts.load_report(out / "report.json")
    assert (report.total, report.correct, report.failed) == (10, 1, 9)


def test_evaluate_requires_selections_in_video_mode(qa_dir, tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        _evaluate(qa_dir, tmp_path / "out", *_replay(qa_dir, "replay_correct.jsonl"))
    assert e.value.code == 1
    assert "--selections" in capsys.readouterr().out


def test_evaluate_with_subtitles_requires_subtitles(qa_dir, selections_dir, tmp_path):
    # Odd items have no subtitles, so they fail; even items are answered
    out = tmp_path / "out"
    _evaluate(
        qa_dir,
        out,
        "--selections",
        str(selections_dir),
        "--mode",
        "with_subtitles",
        *_replay(qa_dir, "replay_correct.jsonl"),
    )
    report = artifacts.load_report(out / "report.json")
    assert (report.correct, report.failed) == (5, 5)
