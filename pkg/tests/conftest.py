import json
from pathlib import Path

import numpy as np
from PIL import Image
import pytest
import rich

from momentsampler.models import (
    FrameEntry,
    FrameGrid,
    FrameTimeline,
    QAItem,
    RelevanceSignal,
    SelectionFile,
    SignalStage,
    StepSnapshot,
)

VIDEO_ID = "vid1"
FRAME_COUNT = 24


# region Helpers


@pytest.fixture(autouse=True)
def wide_console():
    """Keep error messages printed by the CLI on one line."""
    rich.reconfigure(width=240)


def write_image(path: Path, pixels: np.ndarray) -> Path:
    """Save a uint8 array as PGM (2D) or PPM (3D) depending on its shape."""
    Image.fromarray(np.asarray(pixels, dtype=np.uint8)).save(path)
    return path


def make_timeline(
    relevance, quality=None, cluster_id=None, timestamps=None, duration_s=None
) -> FrameTimeline:
    relevance = np.asarray(relevance, dtype=np.float64)
    n = relevance.size
    timestamps = np.arange(n, dtype=np.float64) if timestamps is None else np.asarray(timestamps)
    return FrameTimeline(
        grid=FrameGrid(
            timestamps_s=timestamps,
            duration_s=float(timestamps[-1]) if duration_s is None else duration_s,
        ),
        relevance=RelevanceSignal(values=relevance, stage=SignalStage.NORMALIZED),
        quality=np.ones(n) if quality is None else quality,
        cluster_id=np.arange(n) if cluster_id is None else cluster_id,
    )


def write_json_lines(path: Path, rows: list[dict]) -> Path:
    with open(path, "w", encoding="utf8") as fp:
        for row in rows:
            fp.write(json.dumps(row) + "\n")
    return path


# endregion


# region Video Fixtures


def _frame_pixels(index: int, rng: np.random.Generator) -> np.ndarray:
    # Four looks (scene changes every 6 frames); every fifth frame is blurred flat
    brightness = 40 + 50 * (index // 6)
    if index % 5 == 4:
        return np.full((32, 32), brightness, dtype=np.uint8)
    block = 2 + (index // 6)
    yy, xx = np.mgrid[0:32, 0:32]
    checker = ((yy // block + xx // block) % 2) * 60
    noise = rng.integers(0, 20, size=(32, 32))
    return (brightness + checker + noise).clip(0, 255).astype(np.uint8)


@pytest.fixture
def video_dir(tmp_path: Path) -> Path:
    """24 one-second frames (PGM, plus PPM for odd indices), a manifest and a moments file."""
    rng = np.random.default_rng(0)
    video_directory = tmp_path / "video"
    frames_directory = video_directory / "frames"
    frames_directory.mkdir(parents=True)

    frames = []
    for index in range(FRAME_COUNT):
        pixels = _frame_pixels(index, rng)
        if index % 2:
            name = f"{index:03d}.ppm"
            write_image(frames_directory / name, np.stack([pixels] * 3, axis=2))
        else:
            name = f"{index:03d}.pgm"
            write_image(frames_directory / name, pixels)
        frames.append({"index": index, "timestamp_s": float(index), "image_path": f"frames/{name}"})

    manifest = {"video_id": VIDEO_ID, "duration_s": float(FRAME_COUNT), "frames": frames}
    (video_directory / "manifest.json").write_text(json.dumps(manifest), encoding="utf8")

    moments = {
        "video_id": VIDEO_ID,
        "query": "when does the dog appear?",
        "question_id": "q1",
        "moments": [
            {"start_s": 6.0, "end_s": 10.0, "relevance": 0.9},
            {"start_s": 15.0, "end_s": 18.0, "relevance": 0.5},
        ],
    }
    (video_directory / "moments.json").write_text(json.dumps(moments), encoding="utf8")
    return video_directory


# endregion


# region QA Fixtures


# (category, answer index, replayed answer)
QA_FIXTURE = [
    ("Tem.", 0, "A"),
    ("Tem.", 1, "The answer is B."),
    ("Tem.", 2, "D"),
    ("Tem.", 3, "a"),
    ("Cau.", 4, "E"),
    ("Cau.", 0, "C"),
    ("Cau.", 1, "(B)"),
    ("Des.", 2, "C"),
    ("Des.", 3, "B"),
    ("Des.", 4, "A"),
]
"""Five correct answers: Tem. 2/4, Cau. 2/3, Des. 1/3."""


def qa_items() -> list[QAItem]:
    return [
        QAItem(
            item_id=f"q{position}",
            video_id=VIDEO_ID,
            question=f"Question number {position}?",
            options=[f"option {letter} of {position}" for letter in "abcde"],
            answer_index=answer_index,
            category=category,
            subtitles=f"Subtitles of {position}" if position % 2 == 0 else None,
        )
        for position, (category, answer_index, _) in enumerate(QA_FIXTURE)
    ]


@pytest.fixture
def qa_dir(tmp_path: Path) -> Path:
    """Dataset, mixed replay (5/10 correct) and all-correct replay for QA_FIXTURE."""
    directory = tmp_path / "qa"
    directory.mkdir()
    items = qa_items()
    write_json_lines(directory / "dataset.jsonl", [item.model_dump() for item in items])
    write_json_lines(
        directory / "replay_mixed.jsonl",
        [
            {"item_id": item.item_id, "raw_answer": raw}
            for item, (_, _, raw) in zip(items, QA_FIXTURE)
        ],
    )
    write_json_lines(
        directory / "replay_correct.jsonl",
        [{"item_id": item.item_id, "raw_answer": item.answer_letter} for item in items],
    )
    return directory


@pytest.fixture
def selections_dir(tmp_path: Path, video_dir: Path) -> Path:
    """One three-frame selection per QA_FIXTURE item."""
    directory = tmp_path / "selections"
    directory.mkdir()
    frames_directory = video_dir / "frames"
    for item in qa_items():
        order = [8, 2, 16]
        frames = [
            FrameEntry(
                index=index,
                timestamp_s=float(index),
                image_path=str(frames_directory / f"{index:03d}.pgm"),
            )
            for index in sorted(order)
        ]
        selection = SelectionFile(
            video_id=VIDEO_ID,
            question_id=item.item_id,
            order=order,
            per_step=[
                StepSnapshot(frame=frame, relevance=1.0, quality=1.0, uniformity=0.0, combined=1.0)
                for frame in order
            ],
            frames=frames,
        )
        (directory / f"{item.item_id}.json").write_text(
            selection.model_dump_json(), encoding="utf8"
        )
    return directory


# endregion
