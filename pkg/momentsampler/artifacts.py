"""
On-disk formats: frame manifests, moments, features, QA datasets, selections, results,
reports, diagnostics tables, score charts, collages and sweep tables.
"""

from collections.abc import Iterable, Sequence
import io
import json
import logging
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np
from matplotlib import rc_context
from matplotlib.figure import Figure
import pandas as pd
from PIL import Image, UnidentifiedImageError
from pydantic import BaseModel, ValidationError

from momentsampler.errors import ArtifactError, MomentIngestionError
from momentsampler.models import (
    AccuracyReport,
    DiagnosticsRow,
    DiagnosticsTable,
    EvalRecord,
    FrameManifest,
    MomentsFile,
    QAItem,
    SelectionFile,
    SweepRow,
)
from momentsampler.pipelines.relevance import ingest_moments
from momentsampler.utils import resolve_path

logger = logging.getLogger(__name__)

DIAGNOSTICS_COLUMNS = [
    "timestamp_s",
    "relevance",
    "quality",
    "uniformity",
    "cluster",
    "selected_order",
]
SWEEP_COLUMNS = ["budget", "strategy", "mean_recall", "stddev", "trials"]
CSV_FLOAT_FORMAT = "%.6f"
RESULTS_META_KEY = "meta"


# region Helpers


def _describe_validation_error(e: ValidationError) -> str:
    messages = []
    for error in e.errors(include_context=False):
        field = ".".join(str(part) for part in error["loc"]) or "<root>"
        message = error["msg"].removeprefix("Value error, ")
        messages.append(f"field '{field}': {message}")
    return "; ".join(messages)


def _location(path: Path | str, line: int | None = None) -> str:
    return f"{path}:{line}" if line is not None else str(path)


def _validate(
    model: type[BaseModel], data: Any, path: Path | str, line: int | None = None
) -> Any:
    try:
        return model.model_validate(data)
    except ValidationError as e:
        raise ArtifactError(f"{_location(path, line)}: {_describe_validation_error(e)}") from e


def _records(frame: pd.DataFrame) -> list[dict[str, Any]]:
    """Rows as plain Python values (numpy scalars are not accepted as pydantic ints)."""
    return frame.astype(object).to_dict(orient="records")


def _read_json(path: Path | str) -> Any:
    try:
        with open(path, encoding="utf8") as fp:
            return json.load(fp)
    except FileNotFoundError:
        raise ArtifactError(f"File not found: '{path}'")
    except json.JSONDecodeError as e:
        raise ArtifactError(f"{_location(path, e.lineno)}: invalid JSON ({e.msg})") from e


def _read_json_lines(path: Path | str) -> Iterable[tuple[int, Any]]:
    """Yield (line number, parsed object) for every non-blank line."""
    try:
        with open(path, encoding="utf8") as fp:
            lines = fp.readlines()
    except FileNotFoundError:
        raise ArtifactError(f"File not found: '{path}'")

    for line_number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            yield line_number, json.loads(line)
        except json.JSONDecodeError as e:
            raise ArtifactError(f"{_location(path, line_number)}: invalid JSON ({e.msg})") from e


def _write_json(path: Path | str, data: Any) -> None:
    with open(path, "w", encoding="utf8") as fp:
        json.dump(data, fp, ensure_ascii=False, indent=2)
        fp.write("\n")


# endregion


# region Inputs


def load_manifest(path: Path | str) -> FrameManifest:
    """Load a frame manifest; image paths are resolved against the manifest's directory."""
    data = _read_json(path)
    manifest: FrameManifest = _validate(FrameManifest, data, path)
    base_directory = Path(path).resolve().parent
    frames = [
        frame.model_copy(update={"image_path": str(resolve_path(frame.image_path, base_directory))})
        for frame in manifest.frames
    ]
    return manifest.model_copy(update={"frames": frames})


def load_moments(path: Path | str) -> MomentsFile:
    """
    Load moment retrieval output for one (video, question) pair.

    Moments may be given as `moments` objects or as `pred_relevant_windows` triples
    ([start, end, score]); `vid` and `qid` are accepted as aliases of `video_id` and
    `question_id`.
    """
    data = _read_json(path)
    if not isinstance(data, dict):
        raise ArtifactError(f"{path}: expected a JSON object")

    video_id = data.get("video_id", data.get("vid"))
    if video_id is None:
        raise ArtifactError(f"{path}: field 'video_id': Field required")
    question_id = data.get("question_id", data.get("qid"))

    if "moments" in data:
        field, raw_moments = "moments", data["moments"]
    elif "pred_relevant_windows" in data:
        field, raw_moments = "pred_relevant_windows", data["pred_relevant_windows"]
    else:
        raise ArtifactError(f"{path}: field 'moments': Field required")
    if not isinstance(raw_moments, list):
        raise ArtifactError(f"{path}: field '{field}': expected a list")

    try:
        moments = ingest_moments(raw_moments)
    except MomentIngestionError as e:
        raise ArtifactError(f"{path}: field '{field}.{e.index}': {e}") from e

    return MomentsFile(
        video_id=str(video_id),
        query=str(data.get("query", "")),
        question_id=None if question_id is None else str(question_id),
        moments=moments,
    )


def load_features(path: Path | str, frame_count: int | None = None) -> np.ndarray:
    """
    Load a features CSV ("frame_index,f0,...,f{d-1}") as a (frames, d) array.
    Rows must list frame indices 0..n-1 in order.
    """
    try:
        table = pd.read_csv(path)
    except FileNotFoundError:
        raise ArtifactError(f"File not found: '{path}'")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ArtifactError(f"{path}: invalid CSV ({e})") from e

    columns = list(table.columns)
    expected = ["frame_index"] + [f"f{i}" for i in range(len(columns) - 1)]
    if len(columns) < 2 or columns != expected:
        raise ArtifactError(f"{path}:1: header must be 'frame_index,f0,...,f{{d-1}}'")

    for column in columns:
        numeric = pd.to_numeric(table[column], errors="coerce")
        invalid = np.flatnonzero(~np.isfinite(numeric.to_numpy(dtype=np.float64)))
        if invalid.size:
            # Line 1 is the header
            raise ArtifactError(
                f"{_location(path, int(invalid[0]) + 2)}: field '{column}': not a finite number"
            )

    indices = table["frame_index"].to_numpy()
    mismatched = np.flatnonzero(indices != np.arange(len(indices)))
    if mismatched.size:
        raise ArtifactError(
            f"{_location(path, int(mismatched[0]) + 2)}: field 'frame_index': expected {mismatched[0]}"
        )
    if frame_count is not None and len(indices) != frame_count:
        raise ArtifactError(f"{path}: has {len(indices)} rows but the manifest has {frame_count} frames")

    return table[columns[1:]].to_numpy(dtype=np.float64)


def load_qa_dataset(path: Path | str) -> list[QAItem]:
    """Load a QA dataset (JSON Lines, one QAItem per line)."""
    items: list[QAItem] = []
    seen: set[str] = set()
    for line_number, data in _read_json_lines(path):
        item: QAItem = _validate(QAItem, data, path, line_number)
        if item.item_id in seen:
            raise ArtifactError(
                f"{_location(path, line_number)}: field 'item_id': duplicate id '{item.item_id}'"
            )
        seen.add(item.item_id)
        items.append(item)
    if not items:
        raise ArtifactError(f"{path}: dataset is empty")
    return items


class DatasetScale(NamedTuple):
    unit: str
    """'items' or 'videos'."""

    expected: int
    tolerance: float = 0.0
    """Accepted relative deviation."""


KNOWN_DATASET_SCALES: dict[str, DatasetScale] = {
    "egoschema": DatasetScale("items", 500),
    "nextqa": DatasetScale("videos", 570),
    "intentqa": DatasetScale("videos", 567),
    "cinepile": DatasetScale("videos", 200, tolerance=0.1),
}


def check_dataset_scale(items: Sequence[QAItem], dataset_name: str | None) -> bool:
    """
    Compare a converted dataset with the size of the published evaluation split.
    Mismatches are logged as warnings; returns False when one was found.
    """
    if not dataset_name:
        return True
    scale = KNOWN_DATASET_SCALES.get(dataset_name.lower())
    if scale is None:
        logger.debug("No known scale for dataset '%s'", dataset_name)
        return True

    if scale.unit == "items":
        actual = len(items)
    else:
        actual = len({item.video_id for item in items})
    if abs(actual - scale.expected) > scale.tolerance * scale.expected:
        logger.warning(
            "Dataset '%s' has %d %s, expected %d",
            dataset_name,
            actual,
            scale.unit,
            scale.expected,
        )
        return False
    return True


# endregion


# region Selections and Results


def selection_path(selections_dir: Path | str, question_id: str) -> Path:
    return Path(selections_dir) / f"{question_id}.json"


def write_selection(path: Path | str, selection: SelectionFile) -> None:
    _write_json(path, selection.model_dump(mode="json"))


def load_selection(path: Path | str) -> SelectionFile:
    return _validate(SelectionFile, _read_json(path), path)


def write_results(path: Path | str, records: Sequence[EvalRecord], meta: dict[str, Any]) -> None:
    """Results JSON Lines: one {"meta": {...}} line, then one EvalRecord per line."""
    with open(path, "w", encoding="utf8") as fp:
        fp.write(json.dumps({RESULTS_META_KEY: meta}, ensure_ascii=False, sort_keys=True) + "\n")
        for record in records:
            fp.write(record.model_dump_json() + "\n")


def load_results(path: Path | str) -> tuple[dict[str, Any], list[EvalRecord]]:
    meta: dict[str, Any] = {}
    records: list[EvalRecord] = []
    for line_number, data in _read_json_lines(path):
        if isinstance(data, dict) and set(data) == {RESULTS_META_KEY}:
            if records or meta:
                raise ArtifactError(
                    f"{_location(path, line_number)}: the meta block must be the first line"
                )
            meta = data[RESULTS_META_KEY]
            continue
        records.append(_validate(EvalRecord, data, path, line_number))
    return meta, records


def write_report(path: Path | str, report: AccuracyReport, meta: dict[str, Any]) -> None:
    _write_json(path, {RESULTS_META_KEY: meta, **report.model_dump(mode="json")})


def load_report(path: Path | str) -> AccuracyReport:
    data = _read_json(path)
    if isinstance(data, dict):
        data = {key: value for key, value in data.items() if key != RESULTS_META_KEY}
    return _validate(AccuracyReport, data, path)


# endregion


# region Diagnostics


def write_diagnostics_csv(table: DiagnosticsTable, path: Path | str) -> None:
    frame = pd.DataFrame(
        [row.model_dump() for row in table.rows], columns=DIAGNOSTICS_COLUMNS
    ).astype({"cluster": "int64", "selected_order": "int64"})
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")


def load_diagnostics_csv(path: Path | str) -> DiagnosticsTable:
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError:
        raise ArtifactError(f"File not found: '{path}'")
    if list(frame.columns) != DIAGNOSTICS_COLUMNS:
        raise ArtifactError(f"{path}:1: header must be '{','.join(DIAGNOSTICS_COLUMNS)}'")

    rows = [
        _validate(DiagnosticsRow, record, path, line_number)
        for line_number, record in enumerate(_records(frame), start=2)
    ]
    try:
        return DiagnosticsTable(rows=rows)
    except ValidationError as e:
        raise ArtifactError(f"{path}: {_describe_validation_error(e)}") from e


_CHART_SIZE_INCHES = (10.0, 3.75)
_CHART_TOP = 1.05
_CHANNEL_COLOURS = {
    "relevance": "tab:blue",
    "quality": "tab:orange",
    "uniformity": "tab:green",
}
_SELECTION_COLOUR = "tab:red"


def render_score_chart_svg(table: DiagnosticsTable, path: Path | str) -> None:
    """
    Plot relevance, quality and uniformity over time with one red line per selected frame.
    Earlier selections are drawn taller: selection k of m reaches (m - k) / m.

    Each curve carries its channel name as SVG id and each selection line `selection-<order>`.
    """
    timestamps = [row.timestamp_s for row in table.rows]
    selected = sorted(
        (row for row in table.rows if row.selected_order >= 0), key=lambda row: row.selected_order
    )

    figure = Figure(figsize=_CHART_SIZE_INCHES)
    ax = figure.add_subplot()
    for channel, colour in _CHANNEL_COLOURS.items():
        values = [getattr(row, channel) for row in table.rows]
        ax.plot(timestamps, values, color=colour, linewidth=1.5, label=channel, gid=channel)
    for row in selected:
        height = (len(selected) - row.selected_order) / len(selected)
        ax.plot(
            [row.timestamp_s, row.timestamp_s],
            [0.0, height],
            color=_SELECTION_COLOUR,
            linewidth=1.0,
            snap=False,
            gid=f"selection-{row.selected_order}",
        )

    ax.set_ylim(0.0, _CHART_TOP)
    ax.set_xlabel("Time (s)")
    ax.set_ylabel("Score")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="upper right")
    figure.tight_layout()

    # Fixed salt and no date keep the output stable across runs
    with rc_context({"svg.hashsalt": "momentsampler"}):
        figure.savefig(path, format="svg", metadata={"Date": None})


# endregion


# region Images


def encode_frame_image(path: Path | str, max_side: int = 768, quality: int = 90) -> bytes:
    """Encode a frame as JPEG bytes, downscaled so that its longest side is at most max_side."""
    try:
        with Image.open(path) as image:
            image = image.convert("RGB")
            image.thumbnail((max_side, max_side), Image.Resampling.LANCZOS)
            buffer = io.BytesIO()
            image.save(buffer, format="JPEG", quality=quality)
    except (UnidentifiedImageError, OSError) as e:
        raise ArtifactError(f"Cannot encode image '{path}': {e}") from e
    return buffer.getvalue()


def render_collage(
    image_paths: Sequence[Path | str],
    path: Path | str,
    columns: int = 4,
    tile_width: int = 320,
) -> None:
    """Grid of frames in the given order, each scaled to `tile_width` and letterboxed."""
    if not image_paths:
        raise ArtifactError("Cannot render a collage without frames.")

    tiles = []
    for image_path in image_paths:
        with Image.open(image_path) as image:
            tiles.append(image.convert("RGB"))
    tile_height = max(round(tile.height * tile_width / tile.width) for tile in tiles)
    columns = max(1, min(columns, len(tiles)))
    rows = -(-len(tiles) // columns)

    collage = Image.new("RGB", (columns * tile_width, rows * tile_height), (0, 0, 0))
    for position, tile in enumerate(tiles):
        tile.thumbnail((tile_width, tile_height), Image.Resampling.LANCZOS)
        row, column = divmod(position, columns)
        offset_x = column * tile_width + (tile_width - tile.width) // 2
        offset_y = row * tile_height + (tile_height - tile.height) // 2
        collage.paste(tile, (offset_x, offset_y))
    collage.save(path)


# endregion


# region Sweep Tables


def write_sweep_csv(rows: Sequence[SweepRow], path: Path | str) -> None:
    frame = pd.DataFrame([row.model_dump(mode="json") for row in rows], columns=SWEEP_COLUMNS)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")


def load_sweep_csv(path: Path | str) -> list[SweepRow]:
    frame = pd.read_csv(path)
    if list(frame.columns) != SWEEP_COLUMNS:
        raise ArtifactError(f"{path}:1: header must be '{','.join(SWEEP_COLUMNS)}'")
    return [
        _validate(SweepRow, record, path, line_number)
        for line_number, record in enumerate(_records(frame), start=2)
    ]


# endregion


# region Replay Files


class _ReplayEntry(BaseModel):
    item_id: str
    raw_answer: str


def load_replay(path: Path | str) -> dict[str, str]:
    """Load recorded answers (JSON Lines of {"item_id", "raw_answer"}) keyed by item id."""
    answers: dict[str, str] = {}
    for line_number, data in _read_json_lines(path):
        entry: _ReplayEntry = _validate(_ReplayEntry, data, path, line_number)
        if entry.item_id in answers:
            raise ArtifactError(
                f"{_location(path, line_number)}: field 'item_id': duplicate id '{entry.item_id}'"
            )
        answers[entry.item_id] = entry.raw_answer
    return answers


# endregion
