"""
Zero-shot multiple-choice prompting, answer parsing and accuracy aggregation.
"""

from collections.abc import Sequence
import re

from momentsampler.errors import HarnessError
from momentsampler.models import (
    OPTION_LETTERS,
    AccuracyDrop,
    AccuracyReport,
    CategoryAccuracy,
    EvalRecord,
    MatchMethod,
    PromptMode,
    QAItem,
    VisualRelianceReport,
)

PROMPT_TEMPLATE_VERSION = "v1"

WITH_VIDEO_INSTRUCTION = (
    "You are given frames from a video. Answer the question using only the video content."
)
NO_VIDEO_INSTRUCTION = (
    "The following question is about a video that is not accessible to you. "
    "Attempt an answer using your prior knowledge."
)
ANSWER_INSTRUCTION = "Respond with only the letter (A, B, C, D, or E) of the correct option."

_STRIP_CHARACTERS = " \t\r\n\f\v.):,'\""
_WHITESPACE = re.compile(r"\s+")


# region Prompts


def build_prompt(item: QAItem, mode: PromptMode) -> str:
    """Render the prompt for `item`; `with_subtitles` inserts the subtitles before the question."""
    if mode == PromptMode.WITH_SUBTITLES and not item.subtitles:
        raise HarnessError(f"Item '{item.item_id}' has no subtitles for the with_subtitles mode")

    instruction = NO_VIDEO_INSTRUCTION if mode == PromptMode.NO_VIDEO else WITH_VIDEO_INSTRUCTION
    subtitles = f"Subtitles:\n{item.subtitles}\n" if mode == PromptMode.WITH_SUBTITLES else ""
    options = "\n".join(
        f"{letter}. {option}" for letter, option in zip(OPTION_LETTERS, item.options)
    )
    return (
        f"{instruction}\n"
        f"{subtitles}"
        f"Question: {item.question}\n"
        f"Options:\n{options}\n"
        f"{ANSWER_INSTRUCTION}"
    )


# endregion


# region Answer Parsing


def lcs_length(a: str, b: str) -> int:
    """Length of the longest common subsequence of characters."""
    if len(a) < len(b):
        a, b = b, a
    previous = [0] * (len(b) + 1)
    for char_a in a:
        current = [0] * (len(b) + 1)
        for j, char_b in enumerate(b, start=1):
            if char_a == char_b:
                current[j] = previous[j - 1] + 1
            else:
                current[j] = max(previous[j], current[j - 1])
        previous = current
    return previous[-1]


def _normalize_text(text: str) -> str:
    return _WHITESPACE.sub(" ", text.lower()).strip()


def _standalone_letters(text: str) -> set[str]:
    """Uppercase A-E characters not adjacent to another letter or digit."""
    letters = set()
    for position, char in enumerate(text):
        if char not in OPTION_LETTERS:
            continue
        before = text[position - 1] if position > 0 else ""
        after = text[position + 1] if position + 1 < len(text) else ""
        if not before.isalnum() and not after.isalnum():
            letters.add(char)
    return letters


def parse_answer(raw: str, options: Sequence[str]) -> tuple[int, MatchMethod]:
    """
    Map a model answer to an option index.

    1. The answer stripped of whitespace and . ) : , ' " is a single letter A-E (any case).
    2. The answer contains standalone uppercase letters A-E, all the same letter.
    3. Otherwise the option with the longest common subsequence with the answer wins
       (lowercased, whitespace collapsed; ties go to the lowest index).
    """
    stripped = raw.strip(_STRIP_CHARACTERS)
    if len(stripped) == 1 and stripped.upper() in OPTION_LETTERS:
        return OPTION_LETTERS.index(stripped.upper()), MatchMethod.EXACT_LETTER

    letters = _standalone_letters(raw)
    if len(letters) == 1:
        return OPTION_LETTERS.index(letters.pop()), MatchMethod.LETTER_IN_TEXT

    normalized = _normalize_text(raw)
    overlaps = [lcs_length(normalized, _normalize_text(option)) for option in options]
    return overlaps.index(max(overlaps)), MatchMethod.LCS_FALLBACK


def evaluate_answer(item: QAItem, raw_answer: str) -> EvalRecord:
    predicted_index, match_method = parse_answer(raw_answer, item.options)
    return EvalRecord(
        item_id=item.item_id,
        predicted_index=predicted_index,
        match_method=match_method,
        correct=predicted_index == item.answer_index,
        raw_answer=raw_answer,
    )


def failed_record(item: QAItem, error: str) -> EvalRecord:
    return EvalRecord(item_id=item.item_id, error=error)


# endregion


# region Aggregation


def _accuracy(correct: int, total: int) -> float:
    return correct / total if total else 0.0


def aggregate(records: Sequence[EvalRecord], items: Sequence[QAItem]) -> AccuracyReport:
    """Overall and per-category accuracy. Failed records count as incorrect."""
    if not records:
        raise HarnessError("no records")
    items_by_id = {item.item_id: item for item in items}
    unknown = [record.item_id for record in records if record.item_id not in items_by_id]
    if unknown:
        raise HarnessError(f"Unknown item_id(s) in records: {', '.join(unknown)}")

    category_counts: dict[str, list[int]] = {}
    for record in records:
        category = items_by_id[record.item_id].category
        if category is None:
            continue
        counts = category_counts.setdefault(category, [0, 0])
        counts[0] += 1
        counts[1] += int(record.correct)

    correct = sum(1 for record in records if record.correct)
    return AccuracyReport(
        total=len(records),
        correct=correct,
        failed=sum(1 for record in records if record.failed),
        accuracy=_accuracy(correct, len(records)),
        per_category={
            category: CategoryAccuracy(
                total=total, correct=category_correct, accuracy=_accuracy(category_correct, total)
            )
            for category, (total, category_correct) in sorted(category_counts.items())
        },
    )


def _accuracy_drop(with_video: float, no_video: float) -> AccuracyDrop:
    absolute_drop = with_video - no_video
    return AccuracyDrop(
        with_video=with_video,
        no_video=no_video,
        absolute_drop=absolute_drop,
        relative_drop=absolute_drop / with_video if with_video > 0 else 0.0,
    )


def visual_reliance(
    with_video: AccuracyReport, no_video: AccuracyReport
) -> VisualRelianceReport:
    """Accuracy lost when the video is withheld, overall and for categories in both reports."""
    shared_categories = sorted(set(with_video.per_category) & set(no_video.per_category))
    return VisualRelianceReport(
        overall=_accuracy_drop(with_video.accuracy, no_video.accuracy),
        per_category={
            category: _accuracy_drop(
                with_video.per_category[category].accuracy,
                no_video.per_category[category].accuracy,
            )
            for category in shared_categories
        },
    )


# endregion
