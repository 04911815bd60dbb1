"""Clinical-note datasets: parsing, validation, and CSV/JSONL persistence.

Canonical on-disk schema (both formats): columns/keys
``note_id, text, error_flag, error_sentence_id, corrected_sentence``.
Error-free rows carry ``-1`` and the literal ``NA``; rows without any
annotation (unlabeled test data) carry an empty error_flag (CSV) or null
(JSONL).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

from .errors import (
    DuplicateNoteId,
    MalformedRow,
    MedcorrError,
    MissingColumn,
    NonContiguousIds,
    UnnumberedLine,
)

NA = "NA"
NO_ERROR_ID = -1

COLUMNS = ["note_id", "text", "error_flag", "error_sentence_id", "corrected_sentence"]


class DatasetName(str, Enum):
    MS_TRAIN = "ms_train"
    MS_VAL = "ms_val"
    UW_VAL = "uw_val"
    TEST = "test"
    CUSTOM = "custom"


class FileFormat(str, Enum):
    CSV = "csv"
    JSONL = "jsonl"


@dataclass(frozen=True)
class Sentence:
    id: int
    text: str


@dataclass(frozen=True)
class ClinicalNote:
    note_id: str
    raw_text: str
    sentences: tuple[Sentence, ...]

    @classmethod
    def from_numbered_text(cls, note_id: str, raw_text: str) -> "ClinicalNote":
        return cls(note_id=note_id, raw_text=raw_text,
                   sentences=tuple(parse_sentences(raw_text)))

    def numbered_text(self) -> str:
        """Reconstruct the line-numbered form from the parsed sentences."""
        return "\n".join(f"{s.id} {s.text}" for s in self.sentences)

    def sentence_ids(self) -> range:
        return range(len(self.sentences))


@dataclass(frozen=True)
class ErrorAnnotation:
    error_flag: bool
    error_sentence_id: Optional[int]
    corrected_sentence: Optional[str]

    @classmethod
    def no_error(cls) -> "ErrorAnnotation":
        return cls(False, None, None)


@dataclass
class Dataset:
    name: DatasetName
    notes: list[tuple[ClinicalNote, Optional[ErrorAnnotation]]]

    def __len__(self) -> int:
        return len(self.notes)

    def by_id(self) -> dict[str, tuple[ClinicalNote, Optional[ErrorAnnotation]]]:
        return {note.note_id: (note, ann) for note, ann in self.notes}

    def note_ids(self) -> list[str]:
        return [note.note_id for note, _ in self.notes]


@dataclass(frozen=True)
class Violation:
    note_id: str
    reason: str


def parse_sentences(raw_numbered_text: str) -> list[Sentence]:
    """Split "N text" line-numbered note text into Sentence records.

    Sentence ids come from the leading integers and must run 0..n-1 in
    order. Blank lines are skipped; leading/trailing whitespace per line is
    stripped, internal spacing preserved.
    """
    sentences: list[Sentence] = []
    for line in raw_numbered_text.split("\n"):
        line = line.strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        text = rest.strip()
        if not head.isdigit() or not text:
            raise UnnumberedLine(f"line is not of the form '<id> <text>': {line!r}")
        sentences.append(Sentence(id=int(head), text=text))
    ids = [s.id for s in sentences]
    if ids != list(range(len(ids))):
        raise NonContiguousIds(f"sentence ids must be 0..n-1 in order, got {ids}")
    return sentences


def _parse_annotation(row_no: int, flag_field: str, id_field: str,
                      corrected_field: str, note: ClinicalNote) -> Optional[ErrorAnnotation]:
    flag_field = flag_field.strip()
    if flag_field == "":
        return None
    if flag_field not in ("0", "1"):
        raise MalformedRow(row_no, f"error_flag must be 0, 1, or empty, got {flag_field!r}")
    flag = flag_field == "1"
    try:
        sent_id = int(id_field)
    except (TypeError, ValueError):
        raise MalformedRow(row_no, f"error_sentence_id is not an integer: {id_field!r}")
    corrected = corrected_field
    if not flag:
        if sent_id != NO_ERROR_ID:
            raise MalformedRow(row_no, f"error_flag=0 requires error_sentence_id=-1, got {sent_id}")
        if corrected != NA:
            raise MalformedRow(row_no, f"error_flag=0 requires corrected_sentence={NA!r}")
        return ErrorAnnotation.no_error()
    if sent_id not in note.sentence_ids():
        raise MalformedRow(row_no, f"error_sentence_id {sent_id} outside 0..{len(note.sentences) - 1}")
    if not corrected or corrected == NA:
        raise MalformedRow(row_no, "error_flag=1 requires a non-empty corrected_sentence")
    return ErrorAnnotation(True, sent_id, corrected)


def _row_to_note(row_no: int, rec: dict) -> tuple[ClinicalNote, Optional[ErrorAnnotation]]:
    note_id = str(rec["note_id"]).strip()
    if not note_id:
        raise MalformedRow(row_no, "empty note_id")
    try:
        note = ClinicalNote.from_numbered_text(note_id, str(rec["text"]))
    except (UnnumberedLine, NonContiguousIds) as exc:
        raise MalformedRow(row_no, f"unparseable note text: {exc}") from exc
    if not note.sentences:
        raise MalformedRow(row_no, "note has no sentences")
    flag_field = rec["error_flag"]
    flag_field = "" if flag_field is None else str(flag_field)
    id_field = rec["error_sentence_id"]
    id_field = str(NO_ERROR_ID) if id_field is None else str(id_field)
    corrected_field = rec["corrected_sentence"]
    corrected_field = NA if corrected_field is None else str(corrected_field)
    ann = _parse_annotation(row_no, flag_field, id_field, corrected_field, note)
    return note, ann


def _iter_csv(path: Path) -> Iterable[tuple[int, dict]]:
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return
        missing = set(COLUMNS) - set(reader.fieldnames)
        if missing:
            raise MissingColumn(f"{path}: missing columns {sorted(missing)}")
        for row_no, rec in enumerate(reader, start=2):
            yield row_no, rec


def _iter_jsonl(path: Path) -> Iterable[tuple[int, dict]]:
    with path.open("r", encoding="utf-8") as fh:
        for row_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRow(row_no, f"invalid JSON: {exc.msg}") from exc
            missing = set(COLUMNS) - set(rec.keys())
            if missing:
                raise MissingColumn(f"{path}:{row_no}: missing keys {sorted(missing)}")
            yield row_no, rec


def infer_format(path: str | Path) -> FileFormat:
    suffix = Path(path).suffix.lower()
    return FileFormat.JSONL if suffix in (".jsonl", ".ndjson") else FileFormat.CSV


def load_dataset(path: str | Path, format: FileFormat | None = None,
                 name: DatasetName = DatasetName.CUSTOM) -> Dataset:
    """Parse a dataset file into (ClinicalNote, ErrorAnnotation?) pairs.

    Row order and count are preserved; note_ids must be unique.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    fmt = format or infer_format(path)
    rows = _iter_csv(path) if fmt is FileFormat.CSV else _iter_jsonl(path)
    notes: list[tuple[ClinicalNote, Optional[ErrorAnnotation]]] = []
    seen: set[str] = set()
    for row_no, rec in rows:
        note, ann = _row_to_note(row_no, rec)
        if note.note_id in seen:
            raise DuplicateNoteId(f"row {row_no}: duplicate note_id {note.note_id!r}")
        seen.add(note.note_id)
        notes.append((note, ann))
    return Dataset(name=name, notes=notes)


def _note_to_record(note: ClinicalNote, ann: Optional[ErrorAnnotation]) -> dict:
    if ann is None:
        flag, sent_id, corrected = "", NO_ERROR_ID, NA
    elif ann.error_flag:
        flag, sent_id, corrected = "1", ann.error_sentence_id, ann.corrected_sentence
    else:
        flag, sent_id, corrected = "0", NO_ERROR_ID, NA
    return {
        "note_id": note.note_id,
        "text": note.numbered_text(),
        "error_flag": flag,
        "error_sentence_id": sent_id,
        "corrected_sentence": corrected,
    }


def write_dataset(dataset: Dataset, path: str | Path,
                  format: FileFormat | None = None) -> None:
    path = Path(path)
    fmt = format or infer_format(path)
    records = [_note_to_record(note, ann) for note, ann in dataset.notes]
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt is FileFormat.CSV:
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\n")
            writer.writeheader()
            writer.writerows(records)
    else:
        with path.open("w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def validate(dataset: Dataset) -> list[Violation]:
    """Collect every invariant violation; empty list iff well-formed."""
    violations: list[Violation] = []
    seen: set[str] = set()
    for note, ann in dataset.notes:
        nid = note.note_id
        if nid in seen:
            violations.append(Violation(nid, "duplicate note_id"))
        seen.add(nid)
        if not note.sentences:
            violations.append(Violation(nid, "note has no sentences"))
        ids = [s.id for s in note.sentences]
        if ids != list(range(len(ids))):
            violations.append(Violation(nid, f"sentence ids not contiguous from 0: {ids}"))
        for s in note.sentences:
            if not s.text.strip():
                violations.append(Violation(nid, f"sentence {s.id} is empty"))
        if ann is None:
            continue
        if ann.error_flag:
            if ann.error_sentence_id not in note.sentence_ids():
                violations.append(Violation(nid, f"error_sentence_id {ann.error_sentence_id} out of range"))
            if not ann.corrected_sentence or not ann.corrected_sentence.strip():
                violations.append(Violation(nid, "error_flag set but corrected_sentence missing"))
        else:
            if ann.error_sentence_id is not None:
                violations.append(Violation(nid, "no-error annotation carries a sentence id"))
            if ann.corrected_sentence is not None:
                violations.append(Violation(nid, "no-error annotation carries a correction"))
    return violations


def require_annotations(dataset: Dataset) -> list[tuple[ClinicalNote, ErrorAnnotation]]:
    """Return annotated pairs, failing if any note lacks an annotation."""
    pairs = []
    for note, ann in dataset.notes:
        if ann is None:
            raise MedcorrError(f"note {note.note_id!r} has no annotation")
        pairs.append((note, ann))
    return pairs
