"""Prediction-file schema shared by the pipelines, ensemble, and evaluator.

Files are CSV with columns (note_id, error_flag, error_sentence_id,
corrected_sentence); no-error rows use -1 and "NA". Every output file
starts with a single '#' header comment carrying run metadata, which all
readers here skip.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .corpus import NA, NO_ERROR_ID, ErrorAnnotation
from .errors import MalformedRow, MissingColumn
from .prompts import Verdict

PREDICTION_COLUMNS = ["note_id", "error_flag", "error_sentence_id", "corrected_sentence"]


@dataclass(frozen=True)
class PredictionRow:
    note_id: str
    error_flag: bool
    error_sentence_id: int  # -1 when no error
    corrected_sentence: str  # "NA" when no error

    @classmethod
    def from_verdict(cls, note_id: str, verdict: Verdict) -> "PredictionRow":
        if not verdict.error_flag:
            return cls(note_id, False, NO_ERROR_ID, NA)
        corrected = verdict.corrected_sentence if verdict.corrected_sentence else NA
        return cls(note_id, True, int(verdict.error_sentence_id), corrected)

    @classmethod
    def from_annotation(cls, note_id: str, ann: ErrorAnnotation) -> "PredictionRow":
        if not ann.error_flag:
            return cls(note_id, False, NO_ERROR_ID, NA)
        return cls(note_id, True, int(ann.error_sentence_id), ann.corrected_sentence or NA)

    def to_verdict(self, provenance: str = "") -> Verdict:
        if not self.error_flag:
            return Verdict(False, None, None, provenance)
        corrected = None if self.corrected_sentence == NA else self.corrected_sentence
        return Verdict(True, self.error_sentence_id, corrected, provenance)


def header_comment(meta: dict) -> str:
    parts = " ".join(f"{k}={meta[k]}" for k in sorted(meta))
    return f"# {parts}"


def write_predictions(rows: Sequence[PredictionRow], path: str | Path,
                      meta: Optional[dict] = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PREDICTION_COLUMNS)
    for row in rows:
        writer.writerow([row.note_id, "1" if row.error_flag else "0",
                         row.error_sentence_id, row.corrected_sentence])
    with path.open("w", encoding="utf-8", newline="") as fh:
        if meta:
            fh.write(header_comment(meta) + "\n")
        fh.write(buf.getvalue())


def read_predictions(path: str | Path) -> list[PredictionRow]:
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            fh.seek(0)
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        missing = set(PREDICTION_COLUMNS) - set(reader.fieldnames)
        if missing:
            raise MissingColumn(f"{path}: missing columns {sorted(missing)}")
        rows = []
        for row_no, rec in enumerate(reader, start=2):
            flag_text = (rec["error_flag"] or "").strip()
            if flag_text not in ("0", "1"):
                raise MalformedRow(row_no, f"error_flag must be 0 or 1, got {flag_text!r}")
            try:
                sent_id = int(rec["error_sentence_id"])
            except (TypeError, ValueError):
                raise MalformedRow(row_no, "error_sentence_id is not an integer")
            rows.append(PredictionRow(str(rec["note_id"]), flag_text == "1",
                                      sent_id, rec["corrected_sentence"] or NA))
        return rows


def write_jsonl(records: Iterable[dict], path: str | Path,
                meta: Optional[dict] = None) -> None:
    """Deterministic JSONL writer (sorted keys, one '#' meta line on top)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        if meta:
            fh.write(header_comment(meta) + "\n")
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            out.append(json.loads(line))
    return out
