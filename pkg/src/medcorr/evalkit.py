"""Scoring of prediction files: detection/span accuracy, ROUGE-1 F1,
composite no-error handling, and the aggregate report table.

ROUGE-1 tokenization is frozen: lowercase, strip punctuation characters,
split on whitespace. The composite column (AGC) gates each note's mean
NLG score on span correctness and is a local definition, labelled as such
in the report.
"""

from __future__ import annotations

import csv
import io
import string
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

from .corpus import NA, NO_ERROR_ID
from .errors import EmptySet, MisalignedIds, ScorerUnavailable
from .predictions import PredictionRow, header_comment

PairScorer = Callable[[str, str], float]

NLG_METRICS = ("rouge1", "bertscore", "bleurt")

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def _aligned_maps(preds: Sequence[PredictionRow], refs: Sequence[PredictionRow],
                  ) -> tuple[dict[str, PredictionRow], dict[str, PredictionRow]]:
    pred_map = {r.note_id: r for r in preds}
    ref_map = {r.note_id: r for r in refs}
    if len(pred_map) != len(preds) or len(ref_map) != len(refs):
        raise MisalignedIds("duplicate note_ids")
    if not pred_map:
        raise EmptySet("no notes to score")
    if set(pred_map) != set(ref_map):
        only_pred = sorted(set(pred_map) - set(ref_map))[:5]
        only_ref = sorted(set(ref_map) - set(pred_map))[:5]
        raise MisalignedIds(f"id sets differ: only-pred {only_pred}, only-ref {only_ref}")
    return pred_map, ref_map


def accuracy_flags(preds: Sequence[PredictionRow],
                   refs: Sequence[PredictionRow]) -> float:
    """Fraction of notes whose predicted error flag matches the reference."""
    pred_map, ref_map = _aligned_maps(preds, refs)
    hits = sum(1 for nid in pred_map
               if pred_map[nid].error_flag == ref_map[nid].error_flag)
    return hits / len(pred_map)


def _span_id(row: PredictionRow) -> int:
    return row.error_sentence_id if row.error_flag else NO_ERROR_ID


def span_correct(pred: PredictionRow, ref: PredictionRow) -> bool:
    return _span_id(pred) == _span_id(ref)


def accuracy_spans(preds: Sequence[PredictionRow],
                   refs: Sequence[PredictionRow]) -> float:
    """Fraction of notes with matching sentence ids; no-error counts as -1
    on both sides, so a correct no-error call scores as a hit."""
    pred_map, ref_map = _aligned_maps(preds, refs)
    hits = sum(1 for nid in pred_map if span_correct(pred_map[nid], ref_map[nid]))
    return hits / len(pred_map)


def rouge_tokens(text: str) -> list[str]:
    return text.lower().translate(_PUNCT_TABLE).split()


def rouge1_f1(candidate: str, reference: str) -> float:
    """Unigram-overlap F1 with clipped counts.

    Both sides empty after normalization scores 1.0; exactly one empty
    scores 0.0.
    """
    cand = rouge_tokens(candidate)
    ref = rouge_tokens(reference)
    if not cand and not ref:
        return 1.0
    if not cand or not ref:
        return 0.0
    overlap = sum((Counter(cand) & Counter(ref)).values())
    precision = overlap / len(cand)
    recall = overlap / len(ref)
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def local_scorers() -> dict[str, PairScorer]:
    """Scorers that need no external service."""
    return {"rouge1": rouge1_f1}


def _correction_text(row: PredictionRow) -> str:
    return "" if row.corrected_sentence == NA else row.corrected_sentence


def nlg_note_score(pred: PredictionRow, ref: PredictionRow,
                   scorers: Mapping[str, PairScorer]) -> dict[str, float]:
    """Per-note NLG scores under the no-error policy.

    Both sides no-error: every metric is 1.0. Exactly one side no-error:
    every metric is 0.0. Otherwise each scorer runs on the two corrections.
    """
    if not ref.error_flag and not pred.error_flag:
        return {name: 1.0 for name in scorers}
    if ref.error_flag != pred.error_flag:
        return {name: 0.0 for name in scorers}
    cand, gold = _correction_text(pred), _correction_text(ref)
    return {name: fn(cand, gold) for name, fn in scorers.items()}


@dataclass(frozen=True)
class EvaluationReport:
    dataset: str
    n_notes: int
    acc_subtask1: float
    acc_subtask2: float
    aggregate: float
    rouge1: float
    bertscore: Optional[float]
    bleurt: Optional[float]
    aggregate_composite: float
    unavailable: tuple[str, ...] = ()

    def metric_columns(self) -> dict[str, Optional[float]]:
        return {"rouge1": self.rouge1, "bertscore": self.bertscore,
                "bleurt": self.bleurt}


def build_report(preds: Sequence[PredictionRow], refs: Sequence[PredictionRow],
                 scorers: Optional[Mapping[str, PairScorer]] = None,
                 dataset: str = "custom") -> EvaluationReport:
    """Assemble the full metric table for one prediction set.

    A scorer that raises ScorerUnavailable drops its column (flagged in
    the report) and the aggregate degrades to the remaining metrics.
    """
    if scorers is None:
        scorers = local_scorers()
    if "rouge1" not in scorers:
        scorers = {**scorers, "rouge1": rouge1_f1}
    pred_map, ref_map = _aligned_maps(preds, refs)
    note_ids = sorted(pred_map)

    acc1 = accuracy_flags(preds, refs)
    acc2 = accuracy_spans(preds, refs)

    # Batched prefetch for scorers that support it (the neural client).
    needed_pairs = [( _correction_text(pred_map[nid]), _correction_text(ref_map[nid]))
                    for nid in note_ids
                    if pred_map[nid].error_flag and ref_map[nid].error_flag]
    available: dict[str, PairScorer] = {}
    unavailable: list[str] = []
    for name, fn in scorers.items():
        prefetch = getattr(fn, "prefetch", None)
        try:
            if prefetch is not None and needed_pairs:
                prefetch(needed_pairs)
            elif needed_pairs:
                fn(*needed_pairs[0])  # probe availability once
            available[name] = fn
        except ScorerUnavailable:
            unavailable.append(name)

    per_note: dict[str, dict[str, float]] = {}
    for nid in note_ids:
        per_note[nid] = nlg_note_score(pred_map[nid], ref_map[nid], available)

    def column_mean(metric: str) -> Optional[float]:
        if metric not in available:
            return None
        return sum(per_note[nid][metric] for nid in note_ids) / len(note_ids)

    columns = {m: column_mean(m) for m in NLG_METRICS}
    present = [v for v in columns.values() if v is not None]
    aggregate = sum(present) / len(present)

    composite_terms = []
    for nid in note_ids:
        scores = [per_note[nid][m] for m in NLG_METRICS if m in available]
        note_mean = sum(scores) / len(scores)
        gate = 1.0 if span_correct(pred_map[nid], ref_map[nid]) else 0.0
        composite_terms.append(note_mean * gate)
    composite = sum(composite_terms) / len(composite_terms)

    missing = tuple(sorted(set(unavailable)
                           | ({"bertscore", "bleurt"} - set(scorers))))
    return EvaluationReport(
        dataset=dataset, n_notes=len(note_ids),
        acc_subtask1=acc1, acc_subtask2=acc2,
        aggregate=aggregate, rouge1=columns["rouge1"],
        bertscore=columns["bertscore"], bleurt=columns["bleurt"],
        aggregate_composite=composite, unavailable=missing)


REPORT_COLUMNS = ["dataset", "n_notes", "acc_subtask1", "acc_subtask2",
                  "aggregate", "rouge1", "bertscore", "bleurt",
                  "aggregate_composite"]


def _fmt(value: Optional[float]) -> str:
    return NA if value is None else f"{value:.4f}"


def report_to_csv(report: EvaluationReport, path: str | Path,
                  meta: Optional[dict] = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    writer.writerow([report.dataset, report.n_notes,
                     _fmt(report.acc_subtask1), _fmt(report.acc_subtask2),
                     _fmt(report.aggregate), _fmt(report.rouge1),
                     _fmt(report.bertscore), _fmt(report.bleurt),
                     _fmt(report.aggregate_composite)])
    with path.open("w", encoding="utf-8", newline="") as fh:
        if meta:
            fh.write(header_comment(meta) + "\n")
        fh.write(buf.getvalue())
        if report.unavailable:
            fh.write(f"# unavailable={','.join(report.unavailable)} "
                     f"(aggregate computed over remaining metrics)\n")


def report_to_text(report: EvaluationReport) -> str:
    """Aligned table mirroring the shared-task results layout."""
    headers = ["Dataset", "Acc(1)", "Acc(2)", "AG", "R1", "BERT", "BLEURT", "AGC"]
    row = [report.dataset, _fmt(report.acc_subtask1), _fmt(report.acc_subtask2),
           _fmt(report.aggregate), _fmt(report.rouge1), _fmt(report.bertscore),
           _fmt(report.bleurt), _fmt(report.aggregate_composite)]
    widths = [max(len(h), len(v)) for h, v in zip(headers, row)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(headers, widths)),
        "  ".join("-" * w for w in widths),
        "  ".join(v.ljust(w) for v, w in zip(row, widths)),
    ]
    if report.unavailable:
        lines.append(f"note: unavailable metrics {', '.join(report.unavailable)}; "
                     "aggregate covers the remaining columns")
    lines.append("AGC is a composite (local definition): per-note mean NLG score "
                 "gated on span correctness")
    return "\n".join(lines) + "\n"
