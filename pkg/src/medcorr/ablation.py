"""Few-shot ablation grid: shot counts crossed with CoT on/off.

Each cell runs the detection cascade only (binary sub-task) at the given
shot count; odd counts force a ceil/floor class imbalance, which the grid
records alongside the accuracy.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from .corpus import Dataset
from .cot import CascadeConfig, detect_and_locate
from .errors import MedcorrError
from .evalkit import accuracy_flags
from .gateway import Backend
from .icl import Retriever
from .predictions import PredictionRow, header_comment
from .prompts import PromptLibrary, TemplateName, Verdict
from .retrieval import RetrievalConfig


@dataclass(frozen=True)
class AblationCell:
    shots: int
    with_cot: bool
    n_correct: int
    n_incorrect: int
    accuracy: float


def _detect_only(dataset: Dataset, retriever: Retriever, cfg: CascadeConfig,
                 backend: Backend, library: PromptLibrary) -> list[PredictionRow]:
    rows = []
    for note, _ in dataset.notes:
        try:
            verdict, _ = detect_and_locate(note, retriever, cfg, backend, library)
        except MedcorrError:
            verdict = Verdict.failed()
        rows.append(PredictionRow.from_verdict(note.note_id, verdict))
    return sorted(rows, key=lambda r: r.note_id)


def run_ablation(dataset: Dataset, refs: list[PredictionRow],
                 retriever: Retriever, base_cfg: CascadeConfig,
                 backend: Backend, library: PromptLibrary,
                 shots: list[int], modes: Optional[list[bool]] = None,
                 ) -> list[AblationCell]:
    if not shots or any(s < 1 for s in shots):
        raise MedcorrError(f"shot counts must be positive integers, got {shots}")
    if modes is None:
        modes = [True, False]
    cells = []
    for shot in shots:
        retrieval = RetrievalConfig.for_shots(shot, pool_k=base_cfg.retrieval.pool_k)
        for with_cot in modes:
            stage_order = (base_cfg.stage_order if with_cot
                           else (TemplateName.STANDARD_DETECT,))
            cfg = replace(base_cfg, stage_order=stage_order, retrieval=retrieval)
            preds = _detect_only(dataset, retriever, cfg, backend, library)
            acc = accuracy_flags(preds, refs)
            cells.append(AblationCell(shot, with_cot, retrieval.n_correct,
                                      retrieval.n_incorrect, acc))
    return cells


def write_ablation(cells: list[AblationCell], path: str | Path,
                   meta: Optional[dict] = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["shots", "with_cot", "n_correct", "n_incorrect", "accuracy"])
    for cell in cells:
        writer.writerow([cell.shots, "1" if cell.with_cot else "0",
                         cell.n_correct, cell.n_incorrect, f"{cell.accuracy:.4f}"])
    with path.open("w", encoding="utf-8", newline="") as fh:
        if meta:
            fh.write(header_comment(meta) + "\n")
        fh.write(buf.getvalue())
