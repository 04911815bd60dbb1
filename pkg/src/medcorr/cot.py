"""Detection cascade plus independent correction stage.

Stage one walks an ordered list of detection prompts (a standard prompt,
then one chain-of-thought prompt per error family) and stops at the first
stage that reports an error. Stage two asks for the corrected sentence in
a separate prompt that names the predicted sentence id.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

from .corpus import ClinicalNote, Dataset
from .errors import MedcorrError
from .gateway import Backend, ChatRequest, complete_parsed, request_hash
from .icl import Retriever
from .prompts import (
    DETECTION_TEMPLATES,
    SYSTEM_PROMPT,
    ICLExample,
    PromptLibrary,
    TemplateName,
    Verdict,
    parse_correction,
    parse_verdict,
    render,
)
from .retrieval import RetrievalConfig

log = logging.getLogger(__name__)

DEFAULT_STAGE_ORDER = (
    TemplateName.STANDARD_DETECT,
    TemplateName.COT_INTERVENTION,
    TemplateName.COT_DIAGNOSIS,
    TemplateName.COT_MANAGEMENT,
)


@dataclass(frozen=True)
class CascadeConfig:
    stage_order: tuple[TemplateName, ...] = DEFAULT_STAGE_ORDER
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    model_id: str = "gpt-4"
    detect_temperature: float = 0.0
    correction_temperature: float = 0.0
    max_tokens: int = 512

    def __post_init__(self):
        if not self.stage_order:
            raise ValueError("stage_order must not be empty")
        if self.stage_order[0] is not TemplateName.STANDARD_DETECT:
            raise ValueError("stage_order must begin with the standard detect prompt")
        if len(set(self.stage_order)) != len(self.stage_order):
            raise ValueError("stage_order contains duplicates")
        bad = [s.value for s in self.stage_order if s not in DETECTION_TEMPLATES]
        if bad:
            raise ValueError(f"not detection templates: {bad}")


@dataclass(frozen=True)
class StageRecord:
    template: TemplateName
    prompt_hash: str
    verdict: Verdict
    remark: str = ""

    def to_dict(self) -> dict:
        return {
            "template": self.template.value,
            "prompt_hash": self.prompt_hash,
            "error_flag": self.verdict.error_flag,
            "error_sentence_id": self.verdict.error_sentence_id,
            "remark": self.remark,
        }


@dataclass(frozen=True)
class CascadeTrace:
    records: tuple[StageRecord, ...]

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class NoteResult:
    note_id: str
    verdict: Verdict
    trace: Optional[CascadeTrace]
    error: str = ""

    def trace_dict(self) -> dict:
        return {
            "note_id": self.note_id,
            "stages": [r.to_dict() for r in self.trace.records] if self.trace else [],
            "final": {
                "error_flag": self.verdict.error_flag,
                "error_sentence_id": self.verdict.error_sentence_id,
                "corrected_sentence": self.verdict.corrected_sentence,
                "provenance": self.verdict.provenance,
            },
            "error": self.error,
        }


def _detect_request(note: ClinicalNote, prompt: str, stage: TemplateName,
                    cfg: CascadeConfig) -> ChatRequest:
    return ChatRequest(system=SYSTEM_PROMPT, user=prompt,
                       temperature=cfg.detect_temperature,
                       max_tokens=cfg.max_tokens, model_id=cfg.model_id,
                       seed_tag=f"{note.note_id}|{stage.value}")


def detect_and_locate(note: ClinicalNote, retriever: Retriever,
                      cfg: CascadeConfig, backend: Backend,
                      library: PromptLibrary,
                      examples: Optional[list[ICLExample]] = None,
                      ) -> tuple[Verdict, CascadeTrace]:
    """Run the detection stages in order, stopping at the first error.

    A stage that claims an error at an out-of-range sentence id is treated
    as no-detection (noted in the trace) and the cascade continues.
    """
    if examples is None:
        examples = retriever.examples_for(note, cfg.retrieval)
    records: list[StageRecord] = []
    for stage in cfg.stage_order:
        prompt = render(library.get(stage), note, examples)
        req = _detect_request(note, prompt, stage, cfg)
        verdict, _ = complete_parsed(backend, req, parse_verdict)
        verdict = replace(verdict, provenance=stage.value)
        if verdict.error_flag:
            if verdict.error_sentence_id in note.sentence_ids():
                records.append(StageRecord(stage, request_hash(req), verdict))
                return verdict, CascadeTrace(tuple(records))
            effective = Verdict(False, None, None, stage.value)
            records.append(StageRecord(
                stage, request_hash(req), effective,
                remark=f"out_of_range_id={verdict.error_sentence_id}"))
            continue
        records.append(StageRecord(stage, request_hash(req), verdict))
    return Verdict(False, None, None, "exhausted"), CascadeTrace(tuple(records))


def correct(note: ClinicalNote, sentence_id: int, retriever: Retriever,
            cfg: CascadeConfig, backend: Backend, library: PromptLibrary,
            examples: Optional[list[ICLExample]] = None) -> str:
    """Ask for the corrected version of the given sentence."""
    if sentence_id not in note.sentence_ids():
        raise ValueError(f"sentence_id {sentence_id} invalid for note "
                         f"{note.note_id!r} with {len(note.sentences)} sentences")
    if examples is None:
        examples = retriever.examples_for(note, cfg.retrieval)
    prompt = render(library.get(TemplateName.CORRECTION), note, examples,
                    extra={"sentence_id": str(sentence_id)})
    req = ChatRequest(system=SYSTEM_PROMPT, user=prompt,
                      temperature=cfg.correction_temperature,
                      max_tokens=cfg.max_tokens, model_id=cfg.model_id,
                      seed_tag=f"{note.note_id}|{TemplateName.CORRECTION.value}")
    corrected, _ = complete_parsed(backend, req, parse_correction)
    return corrected


def _solve_note(note: ClinicalNote, retriever: Retriever, cfg: CascadeConfig,
                backend: Backend, library: PromptLibrary) -> NoteResult:
    try:
        examples = retriever.examples_for(note, cfg.retrieval)
        verdict, trace = detect_and_locate(note, retriever, cfg, backend,
                                           library, examples=examples)
        if verdict.error_flag:
            corrected = correct(note, verdict.error_sentence_id, retriever,
                                cfg, backend, library, examples=examples)
            verdict = replace(verdict, corrected_sentence=corrected)
        return NoteResult(note.note_id, verdict, trace)
    except (MedcorrError, ValueError) as exc:
        log.warning("note %s failed: %s", note.note_id, exc)
        return NoteResult(note.note_id, Verdict.failed(), None, error=str(exc))


def run_cot(dataset: Dataset, retriever: Retriever, cfg: CascadeConfig,
            backend: Backend, library: PromptLibrary,
            jobs: int = 1) -> list[NoteResult]:
    """One verdict per note, ordered by note_id; failures never abort the run."""
    notes = [note for note, _ in dataset.notes]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(
                lambda n: _solve_note(n, retriever, cfg, backend, library), notes))
    else:
        results = [_solve_note(n, retriever, cfg, backend, library) for n in notes]
    return sorted(results, key=lambda r: r.note_id)
