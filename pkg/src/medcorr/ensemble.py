"""Rule-based merge of the cascade and reason-bank prediction sets.

The cascade owns the error flag and sentence id. Corrections come from
the reason method when both methods agree on the erroneous sentence;
when they conflict (or the reason method saw no error at all), a fresh
correction is generated against the cascade's sentence id using
error-containing neighbours as examples.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

from .corpus import ClinicalNote, Dataset
from .errors import MedcorrError, MisalignedIds
from .gateway import Backend, ChatRequest, complete_parsed
from .icl import Retriever
from .prompts import (
    SYSTEM_PROMPT,
    PromptLibrary,
    TemplateName,
    Verdict,
    parse_correction,
    render,
)
from .retrieval import RetrievalConfig

log = logging.getLogger(__name__)


class CorrectionSource(str, Enum):
    REASON = "reason"
    COT = "cot"
    REGENERATED = "regenerated"
    NONE = "none"


@dataclass(frozen=True)
class MergeDecision:
    note_id: str
    rule: str  # R1..R5 label of the branch that fired
    source_correction: CorrectionSource
    final: Verdict

    def to_dict(self) -> dict:
        return {
            "note_id": self.note_id,
            "rule": self.rule,
            "source_correction": self.source_correction.value,
            "final": {
                "error_flag": self.final.error_flag,
                "error_sentence_id": self.final.error_sentence_id,
                "corrected_sentence": self.final.corrected_sentence,
            },
        }


def regeneration_config(base: RetrievalConfig) -> RetrievalConfig:
    """All-error example draw: the regeneration prompt shows only notes
    that contain an error."""
    return RetrievalConfig(k_shot=base.k_shot, pool_k=base.pool_k,
                           n_correct=0, n_incorrect=base.k_shot)


def regenerate_correction(note: ClinicalNote, sentence_id: int,
                          retriever: Retriever, cfg: RetrievalConfig,
                          backend: Backend, library: PromptLibrary,
                          model_id: str, temperature: float = 0.0,
                          max_tokens: int = 512) -> str:
    examples = retriever.examples_for(note, regeneration_config(cfg))
    prompt = render(library.get(TemplateName.ENSEMBLE_CORRECTION), note,
                    examples, extra={"sentence_id": str(sentence_id)})
    req = ChatRequest(system=SYSTEM_PROMPT, user=prompt,
                      temperature=temperature, max_tokens=max_tokens,
                      model_id=model_id,
                      seed_tag=f"{note.note_id}|{TemplateName.ENSEMBLE_CORRECTION.value}")
    corrected, _ = complete_parsed(backend, req, parse_correction)
    return corrected


def merge(cot: list[tuple[str, Verdict]], reason: list[tuple[str, Verdict]],
          dataset: Dataset, retriever: Retriever, backend: Backend,
          library: PromptLibrary, cfg: RetrievalConfig | None = None,
          model_id: str = "gpt-4") -> list[MergeDecision]:
    """Merge two prediction sets covering the same notes.

    Flag and sentence id always come from the cascade predictions; the
    five correction rules partition every (cot flag, reason flag,
    id-equality) combination. Inputs are never mutated.
    """
    cfg = cfg or RetrievalConfig()
    cot_map = dict(cot)
    reason_map = dict(reason)
    if len(cot_map) != len(cot) or len(reason_map) != len(reason):
        raise MisalignedIds("duplicate note_ids in prediction lists")
    if set(cot_map) != set(reason_map):
        only_cot = sorted(set(cot_map) - set(reason_map))[:5]
        only_reason = sorted(set(reason_map) - set(cot_map))[:5]
        raise MisalignedIds(
            f"prediction sets differ: only-cot {only_cot}, only-reason {only_reason}")
    notes = dataset.by_id()
    missing = sorted(set(cot_map) - set(notes))
    if missing:
        raise MisalignedIds(f"predictions for notes absent from dataset: {missing[:5]}")

    decisions: list[MergeDecision] = []
    for note_id in sorted(cot_map):
        c = cot_map[note_id]
        r = reason_map[note_id]
        if not c.error_flag:
            decisions.append(MergeDecision(
                note_id, "R2", CorrectionSource.NONE,
                Verdict(False, None, None, "ensemble:R2")))
            continue
        sentence_id = c.error_sentence_id
        if r.error_flag and r.error_sentence_id == sentence_id:
            if r.corrected_sentence:
                decisions.append(MergeDecision(
                    note_id, "R3", CorrectionSource.REASON,
                    Verdict(True, sentence_id, r.corrected_sentence, "ensemble:R3")))
                continue
            # agreeing reason verdict without a correction: fall back
            source, corrected = _fallback(note_id, c)
            decisions.append(MergeDecision(
                note_id, "R3", source,
                Verdict(True, sentence_id, corrected, "ensemble:R3")))
            continue
        rule = "R4" if r.error_flag else "R5"
        note, _ = notes[note_id]
        try:
            corrected = regenerate_correction(note, sentence_id, retriever,
                                              cfg, backend, library, model_id)
            source = CorrectionSource.REGENERATED
        except MedcorrError as exc:
            log.warning("regeneration failed for %s: %s", note_id, exc)
            source, corrected = _fallback(note_id, c)
        decisions.append(MergeDecision(
            note_id, rule, source,
            Verdict(True, sentence_id, corrected, f"ensemble:{rule}")))
    return decisions


def _fallback(note_id: str, cot_verdict: Verdict) -> tuple[CorrectionSource, str | None]:
    if cot_verdict.corrected_sentence:
        return CorrectionSource.COT, cot_verdict.corrected_sentence
    log.warning("no correction available for %s; emitting empty correction", note_id)
    return CorrectionSource.NONE, None
