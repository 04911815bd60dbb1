"""Reason-bank pipeline: answer all three sub-tasks in one shot, three times.

A pre-computed bank stores one generated explanation per training note
(why it is correct, or why it is wrong given its correction). At solve
time the prompt shows class-balanced neighbours with their reasons; three
sampled answers are resolved by majority vote.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .corpus import ClinicalNote, Dataset, ErrorAnnotation
from .errors import MedcorrError, UnparseableResponse
from .gateway import Backend, ChatRequest, complete_parsed
from .icl import Retriever
from .prompts import (
    SYSTEM_PROMPT,
    PromptLibrary,
    TemplateName,
    Verdict,
    parse_verdict,
    render,
    render_reason_request,
)
from .retrieval import RetrievalConfig

log = logging.getLogger(__name__)

N_SAMPLES = 3

# Abstentions (unparseable samples) are None slots in the vote list.
VoteSet = list[Optional[Verdict]]


def annotation_content_hash(note: ClinicalNote, ann: ErrorAnnotation) -> str:
    payload = {
        "text": note.raw_text,
        "error_flag": ann.error_flag,
        "error_sentence_id": ann.error_sentence_id,
        "corrected_sentence": ann.corrected_sentence,
    }
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"),
                           ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ReasonEntry:
    note_id: str
    reason: str
    model_id: str
    content_hash: str


@dataclass
class ReasonBank:
    entries: dict[str, ReasonEntry] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return not self.failures

    def reasons(self) -> dict[str, str]:
        return {nid: e.reason for nid, e in self.entries.items()}

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fh:
            for nid in sorted(self.entries):
                e = self.entries[nid]
                rec = {"note_id": e.note_id, "reason": e.reason,
                       "model_id": e.model_id, "content_hash": e.content_hash}
                fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ReasonBank":
        bank = cls()
        with Path(path).open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                rec = json.loads(line)
                entry = ReasonEntry(rec["note_id"], rec["reason"],
                                    rec["model_id"], rec["content_hash"])
                bank.entries[entry.note_id] = entry
        return bank


def build_reason_bank(train: Dataset, backend: Backend, library: PromptLibrary,
                      existing: Optional[ReasonBank] = None,
                      model_id: str = "gpt-4", temperature: float = 0.0,
                      max_tokens: int = 256, jobs: int = 1) -> ReasonBank:
    """Generate one reason per training note; unchanged entries are reused."""
    from .corpus import require_annotations

    pairs = require_annotations(train)
    bank = ReasonBank()

    def _one(pair) -> ReasonEntry | tuple[str, str]:
        note, ann = pair
        content_hash = annotation_content_hash(note, ann)
        if existing is not None:
            prev = existing.entries.get(note.note_id)
            if prev is not None and prev.content_hash == content_hash:
                return prev
        prompt = render_reason_request(note, ann, library)
        req = ChatRequest(system=SYSTEM_PROMPT, user=prompt,
                          temperature=temperature, max_tokens=max_tokens,
                          model_id=model_id, seed_tag=f"{note.note_id}|reason_gen")
        try:
            resp = backend.complete(req)
        except MedcorrError as exc:
            return (note.note_id, str(exc))
        reason = resp.text.strip()
        if not reason:
            return (note.note_id, "backend returned an empty reason")
        return ReasonEntry(note.note_id, reason, model_id, content_hash)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_one, pairs))
    else:
        outcomes = [_one(p) for p in pairs]
    for outcome in outcomes:
        if isinstance(outcome, ReasonEntry):
            bank.entries[outcome.note_id] = outcome
        else:
            nid, msg = outcome
            bank.failures[nid] = msg
    if bank.failures:
        log.warning("reason bank incomplete: %d failures", len(bank.failures))
    return bank


def majority_vote(votes: VoteSet, rng_seed: int) -> Verdict:
    """Resolve three sampled verdicts into one.

    Flag is the majority of non-abstained votes (ties go to no-error). The
    sentence id is the plurality id among error votes, ties to the lowest
    id. The correction is a seeded uniform draw from the corrections of
    votes matching both the winning flag and id, over a canonically sorted
    candidate list so vote order never matters.
    """
    cast = [v for v in votes if v is not None]
    if not cast:
        raise ValueError("majority_vote requires at least one non-abstained vote")
    yes = [v for v in cast if v.error_flag]
    if len(yes) <= len(cast) - len(yes):
        return Verdict(False, None, None, "majority")
    counts = Counter(v.error_sentence_id for v in yes)
    winner_id = sorted(counts, key=lambda i: (-counts[i], i))[0]
    candidates = sorted(v.corrected_sentence for v in yes
                        if v.error_sentence_id == winner_id
                        and v.corrected_sentence is not None)
    corrected = None
    if candidates:
        corrected = random.Random(rng_seed).choice(candidates)
    return Verdict(True, winner_id, corrected, "majority")


def solve(note: ClinicalNote, retriever: Retriever, bank: ReasonBank,
          cfg: RetrievalConfig, backend: Backend, library: PromptLibrary,
          rng_seed: int, model_id: str = "gpt-4", temperature: float = 0.7,
          max_tokens: int = 512) -> tuple[Verdict, VoteSet]:
    """Three independently sampled answers resolved by majority vote.

    Sample 1 uses the deterministic top-ranked class-balanced draw; samples
    2 and 3 re-draw the class quotas randomly from the neighbour pool so
    the model sees varied example sets.
    """
    reasons = bank.reasons()
    votes: VoteSet = []
    for i in range(1, N_SAMPLES + 1):
        if i == 1:
            examples = retriever.examples_for(note, cfg, reasons=reasons)
        else:
            rng = random.Random(f"{rng_seed}|{note.note_id}|sample_{i}")
            examples = retriever.random_examples_for(note, cfg, rng, reasons=reasons)
        prompt = render(library.get(TemplateName.REASON_ICL), note, examples)
        req = ChatRequest(system=SYSTEM_PROMPT, user=prompt,
                          temperature=temperature, max_tokens=max_tokens,
                          model_id=model_id,
                          seed_tag=f"{note.note_id}|reason_icl|sample_{i}")
        try:
            verdict, _ = complete_parsed(backend, req, parse_verdict)
            votes.append(Verdict(verdict.error_flag, verdict.error_sentence_id,
                                 verdict.corrected_sentence, f"sample_{i}"))
        except UnparseableResponse:
            votes.append(None)
    if all(v is None for v in votes):
        return Verdict.failed(), votes
    return majority_vote(votes, rng_seed), votes


@dataclass(frozen=True)
class ReasonNoteResult:
    note_id: str
    verdict: Verdict
    votes: VoteSet
    error: str = ""

    def trace_dict(self) -> dict:
        def vote_dict(v: Optional[Verdict]) -> Optional[dict]:
            if v is None:
                return None
            return {"error_flag": v.error_flag,
                    "error_sentence_id": v.error_sentence_id,
                    "corrected_sentence": v.corrected_sentence,
                    "provenance": v.provenance}

        return {
            "note_id": self.note_id,
            "votes": [vote_dict(v) for v in self.votes],
            "final": vote_dict(self.verdict),
            "error": self.error,
        }


def run_reason(dataset: Dataset, retriever: Retriever, bank: ReasonBank,
               cfg: RetrievalConfig, backend: Backend, library: PromptLibrary,
               rng_seed: int, model_id: str = "gpt-4", temperature: float = 0.7,
               max_tokens: int = 512, jobs: int = 1) -> list[ReasonNoteResult]:
    notes = [note for note, _ in dataset.notes]

    def _one(note: ClinicalNote) -> ReasonNoteResult:
        try:
            verdict, votes = solve(note, retriever, bank, cfg, backend, library,
                                   rng_seed, model_id=model_id,
                                   temperature=temperature, max_tokens=max_tokens)
            return ReasonNoteResult(note.note_id, verdict, votes)
        except (MedcorrError, ValueError) as exc:
            log.warning("note %s failed: %s", note.note_id, exc)
            return ReasonNoteResult(note.note_id, Verdict.failed(), [], error=str(exc))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_one, notes))
    else:
        results = [_one(n) for n in notes]
    return sorted(results, key=lambda r: r.note_id)
