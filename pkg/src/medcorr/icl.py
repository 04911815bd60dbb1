"""In-context example provisioning for the pipelines.

A Retriever owns the vector index, the training notes backing it, and the
embedding backend, and turns sampled note ids into renderable examples.
"""

from __future__ import annotations

import random
from typing import Optional, Sequence

from .corpus import ClinicalNote, Dataset, ErrorAnnotation
from .errors import MedcorrError, ReasonMissing
from .prompts import ICLExample
from .retrieval import (
    Embedding,
    EmbeddingBackend,
    RetrievalConfig,
    VectorIndex,
    balanced_sample,
    balanced_sample_random,
    embed_batch,
)


class Retriever:
    def __init__(self, index: VectorIndex, train: Dataset,
                 embed_backend: EmbeddingBackend):
        self.index = index
        self.embed_backend = embed_backend
        self._store: dict[str, tuple[ClinicalNote, ErrorAnnotation]] = {}
        for note, ann in train.notes:
            if ann is not None:
                self._store[note.note_id] = (note, ann)
        missing = [e.note_id for e in index.entries if e.note_id not in self._store]
        if missing:
            raise MedcorrError(
                f"index entries without training notes: {missing[:5]}")

    def query_embedding(self, note: ClinicalNote) -> Embedding:
        return embed_batch([note.raw_text], self.embed_backend)[0]

    def lookup(self, note_id: str) -> tuple[ClinicalNote, ErrorAnnotation]:
        return self._store[note_id]

    def _to_examples(self, note_ids: Sequence[str],
                     reasons: Optional[dict[str, str]] = None) -> list[ICLExample]:
        examples = []
        for nid in note_ids:
            note, ann = self._store[nid]
            reason = None
            if reasons is not None:
                reason = reasons.get(nid)
                if not reason:
                    raise ReasonMissing(f"no reason available for note {nid!r}")
            examples.append(ICLExample(note, ann, reason))
        return examples

    def examples_for(self, note: ClinicalNote, cfg: RetrievalConfig,
                     reasons: Optional[dict[str, str]] = None) -> list[ICLExample]:
        """Deterministic top class-balanced examples for a query note."""
        query = self.query_embedding(note)
        ids = balanced_sample(self.index, query, cfg)
        return self._to_examples(ids, reasons)

    def random_examples_for(self, note: ClinicalNote, cfg: RetrievalConfig,
                            rng: random.Random,
                            reasons: Optional[dict[str, str]] = None) -> list[ICLExample]:
        """Class-balanced examples drawn randomly from the neighbour pool."""
        query = self.query_embedding(note)
        ids = balanced_sample_random(self.index, query, cfg, rng)
        return self._to_examples(ids, reasons)
