"""Embedding backends, the exhaustive-scan cosine index, and example sampling.

The index is deliberately a flat store: at corpus scale (a few thousand
notes) exact scan is fast enough, and exactness keeps ranking behaviour
reproducible. Similarity ties break by ascending note_id.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import random
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import requests

from .corpus import Dataset
from .errors import (
    BackendUnavailable,
    ClassUnavailable,
    DimensionMismatch,
    EmptyIndex,
    EmptyInput,
    IntegrityError,
    MedcorrError,
    ZeroVector,
)


@dataclass(frozen=True)
class Embedding:
    vector: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.vector)


@dataclass(frozen=True)
class RetrievalConfig:
    """In-context example sampling parameters.

    k_shot examples per prompt, drawn as n_correct error-free plus
    n_incorrect erroneous notes from a pool of the pool_k nearest
    neighbours (pool doubles until both classes are covered).
    """
    k_shot: int = 4
    pool_k: int = 20
    n_correct: int = 2
    n_incorrect: int = 2

    def __post_init__(self):
        if self.k_shot < 1:
            raise ValueError("k_shot must be >= 1")
        if self.pool_k < self.k_shot:
            raise ValueError("pool_k must be >= k_shot")
        if self.n_correct < 0 or self.n_incorrect < 0:
            raise ValueError("class counts must be non-negative")
        if self.n_correct + self.n_incorrect != self.k_shot:
            raise ValueError("n_correct + n_incorrect must equal k_shot")

    @classmethod
    def for_shots(cls, k_shot: int, pool_k: int = 20) -> "RetrievalConfig":
        """Ceil/floor class split for a given shot count (3 -> 2+1, 4 -> 2+2)."""
        n_correct = (k_shot + 1) // 2
        return cls(k_shot=k_shot, pool_k=max(pool_k, k_shot),
                   n_correct=n_correct, n_incorrect=k_shot - n_correct)


@dataclass(frozen=True)
class IndexEntry:
    note_id: str
    embedding: Embedding
    error_flag: bool
    norm: float = field(default=0.0, compare=False)


class VectorIndex:
    """Immutable store of (note_id, embedding, error_flag) rows."""

    def __init__(self, entries: Sequence[IndexEntry]):
        if not entries:
            raise EmptyIndex("cannot build an index with no entries")
        dim = entries[0].embedding.dim
        seen: set[str] = set()
        finalized = []
        for e in entries:
            if e.embedding.dim != dim:
                raise DimensionMismatch(
                    f"entry {e.note_id!r} has dim {e.embedding.dim}, index dim {dim}")
            if e.note_id in seen:
                raise MedcorrError(f"duplicate note_id in index: {e.note_id!r}")
            seen.add(e.note_id)
            finalized.append(IndexEntry(e.note_id, e.embedding, e.error_flag,
                                        norm=_norm(e.embedding.vector)))
        self._entries = tuple(finalized)
        self._dim = dim

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def entries(self) -> tuple[IndexEntry, ...]:
        return self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def count_by_flag(self, error_flag: bool) -> int:
        return sum(1 for e in self._entries if e.error_flag == error_flag)


def _dot(a: Sequence[float], b: Sequence[float]) -> float:
    return sum(x * y for x, y in zip(a, b))


def _norm(v: Sequence[float]) -> float:
    return math.sqrt(sum(x * x for x in v))


def cosine(a: Embedding, b: Embedding) -> float:
    """dot(a,b) / (||a|| * ||b||); raises on zero vectors or dim mismatch."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"dims differ: {a.dim} vs {b.dim}")
    na, nb = _norm(a.vector), _norm(b.vector)
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine undefined for all-zero vectors")
    return _dot(a.vector, b.vector) / (na * nb)


def knn(index: VectorIndex, query: Embedding, k: int) -> list[tuple[str, float]]:
    """Top-k entries by descending cosine, ties by ascending note_id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if query.dim != index.dim:
        raise DimensionMismatch(f"query dim {query.dim} != index dim {index.dim}")
    qnorm = _norm(query.vector)
    if qnorm == 0.0:
        raise ZeroVector("cannot query with an all-zero vector")
    scored = []
    for e in index.entries:
        if e.norm == 0.0:
            raise ZeroVector(f"index entry {e.note_id!r} is an all-zero vector")
        sim = _dot(query.vector, e.embedding.vector) / (qnorm * e.norm)
        scored.append((e.note_id, sim))
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored[: min(k, len(scored))]


def _pool_with_both_classes(index: VectorIndex, query: Embedding,
                            cfg: RetrievalConfig) -> list[tuple[str, float, bool]]:
    """Nearest-neighbour pool, doubled until it covers both class quotas."""
    flags = {e.note_id: e.error_flag for e in index.entries}
    if index.count_by_flag(False) < cfg.n_correct:
        raise ClassUnavailable(
            f"index holds {index.count_by_flag(False)} correct notes, need {cfg.n_correct}")
    if index.count_by_flag(True) < cfg.n_incorrect:
        raise ClassUnavailable(
            f"index holds {index.count_by_flag(True)} incorrect notes, need {cfg.n_incorrect}")
    pool_k = cfg.pool_k
    while True:
        pool = [(nid, sim, flags[nid]) for nid, sim in knn(index, query, pool_k)]
        n_corr = sum(1 for _, _, f in pool if not f)
        n_inc = len(pool) - n_corr
        if n_corr >= cfg.n_correct and n_inc >= cfg.n_incorrect:
            return pool
        if pool_k >= len(index):
            # global counts were checked above, so a full pool always suffices
            return pool
        pool_k = min(pool_k * 2, len(index))


def balanced_sample(index: VectorIndex, query: Embedding,
                    cfg: RetrievalConfig) -> list[str]:
    """Most-similar n_correct correct plus n_incorrect incorrect note ids.

    Output is ordered by descending similarity across both classes.
    """
    pool = _pool_with_both_classes(index, query, cfg)
    correct = [(nid, sim) for nid, sim, f in pool if not f][: cfg.n_correct]
    incorrect = [(nid, sim) for nid, sim, f in pool if f][: cfg.n_incorrect]
    merged = sorted(correct + incorrect, key=lambda t: (-t[1], t[0]))
    return [nid for nid, _ in merged]


def balanced_sample_random(index: VectorIndex, query: Embedding,
                           cfg: RetrievalConfig, rng: random.Random) -> list[str]:
    """Class-quota sample drawn randomly from the nearest-neighbour pool."""
    pool = _pool_with_both_classes(index, query, cfg)
    correct = [(nid, sim) for nid, sim, f in pool if not f]
    incorrect = [(nid, sim) for nid, sim, f in pool if f]
    chosen = rng.sample(correct, cfg.n_correct) + rng.sample(incorrect, cfg.n_incorrect)
    chosen.sort(key=lambda t: (-t[1], t[0]))
    return [nid for nid, _ in chosen]


# --- embedding backends ----------------------------------------------------

class EmbeddingBackend(Protocol):
    backend_id: str

    def embed(self, texts: list[str]) -> list[list[float]]: ...


class MockEmbeddingBackend:
    """Deterministic hash-seeded vectors; no I/O."""

    def __init__(self, dim: int = 64, backend_id: str = "mock-embed"):
        self.dim = dim
        self.backend_id = backend_id
        self.calls = 0

    def embed(self, texts: list[str]) -> list[list[float]]:
        self.calls += 1
        out = []
        for text in texts:
            rng = random.Random(f"{self.backend_id}|{text}")
            out.append([rng.uniform(-1.0, 1.0) for _ in range(self.dim)])
        return out


class ScriptedEmbeddingBackend:
    """Replays a fixed sequence of embedding batches (contract tests)."""

    def __init__(self, batches: list[list[list[float]]], backend_id: str = "scripted-embed"):
        self._batches = list(batches)
        self.backend_id = backend_id

    def embed(self, texts: list[str]) -> list[list[float]]:
        if not self._batches:
            raise BackendUnavailable("scripted embedding backend exhausted")
        return self._batches.pop(0)


class HttpEmbeddingBackend:
    """OpenAI-compatible /embeddings endpoint client."""

    def __init__(self, base_url: str, model: str,
                 api_key_env: str = "MEDCORR_API_KEY",
                 timeout: float = 60.0,
                 post: Optional[Callable] = None):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.backend_id = f"http:{model}"
        self._post = post or requests.post

    def embed(self, texts: list[str]) -> list[list[float]]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = self._post(f"{self.base_url}/embeddings",
                              json={"model": self.model, "input": texts},
                              headers=headers, timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendUnavailable(f"embedding request failed: {exc}") from exc
        if resp.status_code != 200:
            raise BackendUnavailable(f"embedding endpoint returned {resp.status_code}")
        data = resp.json().get("data", [])
        if len(data) != len(texts):
            raise BackendUnavailable(
                f"embedding endpoint returned {len(data)} vectors for {len(texts)} inputs")
        return [item["embedding"] for item in data]


class CachedEmbeddingBackend:
    """Disk-backed cache keyed by (backend id, content hash)."""

    def __init__(self, inner: EmbeddingBackend, cache_path: str | Path):
        self.inner = inner
        self.backend_id = inner.backend_id
        self.cache_path = Path(cache_path)
        self._lock = threading.Lock()
        self._cache: dict[str, list[float]] = {}
        if self.cache_path.is_file():
            with self.cache_path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    rec = json.loads(line)
                    self._cache[rec["key"]] = rec["vector"]

    def _key(self, text: str) -> str:
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
        return f"{self.backend_id}|{digest}"

    def embed(self, texts: list[str]) -> list[list[float]]:
        keys = [self._key(t) for t in texts]
        missing = [(i, t) for i, (k, t) in enumerate(zip(keys, texts))
                   if k not in self._cache]
        if missing:
            fresh = self.inner.embed([t for _, t in missing])
            with self._lock:
                self.cache_path.parent.mkdir(parents=True, exist_ok=True)
                with self.cache_path.open("a", encoding="utf-8") as fh:
                    for (i, _), vec in zip(missing, fresh):
                        self._cache[keys[i]] = vec
                        fh.write(json.dumps({"key": keys[i], "vector": vec}) + "\n")
        return [self._cache[k] for k in keys]


def embed_batch(texts: list[str], backend: EmbeddingBackend) -> list[Embedding]:
    """One embedding per input, order preserved, uniform dimension."""
    if not texts:
        raise EmptyInput("embed_batch requires at least one text")
    vectors = backend.embed(list(texts))
    if len(vectors) != len(texts):
        raise BackendUnavailable(
            f"backend returned {len(vectors)} vectors for {len(texts)} inputs")
    dim = len(vectors[0])
    out = []
    for vec in vectors:
        if len(vec) != dim:
            raise DimensionMismatch(f"mixed dims from backend: {len(vec)} vs {dim}")
        if any(not math.isfinite(x) for x in vec):
            raise MedcorrError("backend returned a non-finite embedding component")
        out.append(Embedding(tuple(float(x) for x in vec)))
    return out


def build_index(train: Dataset, backend: EmbeddingBackend) -> VectorIndex:
    """Embed every annotated training note into an index row."""
    from .corpus import require_annotations

    pairs = require_annotations(train)
    embeddings = embed_batch([note.raw_text for note, _ in pairs], backend)
    entries = [IndexEntry(note.note_id, emb, ann.error_flag)
               for (note, ann), emb in zip(pairs, embeddings)]
    return VectorIndex(entries)


# --- persistence ------------------------------------------------------------

def save_index(index: VectorIndex, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        header = {"kind": "vector_index", "dim": index.dim, "count": len(index)}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for e in index.entries:
            rec = {"note_id": e.note_id, "vector": list(e.embedding.vector),
                   "error_flag": e.error_flag}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_index(path: str | Path) -> VectorIndex:
    path = Path(path)
    if not path.is_file():
        raise IntegrityError(f"index file not found: {path}")
    try:
        with path.open("r", encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().split("\n") if ln.strip()]
        header = json.loads(lines[0])
        if header.get("kind") != "vector_index":
            raise IntegrityError(f"{path}: not a vector index file")
        entries = []
        for line in lines[1:]:
            rec = json.loads(line)
            entries.append(IndexEntry(str(rec["note_id"]),
                                      Embedding(tuple(float(x) for x in rec["vector"])),
                                      bool(rec["error_flag"])))
    except (json.JSONDecodeError, KeyError, IndexError, TypeError, ValueError) as exc:
        raise IntegrityError(f"{path}: corrupt index file: {exc}") from exc
    if len(entries) != header.get("count"):
        raise IntegrityError(
            f"{path}: header count {header.get('count')} != {len(entries)} entries")
    index = VectorIndex(entries)
    if index.dim != header.get("dim"):
        raise IntegrityError(f"{path}: header dim {header.get('dim')} != {index.dim}")
    return index
