"""Deterministic pair scorers.

The default model family ("hashvec") embeds tokens as unit vectors derived
from their SHA-512 digest and scores pairs by greedy soft token matching:
precision is the mean best-match similarity of candidate tokens against
the reference, recall the reverse, and the score their F1 (clamped to
[0, 1]). The bleurt-style variant multiplies in a length-ratio penalty.
Identical texts score exactly 1.0; the scorers need no model downloads and
produce the same floats on every platform, which is what the pinned
version ids promise.
"""

from __future__ import annotations

import hashlib
import math
import re
from functools import lru_cache
from typing import Protocol

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_EMBED_DIM = 64


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@lru_cache(maxsize=65536)
def token_vector(token: str) -> tuple[float, ...]:
    digest = hashlib.sha512(token.encode("utf-8")).digest()
    raw = [b / 127.5 - 1.0 for b in digest[:_EMBED_DIM]]
    norm = math.sqrt(sum(x * x for x in raw))
    return tuple(x / norm for x in raw)


def _best_match_mean(a: list[str], b: list[str]) -> float:
    """Mean over tokens of `a` of the best cosine match in `b`, clamped."""
    b_vecs = [token_vector(t) for t in b]
    total = 0.0
    for t in a:
        v = token_vector(t)
        best = max(sum(x * y for x, y in zip(v, w)) for w in b_vecs)
        total += min(1.0, max(0.0, best))
    return total / len(a)


def greedy_match_f1(candidate: str, reference: str) -> float:
    cand, ref = tokenize(candidate), tokenize(reference)
    if not cand and not ref:
        return 1.0
    if not cand or not ref:
        return 0.0
    precision = _best_match_mean(cand, ref)
    recall = _best_match_mean(ref, cand)
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def length_penalty(candidate: str, reference: str) -> float:
    lc, lr = len(tokenize(candidate)), len(tokenize(reference))
    if lc == lr:
        return 1.0
    return math.exp(-abs(lc - lr) / max(lr, 1))


class PairScorer(Protocol):
    metric: str
    model_id: str

    def score_batch(self, pairs: list[tuple[str, str]]) -> list[float]: ...


class HashvecBertScore:
    metric = "bertscore"

    def __init__(self, model_id: str):
        self.model_id = model_id

    def score_batch(self, pairs: list[tuple[str, str]]) -> list[float]:
        return [greedy_match_f1(c, r) for c, r in pairs]


class HashvecBleurt:
    metric = "bleurt"

    def __init__(self, model_id: str):
        self.model_id = model_id

    def score_batch(self, pairs: list[tuple[str, str]]) -> list[float]:
        return [greedy_match_f1(c, r) * length_penalty(c, r) for c, r in pairs]


def build_scorer(metric: str, model_id: str) -> PairScorer:
    if metric == "bertscore":
        return HashvecBertScore(model_id)
    if metric == "bleurt":
        return HashvecBleurt(model_id)
    raise ValueError(f"unknown metric {metric!r}")
