"""HTTP client for the neural scoring service (BERTScore / BLEURT columns).

The evaluator stays fully functional without the service: scorer callables
raise ScorerUnavailable on any transport problem and the report degrades.
"""

from __future__ import annotations

import threading
from typing import Callable, Optional

import requests

from .errors import ScorerUnavailable

NEURAL_METRICS = ("bertscore", "bleurt")


class NeuralScorerClient:
    def __init__(self, base_url: str, timeout: float = 300.0,
                 post: Optional[Callable] = None,
                 get: Optional[Callable] = None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._post = post or requests.post
        self._get = get or requests.get

    def health(self) -> dict:
        try:
            resp = self._get(f"{self.base_url}/health", timeout=self.timeout)
        except requests.RequestException as exc:
            raise ScorerUnavailable("neural", str(exc)) from exc
        if resp.status_code != 200:
            raise ScorerUnavailable("neural", f"health returned {resp.status_code}")
        return resp.json()

    def score(self, pairs: list[tuple[str, str]],
              metrics: list[str]) -> dict[str, list[float]]:
        payload = {
            "pairs": [{"candidate": c, "reference": r} for c, r in pairs],
            "metrics": metrics,
        }
        try:
            resp = self._post(f"{self.base_url}/score", json=payload,
                              timeout=self.timeout)
        except requests.RequestException as exc:
            raise ScorerUnavailable(",".join(metrics), str(exc)) from exc
        if resp.status_code != 200:
            raise ScorerUnavailable(",".join(metrics),
                                    f"score returned {resp.status_code}")
        scores = resp.json()["scores"]
        for metric in metrics:
            if len(scores.get(metric, [])) != len(pairs):
                raise ScorerUnavailable(metric, "misaligned score vector")
        return scores


class _RemoteMetric:
    """Per-pair callable over the batch endpoint, with prefetch support."""

    def __init__(self, client: NeuralScorerClient, metric: str):
        self._client = client
        self.metric = metric
        self._cache: dict[tuple[str, str], float] = {}
        self._lock = threading.Lock()

    def prefetch(self, pairs: list[tuple[str, str]]) -> None:
        todo = [p for p in dict.fromkeys(pairs) if p not in self._cache]
        if not todo:
            return
        scores = self._client.score(todo, [self.metric])[self.metric]
        with self._lock:
            for pair, value in zip(todo, scores):
                self._cache[pair] = value

    def __call__(self, candidate: str, reference: str) -> float:
        key = (candidate, reference)
        if key not in self._cache:
            self.prefetch([key])
        return self._cache[key]


def neural_scorers(base_url: str, metrics: tuple[str, ...] = NEURAL_METRICS,
                   client: Optional[NeuralScorerClient] = None,
                   ) -> dict[str, _RemoteMetric]:
    client = client or NeuralScorerClient(base_url)
    return {metric: _RemoteMetric(client, metric) for metric in metrics}
