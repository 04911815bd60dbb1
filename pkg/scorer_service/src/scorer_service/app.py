"""FastAPI surface: POST /score for batched pair scoring, GET /health.

Wire format consumed by the evaluator:
  POST /score  {"pairs": [{"candidate": str, "reference": str}, ...],
                "metrics": ["bertscore", "bleurt"]}
           ->  {"scores": {metric: [float, ...]}, "models": {metric: str}}
  GET /health ->  {"ready": bool, "models": {metric: str}}
"""

from __future__ import annotations

import threading
from contextlib import asynccontextmanager
from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .config import ServiceConfig
from .scorers import PairScorer, build_scorer

SUPPORTED_METRICS = ("bertscore", "bleurt")


class Pair(BaseModel):
    candidate: str
    reference: str


class ScoreRequest(BaseModel):
    pairs: list[Pair]
    metrics: list[str]


class ScorerRegistry:
    """Holds the loaded scorer per metric; one instance, requests queued."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self._scorers: dict[str, PairScorer] = {}
        self._lock = threading.Lock()

    @property
    def ready(self) -> bool:
        return bool(self._scorers)

    def load(self) -> None:
        self._scorers = {
            "bertscore": build_scorer("bertscore", self.config.bertscore_model),
            "bleurt": build_scorer("bleurt", self.config.bleurt_model),
        }

    def models(self) -> dict[str, str]:
        return {metric: scorer.model_id for metric, scorer in self._scorers.items()}

    def score(self, pairs: list[tuple[str, str]],
              metrics: list[str]) -> dict[str, list[float]]:
        out: dict[str, list[float]] = {}
        batch = max(1, self.config.batch_size)
        with self._lock:
            for metric in metrics:
                scorer = self._scorers[metric]
                values: list[float] = []
                for i in range(0, len(pairs), batch):
                    values.extend(scorer.score_batch(pairs[i:i + batch]))
                out[metric] = values
        return out


def create_app(config: Optional[ServiceConfig] = None,
               auto_load: bool = True) -> FastAPI:
    config = config or ServiceConfig.from_env()
    registry = ScorerRegistry(config)

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        if auto_load:
            registry.load()
        yield

    app = FastAPI(title="medcorr scorer service", lifespan=lifespan)
    app.state.registry = registry

    @app.get("/health")
    def health() -> dict:
        return {"ready": registry.ready, "models": registry.models()}

    @app.post("/score")
    def score(req: ScoreRequest) -> dict:
        if not registry.ready:
            raise HTTPException(status_code=503, detail="models loading")
        if not req.pairs:
            raise HTTPException(status_code=400, detail="pairs must be non-empty")
        if not req.metrics:
            raise HTTPException(status_code=400, detail="metrics must be non-empty")
        unknown = [m for m in req.metrics if m not in SUPPORTED_METRICS]
        if unknown:
            raise HTTPException(status_code=400,
                                detail=f"unsupported metrics: {unknown}")
        pairs = [(p.candidate, p.reference) for p in req.pairs]
        scores = registry.score(pairs, req.metrics)
        models = registry.models()
        return {"scores": scores,
                "models": {m: models[m] for m in req.metrics}}

    return app


def serve() -> None:
    import argparse

    import uvicorn

    env = ServiceConfig.from_env()
    parser = argparse.ArgumentParser(
        prog="medcorr-scorer",
        description="Serve the pair-scoring API (bertscore, bleurt).")
    parser.add_argument("--host", default=env.host)
    parser.add_argument("--port", type=int, default=env.port)
    args = parser.parse_args()
    config = ServiceConfig(bertscore_model=env.bertscore_model,
                           bleurt_model=env.bleurt_model,
                           batch_size=env.batch_size,
                           host=args.host, port=args.port)
    uvicorn.run(create_app(config), host=config.host, port=config.port)
