"""Service configuration; model versions are pinned here and echoed in
every response so scores are attributable and reproducible."""

from __future__ import annotations

import os
from dataclasses import dataclass

DEFAULT_BERTSCORE_MODEL = "hashvec-greedy-64-v1"
DEFAULT_BLEURT_MODEL = "hashvec-lenpen-64-v1"


@dataclass(frozen=True)
class ServiceConfig:
    bertscore_model: str = DEFAULT_BERTSCORE_MODEL
    bleurt_model: str = DEFAULT_BLEURT_MODEL
    batch_size: int = 64
    host: str = "127.0.0.1"
    port: int = 8701

    @classmethod
    def from_env(cls) -> "ServiceConfig":
        return cls(
            bertscore_model=os.environ.get("SCORER_BERTSCORE_MODEL",
                                           DEFAULT_BERTSCORE_MODEL),
            bleurt_model=os.environ.get("SCORER_BLEURT_MODEL",
                                        DEFAULT_BLEURT_MODEL),
            batch_size=int(os.environ.get("SCORER_BATCH_SIZE", "64")),
            host=os.environ.get("SCORER_HOST", "127.0.0.1"),
            port=int(os.environ.get("SCORER_PORT", "8701")),
        )
