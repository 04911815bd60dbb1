"""Run configuration: one JSON document drives every command.

Secrets are referenced as ``${ENV_VAR}`` and resolved at load time; the
config hash is computed over the raw file text, so it is stable across
machines and never captures interpolated secret values.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .cot import DEFAULT_STAGE_ORDER, CascadeConfig
from .errors import MedcorrError, MissingPrerequisite
from .gateway import Backend, HttpChatBackend, RecordingBackend, ReplayBackend, ScriptedBackend
from .prompts import PromptLibrary, TemplateName
from .retrieval import (
    CachedEmbeddingBackend,
    EmbeddingBackend,
    HttpEmbeddingBackend,
    MockEmbeddingBackend,
)

_ENV_RE = re.compile(r"\$\{(\w+)\}")

BACKEND_MODES = ("live", "mock", "replay")


def interpolate_env(text: str) -> str:
    def _sub(match: re.Match) -> str:
        var = match.group(1)
        if var not in os.environ:
            raise MedcorrError(f"config references unset environment variable {var!r}")
        return os.environ[var]

    return _ENV_RE.sub(_sub, text)


@dataclass
class BackendSettings:
    mode: str = "mock"
    base_url: Optional[str] = None
    model_id: str = "gpt-4"
    session_path: Optional[str] = None
    mock_script: Optional[str] = None
    record: bool = False
    max_rpm: Optional[int] = None
    api_key_env: str = "MEDCORR_API_KEY"

    def __post_init__(self):
        if self.mode not in BACKEND_MODES:
            raise MedcorrError(f"backend mode must be one of {BACKEND_MODES}, "
                               f"got {self.mode!r}")


@dataclass
class EmbeddingSettings:
    mode: str = "mock"  # mock | live
    base_url: Optional[str] = None
    model_id: str = "mock-embed"
    dim: int = 64


@dataclass
class RunConfig:
    train_path: str = "data/synthetic/train.csv"
    eval_path: str = "data/synthetic/eval.csv"
    dataset_name: str = "custom"
    out_dir: str = "out"
    seed: int = 0
    jobs: int = 1
    backend: BackendSettings = field(default_factory=BackendSettings)
    embedding: EmbeddingSettings = field(default_factory=EmbeddingSettings)
    retrieval: dict = field(default_factory=dict)
    stage_order: Optional[list[str]] = None
    detect_temperature: float = 0.0
    reason_temperature: float = 0.7
    correction_temperature: float = 0.0
    max_tokens: int = 512
    prompts_dir: Optional[str] = None
    scorer_url: Optional[str] = None
    config_hash: str = "unconfigured"

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        raw = Path(path).read_text(encoding="utf-8")
        config_hash = hashlib.sha256(raw.encode("utf-8")).hexdigest()[:16]
        data = json.loads(interpolate_env(raw))
        return cls.from_dict(data, config_hash)

    @classmethod
    def from_dict(cls, data: dict, config_hash: str = "inline") -> "RunConfig":
        backend = BackendSettings(**data.pop("backend", {}))
        embedding = EmbeddingSettings(**data.pop("embedding", {}))
        known = {f for f in cls.__dataclass_fields__}  # noqa: C416
        unknown = set(data) - known
        if unknown:
            raise MedcorrError(f"unknown config keys: {sorted(unknown)}")
        return cls(backend=backend, embedding=embedding, config_hash=config_hash,
                   **data)

    # --- derived objects ---------------------------------------------------

    def retrieval_config(self):
        from .retrieval import RetrievalConfig
        return RetrievalConfig(**self.retrieval) if self.retrieval else RetrievalConfig()

    def cascade_config(self) -> CascadeConfig:
        stages = (tuple(TemplateName(s) for s in self.stage_order)
                  if self.stage_order else DEFAULT_STAGE_ORDER)
        return CascadeConfig(stage_order=stages,
                             retrieval=self.retrieval_config(),
                             model_id=self.backend.model_id,
                             detect_temperature=self.detect_temperature,
                             correction_temperature=self.correction_temperature,
                             max_tokens=self.max_tokens)

    def prompt_library(self) -> PromptLibrary:
        if self.prompts_dir:
            return PromptLibrary.load(self.prompts_dir)
        return PromptLibrary.load_default()

    def meta(self) -> dict:
        return {"config_hash": self.config_hash, "seed": self.seed}

    def chat_backend(self) -> Backend:
        mode = self.backend.mode
        if mode == "live":
            if not self.backend.base_url:
                raise MissingPrerequisite("live backend requires backend.base_url")
            inner: Backend = HttpChatBackend(self.backend.base_url,
                                             api_key_env=self.backend.api_key_env,
                                             max_rpm=self.backend.max_rpm)
        elif mode == "mock":
            script = {}
            if self.backend.mock_script:
                path = Path(self.backend.mock_script)
                if not path.is_file():
                    raise MissingPrerequisite(
                        f"mock script not found: {path}; generate it with "
                        "scripts/make_synthetic_corpus.py or point "
                        "backend.mock_script at an existing file")
                with path.open("r", encoding="utf-8") as fh:
                    for line in fh:
                        line = line.strip()
                        if not line or line.startswith("#"):
                            continue
                        rec = json.loads(line)
                        script[rec["seed_tag"]] = rec["response"]
            inner = ScriptedBackend(script, default="ERROR: no")
        else:  # replay
            if not self.backend.session_path:
                raise MissingPrerequisite("replay backend requires backend.session_path")
            path = Path(self.backend.session_path)
            if not path.is_file():
                raise MissingPrerequisite(
                    f"replay session not found: {path}; run once with "
                    "backend.record=true to create it")
            return ReplayBackend(path)
        if self.backend.record:
            if not self.backend.session_path:
                raise MissingPrerequisite("recording requires backend.session_path")
            return RecordingBackend(inner, self.backend.session_path)
        return inner

    def embedding_backend(self, cache_dir: Optional[str | Path] = None,
                          ) -> EmbeddingBackend:
        if self.embedding.mode == "live":
            if not self.embedding.base_url:
                raise MissingPrerequisite("live embeddings require embedding.base_url")
            backend: EmbeddingBackend = HttpEmbeddingBackend(
                self.embedding.base_url, self.embedding.model_id,
                api_key_env=self.backend.api_key_env)
        else:
            backend = MockEmbeddingBackend(dim=self.embedding.dim,
                                           backend_id=self.embedding.model_id)
        cache_root = Path(cache_dir) if cache_dir else Path(self.out_dir)
        return CachedEmbeddingBackend(backend, cache_root / "embedding_cache.jsonl")
