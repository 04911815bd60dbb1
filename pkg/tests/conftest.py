"""Shared fixtures. The whole suite runs with networking disabled."""

from __future__ import annotations

import socket
from pathlib import Path

import pytest

from medcorr.corpus import ClinicalNote, Dataset, DatasetName, ErrorAnnotation
from medcorr.icl import Retriever
from medcorr.prompts import PromptLibrary
from medcorr.retrieval import MockEmbeddingBackend, build_index

REPO_ROOT = Path(__file__).resolve().parent.parent
SYNTHETIC_DIR = REPO_ROOT / "data" / "synthetic"


@pytest.fixture(autouse=True)
def no_network(monkeypatch):
    """Fail fast if anything in the primary suite touches the network."""

    def _blocked(*args, **kwargs):
        raise RuntimeError("network access is disabled in the test suite")

    monkeypatch.setattr(socket, "getaddrinfo", _blocked)
    monkeypatch.setattr(socket, "create_connection", _blocked)
    monkeypatch.setattr(socket.socket, "connect", _blocked)


@pytest.fixture(scope="session")
def library() -> PromptLibrary:
    return PromptLibrary.load_default()


def make_note(note_id: str, texts: tuple[str, ...] = (
        "Patient is stable.", "Vital signs are normal.", "No acute distress.",
        "The working diagnosis is dehydration.", "Initial treatment is oral fluids.",
        "The plan includes review tomorrow.")) -> ClinicalNote:
    raw = "\n".join(f"{i} {t}" for i, t in enumerate(texts))
    return ClinicalNote.from_numbered_text(note_id, raw)


def make_train(n_correct: int = 4, n_incorrect: int = 4) -> Dataset:
    notes = []
    for i in range(n_correct):
        note = make_note(f"c{i}", (
            f"Patient {i} is recovering well.", "Observations are stable.",
            "Discharge is planned."))
        notes.append((note, ErrorAnnotation(False, None, None)))
    for i in range(n_incorrect):
        note = make_note(f"e{i}", (
            f"Patient {i} has a fever.", "Cultures were taken.",
            f"Treatment is drug number {i}."))
        notes.append((note, ErrorAnnotation(True, 2, f"Treatment is antibiotic number {i}.")))
    return Dataset(DatasetName.CUSTOM, notes)


@pytest.fixture
def train() -> Dataset:
    return make_train()


@pytest.fixture
def retriever(train) -> Retriever:
    backend = MockEmbeddingBackend(dim=16)
    index = build_index(train, backend)
    return Retriever(index, train, backend)
