"""Prompt rendering and response parsing for all pipeline stages.

Templates are editable text assets (one file per template, ``{{name}}``
placeholders). Model answers follow a keyed-line grammar::

    ERROR: yes|no
    SENTENCE_ID: <int>        (required when ERROR is yes)
    CORRECTED: <text>         (optional at detection stage)

Keys are case-insensitive, the first occurrence of each key wins, and any
surrounding prose is ignored.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .corpus import ClinicalNote, ErrorAnnotation
from .errors import ReasonMissing, UnboundPlaceholder, UnparseableResponse


class TemplateName(str, Enum):
    STANDARD_DETECT = "standard_detect"
    COT_INTERVENTION = "cot_intervention"
    COT_DIAGNOSIS = "cot_diagnosis"
    COT_MANAGEMENT = "cot_management"
    CORRECTION = "correction"
    REASON_GEN_CORRECT = "reason_gen_correct"
    REASON_GEN_INCORRECT = "reason_gen_incorrect"
    REASON_ICL = "reason_icl"
    ENSEMBLE_CORRECTION = "ensemble_correction"


DETECTION_TEMPLATES = (
    TemplateName.STANDARD_DETECT,
    TemplateName.COT_INTERVENTION,
    TemplateName.COT_DIAGNOSIS,
    TemplateName.COT_MANAGEMENT,
)

SYSTEM_PROMPT = (
    "You are an expert clinician reviewing clinical notes for factual "
    "medical errors. Follow the requested answer format exactly."
)

FORMAT_REMINDER = (
    "Your previous reply could not be parsed. Answer again using only the "
    "required format lines (ERROR / SENTENCE_ID / CORRECTED), nothing else."
)

_PLACEHOLDER_RE = re.compile(r"\{\{(\w+)\}\}")


@dataclass(frozen=True)
class PromptTemplate:
    name: TemplateName
    body: str

    def placeholders(self) -> set[str]:
        return set(_PLACEHOLDER_RE.findall(self.body))


@dataclass(frozen=True)
class ICLExample:
    note: ClinicalNote
    annotation: ErrorAnnotation
    reason: Optional[str] = None


@dataclass(frozen=True)
class Verdict:
    error_flag: bool
    error_sentence_id: Optional[int]
    corrected_sentence: Optional[str]
    provenance: str = ""

    @classmethod
    def no_error(cls, provenance: str = "") -> "Verdict":
        return cls(False, None, None, provenance)

    @classmethod
    def failed(cls) -> "Verdict":
        return cls(False, None, None, "FAILED")


class PromptLibrary:
    """Loads the template set from a directory of ``<name>.txt`` files."""

    def __init__(self, templates: Mapping[TemplateName, PromptTemplate]):
        missing = [t.value for t in TemplateName if t not in templates]
        if missing:
            raise FileNotFoundError(f"missing prompt templates: {missing}")
        self._templates = dict(templates)

    def get(self, name: TemplateName) -> PromptTemplate:
        return self._templates[name]

    @classmethod
    def load(cls, directory: str | Path) -> "PromptLibrary":
        directory = Path(directory)
        templates = {}
        for name in TemplateName:
            path = directory / f"{name.value}.txt"
            if path.is_file():
                templates[name] = PromptTemplate(name, path.read_text(encoding="utf-8"))
        return cls(templates)

    @classmethod
    def load_default(cls) -> "PromptLibrary":
        root = resources.files("medcorr").joinpath("prompt_templates")
        templates = {}
        for name in TemplateName:
            res = root.joinpath(f"{name.value}.txt")
            templates[name] = PromptTemplate(name, res.read_text(encoding="utf-8"))
        return cls(templates)


def format_note(note: ClinicalNote) -> str:
    return note.numbered_text()


def format_verdict(verdict: Verdict) -> str:
    """Emit the canonical answer grammar for a verdict."""
    if not verdict.error_flag:
        return "ERROR: no"
    lines = ["ERROR: yes", f"SENTENCE_ID: {verdict.error_sentence_id}"]
    if verdict.corrected_sentence is not None:
        lines.append(f"CORRECTED: {verdict.corrected_sentence}")
    return "\n".join(lines)


def _format_example(position: int, example: ICLExample, with_reason: bool) -> str:
    ann = example.annotation
    lines = [f"Example {position}:", format_note(example.note)]
    if with_reason:
        lines.append(f"Reason: {example.reason}")
    verdict = Verdict(ann.error_flag, ann.error_sentence_id, ann.corrected_sentence)
    lines.append(format_verdict(verdict))
    return "\n".join(lines)


def format_examples(examples: Sequence[ICLExample], with_reason: bool) -> str:
    blocks = [_format_example(i, ex, with_reason)
              for i, ex in enumerate(examples, start=1)]
    return "\n\n".join(blocks)


def render(template: PromptTemplate, note: ClinicalNote,
           examples: Sequence[ICLExample],
           extra: Optional[Mapping[str, str]] = None) -> str:
    """Deterministically fill a template with a note and ICL examples.

    Examples are serialized in the given order and the target note comes
    after all of them. REASON_ICL examples must carry reasons; no other
    template accepts them.
    """
    with_reason = template.name is TemplateName.REASON_ICL
    if with_reason:
        lacking = [ex.note.note_id for ex in examples if not ex.reason]
        if lacking:
            raise ReasonMissing(f"examples without reasons: {lacking}")
    else:
        stray = [ex.note.note_id for ex in examples if ex.reason is not None]
        if stray:
            raise ValueError(f"examples must not carry reasons for "
                             f"{template.name.value}: {stray}")
    if template.name in (TemplateName.CORRECTION, TemplateName.ENSEMBLE_CORRECTION):
        if not extra or "sentence_id" not in extra:
            raise UnboundPlaceholder(
                f"{template.name.value} requires a 'sentence_id' binding")
    bindings = {
        "examples": format_examples(examples, with_reason),
        "note": format_note(note),
    }
    if extra:
        bindings.update({k: str(v) for k, v in extra.items()})

    def _sub(match: re.Match) -> str:
        key = match.group(1)
        if key not in bindings:
            raise UnboundPlaceholder(f"placeholder {{{{{key}}}}} has no binding")
        return bindings[key]

    return _PLACEHOLDER_RE.sub(_sub, template.body)


def render_reason_request(note: ClinicalNote, annotation: ErrorAnnotation,
                          library: PromptLibrary) -> str:
    """Prompt asking why a training note is incorrect (or what validates it)."""
    if annotation.error_flag:
        if not annotation.corrected_sentence:
            raise ValueError(f"note {note.note_id!r}: error annotation lacks a correction")
        template = library.get(TemplateName.REASON_GEN_INCORRECT)
        return render(template, note, [],
                      extra={"corrected_sentence": annotation.corrected_sentence})
    template = library.get(TemplateName.REASON_GEN_CORRECT)
    return render(template, note, [])


_LINE_RE = re.compile(r"^\s*(error|sentence_id|corrected)\s*:\s*(.*?)\s*$",
                      re.IGNORECASE)


def _keyed_lines(response_text: str) -> dict[str, str]:
    found: dict[str, str] = {}
    for line in response_text.split("\n"):
        match = _LINE_RE.match(line)
        if not match:
            continue
        key = match.group(1).lower()
        if key not in found:  # first match wins
            found[key] = match.group(2)
    return found


def parse_verdict(response_text: str, provenance: str = "") -> Verdict:
    """Parse the canonical grammar; raises UnparseableResponse otherwise."""
    found = _keyed_lines(response_text)
    flag_text = found.get("error", "").strip().rstrip(".").lower()
    if flag_text not in ("yes", "no"):
        raise UnparseableResponse(
            f"no ERROR: yes|no line in response: {response_text[:120]!r}")
    if flag_text == "no":
        return Verdict(False, None, None, provenance)
    if "sentence_id" not in found:
        raise UnparseableResponse("ERROR: yes without a SENTENCE_ID line")
    id_text = found["sentence_id"].strip().rstrip(".")
    try:
        sentence_id = int(id_text)
    except ValueError:
        raise UnparseableResponse(f"SENTENCE_ID is not an integer: {id_text!r}")
    corrected = found.get("corrected", "").strip() or None
    return Verdict(True, sentence_id, corrected, provenance)


def parse_correction(response_text: str) -> str:
    """Extract the payload of the first CORRECTED: line."""
    found = _keyed_lines(response_text)
    corrected = found.get("corrected", "").strip()
    if not corrected:
        raise UnparseableResponse(
            f"no CORRECTED line in response: {response_text[:120]!r}")
    return corrected
