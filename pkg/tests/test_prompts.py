import pytest
from hypothesis import given, strategies as st

from medcorr.corpus import ErrorAnnotation
from medcorr.errors import ReasonMissing, UnboundPlaceholder, UnparseableResponse
from medcorr.prompts import (
    ICLExample,
    PromptTemplate,
    TemplateName,
    Verdict,
    format_verdict,
    parse_correction,
    parse_verdict,
    render,
    render_reason_request,
)
from conftest import make_note


def _examples(n, with_reason=False, error=True):
    out = []
    for i in range(n):
        note = make_note(f"ex{i}")
        if error:
            ann = ErrorAnnotation(True, 3, f"The working diagnosis is condition {i}.")
        else:
            ann = ErrorAnnotation(False, None, None)
        reason = f"distinct reason number {i}" if with_reason else None
        out.append(ICLExample(note, ann, reason))
    return out


def test_standard_detect_zero_shot(library):
    note = make_note("target")
    prompt = render(library.get(TemplateName.STANDARD_DETECT), note, [])
    assert "Example" not in prompt
    assert note.sentences[0].text in prompt
    assert "ERROR: yes or no" in prompt


def test_reason_icl_includes_all_reasons_in_order(library):
    examples = _examples(4, with_reason=True)
    note = make_note("target", ("Only sentence here.",))
    prompt = render(library.get(TemplateName.REASON_ICL), note, examples)
    positions = [prompt.index(ex.reason) for ex in examples]
    assert positions == sorted(positions)
    # the note under review appears after every example
    assert prompt.index("Only sentence here.") > max(positions)


def test_reason_icl_requires_reasons(library):
    examples = _examples(2, with_reason=False)
    with pytest.raises(ReasonMissing):
        render(library.get(TemplateName.REASON_ICL), make_note("t"), examples)


def test_non_reason_template_forbids_reasons(library):
    examples = _examples(1, with_reason=True)
    with pytest.raises(ValueError):
        render(library.get(TemplateName.STANDARD_DETECT), make_note("t"), examples)


def test_correction_requires_sentence_id_binding(library):
    with pytest.raises(UnboundPlaceholder):
        render(library.get(TemplateName.CORRECTION), make_note("t"), [])


def test_correction_binds_sentence_id(library):
    prompt = render(library.get(TemplateName.CORRECTION), make_note("t"),
                    _examples(1), extra={"sentence_id": "2"})
    assert "sentence 2" in prompt


def test_unknown_placeholder_rejected():
    template = PromptTemplate(TemplateName.STANDARD_DETECT, "{{note}} {{mystery}}")
    with pytest.raises(UnboundPlaceholder):
        render(template, make_note("t"), [])


def test_render_is_deterministic(library):
    note = make_note("t")
    examples = _examples(3)
    a = render(library.get(TemplateName.COT_DIAGNOSIS), note, examples)
    b = render(library.get(TemplateName.COT_DIAGNOSIS), note, examples)
    assert a == b


def test_examples_follow_input_order(library):
    examples = _examples(3)
    prompt = render(library.get(TemplateName.STANDARD_DETECT),
                    make_note("t"), examples)
    positions = [prompt.index(ex.annotation.corrected_sentence) for ex in examples]
    assert positions == sorted(positions)


def test_reason_request_incorrect_note(library):
    note = make_note("t")
    ann = ErrorAnnotation(True, 4, "Initial treatment is intravenous fluids.")
    prompt = render_reason_request(note, ann, library)
    assert note.sentences[4].text in prompt
    assert "Initial treatment is intravenous fluids." in prompt


def test_reason_request_correct_note(library):
    note = make_note("t")
    prompt = render_reason_request(note, ErrorAnnotation(False, None, None), library)
    assert "validate" in prompt
    assert "Corrected sentence" not in prompt


def test_reason_request_incomplete_annotation(library):
    with pytest.raises(ValueError):
        render_reason_request(make_note("t"), ErrorAnnotation(True, 1, None), library)


# --- verdict grammar ---------------------------------------------------------

def test_parse_no_error():
    assert parse_verdict("ERROR: no") == Verdict(False, None, None)


def test_parse_full_answer():
    text = "ERROR: yes\nSENTENCE_ID: 7\nCORRECTED: He was given amoxicillin."
    assert parse_verdict(text) == Verdict(True, 7, "He was given amoxicillin.")


def test_parse_ignores_surrounding_prose():
    text = ("Let me think about this.\nThe findings suggest a problem.\n"
            "ERROR: yes\nSENTENCE_ID: 2\nThat is my answer.")
    assert parse_verdict(text) == Verdict(True, 2, None)


def test_parse_case_insensitive_keys():
    text = "error: YES\nSentence_Id: 3\ncorrected: Fixed text."
    assert parse_verdict(text) == Verdict(True, 3, "Fixed text.")


def test_parse_first_match_wins():
    text = "ERROR: no\nERROR: yes\nSENTENCE_ID: 1"
    assert parse_verdict(text) == Verdict(False, None, None)


def test_parse_prose_only_rejected():
    with pytest.raises(UnparseableResponse):
        parse_verdict("The note looks fine to me.")


def test_parse_yes_without_id_rejected():
    with pytest.raises(UnparseableResponse):
        parse_verdict("ERROR: yes\nCORRECTED: something")


def test_parse_non_integer_id_rejected():
    with pytest.raises(UnparseableResponse):
        parse_verdict("ERROR: yes\nSENTENCE_ID: seven")


def test_parse_no_with_stray_fields_is_clean_no():
    text = "ERROR: no\nSENTENCE_ID: 4\nCORRECTED: ignored"
    assert parse_verdict(text) == Verdict(False, None, None)


def test_parse_correction_single_line():
    assert parse_correction("CORRECTED: He received ceftriaxone.") == \
        "He received ceftriaxone."


def test_parse_correction_picks_keyed_line_from_prose():
    text = ("Sentence 3 is wrong because of the dose.\n"
            "CORRECTED: Start insulin at bedtime.\nHope that helps.")
    assert parse_correction(text) == "Start insulin at bedtime."


def test_parse_correction_missing_rejected():
    with pytest.raises(UnparseableResponse):
        parse_correction("I would fix sentence 3.")


clean_text = st.text(
    alphabet=st.characters(blacklist_characters="\n\r",
                           blacklist_categories=("Cs", "Cc")),
    min_size=1, max_size=60).map(str.strip).filter(bool)


@st.composite
def verdicts(draw):
    if draw(st.booleans()):
        return Verdict(False, None, None)
    sid = draw(st.integers(min_value=0, max_value=50))
    corrected = draw(st.one_of(st.none(), clean_text))
    return Verdict(True, sid, corrected)


@given(v=verdicts())
def test_parse_render_duality(v):
    assert parse_verdict(format_verdict(v)) == v
