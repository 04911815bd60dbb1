import pytest
from hypothesis import given, strategies as st

from medcorr import corpus
from medcorr.corpus import (
    ClinicalNote,
    Dataset,
    DatasetName,
    ErrorAnnotation,
    FileFormat,
    Sentence,
    load_dataset,
    parse_sentences,
    validate,
    write_dataset,
)
from medcorr.errors import (
    DuplicateNoteId,
    MalformedRow,
    MissingColumn,
    NonContiguousIds,
    UnnumberedLine,
)

CSV_HEADER = "note_id,text,error_flag,error_sentence_id,corrected_sentence\n"


def test_parse_sentences_two_lines():
    assert parse_sentences("0 He is 45.\n1 BP 120/80.") == [
        Sentence(0, "He is 45."), Sentence(1, "BP 120/80.")]


def test_parse_sentences_singleton():
    assert parse_sentences("0 Stable.") == [Sentence(0, "Stable.")]


def test_parse_sentences_skips_blank_lines_and_strips_edges():
    got = parse_sentences("  0   He  is 45.  \n\n1 Fine.\n")
    assert got == [Sentence(0, "He  is 45."), Sentence(1, "Fine.")]


def test_parse_sentences_non_contiguous():
    with pytest.raises(NonContiguousIds):
        parse_sentences("0 A.\n2 B.")


def test_parse_sentences_out_of_order():
    with pytest.raises(NonContiguousIds):
        parse_sentences("1 B.\n0 A.")


@pytest.mark.parametrize("bad", ["just prose", "x3 thing", "7", "3  "])
def test_parse_sentences_unnumbered(bad):
    with pytest.raises(UnnumberedLine):
        parse_sentences(bad)


def _write(tmp_path, body: str, name="data.csv"):
    path = tmp_path / name
    path.write_text(body, encoding="utf-8")
    return path


def test_load_csv_counts_and_values(tmp_path):
    body = CSV_HEADER + (
        'n1,"0 He is 45.\n1 Given drug A.",1,1,Given drug B.\n'
        "n2,0 All fine.,0,-1,NA\n"
        "n3,0 Unlabeled.,,-1,NA\n")
    ds = load_dataset(_write(tmp_path, body), FileFormat.CSV)
    assert len(ds) == 3
    note, ann = ds.notes[0]
    assert note.sentences == (Sentence(0, "He is 45."), Sentence(1, "Given drug A."))
    assert ann == ErrorAnnotation(True, 1, "Given drug B.")
    assert ds.notes[1][1] == ErrorAnnotation(False, None, None)
    assert ds.notes[2][1] is None  # unannotated test-style row


def test_load_csv_header_only(tmp_path):
    ds = load_dataset(_write(tmp_path, CSV_HEADER), FileFormat.CSV)
    assert len(ds) == 0


def test_load_flag_set_but_sentinel_id_rejected(tmp_path):
    body = CSV_HEADER + "n1,0 Text.,1,-1,Fixed.\n"
    with pytest.raises(MalformedRow):
        load_dataset(_write(tmp_path, body), FileFormat.CSV)


def test_load_flag_set_id_out_of_range(tmp_path):
    body = CSV_HEADER + "n1,0 Text.,1,4,Fixed.\n"
    with pytest.raises(MalformedRow):
        load_dataset(_write(tmp_path, body), FileFormat.CSV)


def test_load_no_error_with_correction_rejected(tmp_path):
    body = CSV_HEADER + "n1,0 Text.,0,-1,Something.\n"
    with pytest.raises(MalformedRow):
        load_dataset(_write(tmp_path, body), FileFormat.CSV)


def test_load_flag_set_without_correction_rejected(tmp_path):
    body = CSV_HEADER + "n1,0 Text.,1,0,NA\n"
    with pytest.raises(MalformedRow):
        load_dataset(_write(tmp_path, body), FileFormat.CSV)


def test_load_duplicate_note_id(tmp_path):
    body = CSV_HEADER + "n1,0 A.,0,-1,NA\nn1,0 B.,0,-1,NA\n"
    with pytest.raises(DuplicateNoteId):
        load_dataset(_write(tmp_path, body), FileFormat.CSV)


def test_load_missing_column(tmp_path):
    body = "note_id,text\na,0 X.\n"
    with pytest.raises(MissingColumn):
        load_dataset(_write(tmp_path, body), FileFormat.CSV)


def test_load_jsonl_malformed_json(tmp_path):
    path = _write(tmp_path, "{not json}\n", name="data.jsonl")
    with pytest.raises(MalformedRow):
        load_dataset(path, FileFormat.JSONL)


def test_load_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "absent.csv", FileFormat.CSV)


def _sample_dataset() -> Dataset:
    n1 = ClinicalNote.from_numbered_text(
        "a-1", '0 He said "hello", twice.\n1 Given 40 mg, daily.')
    n2 = ClinicalNote.from_numbered_text("b-2", "0 All clear.")
    n3 = ClinicalNote.from_numbered_text("c-3", "0 Unlabeled note.")
    return Dataset(DatasetName.CUSTOM, [
        (n1, ErrorAnnotation(True, 1, 'Given 20 mg, "as needed".')),
        (n2, ErrorAnnotation(False, None, None)),
        (n3, None),
    ])


@pytest.mark.parametrize("fmt", [FileFormat.CSV, FileFormat.JSONL])
def test_roundtrip(tmp_path, fmt):
    ds = _sample_dataset()
    path = tmp_path / f"ds.{fmt.value}"
    write_dataset(ds, path, fmt)
    back = load_dataset(path, fmt)
    assert back.notes == ds.notes


note_ids = st.from_regex(r"[a-z]{1,4}-[0-9]{1,3}", fullmatch=True)
sentence_texts = st.text(
    alphabet=st.characters(blacklist_characters="\n\r",
                           blacklist_categories=("Cs", "Cc")),
    min_size=1, max_size=40).map(str.strip).filter(bool)


@st.composite
def datasets(draw):
    n = draw(st.integers(min_value=1, max_value=5))
    ids = draw(st.lists(note_ids, min_size=n, max_size=n, unique=True))
    notes = []
    for nid in ids:
        texts = draw(st.lists(sentence_texts, min_size=1, max_size=4))
        note = ClinicalNote.from_numbered_text(
            nid, "\n".join(f"{i} {t}" for i, t in enumerate(texts)))
        kind = draw(st.integers(min_value=0, max_value=2))
        if kind == 0:
            ann = None
        elif kind == 1:
            ann = ErrorAnnotation(False, None, None)
        else:
            corrected = draw(sentence_texts.filter(lambda s: s != corpus.NA))
            sid = draw(st.integers(min_value=0, max_value=len(texts) - 1))
            ann = ErrorAnnotation(True, sid, corrected)
        notes.append((note, ann))
    return Dataset(DatasetName.CUSTOM, notes)


@given(ds=datasets(), fmt=st.sampled_from(list(FileFormat)))
def test_roundtrip_property(tmp_path_factory, ds, fmt):
    path = tmp_path_factory.mktemp("rt") / f"ds.{fmt.value}"
    write_dataset(ds, path, fmt)
    back = load_dataset(path, fmt)
    assert back.notes == ds.notes
    assert len(back) == len(ds)


def test_validate_clean():
    ds = _sample_dataset()
    assert validate(ds) == []


def test_validate_flag_without_correction():
    note = ClinicalNote.from_numbered_text("n1", "0 X.")
    ds = Dataset(DatasetName.CUSTOM, [(note, ErrorAnnotation(True, 0, None))])
    violations = validate(ds)
    assert len(violations) == 1
    assert violations[0].note_id == "n1"
    assert "corrected_sentence" in violations[0].reason


def test_validate_duplicate_note_id():
    note = ClinicalNote.from_numbered_text("n1", "0 X.")
    ds = Dataset(DatasetName.CUSTOM, [
        (note, ErrorAnnotation(False, None, None)),
        (note, ErrorAnnotation(False, None, None))])
    assert [v.reason for v in validate(ds)] == ["duplicate note_id"]


def test_validate_out_of_range_span():
    note = ClinicalNote.from_numbered_text("n1", "0 X.")
    ds = Dataset(DatasetName.CUSTOM, [(note, ErrorAnnotation(True, 5, "Y."))])
    assert any("out of range" in v.reason for v in validate(ds))


def test_numbered_text_reconstruction():
    raw = "0 He is 45.\n1   BP 120/80."
    note = ClinicalNote.from_numbered_text("n", raw)
    assert note.numbered_text() == "0 He is 45.\n1 BP 120/80."
