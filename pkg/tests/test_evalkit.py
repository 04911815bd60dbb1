import math
import random
from collections import Counter

import pytest
import requests
from hypothesis import given, strategies as st

from medcorr.errors import EmptySet, MisalignedIds, ScorerUnavailable
from medcorr.evalkit import (
    EvaluationReport,
    accuracy_flags,
    accuracy_spans,
    build_report,
    local_scorers,
    nlg_note_score,
    report_to_csv,
    report_to_text,
    rouge1_f1,
    rouge_tokens,
)
from medcorr.predictions import PredictionRow
from medcorr.scorer_client import NeuralScorerClient, neural_scorers


def row(nid, flag, sid=-1, corrected="NA"):
    return PredictionRow(nid, flag, sid, corrected)


# --- accuracies ----------------------------------------------------------------

def test_accuracy_flags_all_match():
    preds = [row(f"n{i}", i % 2 == 0) for i in range(6)]
    assert accuracy_flags(preds, list(preds)) == 1.0


def test_accuracy_flags_half():
    preds = [row(f"n{i}", True, 0, "x") for i in range(10)]
    refs = [row(f"n{i}", i < 5, 0 if i < 5 else -1, "x" if i < 5 else "NA")
            for i in range(10)]
    assert accuracy_flags(preds, refs) == 0.5


def test_accuracy_empty_set():
    with pytest.raises(EmptySet):
        accuracy_flags([], [])


def test_accuracy_misaligned():
    with pytest.raises(MisalignedIds):
        accuracy_flags([row("a", False)], [row("b", False)])


def test_accuracy_spans_rules():
    preds = [row("a", True, 3, "x"), row("b", False), row("c", True, 3, "x"),
             row("d", True, 2, "x")]
    refs = [row("a", True, 3, "y"), row("b", False), row("c", True, 5, "y"),
            row("d", False)]
    # a: 3==3 hit; b: -1==-1 hit; c: 3!=5 miss; d: 2 vs -1 miss
    assert accuracy_spans(preds, refs) == 0.5


def test_accuracy_monotone_in_extra_correct_note():
    preds = [row("a", True, 1, "x"), row("b", False, -1)]
    refs = [row("a", True, 2, "y"), row("b", False, -1)]
    base = accuracy_spans(preds, refs)
    better = accuracy_spans(preds + [row("c", True, 4, "z")],
                            refs + [row("c", True, 4, "z")])
    assert better >= base


# --- rouge -----------------------------------------------------------------------

def test_rouge_identical():
    assert rouge1_f1("the patient has sepsis", "the patient has sepsis") == 1.0


def test_rouge_worked_example():
    # 3 shared tokens of 4 each side: P = R = 3/4, F1 = 0.75
    assert rouge1_f1("the patient has sepsis", "the patient has pneumonia") == 0.75


def test_rouge_disjoint():
    assert rouge1_f1("alpha beta", "gamma delta") == 0.0


def test_rouge_empty_rules():
    assert rouge1_f1("", "") == 1.0
    assert rouge1_f1("", "words here") == 0.0
    assert rouge1_f1("words here", "") == 0.0
    assert rouge1_f1("...", "!!!") == 1.0  # both empty after normalization


def test_rouge_normalization():
    assert rouge1_f1("The patient, has SEPSIS.", "the patient has sepsis") == 1.0


def test_rouge_clipped_counts():
    # overlap is min(3,1)=1: P=1/3, R=1, F1=0.5
    assert rouge1_f1("a a a", "a") == 0.5


def _oracle_rouge(candidate, reference):
    """Independent clipped-unigram F1 with explicit loops."""
    cand, ref = rouge_tokens(candidate), rouge_tokens(reference)
    if not cand and not ref:
        return 1.0
    if not cand or not ref:
        return 0.0
    overlap = 0
    ref_counts = {}
    for t in ref:
        ref_counts[t] = ref_counts.get(t, 0) + 1
    cand_counts = {}
    for t in cand:
        cand_counts[t] = cand_counts.get(t, 0) + 1
    for t, c in cand_counts.items():
        overlap += min(c, ref_counts.get(t, 0))
    p, r = overlap / len(cand), overlap / len(ref)
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def test_rouge_matches_oracle_on_random_pairs():
    vocab = ["the", "patient", "has", "sepsis", "fever", "mg", "daily", "on",
             "renal", "dose", "iv", "oral"]
    rng = random.Random(4242)
    for _ in range(200):
        cand = " ".join(rng.choices(vocab, k=rng.randint(0, 12)))
        ref = " ".join(rng.choices(vocab, k=rng.randint(0, 12)))
        assert abs(rouge1_f1(cand, ref) - _oracle_rouge(cand, ref)) < 1e-9


words = st.lists(st.sampled_from(["aa", "bb", "cc", "dd"]), max_size=8).map(" ".join)


@given(a=words, b=words)
def test_rouge_symmetry_and_range(a, b):
    assert rouge1_f1(a, b) == pytest.approx(rouge1_f1(b, a), abs=1e-12)
    assert 0.0 <= rouge1_f1(a, b) <= 1.0


# --- nlg policy -------------------------------------------------------------------

def test_nlg_policy_both_no_error():
    got = nlg_note_score(row("a", False), row("a", False), local_scorers())
    assert got == {"rouge1": 1.0}


def test_nlg_policy_one_sided():
    assert nlg_note_score(row("a", False), row("a", True, 1, "x"),
                          local_scorers()) == {"rouge1": 0.0}
    assert nlg_note_score(row("a", True, 1, "x"), row("a", False),
                          local_scorers()) == {"rouge1": 0.0}


def test_nlg_policy_both_corrections():
    got = nlg_note_score(row("a", True, 1, "the patient has sepsis"),
                         row("a", True, 1, "the patient has pneumonia"),
                         local_scorers())
    assert got == {"rouge1": 0.75}


# --- report -----------------------------------------------------------------------

def full_scorers():
    return {"rouge1": rouge1_f1,
            "bertscore": lambda c, r: 1.0 if c == r else 0.25,
            "bleurt": lambda c, r: 1.0 if c == r else 0.5}


def test_report_perfect_predictions_all_ones():
    rows = [row("a", True, 2, "fixed sentence"), row("b", False)]
    report = build_report(rows, list(rows), full_scorers(), dataset="toy")
    assert report.acc_subtask1 == 1.0
    assert report.acc_subtask2 == 1.0
    assert report.rouge1 == 1.0
    assert report.bertscore == 1.0
    assert report.bleurt == 1.0
    assert report.aggregate == 1.0
    assert report.aggregate_composite == 1.0
    assert report.unavailable == ()


FIXTURE_PREDS = [
    row("n1", True, 2, "he was given ceftriaxone for pneumonia"),
    row("n2", True, 1, "the patient has sepsis"),
    row("n3", False),
    row("n4", False),
    row("n5", True, 3, "foo bar"),
    row("n6", True, 5, "start insulin at bedtime"),
]
FIXTURE_REFS = [
    row("n1", True, 2, "he was given ceftriaxone for pneumonia"),
    row("n2", True, 1, "the patient has pneumonia"),
    row("n3", True, 0, "needs a correction"),
    row("n4", False),
    row("n5", False),
    row("n6", True, 4, "start insulin at bedtime"),
]


def test_report_hand_computed_six_note_fixture():
    """Hand-worked values: flags match on n1,n2,n4,n6 (4/6); spans on
    n1,n2,n4 (3/6); per-note R1 = 1, .75, 0, 1, 0, 1; AGC gates on span."""
    report = build_report(FIXTURE_PREDS, FIXTURE_REFS, dataset="fixture")
    assert report.acc_subtask1 == pytest.approx(4 / 6, abs=1e-12)
    assert report.acc_subtask2 == pytest.approx(3 / 6, abs=1e-12)
    assert report.rouge1 == pytest.approx(3.75 / 6, abs=1e-12)
    assert report.aggregate == pytest.approx(3.75 / 6, abs=1e-12)  # degraded to R1
    assert report.aggregate_composite == pytest.approx(2.75 / 6, abs=1e-12)
    assert report.bertscore is None and report.bleurt is None
    assert set(report.unavailable) == {"bertscore", "bleurt"}


def test_report_aggregate_is_mean_of_columns():
    report = build_report(FIXTURE_PREDS, FIXTURE_REFS, full_scorers())
    assert report.aggregate == pytest.approx(
        (report.rouge1 + report.bertscore + report.bleurt) / 3, abs=1e-12)


def test_report_degrades_when_scorer_raises():
    def down(c, r):
        raise ScorerUnavailable("bertscore", "service offline")

    scorers = {"rouge1": rouge1_f1, "bertscore": down}
    report = build_report(FIXTURE_PREDS, FIXTURE_REFS, scorers)
    assert "bertscore" in report.unavailable
    assert report.bertscore is None
    assert report.aggregate == report.rouge1


def test_report_serialization(tmp_path):
    report = build_report(FIXTURE_PREDS, FIXTURE_REFS, dataset="fixture")
    path = tmp_path / "report.csv"
    report_to_csv(report, path, meta={"seed": 1})
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# seed=1")
    assert lines[1].split(",")[:4] == ["dataset", "n_notes", "acc_subtask1",
                                      "acc_subtask2"]
    assert "unavailable=bertscore,bleurt" in lines[-1]
    text = report_to_text(report)
    assert "Acc(1)" in text and "AGC" in text and "0.6667" in text


def test_report_ensemble_accuracy_columns_match_cot():
    # merged predictions always reuse cot flags/ids, so accuracy columns agree
    cot = [row("a", True, 1, "alpha beta"), row("b", False),
           row("c", True, 2, "gamma")]
    merged = [row("a", True, 1, "alpha beta gamma"), row("b", False),
              row("c", True, 2, "delta")]
    refs = [row("a", True, 1, "alpha beta"), row("b", True, 0, "x"),
            row("c", True, 3, "gamma")]
    r_cot = build_report(cot, refs)
    r_merged = build_report(merged, refs)
    assert r_cot.acc_subtask1 == r_merged.acc_subtask1
    assert r_cot.acc_subtask2 == r_merged.acc_subtask2


# --- neural scorer client ----------------------------------------------------------

class FakeResponse:
    def __init__(self, status_code, payload=None):
        self.status_code = status_code
        self._payload = payload

    def json(self):
        return self._payload


def test_neural_scorer_client_batches_and_caches():
    posted = []

    def post(url, json=None, timeout=None):
        posted.append(json)
        n = len(json["pairs"])
        return FakeResponse(200, {"scores": {"bertscore": [0.5] * n},
                                  "models": {"bertscore": "pinned-v1"}})

    client = NeuralScorerClient("http://scorer.test", post=post)
    scorers = neural_scorers("http://scorer.test", metrics=("bertscore",),
                             client=client)
    metric = scorers["bertscore"]
    metric.prefetch([("a", "b"), ("c", "d"), ("a", "b")])
    assert metric("a", "b") == 0.5
    assert metric("c", "d") == 0.5
    assert len(posted) == 1  # one batched call, duplicates deduped
    assert len(posted[0]["pairs"]) == 2


def test_neural_scorer_client_unreachable():
    def post(url, json=None, timeout=None):
        raise requests.ConnectionError("no route to host")

    client = NeuralScorerClient("http://scorer.test", post=post)
    with pytest.raises(ScorerUnavailable):
        client.score([("a", "b")], ["bertscore"])


def test_neural_scorer_misaligned_response():
    def post(url, json=None, timeout=None):
        return FakeResponse(200, {"scores": {"bleurt": [0.5]},
                                  "models": {"bleurt": "v"}})

    client = NeuralScorerClient("http://scorer.test", post=post)
    with pytest.raises(ScorerUnavailable):
        client.score([("a", "b"), ("c", "d")], ["bleurt"])


def test_report_with_remote_scorers_prefetches_batch():
    posted = []

    def post(url, json=None, timeout=None):
        posted.append(json)
        n = len(json["pairs"])
        metric = json["metrics"][0]
        return FakeResponse(200, {"scores": {metric: [0.8] * n},
                                  "models": {metric: "pinned"}})

    client = NeuralScorerClient("http://scorer.test", post=post)
    scorers = {**local_scorers(),
               **neural_scorers("http://scorer.test", client=client)}
    report = build_report(FIXTURE_PREDS, FIXTURE_REFS, scorers)
    assert report.bertscore is not None and report.bleurt is not None
    assert report.unavailable == ()
    assert len(posted) == 2  # one batch per neural metric
