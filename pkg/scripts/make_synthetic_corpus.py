#!/usr/bin/env python3
"""Generate the bundled synthetic corpus and the scripted mock replies.

Writes train.csv (12 annotated notes), eval.csv (20 annotated notes), and
mock_script.jsonl (seed_tag -> reply) into the output directory. The
scenario table below fixes, per eval note, which cascade stage fires,
which sentence id is claimed, and how the three reason samples vote, so
the bundled fixtures exercise every merge rule and vote shape.

Everything is table-driven and deterministic: rerunning the script
reproduces the same bytes.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

# (history, symptom, finding, dx_ok, dx_bad, rx_ok, rx_bad, plan_ok, plan_bad)
CASES = [
    ("hypertension and type 2 diabetes",
     "crushing substernal chest pain radiating to the left arm",
     "ST elevation in the inferior leads",
     "an inferior ST elevation myocardial infarction", "acute viral pericarditis",
     "aspirin and ticagrelor with urgent angiography", "a six week course of ibuprofen",
     "admission to the coronary care unit", "discharge home with reassurance"),
    ("chronic obstructive pulmonary disease",
     "a productive cough with fever and rigors",
     "right lower lobe consolidation on the chest radiograph",
     "community acquired pneumonia", "an acute pulmonary embolism",
     "amoxicillin with clarithromycin", "therapeutic dose warfarin",
     "a repeat chest radiograph in six weeks", "no further chest imaging"),
    ("poorly controlled type 1 diabetes",
     "vomiting drowsiness and deep sighing respirations",
     "a blood glucose of 28 mmol/L with ketonaemia",
     "diabetic ketoacidosis", "hyperosmolar hyperglycaemic state",
     "an intravenous insulin infusion with fluid resuscitation", "oral metformin alone",
     "hourly glucose and potassium monitoring", "glucose checks once daily"),
    ("a documented penicillin allergy",
     "dysuria and suprapubic discomfort",
     "nitrites and leukocytes on urine dipstick",
     "an uncomplicated urinary tract infection", "interstitial cystitis",
     "nitrofurantoin for three days", "co-amoxiclav for three days",
     "safety netting with urine culture follow up", "cystoscopy within one week"),
    ("atrial fibrillation on warfarin",
     "sudden onset left sided weakness",
     "a dense left hemiparesis with facial droop",
     "an acute ischaemic stroke", "Bell's palsy",
     "urgent brain imaging before any thrombolysis decision",
     "immediate full dose aspirin before imaging",
     "admission to the stroke unit", "outpatient review in one month"),
    ("long standing gastro-oesophageal reflux",
     "progressive painless dysphagia and weight loss",
     "a distal oesophageal stricture on endoscopy with biopsies taken",
     "suspected oesophageal malignancy pending histology",
     "a benign peptic stricture requiring no follow up",
     "an urgent two week wait oncology referral",
     "a trial of antacids with review in six months",
     "staging computed tomography of the chest and abdomen", "no staging investigations"),
    ("stage 3 chronic kidney disease",
     "bilateral leg swelling and reduced urine output",
     "a creatinine rise to twice the baseline value",
     "acute on chronic kidney injury", "simple dependent oedema",
     "withholding nephrotoxic medications with fluid balance monitoring",
     "regular high dose ibuprofen for comfort",
     "daily renal function checks", "renal function checks every three months"),
    ("asthma since childhood",
     "an acute wheeze unresponsive to the usual inhaler",
     "a silent chest with oxygen saturations of 88 percent",
     "life threatening acute asthma", "a mild viral upper respiratory infection",
     "nebulised salbutamol with systemic corticosteroids",
     "a beta blocker for heart rate control",
     "continuous monitoring in the high dependency unit",
     "discharge with routine clinic follow up"),
    ("hypothyroidism on levothyroxine",
     "fatigue constipation and cold intolerance",
     "a thyroid stimulating hormone of 24 mIU/L",
     "under replaced hypothyroidism", "subclinical hyperthyroidism",
     "an increased levothyroxine dose", "a reduced levothyroxine dose",
     "repeat thyroid function tests in eight weeks", "no further thyroid testing"),
    ("alcohol related liver disease",
     "coffee ground vomiting and melaena",
     "a haemoglobin drop with tachycardia and hypotension",
     "an upper gastrointestinal bleed", "simple food poisoning",
     "urgent endoscopy after resuscitation", "outpatient endoscopy in four weeks",
     "crossmatching blood with large bore intravenous access",
     "oral iron supplementation alone"),
]

ERROR_SENTENCE = {"diagnosis": 3, "intervention": 4, "management": 5}
STAGE_TAGS = ["standard_detect", "cot_intervention", "cot_diagnosis", "cot_management"]

# Per eval note: which stage fires (None = cascade exhausts), whether the
# claimed id matches gold, and the reason-method vote shape.
# reason vote shapes: agree | two_corr | all_no | diff_id | abstain_one |
#                     abstain_two | split_ids
EVAL_SCENARIOS = [
    dict(error="intervention", stage=0, cot_id="gold", votes="agree"),
    dict(error="diagnosis", stage=1, cot_id="gold", votes="two_corr"),
    dict(error="management", stage=2, cot_id="gold", votes="all_no"),
    dict(error="intervention", stage=0, cot_id="wrong", votes="diff_id"),
    dict(error="diagnosis", stage=None, votes="agree"),
    dict(error=None, stage=None, votes="all_no"),
    dict(error=None, stage=1, cot_id=3, votes="all_no"),
    dict(error="management", stage="hallucinate_then_1", cot_id="gold", votes="agree"),
    dict(error="intervention", stage=0, cot_id="gold", votes="abstain_one"),
    dict(error="diagnosis", stage=1, cot_id="gold", votes="split_ids"),
    dict(error="management", stage=3, cot_id="gold", votes="agree"),
    dict(error=None, stage=None, votes="all_no"),
    dict(error="intervention", stage=2, cot_id="gold", votes="two_corr"),
    dict(error="diagnosis", stage=None, votes="all_no"),
    dict(error="diagnosis", stage=0, cot_id="gold", votes="all_no"),
    dict(error=None, stage=None, votes="all_no"),
    dict(error="management", stage=1, cot_id="gold", votes="diff_id"),
    dict(error="intervention", stage=0, cot_id="gold", votes="abstain_two"),
    dict(error="diagnosis", stage=2, cot_id="gold", votes="agree"),
    dict(error=None, stage=None, votes="agree_yes_on_clean"),
]

TRAIN_ERRORS = [None, "intervention", None, "diagnosis", None, "management"] * 2


def sentences_for(case: tuple, age: int, sex: str, error: str | None) -> tuple[list[str], str]:
    (history, symptom, finding, dx_ok, dx_bad, rx_ok, rx_bad,
     plan_ok, plan_bad) = case
    pron = "He" if sex == "man" else "She"
    dx = dx_bad if error == "diagnosis" else dx_ok
    rx = rx_bad if error == "intervention" else rx_ok
    plan = plan_bad if error == "management" else plan_ok
    lines = [
        f"Patient is a {age} year old {sex} with {history}.",
        f"{pron} presents with {symptom}.",
        f"Examination and initial tests show {finding}.",
        f"The working diagnosis is {dx}.",
        f"Initial treatment is {rx}.",
        f"The plan includes {plan}.",
    ]
    ok_lines = {
        3: f"The working diagnosis is {dx_ok}.",
        4: f"Initial treatment is {rx_ok}.",
        5: f"The plan includes {plan_ok}.",
    }
    gold_correction = ok_lines[ERROR_SENTENCE[error]] if error else ""
    return lines, gold_correction


def alt_phrasing(sentence: str) -> str:
    swaps = [
        ("The working diagnosis is", "The most likely diagnosis is"),
        ("Initial treatment is", "Treatment was started with"),
        ("The plan includes", "The agreed plan is"),
    ]
    for old, new in swaps:
        if sentence.startswith(old):
            return new + sentence[len(old):]
    return "Specifically, " + sentence[0].lower() + sentence[1:]


def numbered(lines: list[str]) -> str:
    return "\n".join(f"{i} {line}" for i, line in enumerate(lines))


def csv_quote(field: str) -> str:
    if any(c in field for c in ',"\n'):
        return '"' + field.replace('"', '""') + '"'
    return field


def write_csv(path: Path, rows: list[dict]) -> None:
    header = "note_id,text,error_flag,error_sentence_id,corrected_sentence"
    lines = [header]
    for r in rows:
        lines.append(",".join(csv_quote(str(r[k])) for k in
                              ("note_id", "text", "error_flag",
                               "error_sentence_id", "corrected_sentence")))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def yes(sentence_id: int, corrected: str | None = None) -> str:
    out = f"ERROR: yes\nSENTENCE_ID: {sentence_id}"
    if corrected:
        out += f"\nCORRECTED: {corrected}"
    return out


def build(out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    script: dict[str, str] = {}

    # --- training split ----------------------------------------------------
    train_rows = []
    for i, error in enumerate(TRAIN_ERRORS):
        case = CASES[i % len(CASES)]
        sex = "man" if i % 2 == 0 else "woman"
        lines, gold = sentences_for(case, 34 + 2 * i, sex, error)
        note_id = f"tr-{i:02d}"
        if error:
            train_rows.append(dict(note_id=note_id, text=numbered(lines),
                                   error_flag=1,
                                   error_sentence_id=ERROR_SENTENCE[error],
                                   corrected_sentence=gold))
            script[f"{note_id}|reason_gen"] = (
                f"The stated {error} conflicts with the presentation; the "
                f"corrected sentence is: {gold}")
        else:
            train_rows.append(dict(note_id=note_id, text=numbered(lines),
                                   error_flag=0, error_sentence_id=-1,
                                   corrected_sentence="NA"))
            script[f"{note_id}|reason_gen"] = (
                "The history, findings, diagnosis, treatment, and plan are "
                "mutually consistent for this presentation.")
    write_csv(out_dir / "train.csv", train_rows)

    # --- evaluation split --------------------------------------------------
    eval_rows = []
    for i, sc in enumerate(EVAL_SCENARIOS):
        case = CASES[(i + 3) % len(CASES)]
        sex = "woman" if i % 2 == 0 else "man"
        error = sc["error"]
        lines, gold = sentences_for(case, 31 + 2 * i, sex, error)
        note_id = f"val-{i:02d}"
        gold_id = ERROR_SENTENCE[error] if error else -1
        eval_rows.append(dict(
            note_id=note_id, text=numbered(lines),
            error_flag=1 if error else 0,
            error_sentence_id=gold_id,
            corrected_sentence=gold if error else "NA"))

        # cascade stage replies
        stage = sc["stage"]
        cot_id = None
        if stage is not None:
            if sc.get("cot_id") == "gold":
                cot_id = gold_id
            elif sc.get("cot_id") == "wrong":
                cot_id = gold_id - 1
            elif isinstance(sc.get("cot_id"), int):
                cot_id = sc["cot_id"]
        if stage == "hallucinate_then_1":
            script[f"{note_id}|{STAGE_TAGS[0]}"] = yes(42)
            script[f"{note_id}|{STAGE_TAGS[1]}"] = yes(cot_id)
        elif stage is not None:
            for t in range(stage):
                script[f"{note_id}|{STAGE_TAGS[t]}"] = "ERROR: no"
            script[f"{note_id}|{STAGE_TAGS[stage]}"] = yes(cot_id)
        else:
            for tag in STAGE_TAGS:
                script[f"{note_id}|{tag}"] = "ERROR: no"
        if cot_id is not None:
            correction = gold if (error and cot_id == gold_id) else alt_phrasing(lines[cot_id])
            script[f"{note_id}|correction"] = f"CORRECTED: {correction}"
            script[f"{note_id}|ensemble_correction"] = f"CORRECTED: {correction}"

        # reason-method sample replies
        votes = sc["votes"]
        vid = gold_id if gold_id >= 0 else 3
        if votes == "agree":
            replies = [yes(vid, gold or alt_phrasing(lines[vid]))] * 3
        elif votes == "two_corr":
            replies = [yes(vid, gold), yes(vid, alt_phrasing(lines[vid])), "ERROR: no"]
        elif votes == "all_no":
            replies = ["ERROR: no"] * 3
        elif votes == "diff_id":
            other = 2 if vid != 2 else 1
            replies = [yes(other, alt_phrasing(lines[other]))] * 2 + ["ERROR: no"]
        elif votes == "abstain_one":
            replies = [yes(vid, gold), "The note reads as accurate to me.", yes(vid, gold)]
            # the reminder retry must stay unparseable for a true abstention
            script[f"{note_id}|reason_icl|sample_2|retry1"] = "As said, it reads fine."
        elif votes == "abstain_two":
            replies = ["No structured answer here.", yes(vid, gold),
                       "Still no structured answer."]
            script[f"{note_id}|reason_icl|sample_1|retry1"] = "Cannot comply."
            script[f"{note_id}|reason_icl|sample_3|retry1"] = "Cannot comply."
        elif votes == "split_ids":
            lower = vid - 1
            replies = [yes(vid, gold), yes(lower, alt_phrasing(lines[lower])), "ERROR: no"]
        elif votes == "agree_yes_on_clean":
            replies = [yes(vid, alt_phrasing(lines[vid]))] * 2 + ["ERROR: no"]
        else:
            raise ValueError(f"unknown vote shape {votes!r}")
        for s, reply in enumerate(replies, start=1):
            script[f"{note_id}|reason_icl|sample_{s}"] = reply
    write_csv(out_dir / "eval.csv", eval_rows)

    with (out_dir / "mock_script.jsonl").open("w", encoding="utf-8") as fh:
        for tag in sorted(script):
            fh.write(json.dumps({"seed_tag": tag, "response": script[tag]},
                                sort_keys=True, ensure_ascii=False) + "\n")
    print(f"wrote {len(train_rows)} train notes, {len(eval_rows)} eval notes, "
          f"{len(script)} scripted replies -> {out_dir}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/synthetic")
    args = parser.parse_args()
    build(Path(args.out))


if __name__ == "__main__":
    main()
