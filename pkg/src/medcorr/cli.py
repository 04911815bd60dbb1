"""Command-line surface tying the modules into reproducible runs.

Subcommands: ingest, index, reasons build, run {cot,reason,ensemble},
evaluate, ablate. A single JSON config document (see configs/demo.json)
drives the pipeline commands; every output file carries a header comment
with the config hash and seed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import ablation as ablation_mod
from . import corpus, ensemble as ensemble_mod, evalkit, reason as reason_mod
from .config import RunConfig
from .cot import run_cot
from .errors import MedcorrError, MissingPrerequisite
from .icl import Retriever
from .predictions import (
    PredictionRow,
    header_comment,
    read_predictions,
    write_jsonl,
    write_predictions,
)
from .retrieval import build_index, load_index, save_index
from .scorer_client import neural_scorers

INDEX_FILE = "index.jsonl"
BANK_FILE = "reason_bank.jsonl"


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig.from_dict({})
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "jobs", None) is not None:
        cfg.jobs = args.jobs
    if getattr(args, "backend", None):
        cfg.backend.mode = args.backend
    return cfg


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_eval(cfg: RunConfig) -> corpus.Dataset:
    return corpus.load_dataset(cfg.eval_path)


def _load_train(cfg: RunConfig) -> corpus.Dataset:
    return corpus.load_dataset(cfg.train_path)


def _retriever(cfg: RunConfig) -> Retriever:
    index_path = _out(cfg) / INDEX_FILE
    if not index_path.is_file():
        raise MissingPrerequisite(
            f"vector index not found at {index_path}; run `medcorr index` first")
    index = load_index(index_path)
    train = _load_train(cfg)
    return Retriever(index, train, cfg.embedding_backend())


def _reference_rows(path: str | Path) -> list[PredictionRow]:
    """Accept either a prediction-format CSV or a dataset file as reference."""
    with Path(path).open("r", encoding="utf-8") as fh:
        head = fh.readline()
        if head.startswith("#"):
            head = fh.readline()
    if "text" in [c.strip() for c in head.strip().split(",")]:
        dataset = corpus.load_dataset(path)
        rows = []
        for note, ann in dataset.notes:
            if ann is None:
                raise MissingPrerequisite(
                    f"reference note {note.note_id!r} has no annotation")
            rows.append(PredictionRow.from_annotation(note.note_id, ann))
        return rows
    return read_predictions(path)


# --- commands ---------------------------------------------------------------

def cmd_ingest(args) -> int:
    fmt = corpus.FileFormat(args.format) if args.format else None
    dataset = corpus.load_dataset(args.input, fmt)
    violations = corpus.validate(dataset)
    print(f"loaded {len(dataset)} notes from {args.input}")
    for v in violations:
        print(f"violation: note {v.note_id}: {v.reason}")
    if args.out:
        out_fmt = corpus.FileFormat(args.out_format) if args.out_format else None
        corpus.write_dataset(dataset, args.out, out_fmt)
        print(f"wrote canonical dataset to {args.out}")
    return 1 if violations else 0


def cmd_index(args) -> int:
    cfg = _load_config(args)
    train = _load_train(cfg)
    backend = cfg.embedding_backend()
    index = build_index(train, backend)
    path = _out(cfg) / INDEX_FILE
    save_index(index, path)
    print(f"indexed {len(index)} notes (dim {index.dim}) -> {path}")
    return 0


def cmd_reasons_build(args) -> int:
    cfg = _load_config(args)
    if getattr(args, "train", None):
        cfg.train_path = args.train
    train = _load_train(cfg)
    path = _out(cfg) / BANK_FILE
    existing = reason_mod.ReasonBank.load(path) if path.is_file() else None
    bank = reason_mod.build_reason_bank(
        train, cfg.chat_backend(), cfg.prompt_library(), existing=existing,
        model_id=cfg.backend.model_id, max_tokens=cfg.max_tokens, jobs=cfg.jobs)
    bank.save(path)
    status = "complete" if bank.complete else f"INCOMPLETE ({len(bank.failures)} failures)"
    print(f"reason bank: {len(bank.entries)} entries, {status} -> {path}")
    return 0 if bank.complete else 1


def _run_cot(cfg: RunConfig) -> Path:
    dataset = _load_eval(cfg)
    retriever = _retriever(cfg)
    results = run_cot(dataset, retriever, cfg.cascade_config(),
                      cfg.chat_backend(), cfg.prompt_library(), jobs=cfg.jobs)
    out = _out(cfg)
    meta = cfg.meta() | {"method": "cot"}
    rows = [PredictionRow.from_verdict(r.note_id, r.verdict) for r in results]
    pred_path = out / "predictions_cot.csv"
    write_predictions(rows, pred_path, meta)
    write_jsonl([r.trace_dict() for r in results], out / "trace_cot.jsonl", meta)
    failed = sum(1 for r in results if r.verdict.provenance == "FAILED")
    print(f"cot: {len(rows)} predictions ({failed} failed) -> {pred_path}")
    return pred_path


def _run_reason(cfg: RunConfig) -> Path:
    dataset = _load_eval(cfg)
    retriever = _retriever(cfg)
    bank_path = _out(cfg) / BANK_FILE
    if not bank_path.is_file():
        raise MissingPrerequisite(
            f"reason bank not found at {bank_path}; run `medcorr reasons build` first")
    bank = reason_mod.ReasonBank.load(bank_path)
    results = reason_mod.run_reason(
        dataset, retriever, bank, cfg.retrieval_config(), cfg.chat_backend(),
        cfg.prompt_library(), cfg.seed, model_id=cfg.backend.model_id,
        temperature=cfg.reason_temperature, max_tokens=cfg.max_tokens,
        jobs=cfg.jobs)
    out = _out(cfg)
    meta = cfg.meta() | {"method": "reason"}
    rows = [PredictionRow.from_verdict(r.note_id, r.verdict) for r in results]
    pred_path = out / "predictions_reason.csv"
    write_predictions(rows, pred_path, meta)
    write_jsonl([r.trace_dict() for r in results], out / "trace_reason.jsonl", meta)
    failed = sum(1 for r in results if r.verdict.provenance == "FAILED")
    print(f"reason: {len(rows)} predictions ({failed} failed) -> {pred_path}")
    return pred_path


def _run_ensemble(cfg: RunConfig) -> Path:
    out = _out(cfg)
    cot_path = out / "predictions_cot.csv"
    reason_path = out / "predictions_reason.csv"
    if not cot_path.is_file():
        _run_cot(cfg)
    if not reason_path.is_file():
        _run_reason(cfg)
    cot_rows = read_predictions(cot_path)
    reason_rows = read_predictions(reason_path)
    dataset = _load_eval(cfg)
    retriever = _retriever(cfg)
    decisions = ensemble_mod.merge(
        [(r.note_id, r.to_verdict()) for r in cot_rows],
        [(r.note_id, r.to_verdict()) for r in reason_rows],
        dataset, retriever, cfg.chat_backend(), cfg.prompt_library(),
        cfg.retrieval_config(), model_id=cfg.backend.model_id)
    meta = cfg.meta() | {"method": "ensemble"}
    rows = [PredictionRow.from_verdict(d.note_id, d.final) for d in decisions]
    pred_path = out / "predictions_ensemble.csv"
    write_predictions(rows, pred_path, meta)
    write_jsonl([d.to_dict() for d in decisions], out / "audit_ensemble.jsonl", meta)
    print(f"ensemble: {len(rows)} predictions -> {pred_path}")
    return pred_path


def cmd_run(args) -> int:
    cfg = _load_config(args)
    runner = {"cot": _run_cot, "reason": _run_reason, "ensemble": _run_ensemble}
    runner[args.method](cfg)
    return 0


def cmd_evaluate(args) -> int:
    preds = read_predictions(args.pred)
    refs = _reference_rows(args.ref)
    scorers = evalkit.local_scorers()
    scorer_url = args.scorer_url
    meta = {"pred": Path(args.pred).name, "ref": Path(args.ref).name}
    if args.config:
        cfg = _load_config(args)
        meta.update(cfg.meta())
        scorer_url = scorer_url or cfg.scorer_url
    if scorer_url:
        scorers.update(neural_scorers(scorer_url))
    report = evalkit.build_report(preds, refs, scorers, dataset=args.dataset)
    text = evalkit.report_to_text(report)
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        evalkit.report_to_csv(report, out / "report.csv", meta)
        (out / "report.txt").write_text(
            header_comment(meta) + "\n" + text, encoding="utf-8")
        print(f"wrote {out / 'report.csv'} and {out / 'report.txt'}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    shots = [int(s) for s in args.shots.split(",") if s.strip()]
    modes = {"both": [True, False], "on": [True], "off": [False]}[args.cot]
    dataset = _load_eval(cfg)
    refs = _reference_rows(cfg.eval_path)
    retriever = _retriever(cfg)
    cells = ablation_mod.run_ablation(
        dataset, refs, retriever, cfg.cascade_config(), cfg.chat_backend(),
        cfg.prompt_library(), shots, modes)
    path = _out(cfg) / "ablation.csv"
    ablation_mod.write_ablation(cells, path, cfg.meta() | {"method": "ablate"})
    for cell in cells:
        tag = "cot" if cell.with_cot else "std"
        print(f"{cell.shots}-shot [{tag}] split {cell.n_correct}+{cell.n_incorrect}: "
              f"acc {cell.accuracy:.4f}")
    print(f"wrote {path}")
    return 0


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="medcorr",
        description="Detect and correct medical errors in clinical notes "
                    "with retrieval-augmented LLM pipelines.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--backend", choices=["live", "mock", "replay"],
                       help="override backend mode")
        p.add_argument("--seed", type=int, help="override RNG seed")
        p.add_argument("--jobs", type=int, help="max in-flight LLM requests")
        p.add_argument("--out", help="override output directory")

    p = sub.add_parser("ingest", help="load, validate, and canonicalize a dataset")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=["csv", "jsonl"])
    p.add_argument("--out")
    p.add_argument("--out-format", choices=["csv", "jsonl"])
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("index", help="embed the training split into a vector index")
    add_common(p)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("reasons", help="reason-bank maintenance")
    reasons_sub = p.add_subparsers(dest="reasons_command", required=True)
    pb = reasons_sub.add_parser("build", help="generate reasons for training notes")
    add_common(pb)
    pb.add_argument("--train", help="override the training split path")
    pb.set_defaults(func=cmd_reasons_build)

    p = sub.add_parser("run", help="run a prediction method over the eval split")
    p.add_argument("method", choices=["cot", "reason", "ensemble"])
    add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", help="score a prediction file against references")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--config", help="JSON run config (for header metadata)")
    p.add_argument("--out")
    p.add_argument("--dataset", default="custom")
    p.add_argument("--scorer-url", help="neural scorer service base URL")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="few-shot x CoT ablation grid")
    add_common(p)
    p.add_argument("--shots", default="2,3,4,5",
                   help="comma-separated shot counts")
    p.add_argument("--cot", choices=["both", "on", "off"], default="both")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MedcorrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
