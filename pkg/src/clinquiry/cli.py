"""Console entry points: synthesize, bench, dapo, review-service."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import dapo as dapo_mod
from . import records, synthesis
from .gateway import load_backend
from .icd import (
    BlockTable,
    DiagnosisSet,
    LlmMapper,
    LookupMapper,
    default_blocks,
    icd_precision,
    icd_recall,
)
from .prompts import PromptLibrary


def _prompts(args) -> PromptLibrary:
    return PromptLibrary(args.prompts) if getattr(args, "prompts", None) else PromptLibrary()


def _blocks(args) -> BlockTable:
    return BlockTable.from_file(args.blocks) if getattr(args, "blocks", None) else default_blocks()


# --- synthesize -----------------------------------------------------------


def synthesize_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="synthesize", description="Dataset construction pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p_cdrd = sub.add_parser("cdrd", help="run one CDRD construction stage")
    p_cdrd.add_argument("--guideline", required=True, help="guideline JSON file")
    p_cdrd.add_argument("--stage", required=True, choices=synthesis.STAGES)
    p_cdrd.add_argument("--backend", required=True, help="backend config JSON")
    p_cdrd.add_argument("--out", required=True, help="output directory")
    p_cdrd.add_argument("--symptoms-checkpoint", help="approved stage-one checkpoint")
    p_cdrd.add_argument("--diseases-checkpoint", help="approved stage-two checkpoint")
    p_cdrd.add_argument("--prompts", help="prompt template directory override")

    p_approve = sub.add_parser("approve", help="mark a reviewed checkpoint as approved")
    p_approve.add_argument("--checkpoint", required=True)

    p_qa = sub.add_parser("qa", help="synthesize QA pairs from CDRD entries")
    p_qa.add_argument("--entries", required=True, help="CDRD record file")
    p_qa.add_argument("--count", type=int, required=True, help="pairs per entry")
    p_qa.add_argument("--backend", required=True)
    p_qa.add_argument("--out", required=True)
    p_qa.add_argument("--seed", type=int, default=0)
    p_qa.add_argument("--prompts")

    p_dlg = sub.add_parser("dialogue", help="dual-agent inquiry dialogue synthesis")
    p_dlg.add_argument("--profiles", required=True, help="patient profile record file")
    p_dlg.add_argument("--cdrd", required=True, help="CDRD record file")
    p_dlg.add_argument("--physician", required=True, help="physician backend config")
    p_dlg.add_argument("--patient", required=True, help="patient backend config")
    p_dlg.add_argument("--out", required=True)
    p_dlg.add_argument("--max-turns", type=int, default=10)
    p_dlg.add_argument("--prompts")

    args = parser.parse_args(argv)

    if args.command == "approve":
        checkpoint = synthesis.approve_checkpoint(args.checkpoint)
        print(f"approved {checkpoint.stage} checkpoint: {checkpoint.payload_path}")
        return 0

    prompts = _prompts(args)
    if args.command == "cdrd":
        guideline = synthesis.load_guideline(args.guideline)
        backend, model_id = load_backend(args.backend)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.stage == synthesis.STAGE_SYMPTOMS:
            out = out_dir / f"{guideline.id}.symptoms.json"
            synthesis.extract_symptoms(
                guideline, backend, model_id=model_id, out_path=out, prompts=prompts
            )
            print(f"wrote {out} (awaiting review)")
        elif args.stage == synthesis.STAGE_DISEASE_MATCH:
            src = args.symptoms_checkpoint or out_dir / f"{guideline.id}.symptoms.json"
            out = out_dir / f"{guideline.id}.diseases.json"
            synthesis.match_diseases(
                guideline, src, backend, model_id=model_id, out_path=out, prompts=prompts
            )
            print(f"wrote {out} (awaiting review)")
        else:
            src = args.diseases_checkpoint or out_dir / f"{guideline.id}.diseases.json"
            entries = synthesis.complete_logic(
                guideline, src, backend, model_id=model_id, prompts=prompts
            )
            out = out_dir / f"{guideline.id}.cdrd.jsonl"
            records.store_records(entries, out)
            print(f"wrote {len(entries)} entries to {out}")
        return 0

    if args.command == "qa":
        entries = records.load_records(args.entries, records.KIND_CDRD)
        backend, model_id = load_backend(args.backend)
        pairs = []
        for entry in entries:
            pairs.extend(
                synthesis.synthesize_qa(
                    entry, args.count, backend, model_id=model_id, prompts=prompts, seed=args.seed
                )
            )
        records.store_records(pairs, args.out)
        print(f"wrote {len(pairs)} QA pairs to {args.out}")
        return 0

    if args.command == "dialogue":
        profiles = records.load_records(args.profiles, records.KIND_PROFILE)
        entries = records.load_records(args.cdrd, records.KIND_CDRD)
        physician, physician_model = load_backend(args.physician)
        patient, patient_model = load_backend(args.patient)
        transcripts = []
        for profile, entry in zip(profiles, entries):
            transcripts.append(
                synthesis.synthesize_dialogue(
                    profile,
                    entry,
                    args.max_turns,
                    physician,
                    patient,
                    physician_model=physician_model,
                    patient_model=patient_model,
                    prompts=prompts,
                )
            )
        records.store_records(transcripts, args.out)
        print(f"wrote {len(transcripts)} transcripts to {args.out}")
        return 0

    return 2


# --- bench ----------------------------------------------------------------


def _load_mapper(args):
    if args.mapper:
        return LookupMapper.from_file(args.mapper)
    if args.mapper_backend:
        backend, model_id = load_backend(args.mapper_backend)
        return LlmMapper(backend, model_id)
    raise SystemExit("bench run needs --mapper <table.json> or --mapper-backend <cfg>")


def bench_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="bench", description="Diagnostic inquiry benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the patient-simulator benchmark")
    p_run.add_argument("--cases", required=True, help="bench case record file")
    p_run.add_argument("--physician", required=True, help="model-under-test backend config")
    p_run.add_argument("--patient", required=True, help="patient simulator backend config")
    p_run.add_argument("--rounds", type=int, default=5)
    p_run.add_argument("--parallelism", type=int, default=1)
    p_run.add_argument("--mapper", help="name->codes lookup table JSON")
    p_run.add_argument("--mapper-backend", help="LLM mapper backend config")
    p_run.add_argument("--blocks", help="ICD block table TSV override")
    p_run.add_argument("--prompts")
    p_run.add_argument("--out", required=True, help="output directory")

    p_score = sub.add_parser("score", help="offline ICD scoring of code files")
    p_score.add_argument("--pred", required=True, help='JSONL of {"id", "codes"}')
    p_score.add_argument("--truth", required=True, help='JSONL of {"id", "codes"}')
    p_score.add_argument("--blocks")

    p_sat = sub.add_parser("satisfaction-items", help="generate blinded A/B review items")
    p_sat.add_argument("--records", required=True, help="inquiry record file")
    p_sat.add_argument("--harness", required=True, help="harness backend config")
    p_sat.add_argument(
        "--models", required=True, nargs="+", metavar="ID=CFG",
        help="baseline backends as id=config pairs",
    )
    p_sat.add_argument("--out", required=True)
    p_sat.add_argument("--seed", type=int, default=0)
    p_sat.add_argument("--prompts")

    args = parser.parse_args(argv)

    if args.command == "run":
        cases = records.load_records(args.cases, bench_mod.KIND_BENCH_CASE)
        physician, physician_model = load_backend(args.physician)
        patient, patient_model = load_backend(args.patient)
        mapper = _load_mapper(args)
        report = bench_mod.run_bench(
            cases,
            physician,
            patient,
            mapper,
            rounds=args.rounds,
            parallelism=args.parallelism,
            prompts=_prompts(args),
            blocks=_blocks(args),
            physician_model=physician_model,
            patient_model=patient_model,
        )
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.txt").write_text(
            bench_mod.emit_report(report, "table-text"), encoding="utf-8"
        )
        (out_dir / "report.json").write_text(
            bench_mod.emit_report(report, "record-file"), encoding="utf-8"
        )
        print(bench_mod.emit_report(report, "table-text"))
        try:
            bench_mod.verify_report(report)
        except AssertionError as exc:
            print(f"report invariant violated: {exc}", file=sys.stderr)
            return 1
        return 0

    if args.command == "score":
        blocks = _blocks(args)
        preds = {r["id"]: r["codes"] for _, r in records.read_jsonl(args.pred)}
        truths = {r["id"]: r["codes"] for _, r in records.read_jsonl(args.truth)}
        recalls, precisions = [], []
        print(f"{'id':<24} {'recall':>8} {'prec':>8}")
        for case_id in sorted(truths):
            pred = DiagnosisSet.from_raw(preds.get(case_id, []))
            truth = DiagnosisSet.from_raw(truths[case_id])
            recall = icd_recall(pred, truth, blocks)
            recalls.append(recall)
            if pred.codes:
                precision = icd_precision(pred, truth, blocks)
                precisions.append(precision)
                print(f"{case_id:<24} {recall:>8.4f} {precision:>8.4f}")
            else:
                print(f"{case_id:<24} {recall:>8.4f} {'-':>8}")
        mean_r = sum(recalls) / len(recalls) if recalls else 0.0
        print(f"{'mean':<24} {mean_r:>8.4f}", end="")
        if precisions:
            print(f" {sum(precisions) / len(precisions):>8.4f}")
        else:
            print(f" {'-':>8}")
        return 0

    if args.command == "satisfaction-items":
        dialogue_records = records.load_records(args.records, records.KIND_INQUIRY_RECORD)
        harness, harness_model = load_backend(args.harness)
        baselines = {}
        for spec in args.models:
            baseline_id, _, cfg_path = spec.partition("=")
            if not cfg_path:
                raise SystemExit(f"--models entries must be ID=CFG, got '{spec}'")
            baselines[baseline_id] = load_backend(cfg_path)
        items = bench_mod.generate_satisfaction_items(
            dialogue_records,
            harness,
            baselines,
            harness_model=harness_model,
            prompts=_prompts(args),
            seed=args.seed,
        )
        records.write_jsonl((item.to_dict() for item in items), args.out)
        expected = len(dialogue_records) * len(baselines)
        print(f"wrote {len(items)}/{expected} items to {args.out} (seed={args.seed})")
        return 0

    return 2


# --- dapo -----------------------------------------------------------------


def dapo_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="dapo", description="Clipped policy objective demo")
    sub = parser.add_subparsers(dest="command", required=True)
    p_demo = sub.add_parser("demo", help="objective, gradient check, and ascent curve")
    p_demo.add_argument("--groups", type=int, default=4)
    p_demo.add_argument("--seed", type=int, default=0)
    p_demo.add_argument("--states", type=int, default=3)
    p_demo.add_argument("--actions", type=int, default=2)
    p_demo.add_argument("--horizon", type=int, default=5)
    p_demo.add_argument("--group-size", type=int, default=4)
    p_demo.add_argument("--check-instances", type=int, default=20)
    p_demo.add_argument("--lr", type=float, default=1e-4)
    p_demo.add_argument("--steps", type=int, default=10)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    cfg = dapo_mod.ClipConfig()
    policy, batch = dapo_mod.make_instance(
        rng,
        num_states=args.states,
        num_actions=args.actions,
        horizon=args.horizon,
        num_groups=args.groups,
        group_size=args.group_size,
    )
    value = dapo_mod.objective(policy, batch, cfg)
    print(f"objective          {value:+.10f}")
    print(f"clip bounds        [{1 - cfg.eps_low:.2f}, {1 + cfg.eps_high:.2f}]")

    print(f"\ngradient check on {args.check_instances} random instances:")
    worst = 0.0
    for i in range(args.check_instances):
        inst_policy, inst_batch = dapo_mod.make_instance(
            np.random.default_rng(args.seed + 1 + i),
            num_states=args.states,
            num_actions=args.actions,
            horizon=args.horizon,
            num_groups=args.groups,
            group_size=args.group_size,
        )
        err, checked = dapo_mod.gradient_check(inst_policy, inst_batch, cfg)
        worst = max(worst, err)
    status = "OK" if worst < 1e-5 else "FAIL"
    print(f"max relative error {worst:.3e}  [{status}]")

    print(f"\nascent curve (lr={args.lr}, {args.steps} steps):")
    curve = dapo_mod.ascent_curve(policy, batch, cfg, learning_rate=args.lr, steps=args.steps)
    print(f"{'step':>4} {'objective':>16} {'delta':>12}")
    for step, val in enumerate(curve):
        delta = "" if step == 0 else f"{val - curve[step - 1]:+.3e}"
        print(f"{step:>4} {val:>16.10f} {delta:>12}")
    return 0 if worst < 1e-5 else 1


# --- review-service -------------------------------------------------------


def review_service_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="review-service", description="Pairwise review service")
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8390)
    p_serve.add_argument("--data-dir", help="persistence directory (in-memory if omitted)")
    p_serve.add_argument("--claim-ttl", type=float, default=900.0)

    p_agg = sub.add_parser("aggregate", help="report win/loss/tie per baseline")
    p_agg.add_argument("--data-dir", required=True)
    p_agg.add_argument("--baseline", help="single baseline id (default: all)")

    args = parser.parse_args(argv)

    from .review import ReviewStore
    from .review_api import create_app

    if args.command == "serve":
        import uvicorn

        store = ReviewStore(args.data_dir, claim_ttl=args.claim_ttl)
        uvicorn.run(create_app(store), host=args.host, port=args.port, log_level="warning")
        return 0

    if args.command == "aggregate":
        store = ReviewStore(args.data_dir)
        baselines = [args.baseline] if args.baseline else store.baselines()
        print(f"{'baseline':<24} {'win':>4} {'loss':>4} {'tie':>4} {'win% (excl/incl ties)':>24}")
        for baseline in baselines:
            agg = store.aggregate(baseline)
            print(
                f"{baseline:<24} {agg.wins:>4} {agg.losses:>4} {agg.ties:>4} "
                f"{agg.win_rate_excluding_ties:>11.4f} {agg.win_rate_including_ties:>11.4f}"
            )
        return 0

    return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(bench_main())
