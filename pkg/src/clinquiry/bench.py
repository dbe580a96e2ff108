"""Patient-simulator benchmark: dialogue rounds, ICD scoring, stratified reports.

A case pits the model under test (physician role) against a patient
simulator seeded with an anonymized profile.  After a fixed number of
physician turns (default five) the final turn's diagnosis section is parsed,
mapped to ICD-10 codes, and scored against the profile's ground truth with
hierarchical recall/precision.  Reports stratify by department and by
ground-truth diagnosis count.
"""

from __future__ import annotations

import json
import logging
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

from . import gateway, records
from .icd import BlockTable, DiagnosisSet, EmptyPrediction, default_blocks, icd_precision, icd_recall, map_names_to_codes
from .prompts import PromptLibrary
from .records import InquiryRecord, InquiryTurn, PatientProfile, Transcript, Violation, ValidationReport
from .review import ReviewItem
from .synthesis import render_history, render_profile, strip_speaker_prefix
from .template import (
    MissingField,
    ReasoningBlock,
    TemplateError,
    extract_diagnosis_names,
    extract_marked_sections,
)

logger = logging.getLogger(__name__)

KIND_BENCH_CASE = "bench_case"

# The evaluated model answers with exactly two marked sections per turn.
BENCH_MARKERS = {"diagnoses": "【诊断】", "reply": "【回复】"}

_BENCH_REASK = "输出不符合格式要求。请严格按照格式重新输出，必须包含【诊断】和【回复】两个字段。"


@dataclass(frozen=True)
class BenchCase:
    """One benchmark unit: a patient profile plus its department stratum."""

    kind = KIND_BENCH_CASE

    case_id: str
    profile: PatientProfile
    department: str

    @property
    def diagnosis_count(self) -> int:
        return len(self.profile.ground_truth_diagnoses)

    def to_dict(self) -> dict:
        return {
            "kind": KIND_BENCH_CASE,
            "case_id": self.case_id,
            "department": self.department,
            "profile": self.profile.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BenchCase":
        return cls(
            case_id=str(data["case_id"]),
            department=str(data.get("department", "")),
            profile=PatientProfile.from_dict(data["profile"]),
        )


def validate_bench_case(case: BenchCase) -> ValidationReport:
    v = list(records.validate_profile(case.profile).violations)
    if not case.case_id.strip():
        v.append(Violation("case_id.empty", "case_id", "case id must be non-empty"))
    return ValidationReport(tuple(v))


records.register_kind(KIND_BENCH_CASE, BenchCase, BenchCase.from_dict, validate_bench_case)


@dataclass(frozen=True)
class CaseFailure:
    stage: str  # "dialogue turn <k>" | "extraction" | "mapping" | "scoring"
    message: str

    def to_dict(self) -> dict:
        return {"stage": self.stage, "message": self.message}


@dataclass
class RunRecord:
    """Everything one case produced, scored or failed."""

    case_id: str
    model_id: str
    department: str
    diagnosis_count: int
    transcript: Transcript
    predicted: DiagnosisSet | None = None
    truth: DiagnosisSet | None = None
    recall: float | None = None
    precision: float | None = None
    precision_error: str | None = None
    failure: CaseFailure | None = None
    timing: float = 0.0

    def to_dict(self, *, include_timing: bool = False) -> dict:
        out = {
            "case_id": self.case_id,
            "model_id": self.model_id,
            "department": self.department,
            "diagnosis_count": self.diagnosis_count,
            "transcript": self.transcript.to_dict(),
            "predicted": self.predicted.to_dict() if self.predicted else None,
            "truth": self.truth.to_dict() if self.truth else None,
            "recall": self.recall,
            "precision": self.precision,
            "precision_error": self.precision_error,
            "failure": self.failure.to_dict() if self.failure else None,
        }
        if include_timing:
            out["timing"] = self.timing
        return out


def physician_bench_request(
    history: list[tuple[str, str]], *, model_id: str, prompts: PromptLibrary
) -> gateway.ChatRequest:
    text = prompts.render("bench_physician", dialogue_history=render_history(history))
    return gateway.request(model_id, [("user", text)])


def patient_bench_request(
    profile: PatientProfile, history: list[tuple[str, str]], *, model_id: str, prompts: PromptLibrary
) -> gateway.ChatRequest:
    text = prompts.render(
        "bench_patient",
        patient_profile=render_profile(profile),
        dialogue_history=render_history(history),
    )
    return gateway.request(model_id, [("user", text)])


def parse_physician_turn(response: str) -> ReasoningBlock:
    """Two-field bench output folded into the standard block shape.

    Only the diagnoses and inquiry sections are populated; the evaluated
    model does not expose its intermediate reasoning fields.
    """
    sections = extract_marked_sections(strip_speaker_prefix(response), BENCH_MARKERS)
    return ReasoningBlock(diagnoses=sections["diagnoses"], inquiry=sections["reply"])


def _physician_turn_with_retry(backend, req: gateway.ChatRequest) -> ReasoningBlock:
    response = backend.complete(req)
    try:
        return parse_physician_turn(response)
    except TemplateError:
        retry = gateway.ChatRequest(
            model_id=req.model_id,
            messages=req.messages
            + (
                gateway.ChatMessage("assistant", response),
                gateway.ChatMessage("user", _BENCH_REASK),
            ),
            temperature=req.temperature,
            max_tokens=req.max_tokens,
            seed=req.seed,
        )
        return parse_physician_turn(backend.complete(retry))


def run_case(
    case: BenchCase,
    physician_backend,
    patient_backend,
    mapper,
    *,
    rounds: int = 5,
    prompts: PromptLibrary | None = None,
    blocks: BlockTable | None = None,
    physician_model: str = "physician",
    patient_model: str = "patient",
) -> RunRecord:
    """Run one case end to end; failures are recorded, never raised."""
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    prompts = prompts or PromptLibrary()
    blocks = blocks or default_blocks()
    started = time.monotonic()
    record = RunRecord(
        case_id=case.case_id,
        model_id=physician_model,
        department=case.department,
        diagnosis_count=case.diagnosis_count,
        transcript=Transcript(profile_id=case.profile.profile_id, turns=()),
    )

    history: list[tuple[str, str]] = [("patient", case.profile.opening_line)]
    turns: list[InquiryTurn] = []
    final_block: ReasoningBlock | None = None
    for k in range(1, rounds + 1):
        req = physician_bench_request(history, model_id=physician_model, prompts=prompts)
        try:
            block = _physician_turn_with_retry(physician_backend, req)
        except (TemplateError, gateway.GatewayError) as exc:
            record.failure = CaseFailure(f"dialogue turn {k}", str(exc))
            break
        turns.append(InquiryTurn(patient_utterance=history[-1][1], physician_block=block))
        history.append(("doctor", block.inquiry))
        final_block = block
        if k == rounds:
            break
        patient_req = patient_bench_request(
            case.profile, history, model_id=patient_model, prompts=prompts
        )
        try:
            reply = patient_backend.complete(patient_req)
        except gateway.GatewayError as exc:
            record.failure = CaseFailure(f"dialogue turn {k}", f"patient simulator: {exc}")
            break
        history.append(("patient", strip_speaker_prefix(reply)))

    record.transcript = Transcript(
        profile_id=case.profile.profile_id, turns=tuple(turns)
    )
    if record.failure is None and final_block is not None:
        record = _score_case(record, case, final_block, mapper, blocks)
    record.timing = time.monotonic() - started
    return record


def _score_case(
    record: RunRecord, case: BenchCase, final_block: ReasoningBlock, mapper, blocks: BlockTable
) -> RunRecord:
    try:
        names = extract_diagnosis_names(final_block)
    except Exception as exc:  # noqa: BLE001 - stage attribution
        record.failure = CaseFailure("extraction", str(exc))
        return record
    try:
        predicted = map_names_to_codes(names, mapper)
        truth = map_names_to_codes(list(case.profile.ground_truth_diagnoses), mapper)
    except Exception as exc:  # noqa: BLE001
        record.failure = CaseFailure("mapping", str(exc))
        return record
    record.predicted = predicted
    record.truth = truth
    if truth.unresolved or not truth.codes:
        record.failure = CaseFailure(
            "mapping", f"unresolved ground-truth diagnoses: {list(truth.unresolved)}"
        )
        return record
    try:
        record.recall = icd_recall(predicted, truth, blocks)
    except Exception as exc:  # noqa: BLE001
        record.failure = CaseFailure("scoring", str(exc))
        return record
    try:
        record.precision = icd_precision(predicted, truth, blocks)
    except EmptyPrediction as exc:
        record.precision_error = str(exc)
    return record


@dataclass(frozen=True)
class StratumStats:
    n_recall: int
    recall_mean: float | None
    n_precision: int
    precision_mean: float | None

    def to_dict(self) -> dict:
        return {
            "n_recall": self.n_recall,
            "recall_mean": self.recall_mean,
            "n_precision": self.n_precision,
            "precision_mean": self.precision_mean,
        }


def _stats(group: Sequence[RunRecord]) -> StratumStats:
    recalls = [r.recall for r in group if r.recall is not None]
    precisions = [r.precision for r in group if r.precision is not None]
    return StratumStats(
        n_recall=len(recalls),
        recall_mean=sum(recalls) / len(recalls) if recalls else None,
        n_precision=len(precisions),
        precision_mean=sum(precisions) / len(precisions) if precisions else None,
    )


@dataclass(frozen=True)
class Report:
    """Aggregates over scored cases; failed cases are listed, not averaged."""

    model_id: str
    records: tuple[RunRecord, ...]
    failures: tuple[RunRecord, ...]
    overall: StratumStats
    by_department: dict[str, StratumStats]
    by_diagnosis_count: dict[int, StratumStats]

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "overall": self.overall.to_dict(),
            "by_department": {k: v.to_dict() for k, v in sorted(self.by_department.items())},
            "by_diagnosis_count": {
                str(k): v.to_dict() for k, v in sorted(self.by_diagnosis_count.items())
            },
            "cases": [r.to_dict() for r in self.records],
            "failures": [r.to_dict() for r in self.failures],
        }


def build_report(run_records: Sequence[RunRecord], model_id: str) -> Report:
    scored = tuple(sorted((r for r in run_records if r.failure is None), key=lambda r: r.case_id))
    failed = tuple(sorted((r for r in run_records if r.failure is not None), key=lambda r: r.case_id))
    departments = sorted({r.department for r in scored})
    counts = sorted({r.diagnosis_count for r in scored})
    return Report(
        model_id=model_id,
        records=scored,
        failures=failed,
        overall=_stats(scored),
        by_department={d: _stats([r for r in scored if r.department == d]) for d in departments},
        by_diagnosis_count={
            c: _stats([r for r in scored if r.diagnosis_count == c]) for c in counts
        },
    )


def verify_report(report: Report, tol: float = 1e-12) -> None:
    """Recompute every stratum from case records; raise on any drift."""

    def check(expected: StratumStats, group: Sequence[RunRecord], label: str) -> None:
        actual = _stats(group)
        for attr in ("recall_mean", "precision_mean"):
            a, b = getattr(expected, attr), getattr(actual, attr)
            if (a is None) != (b is None) or (a is not None and abs(a - b) > tol):
                raise AssertionError(f"{label}.{attr}: report {a} != recomputed {b}")
        if (expected.n_recall, expected.n_precision) != (actual.n_recall, actual.n_precision):
            raise AssertionError(f"{label}: stratum sizes drifted")

    check(report.overall, report.records, "overall")
    for dept, stats in report.by_department.items():
        check(stats, [r for r in report.records if r.department == dept], f"department {dept}")
    for count, stats in report.by_diagnosis_count.items():
        check(stats, [r for r in report.records if r.diagnosis_count == count], f"diag={count}")
    if sum(s.n_recall for s in report.by_department.values()) != len(report.records):
        raise AssertionError("department stratum sizes do not sum to scored case count")


def run_bench(
    cases: Sequence[BenchCase],
    physician_backend,
    patient_backend,
    mapper,
    *,
    rounds: int = 5,
    parallelism: int = 1,
    prompts: PromptLibrary | None = None,
    blocks: BlockTable | None = None,
    physician_model: str = "physician",
    patient_model: str = "patient",
) -> Report:
    """Run cases concurrently; the report is independent of scheduling."""
    prompts = prompts or PromptLibrary()
    blocks = blocks or default_blocks()

    def one(case: BenchCase) -> RunRecord:
        return run_case(
            case,
            physician_backend,
            patient_backend,
            mapper,
            rounds=rounds,
            prompts=prompts,
            blocks=blocks,
            physician_model=physician_model,
            patient_model=patient_model,
        )

    if parallelism <= 1 or len(cases) <= 1:
        results = [one(c) for c in cases]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(one, cases))
    return build_report(results, physician_model)


def emit_report(report: Report, fmt: str = "table-text") -> str:
    """Render a report as aligned text or as a machine-readable JSON document."""
    if fmt == "record-file":
        return json.dumps(report.to_dict(), ensure_ascii=False, sort_keys=True, indent=2) + "\n"
    if fmt != "table-text":
        raise ValueError(f"unknown report format '{fmt}'")

    def fmt_mean(value: float | None) -> str:
        return f"{value:.4f}" if value is not None else "-"

    def row(label: str, stats: StratumStats) -> str:
        return (
            f"{label:<24} {stats.n_recall:>4} {fmt_mean(stats.recall_mean):>8} "
            f"{fmt_mean(stats.precision_mean):>8}"
        )

    lines = [
        f"Model: {report.model_id}",
        f"Cases: {len(report.records)} scored, {len(report.failures)} failed",
        "",
        "== Overall ==",
        f"{'stratum':<24} {'n':>4} {'recall':>8} {'prec':>8}",
        row("all", report.overall),
        "",
        "== By department ==",
    ]
    for dept, stats in sorted(report.by_department.items()):
        lines.append(row(dept or "(none)", stats))
    lines += ["", "== By diagnosis count =="]
    for count, stats in sorted(report.by_diagnosis_count.items()):
        lines.append(row(f"diag={count}", stats))
    if report.failures:
        lines += ["", "== Failures =="]
        for rec in report.failures:
            assert rec.failure is not None
            lines.append(f"{rec.case_id:<24} {rec.failure.stage}: {rec.failure.message}")
    return "\n".join(lines) + "\n"


# --- satisfaction item generation -----------------------------------------

_RESPONSE_MARKERS = ("【回复1】", "【回复2】", "【回复3】")


def _first_response(text: str) -> str:
    start = text.find(_RESPONSE_MARKERS[0])
    if start < 0:
        return text.strip()
    start += len(_RESPONSE_MARKERS[0])
    end = len(text)
    for marker in _RESPONSE_MARKERS[1:]:
        pos = text.find(marker, start)
        if pos >= 0:
            end = min(end, pos)
    return text[start:end].strip()


def satisfaction_request(
    record: InquiryRecord, *, model_id: str, prompts: PromptLibrary
) -> gateway.ChatRequest:
    text = prompts.render(
        "satisfaction_response",
        sex=record.sex or "未知",
        age=record.age or "未知",
        dialogue_history=render_history(list(record.history)),
        latest_message=record.latest_message,
    )
    return gateway.request(model_id, [("user", text)])


def generate_satisfaction_items(
    dialogue_records: Sequence[InquiryRecord],
    harness_backend,
    baselines: Mapping[str, tuple[object, str]],
    *,
    harness_model: str,
    prompts: PromptLibrary | None = None,
    seed: int = 0,
) -> list[ReviewItem]:
    """One blinded A/B item per (record, baseline): harness response vs baseline.

    Candidate order is randomized with the recorded seed; per-item generation
    failures are logged and skipped rather than aborting the batch.
    """
    prompts = prompts or PromptLibrary()
    rng = random.Random(seed)
    items: list[ReviewItem] = []
    for record in dialogue_records:
        try:
            harness_text = _first_response(
                harness_backend.complete(
                    satisfaction_request(record, model_id=harness_model, prompts=prompts)
                )
            )
        except gateway.GatewayError as exc:
            logger.warning("harness generation failed for %s: %s", record.record_id, exc)
            continue
        for baseline_id in sorted(baselines):
            backend, model_id = baselines[baseline_id]
            harness_first = rng.random() < 0.5
            try:
                baseline_text = _first_response(
                    backend.complete(
                        satisfaction_request(record, model_id=model_id, prompts=prompts)
                    )
                )
            except gateway.GatewayError as exc:
                logger.warning(
                    "baseline %s generation failed for %s: %s", baseline_id, record.record_id, exc
                )
                continue
            candidate_a, candidate_b = (
                (harness_text, baseline_text) if harness_first else (baseline_text, harness_text)
            )
            items.append(
                ReviewItem(
                    item_id=f"{record.record_id}::{baseline_id}",
                    history=render_history(list(record.history)),
                    latest_message=record.latest_message,
                    candidate_a=candidate_a,
                    candidate_b=candidate_b,
                    harness_side="A" if harness_first else "B",
                    baseline_model_id=baseline_id,
                    seed=seed,
                )
            )
    return items
