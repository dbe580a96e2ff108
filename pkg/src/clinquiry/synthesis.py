"""Dataset construction: staged CDRD building, QA pairs, dual-agent dialogues.

CDRD construction runs in three stages (symptom extraction, disease
matching, logic completion).  Expert refinement happens between stages as
file-based checkpoints: each stage writes its candidate payload to a JSON
file with status ``awaiting_review``; a reviewer edits the payload in place
and flips the status to ``approved``, which unlocks the next stage.
"""

from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass
from pathlib import Path

from . import gateway
from .gateway import MalformedResponse
from .prompts import PromptLibrary
from .records import (
    CdrdEntry,
    DifferentialEntry,
    EvidenceDimension,
    PatientProfile,
    InquiryTurn,
    QaPair,
    Transcript,
    validate_entry,
)
from .template import TemplateDialect, TemplateError, ZH_DIALECT, parse_block

logger = logging.getLogger(__name__)

STAGE_SYMPTOMS = "symptoms"
STAGE_DISEASE_MATCH = "disease_match"
STAGE_LOGIC_COMPLETE = "logic_complete"
STAGES = (STAGE_SYMPTOMS, STAGE_DISEASE_MATCH, STAGE_LOGIC_COMPLETE)

STATUS_AWAITING = "awaiting_review"
STATUS_APPROVED = "approved"


class SynthesisError(Exception):
    pass


class CheckpointNotApproved(SynthesisError):
    def __init__(self, stage: str, status: str):
        super().__init__(f"stage '{stage}' checkpoint is '{status}', needs '{STATUS_APPROVED}'")
        self.stage = stage
        self.status = status


class DifferentialMismatch(SynthesisError):
    def __init__(self, symptom: str, extra: list[str], missing: list[str]):
        super().__init__(
            f"completion for '{symptom}' changed the differential set: "
            f"extra={extra}, missing={missing}"
        )
        self.symptom = symptom
        self.extra = extra
        self.missing = missing


class TemplateViolation(SynthesisError):
    def __init__(self, turn_index: int, reason: str):
        super().__init__(f"physician turn {turn_index} violates the template: {reason}")
        self.turn_index = turn_index


class DialogueTurnError(SynthesisError):
    def __init__(self, turn_index: int, cause: Exception):
        super().__init__(f"backend failure at turn {turn_index}: {cause}")
        self.turn_index = turn_index


@dataclass(frozen=True)
class GuidelineDoc:
    """One guideline chapter; the raw source for CDRD construction."""

    id: str
    chapter_text: str

    def __post_init__(self):
        if not self.chapter_text.strip():
            raise ValueError("chapter_text must be non-empty")


def load_guideline(path: str | Path) -> GuidelineDoc:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return GuidelineDoc(id=str(data["id"]), chapter_text=str(data["chapter_text"]))


@dataclass(frozen=True)
class StageCheckpoint:
    """Handle to a pause/edit/resume point between pipeline stages."""

    stage: str
    payload_path: Path
    status: str


def write_checkpoint(stage: str, guideline_id: str, payload: dict, path: str | Path) -> StageCheckpoint:
    path = Path(path)
    body = {
        "stage": stage,
        "status": STATUS_AWAITING,
        "guideline_id": guideline_id,
        "payload": payload,
    }
    path.write_text(json.dumps(body, ensure_ascii=False, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return StageCheckpoint(stage=stage, payload_path=path, status=STATUS_AWAITING)


def load_checkpoint(path: str | Path) -> tuple[StageCheckpoint, dict]:
    path = Path(path)
    body = json.loads(path.read_text(encoding="utf-8"))
    checkpoint = StageCheckpoint(
        stage=body["stage"], payload_path=path, status=body["status"]
    )
    return checkpoint, body["payload"]


def approve_checkpoint(path: str | Path) -> StageCheckpoint:
    """Mark a reviewed checkpoint as approved (after any manual payload edits)."""
    path = Path(path)
    body = json.loads(path.read_text(encoding="utf-8"))
    body["status"] = STATUS_APPROVED
    path.write_text(json.dumps(body, ensure_ascii=False, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return StageCheckpoint(stage=body["stage"], payload_path=path, status=STATUS_APPROVED)


def _require_approved(path: str | Path, stage: str) -> dict:
    checkpoint, payload = load_checkpoint(path)
    if checkpoint.stage != stage:
        raise SynthesisError(f"expected a '{stage}' checkpoint, got '{checkpoint.stage}'")
    if checkpoint.status != STATUS_APPROVED:
        raise CheckpointNotApproved(stage, checkpoint.status)
    return payload


_FENCE_RE = re.compile(r"^```[a-zA-Z]*\n|\n?```$")


def _parse_json_payload(text: str, expect: type):
    cleaned = _FENCE_RE.sub("", text.strip())
    try:
        value = json.loads(cleaned)
    except json.JSONDecodeError as exc:
        raise MalformedResponse(f"model output is not JSON: {exc.msg}: {text[:120]!r}") from exc
    if not isinstance(value, expect):
        raise MalformedResponse(f"expected a JSON {expect.__name__}, got {type(value).__name__}")
    return value


def _dedupe_case_insensitive(items: list[str]) -> list[str]:
    seen: set[str] = set()
    out = []
    for item in items:
        item = str(item).strip()
        key = item.casefold()
        if item and key not in seen:
            seen.add(key)
            out.append(item)
    return out


def extract_symptoms(
    guideline: GuidelineDoc,
    backend,
    *,
    model_id: str,
    out_path: str | Path,
    prompts: PromptLibrary | None = None,
) -> StageCheckpoint:
    """Stage one: candidate core symptoms, written for review."""
    prompts = prompts or PromptLibrary()
    text = prompts.render("cdrd_symptoms", guideline=guideline.chapter_text)
    response = backend.complete(gateway.request(model_id, [("user", text)]))
    symptoms = _parse_json_payload(response, list)
    symptoms = _dedupe_case_insensitive([str(s) for s in symptoms])
    return write_checkpoint(STAGE_SYMPTOMS, guideline.id, {"symptoms": symptoms}, out_path)


def match_diseases(
    guideline: GuidelineDoc,
    symptoms_checkpoint: str | Path,
    backend,
    *,
    model_id: str,
    out_path: str | Path,
    prompts: PromptLibrary | None = None,
) -> StageCheckpoint:
    """Stage two: a candidate disease list per approved symptom.

    A malformed response for one symptom is recorded in the payload's error
    list without aborting the other symptoms.
    """
    prompts = prompts or PromptLibrary()
    payload = _require_approved(symptoms_checkpoint, STAGE_SYMPTOMS)
    pairs, errors = [], []
    for symptom in payload["symptoms"]:
        text = prompts.render("cdrd_diseases", guideline=guideline.chapter_text, symptom=symptom)
        try:
            response = backend.complete(gateway.request(model_id, [("user", text)]))
            diseases = _dedupe_case_insensitive(
                [str(d) for d in _parse_json_payload(response, list)]
            )
            pairs.append({"symptom": symptom, "diseases": diseases})
        except (MalformedResponse, gateway.GatewayError) as exc:
            logger.warning("disease matching failed for %r: %s", symptom, exc)
            errors.append({"symptom": symptom, "error": str(exc)})
    return write_checkpoint(
        STAGE_DISEASE_MATCH, guideline.id, {"pairs": pairs, "errors": errors}, out_path
    )


def complete_logic(
    guideline: GuidelineDoc,
    disease_checkpoint: str | Path,
    backend,
    *,
    model_id: str,
    prompts: PromptLibrary | None = None,
) -> list[CdrdEntry]:
    """Stage three: full CDRD entries from approved (symptom, diseases) pairs.

    The completion must keep the differential set exactly as approved; any
    addition or omission raises DifferentialMismatch.
    """
    prompts = prompts or PromptLibrary()
    payload = _require_approved(disease_checkpoint, STAGE_DISEASE_MATCH)
    entries = []
    for pair in payload["pairs"]:
        symptom, approved = pair["symptom"], list(pair["diseases"])
        text = prompts.render(
            "cdrd_logic",
            guideline=guideline.chapter_text,
            symptom=symptom,
            disease_list=json.dumps(approved, ensure_ascii=False),
        )
        response = backend.complete(gateway.request(model_id, [("user", text)]))
        body = _parse_json_payload(response, dict)
        try:
            differentials = tuple(
                DifferentialEntry.from_dict(d) for d in body["differentials"]
            )
            dimensions = tuple(
                EvidenceDimension.from_dict(d) for d in body.get("evidence_dimensions", [])
            )
        except (KeyError, TypeError) as exc:
            raise MalformedResponse(f"completion missing fields: {exc!r}") from exc
        produced = [d.disease_name for d in differentials]
        extra = sorted(set(produced) - set(approved))
        missing = sorted(set(approved) - set(produced))
        if extra or missing:
            raise DifferentialMismatch(symptom, extra, missing)
        entry = CdrdEntry(
            entry_id=f"{guideline.id}:{symptom}",
            symptom=symptom,
            evidence_dimensions=dimensions,
            differentials=differentials,
            source_guideline_id=guideline.id,
        )
        report = validate_entry(entry)
        if not report.ok:
            detail = "; ".join(f"{v.path}: {v.message}" for v in report.violations)
            raise MalformedResponse(f"completed entry for '{symptom}' is invalid: {detail}")
        entries.append(entry)
    return entries


def synthesize_qa(
    entry: CdrdEntry,
    count: int,
    backend,
    *,
    model_id: str,
    prompts: PromptLibrary | None = None,
    seed: int = 0,
) -> list[QaPair]:
    """Rewrite sampled fragments into answers, then synthesize their questions.

    Fragments are sampled with replacement.  Answers that omit the seed
    symptom are rejected and logged, not silently kept.
    """
    prompts = prompts or PromptLibrary()
    if count < 0:
        raise ValueError("count must be >= 0")
    fragments = entry.fragments()
    if not fragments:
        raise ValueError("entry has no fragments")
    rng = random.Random(seed)
    pairs = []
    for _ in range(count):
        fragment_id, fragment_text = rng.choice(fragments)
        answer_prompt = prompts.render("qa_answer", fragment=fragment_text, symptom=entry.symptom)
        answer = backend.complete(gateway.request(model_id, [("user", answer_prompt)])).strip()
        if not answer:
            raise MalformedResponse(f"empty answer for fragment {fragment_id}")
        if entry.symptom not in answer:
            logger.warning(
                "rejected QA pair for %s: answer omits seed symptom %r", fragment_id, entry.symptom
            )
            continue
        question_prompt = prompts.render("qa_question", answer=answer, symptom=entry.symptom)
        question = backend.complete(gateway.request(model_id, [("user", question_prompt)])).strip()
        if not question:
            raise MalformedResponse(f"empty question for fragment {fragment_id}")
        pairs.append(QaPair(question=question, answer=answer, source_entry_fragment_id=fragment_id))
    return pairs


# --- dual-agent dialogue synthesis ---------------------------------------

_SEX_DISPLAY = {"male": "男", "female": "女", "other": "其他"}
_SPEAKER_PREFIX_RE = re.compile(r"^(患者|医生|Patient|Doctor)\s*[:：]\s*")


def render_profile(profile: PatientProfile) -> str:
    """Patient card text interpolated into simulator prompts."""
    lo, hi = profile.utterance_length_hint
    return "\n".join([
        f"年龄：{profile.age}岁",
        f"性别：{_SEX_DISPLAY.get(profile.sex, profile.sex)}",
        f"性格特征：{profile.personality}",
        f"语气特征：{profile.tone}",
        f"发言字数：每次发言约{lo}-{hi}字。",
        f"症状：{profile.symptoms}",
        f"诊断：{'、'.join(profile.ground_truth_diagnoses)}",
        f"其他信息：{profile.other_history}",
        f"第一句话：“{profile.opening_line}”",
    ])


def render_history(history: list[tuple[str, str]]) -> str:
    """Dialogue lines as the simulators see them: 患者/医生 prefixes."""
    labels = {"patient": "患者", "doctor": "医生"}
    return "\n".join(f"{labels[speaker]}：{text}" for speaker, text in history)


def strip_speaker_prefix(text: str) -> str:
    return _SPEAKER_PREFIX_RE.sub("", text.strip())


def _symptom_checklist(entry: CdrdEntry) -> str:
    return "\n".join(
        f"{i}.{d.name}：{d.direction}" for i, d in enumerate(entry.evidence_dimensions, 1)
    )


def _differential_text(entry: CdrdEntry) -> str:
    parts = []
    for i, diff in enumerate(entry.differentials, 1):
        lines = [f"{i}、{diff.disease_name}", "疾病特点"]
        lines += [f"* {feat}" for feat in diff.features]
        if diff.examinations:
            lines.append("辅助检查")
            lines += [f"* {exam}" for exam in diff.examinations]
        parts.append("\n".join(lines))
    return "\n\n".join(parts)


def physician_synthesis_request(
    entry: CdrdEntry,
    history: list[tuple[str, str]],
    latest_message: str,
    *,
    model_id: str,
    prompts: PromptLibrary,
) -> gateway.ChatRequest:
    text = prompts.render(
        "dialogue_physician",
        symptom_checklist=_symptom_checklist(entry),
        differential_diagnosis=_differential_text(entry),
        dialogue_history=render_history(history),
        latest_message=latest_message,
        symptom=entry.symptom,
    )
    return gateway.request(model_id, [("user", text)])


def patient_synthesis_request(
    profile: PatientProfile,
    history: list[tuple[str, str]],
    *,
    model_id: str,
    prompts: PromptLibrary,
) -> gateway.ChatRequest:
    text = prompts.render(
        "dialogue_patient",
        patient_profile=render_profile(profile),
        dialogue_history=render_history(history),
    )
    return gateway.request(model_id, [("user", text)])


_REASK_INSTRUCTION = (
    "输出不符合模板格式。请严格按照模板重新输出，七个字段的【】标记必须完整且各出现一次。"
)


def _complete_with_template_retry(
    backend, req: gateway.ChatRequest, dialect: TemplateDialect, turn_index: int
):
    """Parse a physician turn, allowing one corrective re-ask."""
    try:
        response = backend.complete(req)
    except gateway.GatewayError as exc:
        raise DialogueTurnError(turn_index, exc) from exc
    try:
        return parse_block(response, dialect)
    except TemplateError as first_error:
        retry = gateway.ChatRequest(
            model_id=req.model_id,
            messages=req.messages
            + (
                gateway.ChatMessage("assistant", response),
                gateway.ChatMessage("user", _REASK_INSTRUCTION),
            ),
            temperature=req.temperature,
            max_tokens=req.max_tokens,
            seed=req.seed,
        )
        try:
            second = backend.complete(retry)
        except gateway.GatewayError as exc:
            raise DialogueTurnError(turn_index, exc) from exc
        try:
            return parse_block(second, dialect)
        except TemplateError as exc:
            raise TemplateViolation(turn_index, str(first_error)) from exc


def synthesize_dialogue(
    profile: PatientProfile,
    cdrd: CdrdEntry,
    max_turns: int,
    physician_backend,
    patient_backend,
    *,
    physician_model: str = "physician",
    patient_model: str = "patient",
    prompts: PromptLibrary | None = None,
    dialect: TemplateDialect = ZH_DIALECT,
) -> Transcript:
    """Alternate the two simulators until max_turns or nothing left to collect.

    The transcript opens with the profile's scripted first line.  A physician
    output that fails template parsing gets one corrective re-ask; a second
    failure raises TemplateViolation with the turn index.
    """
    if max_turns < 1:
        raise ValueError("max_turns must be >= 1")
    prompts = prompts or PromptLibrary()
    history: list[tuple[str, str]] = [("patient", profile.opening_line)]
    turns: list[InquiryTurn] = []
    for turn_index in range(1, max_turns + 1):
        latest = history[-1][1]
        req = physician_synthesis_request(
            cdrd, history[:-1], latest, model_id=physician_model, prompts=prompts
        )
        block = _complete_with_template_retry(physician_backend, req, dialect, turn_index)
        turns.append(InquiryTurn(patient_utterance=latest, physician_block=block))
        history.append(("doctor", block.inquiry))
        if not block.info_to_collect.strip():
            break
        if turn_index == max_turns:
            break
        patient_req = patient_synthesis_request(
            profile, history, model_id=patient_model, prompts=prompts
        )
        try:
            reply = patient_backend.complete(patient_req)
        except gateway.GatewayError as exc:
            raise DialogueTurnError(turn_index, exc) from exc
        history.append(("patient", strip_speaker_prefix(reply)))
    return Transcript(profile_id=profile.profile_id, turns=tuple(turns), cdrd_id=cdrd.entry_id)
