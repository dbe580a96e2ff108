"""Dataset record types: CDRD entries, QA pairs, patient profiles, transcripts.

Records persist as line-delimited JSON (one record per line, UTF-8) with a
top-level ``kind`` discriminator.  Texts are stored verbatim (Chinese or
English) with no normalization beyond trimming at validation boundaries.
Field names are fixed here and documented in docs/formats.md.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator

from .template import ReasoningBlock, validate_block

KIND_CDRD = "cdrd"
KIND_QA = "qa"
KIND_PROFILE = "profile"
KIND_TRANSCRIPT = "transcript"
KIND_INQUIRY_RECORD = "inquiry_record"

SEX_VALUES = ("male", "female", "other")
_SEX_ALIASES = {"男": "male", "女": "female", "m": "male", "f": "female"}

_FRAGMENT_ID_RE = re.compile(r".+#[ED]#\d+\Z")


class RecordError(Exception):
    """Base class for record loading/storage failures."""


class RecordParseError(RecordError):
    def __init__(self, path, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no


class RecordKindError(RecordError):
    def __init__(self, path, index: int, line_no: int, found: str, expected: str):
        super().__init__(
            f"{path}: record {index} (line {line_no}) has kind '{found}', expected '{expected}'"
        )
        self.index = index
        self.line_no = line_no
        self.found = found
        self.expected = expected


class RecordValidationError(RecordError):
    def __init__(self, path, index: int, report: "ValidationReport"):
        lines = "; ".join(f"{v.path}: {v.message}" for v in report.violations)
        super().__init__(f"{path}: record {index} invalid: {lines}")
        self.index = index
        self.report = report


class StorageError(RecordError):
    def __init__(self, path, cause: Exception):
        super().__init__(f"failed to write {path}: {cause}")
        self.path = path


@dataclass(frozen=True)
class Violation:
    code: str
    path: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> set[str]:
        return {v.code for v in self.violations}


@dataclass(frozen=True)
class EvidenceDimension:
    """One axis of clinical information to collect (e.g. attack frequency)."""

    name: str
    direction: str

    def to_dict(self) -> dict:
        return {"name": self.name, "direction": self.direction}

    @classmethod
    def from_dict(cls, data: dict) -> "EvidenceDimension":
        return cls(name=str(data["name"]), direction=str(data["direction"]))


@dataclass(frozen=True)
class DifferentialEntry:
    """A candidate disease with its distinguishing features and workup."""

    disease_name: str
    features: tuple[str, ...]
    examinations: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "disease_name": self.disease_name,
            "features": list(self.features),
            "examinations": list(self.examinations),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DifferentialEntry":
        return cls(
            disease_name=str(data["disease_name"]),
            features=tuple(str(x) for x in data.get("features", [])),
            examinations=tuple(str(x) for x in data.get("examinations", [])),
        )


@dataclass(frozen=True)
class CdrdEntry:
    """One reasoning unit: core symptom, evidence dimensions, differentials."""

    kind = KIND_CDRD

    entry_id: str
    symptom: str
    evidence_dimensions: tuple[EvidenceDimension, ...]
    differentials: tuple[DifferentialEntry, ...]
    source_guideline_id: str = ""

    def to_dict(self) -> dict:
        return {
            "kind": KIND_CDRD,
            "entry_id": self.entry_id,
            "symptom": self.symptom,
            "evidence_dimensions": [d.to_dict() for d in self.evidence_dimensions],
            "differentials": [d.to_dict() for d in self.differentials],
            "source_guideline_id": self.source_guideline_id,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CdrdEntry":
        return cls(
            entry_id=str(data["entry_id"]),
            symptom=str(data["symptom"]),
            evidence_dimensions=tuple(
                EvidenceDimension.from_dict(d) for d in data.get("evidence_dimensions", [])
            ),
            differentials=tuple(
                DifferentialEntry.from_dict(d) for d in data.get("differentials", [])
            ),
            source_guideline_id=str(data.get("source_guideline_id", "")),
        )

    def fragments(self) -> list[tuple[str, str]]:
        """Addressable content pieces as (fragment_id, text).

        Ids follow ``<entry_id>#<section>#<index>`` with section E for
        evidence dimensions and D for differentials.
        """
        out = []
        for i, dim in enumerate(self.evidence_dimensions):
            out.append((f"{self.entry_id}#E#{i}", f"{dim.name}：{dim.direction}"))
        for i, diff in enumerate(self.differentials):
            text = diff.disease_name + "：" + "；".join(diff.features)
            if diff.examinations:
                text += "。检查：" + "；".join(diff.examinations)
            out.append((f"{self.entry_id}#D#{i}", text))
        return out


@dataclass(frozen=True)
class QaPair:
    """A synthesized question/answer pair traceable to one CDRD fragment."""

    kind = KIND_QA

    question: str
    answer: str
    source_entry_fragment_id: str

    def to_dict(self) -> dict:
        return {
            "kind": KIND_QA,
            "question": self.question,
            "answer": self.answer,
            "source_entry_fragment_id": self.source_entry_fragment_id,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QaPair":
        return cls(
            question=str(data["question"]),
            answer=str(data["answer"]),
            source_entry_fragment_id=str(data["source_entry_fragment_id"]),
        )


@dataclass(frozen=True)
class PatientProfile:
    """Anonymized case card driving the patient simulator."""

    kind = KIND_PROFILE

    profile_id: str
    age: int
    sex: str
    personality: str
    tone: str
    utterance_length_hint: tuple[int, int]
    symptoms: str
    ground_truth_diagnoses: tuple[str, ...]
    other_history: str
    opening_line: str

    def to_dict(self) -> dict:
        return {
            "kind": KIND_PROFILE,
            "profile_id": self.profile_id,
            "age": self.age,
            "sex": self.sex,
            "personality": self.personality,
            "tone": self.tone,
            "utterance_length_hint": list(self.utterance_length_hint),
            "symptoms": self.symptoms,
            "ground_truth_diagnoses": list(self.ground_truth_diagnoses),
            "other_history": self.other_history,
            "opening_line": self.opening_line,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PatientProfile":
        raw_sex = str(data.get("sex", "other")).strip()
        sex = _SEX_ALIASES.get(raw_sex.lower(), raw_sex.lower())
        hint = data.get("utterance_length_hint", [0, 0])
        return cls(
            profile_id=str(data["profile_id"]),
            age=int(data["age"]),
            sex=sex,
            personality=str(data.get("personality", "")),
            tone=str(data.get("tone", "")),
            utterance_length_hint=(int(hint[0]), int(hint[1])),
            symptoms=str(data.get("symptoms", "")),
            ground_truth_diagnoses=tuple(str(x) for x in data.get("ground_truth_diagnoses", [])),
            other_history=str(data.get("other_history", "")),
            opening_line=str(data["opening_line"]),
        )


@dataclass(frozen=True)
class InquiryTurn:
    """One patient query plus the physician's structured reasoning/inquiry."""

    patient_utterance: str
    physician_block: ReasoningBlock

    def to_dict(self) -> dict:
        return {
            "patient_utterance": self.patient_utterance,
            "physician_block": self.physician_block.as_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "InquiryTurn":
        return cls(
            patient_utterance=str(data["patient_utterance"]),
            physician_block=ReasoningBlock.from_dict(data["physician_block"]),
        )


@dataclass(frozen=True)
class Transcript:
    """An alternating patient/physician dialogue; the RL trajectory unit."""

    kind = KIND_TRANSCRIPT

    profile_id: str
    turns: tuple[InquiryTurn, ...]
    cdrd_id: str | None = None

    def to_dict(self) -> dict:
        return {
            "kind": KIND_TRANSCRIPT,
            "profile_id": self.profile_id,
            "cdrd_id": self.cdrd_id,
            "turns": [t.to_dict() for t in self.turns],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Transcript":
        cdrd_id = data.get("cdrd_id")
        return cls(
            profile_id=str(data["profile_id"]),
            turns=tuple(InquiryTurn.from_dict(t) for t in data.get("turns", [])),
            cdrd_id=None if cdrd_id is None else str(cdrd_id),
        )


@dataclass(frozen=True)
class InquiryRecord:
    """A real clinical dialogue: history plus the latest patient message."""

    kind = KIND_INQUIRY_RECORD

    record_id: str
    history: tuple[tuple[str, str], ...]  # (speaker, text); speaker: patient|doctor
    latest_message: str
    sex: str = ""
    age: str = ""
    department: str = ""

    def to_dict(self) -> dict:
        return {
            "kind": KIND_INQUIRY_RECORD,
            "record_id": self.record_id,
            "history": [{"speaker": s, "text": t} for s, t in self.history],
            "latest_message": self.latest_message,
            "sex": self.sex,
            "age": self.age,
            "department": self.department,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "InquiryRecord":
        return cls(
            record_id=str(data["record_id"]),
            history=tuple((str(h["speaker"]), str(h["text"])) for h in data.get("history", [])),
            latest_message=str(data["latest_message"]),
            sex=str(data.get("sex", "")),
            age=str(data.get("age", "")),
            department=str(data.get("department", "")),
        )


# --- validation ---------------------------------------------------------


def _empty(text: str) -> bool:
    return not text.strip()


def validate_entry(entry: CdrdEntry) -> ValidationReport:
    """Check every CDRD invariant; violations are data, not failures."""
    v: list[Violation] = []
    if _empty(entry.entry_id):
        v.append(Violation("entry_id.empty", "entry_id", "entry id must be non-empty"))
    if _empty(entry.symptom):
        v.append(Violation("symptom.empty", "symptom", "core symptom must be non-empty"))
    if not entry.differentials:
        v.append(Violation("differentials.empty", "differentials", "at least one differential required"))
    seen_names: set[str] = set()
    for i, diff in enumerate(entry.differentials):
        if _empty(diff.disease_name):
            v.append(Violation(
                "differential.disease_name.empty",
                f"differentials[{i}].disease_name",
                "disease name must be non-empty",
            ))
        elif diff.disease_name in seen_names:
            v.append(Violation(
                "differentials.duplicate_name",
                "differentials",
                f"duplicate differential '{diff.disease_name}'",
            ))
        else:
            seen_names.add(diff.disease_name)
        if not diff.features:
            v.append(Violation(
                "differential.features.empty",
                f"differentials[{i}].features",
                "features must be non-empty",
            ))
    seen_dims: set[str] = set()
    for i, dim in enumerate(entry.evidence_dimensions):
        if _empty(dim.name):
            v.append(Violation(
                "evidence_dimension.name.empty",
                f"evidence_dimensions[{i}].name",
                "dimension name must be non-empty",
            ))
        elif dim.name in seen_dims:
            v.append(Violation(
                "evidence_dimensions.duplicate_name",
                "evidence_dimensions",
                f"duplicate dimension '{dim.name}'",
            ))
        else:
            seen_dims.add(dim.name)
        if _empty(dim.direction):
            v.append(Violation(
                "evidence_dimension.direction.empty",
                f"evidence_dimensions[{i}].direction",
                "collection direction must be non-empty",
            ))
    return ValidationReport(tuple(v))


def validate_qa(pair: QaPair) -> ValidationReport:
    v = []
    if _empty(pair.question):
        v.append(Violation("question.empty", "question", "question must be non-empty"))
    if _empty(pair.answer):
        v.append(Violation("answer.empty", "answer", "answer must be non-empty"))
    if _empty(pair.source_entry_fragment_id):
        v.append(Violation("fragment_id.empty", "source_entry_fragment_id", "fragment id required"))
    elif not _FRAGMENT_ID_RE.match(pair.source_entry_fragment_id):
        v.append(Violation(
            "fragment_id.malformed",
            "source_entry_fragment_id",
            "expected <entry_id>#<E|D>#<index>",
        ))
    return ValidationReport(tuple(v))


def resolve_fragment(fragment_id: str, entries: Iterable[CdrdEntry]) -> str:
    """Return the fragment text for an id, or raise KeyError."""
    for entry in entries:
        for fid, text in entry.fragments():
            if fid == fragment_id:
                return text
    raise KeyError(fragment_id)


def validate_profile(profile: PatientProfile) -> ValidationReport:
    v = []
    if _empty(profile.profile_id):
        v.append(Violation("profile_id.empty", "profile_id", "profile id must be non-empty"))
    if profile.age < 0:
        v.append(Violation("age.negative", "age", "age must be >= 0"))
    if profile.sex not in SEX_VALUES:
        v.append(Violation("sex.invalid", "sex", f"sex must be one of {SEX_VALUES}"))
    lo, hi = profile.utterance_length_hint
    if lo < 0 or hi < lo:
        v.append(Violation(
            "utterance_length_hint.invalid", "utterance_length_hint", "need 0 <= lo <= hi",
        ))
    if not profile.ground_truth_diagnoses:
        v.append(Violation(
            "ground_truth_diagnoses.empty", "ground_truth_diagnoses", "at least one diagnosis required",
        ))
    if _empty(profile.opening_line):
        v.append(Violation("opening_line.empty", "opening_line", "opening line must be non-empty"))
    return ValidationReport(tuple(v))


def validate_transcript(transcript: Transcript) -> ValidationReport:
    v = []
    if _empty(transcript.profile_id):
        v.append(Violation("profile_id.empty", "profile_id", "profile id must be non-empty"))
    for i, turn in enumerate(transcript.turns):
        for message in validate_block(turn.physician_block):
            v.append(Violation(
                "physician_block.invalid", f"turns[{i}].physician_block", message,
            ))
    return ValidationReport(tuple(v))


def validate_inquiry_record(record: InquiryRecord) -> ValidationReport:
    v = []
    if _empty(record.record_id):
        v.append(Violation("record_id.empty", "record_id", "record id must be non-empty"))
    if _empty(record.latest_message):
        v.append(Violation("latest_message.empty", "latest_message", "latest message required"))
    for i, (speaker, _) in enumerate(record.history):
        if speaker not in ("patient", "doctor"):
            v.append(Violation(
                "history.speaker.invalid", f"history[{i}].speaker", "speaker must be patient|doctor",
            ))
    return ValidationReport(tuple(v))


@dataclass(frozen=True)
class _KindSpec:
    cls: type
    from_dict: Callable[[dict], object]
    validate: Callable[[object], ValidationReport]


_REGISTRY: dict[str, _KindSpec] = {
    KIND_CDRD: _KindSpec(CdrdEntry, CdrdEntry.from_dict, validate_entry),
    KIND_QA: _KindSpec(QaPair, QaPair.from_dict, validate_qa),
    KIND_PROFILE: _KindSpec(PatientProfile, PatientProfile.from_dict, validate_profile),
    KIND_TRANSCRIPT: _KindSpec(Transcript, Transcript.from_dict, validate_transcript),
    KIND_INQUIRY_RECORD: _KindSpec(InquiryRecord, InquiryRecord.from_dict, validate_inquiry_record),
}


def register_kind(kind: str, cls: type, from_dict, validate) -> None:
    """Register an additional record kind (used by downstream modules)."""
    _REGISTRY[kind] = _KindSpec(cls, from_dict, validate)


def validate_record(record) -> ValidationReport:
    spec = _REGISTRY.get(getattr(record, "kind", None))
    if spec is None:
        raise KeyError(f"no validator for {type(record).__name__}")
    return spec.validate(record)


# --- persistence --------------------------------------------------------


def read_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield (line_no, payload) for every non-blank line; parse errors name the line."""
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordParseError(path, line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(payload, dict):
                raise RecordParseError(path, line_no, "record must be a JSON object")
            yield line_no, payload


def write_jsonl(payloads: Iterable[dict], path: str | Path) -> None:
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8") as fh:
            for payload in payloads:
                fh.write(json.dumps(payload, ensure_ascii=False) + "\n")
    except OSError as exc:
        raise StorageError(path, exc) from exc


def load_records(path: str | Path, kind: str) -> list:
    """Load and validate all records of one kind, in file order."""
    spec = _REGISTRY.get(kind)
    if spec is None:
        raise KeyError(f"unknown record kind '{kind}'")
    out = []
    for index, (line_no, payload) in enumerate(read_jsonl(path)):
        found = payload.get("kind", "")
        if found != kind:
            raise RecordKindError(path, index, line_no, found, kind)
        try:
            record = spec.from_dict(payload)
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise RecordParseError(path, line_no, f"bad {kind} record: {exc!r}") from exc
        report = spec.validate(record)
        if not report.ok:
            raise RecordValidationError(path, index, report)
        out.append(record)
    return out


def store_records(records: Iterable, path: str | Path) -> None:
    """Write records as JSONL; load_records(store_records(x)) round-trips."""
    write_jsonl((r.to_dict() for r in records), path)
