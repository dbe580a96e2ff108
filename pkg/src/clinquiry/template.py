"""Marker-delimited physician reasoning/inquiry template.

Every physician turn is a block of seven sections, each introduced by a
marker token (CJK brackets in the Chinese dialect, square brackets in the
English one).  This module parses raw model output into a ``ReasoningBlock``,
serializes blocks back to text, and extracts disease names from the
diagnoses section.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, fields as dataclass_fields
from pathlib import Path

FIELD_NAMES = (
    "known_information",
    "user_intention",
    "provided_information",
    "diagnoses",
    "info_to_collect",
    "response_strategy",
    "inquiry",
)


class TemplateError(ValueError):
    """Base class for template parse failures."""


class MissingField(TemplateError):
    def __init__(self, field_name: str):
        super().__init__(f"marker for field '{field_name}' not found")
        self.field_name = field_name


class DuplicateField(TemplateError):
    def __init__(self, field_name: str):
        super().__init__(f"marker for field '{field_name}' appears more than once")
        self.field_name = field_name


@dataclass(frozen=True)
class ReasoningBlock:
    """The seven-section physician turn: six reasoning steps plus the inquiry."""

    known_information: str = ""
    user_intention: str = ""
    provided_information: str = ""
    diagnoses: str = ""
    info_to_collect: str = ""
    response_strategy: str = ""
    inquiry: str = ""

    def as_dict(self) -> dict[str, str]:
        return {f.name: getattr(self, f.name) for f in dataclass_fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "ReasoningBlock":
        return cls(**{name: str(data.get(name, "")) for name in FIELD_NAMES})


def validate_block(block: ReasoningBlock) -> list[str]:
    """Return violation messages; a valid block has a non-empty inquiry."""
    violations = []
    if not block.inquiry.strip():
        violations.append("inquiry: must be non-empty")
    return violations


@dataclass(frozen=True)
class TemplateDialect:
    """Locale-specific marker tokens, one per template field, in field order."""

    locale: str
    markers: tuple[str, ...]

    def __post_init__(self):
        if len(self.markers) != len(FIELD_NAMES):
            raise ValueError(f"dialect needs {len(FIELD_NAMES)} markers, got {len(self.markers)}")
        if any(not m for m in self.markers):
            raise ValueError("markers must be non-empty")
        if len(set(self.markers)) != len(self.markers):
            raise ValueError("markers must be pairwise distinct")

    def marker_for(self, field_name: str) -> str:
        return self.markers[FIELD_NAMES.index(field_name)]


ZH_DIALECT = TemplateDialect(
    locale="zh",
    markers=(
        "【已知信息】",
        "【待解决用户需求】",
        "【已提供给用户信息】",
        "【诊断】",
        "【待收集信息】",
        "【回复策略】",
        "【回复】",
    ),
)

EN_DIALECT = TemplateDialect(
    locale="en",
    markers=(
        "[Known Information]",
        "[User Needs to Address]",
        "[Information Provided to User]",
        "[Diagnosis]",
        "[Information to Collect]",
        "[Response Strategy]",
        "[Response]",
    ),
)

_BUILTIN_DIALECTS = {"zh": ZH_DIALECT, "en": EN_DIALECT}


def get_dialect(locale: str) -> TemplateDialect:
    try:
        return _BUILTIN_DIALECTS[locale]
    except KeyError:
        raise KeyError(f"unknown dialect '{locale}'; built-ins: {sorted(_BUILTIN_DIALECTS)}") from None


def load_dialect(path: str | Path) -> TemplateDialect:
    """Load a dialect from a JSON file: {"locale": ..., "markers": [7 strings]}."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return TemplateDialect(locale=str(data["locale"]), markers=tuple(data["markers"]))


def extract_marked_sections(raw: str, markers: dict[str, str]) -> dict[str, str]:
    """Split ``raw`` into the text following each marker, keyed by field name.

    Content of a section runs from the end of its marker to the start of the
    next marker (in document order), or to the end of input.  Text before the
    first marker is discarded.  Raises MissingField / DuplicateField.
    """
    located: list[tuple[int, int, str]] = []
    for name, marker in markers.items():
        first = raw.find(marker)
        if first < 0:
            raise MissingField(name)
        if raw.find(marker, first + len(marker)) >= 0:
            raise DuplicateField(name)
        located.append((first, len(marker), name))
    located.sort()
    sections: dict[str, str] = {}
    for i, (start, marker_len, name) in enumerate(located):
        end = located[i + 1][0] if i + 1 < len(located) else len(raw)
        sections[name] = raw[start + marker_len:end].strip()
    return sections


def parse_block(raw: str, dialect: TemplateDialect = ZH_DIALECT) -> ReasoningBlock:
    """Parse raw model output into a ReasoningBlock.

    Tolerates chatter outside the first/last marker.  Markers foreign to the
    dialect are kept verbatim inside field content.
    """
    sections = extract_marked_sections(raw, dict(zip(FIELD_NAMES, dialect.markers)))
    return ReasoningBlock(**sections)


def serialize_block(block: ReasoningBlock, dialect: TemplateDialect = ZH_DIALECT) -> str:
    """Render a block in canonical field order; parses back to an equal block."""
    parts = []
    for name, marker in zip(FIELD_NAMES, dialect.markers):
        parts.append(f"{marker}\n{getattr(block, name)}")
    return "\n\n".join(parts) + "\n"


# Delimiters between disease names inside the diagnoses section, and leading
# qualifier phrases the extractor strips.  Both are configuration: real model
# outputs vary and new phrasings can be appended without code changes.
DIAGNOSIS_DELIMITERS = "、，,;；\n"

QUALIFIER_PREFIXES = (
    "初步诊断：",
    "初步诊断:",
    "初步考虑",
    "诊断：",
    "诊断:",
    "考虑为",
    "疑似",
    "preliminary diagnosis:",
    "suspected:",
    "suspected",
    "diagnosis:",
)

_TRAILING_PUNCT = "。．.!！"


def _strip_qualifiers(name: str, prefixes: tuple[str, ...]) -> str:
    name = name.strip()
    changed = True
    while changed:
        changed = False
        folded = name.casefold()
        for prefix in prefixes:
            if folded.startswith(prefix.casefold()):
                name = name[len(prefix):].strip()
                changed = True
                break
    return name.rstrip(_TRAILING_PUNCT).strip()


def extract_diagnosis_names(
    block: ReasoningBlock,
    *,
    delimiters: str = DIAGNOSIS_DELIMITERS,
    qualifier_prefixes: tuple[str, ...] = QUALIFIER_PREFIXES,
) -> list[str]:
    """Split the diagnoses section into clean disease names.

    An empty result is legal (the turn simply scores as no hypotheses).
    """
    if not block.diagnoses.strip():
        return []
    pattern = "[" + re.escape(delimiters) + "]"
    names = []
    for token in re.split(pattern, block.diagnoses):
        cleaned = _strip_qualifiers(token, qualifier_prefixes)
        if cleaned:
            names.append(cleaned)
    return names
