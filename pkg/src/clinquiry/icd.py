"""Hierarchical ICD-10 similarity and the recall/precision aggregates.

Similarity between two normalized codes is the highest satisfied level of a
five-level hierarchy: exact code (1.0), 4-character subcategory (0.8),
3-character category (0.6), shared tabular block such as J40-J47 (0.4),
shared chapter letter (0.2), otherwise 0.0.  Set-level recall averages, over
ground-truth codes, the best similarity any predicted code achieves;
precision mirrors it over predictions.
"""

from __future__ import annotations

import json
import logging
import re
from bisect import bisect_right
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import gateway
from .prompts import PromptLibrary

logger = logging.getLogger(__name__)

# Chapter letter, two digits, then up to four alphanumerics (dot removed).
CODE_RE = re.compile(r"[A-Z][0-9]{2}[0-9A-Z]{0,4}\Z")

SIM_LEVELS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


class InvalidCode(ValueError):
    def __init__(self, raw: str):
        super().__init__(f"not a valid ICD-10 code: {raw!r}")
        self.raw = raw


class EmptyGroundTruth(ValueError):
    pass


class EmptyPrediction(ValueError):
    pass


def normalize(raw: str) -> str:
    """Uppercase, strip dots and whitespace, validate the code pattern.

    "J45.9" -> "J459".  Dot removal keeps the 4-character subcategory test
    distinct from the 3-character category test.
    """
    code = raw.strip().upper().replace(".", "").replace(" ", "")
    if not CODE_RE.match(code):
        raise InvalidCode(raw)
    return code


class BlockTable:
    """Ordered, disjoint 3-character code ranges (the ICD-10 tabular blocks)."""

    def __init__(self, blocks: Iterable[tuple[str, str, str]]):
        rows = sorted((lo, hi, chapter) for chapter, lo, hi in blocks)
        self._lows = [lo for lo, _, _ in rows]
        self._rows = rows
        for (lo, hi, _), (next_lo, _, _) in zip(rows, rows[1:]):
            if hi >= next_lo:
                raise ValueError(f"overlapping blocks: {lo}-{hi} and {next_lo}-...")
        for lo, hi, _ in rows:
            if len(lo) != 3 or len(hi) != 3 or lo > hi:
                raise ValueError(f"bad block range {lo}-{hi}")

    def __len__(self) -> int:
        return len(self._rows)

    def block_of(self, code: str) -> tuple[str, str] | None:
        """The (lo, hi) block containing the code's 3-character category, if any."""
        prefix = code[:3]
        idx = bisect_right(self._lows, prefix) - 1
        if idx < 0:
            return None
        lo, hi, _ = self._rows[idx]
        return (lo, hi) if lo <= prefix <= hi else None

    @classmethod
    def from_file(cls, path: str | Path) -> "BlockTable":
        """Parse a TSV of (chapter, lo, hi) rows; '#' lines are comments."""
        blocks = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            chapter, lo, hi = line.split("\t")
            blocks.append((chapter, lo, hi))
        return cls(blocks)


@lru_cache(maxsize=1)
def default_blocks() -> BlockTable:
    """The packaged WHO ICD-10 (2019) chapter-block table."""
    ref = resources.files("clinquiry").joinpath("data/icd10_blocks.tsv")
    with resources.as_file(ref) as path:
        return BlockTable.from_file(path)


def sim(p: str, g: str, blocks: BlockTable | None = None) -> float:
    """Highest-satisfied-level similarity between two normalized codes.

    Codes shorter than a tested prefix simply fail that level.
    """
    if blocks is None:
        blocks = default_blocks()
    if p == g:
        return 1.0
    if len(p) >= 4 and len(g) >= 4 and p[:4] == g[:4]:
        return 0.8
    if p[:3] == g[:3]:
        return 0.6
    bp, bg = blocks.block_of(p), blocks.block_of(g)
    if bp is not None and bp == bg:
        return 0.4
    if p[0] == g[0]:
        return 0.2
    return 0.0


@dataclass(frozen=True)
class DiagnosisSet:
    """Normalized, deduplicated codes plus the originating disease names.

    ``display_names`` aligns with ``codes`` (first name that produced each
    code); ``unresolved`` is the audit list of names the mapper could not
    resolve, excluded from scoring.
    """

    codes: tuple[str, ...]
    display_names: tuple[str, ...] = ()
    unresolved: tuple[str, ...] = ()

    @classmethod
    def from_raw(
        cls,
        raw_codes: Iterable[str],
        names: Iterable[str] | None = None,
        unresolved: Iterable[str] = (),
    ) -> "DiagnosisSet":
        names = list(names) if names is not None else None
        seen: dict[str, str] = {}
        for i, raw in enumerate(raw_codes):
            code = normalize(raw)
            if code not in seen:
                seen[code] = names[i] if names is not None and i < len(names) else ""
        codes = tuple(sorted(seen))
        return cls(
            codes=codes,
            display_names=tuple(seen[c] for c in codes),
            unresolved=tuple(unresolved),
        )

    def to_dict(self) -> dict:
        return {
            "codes": list(self.codes),
            "display_names": list(self.display_names),
            "unresolved": list(self.unresolved),
        }


def icd_recall(pred: DiagnosisSet, truth: DiagnosisSet, blocks: BlockTable | None = None) -> float:
    """Mean over ground-truth codes of the best similarity any prediction reaches.

    An empty prediction set scores 0 (the model found nothing).
    """
    if not truth.codes:
        raise EmptyGroundTruth("ground-truth set is empty")
    if not pred.codes:
        return 0.0
    return sum(max(sim(p, g, blocks) for p in pred.codes) for g in truth.codes) / len(truth.codes)


def icd_precision(pred: DiagnosisSet, truth: DiagnosisSet, blocks: BlockTable | None = None) -> float:
    """Mean over predictions of the best similarity any ground-truth code reaches."""
    if not pred.codes:
        raise EmptyPrediction("prediction set is empty; precision undefined")
    if not truth.codes:
        raise EmptyGroundTruth("ground-truth set is empty")
    return sum(max(sim(p, g, blocks) for g in truth.codes) for p in pred.codes) / len(pred.codes)


# --- disease-name mapping -------------------------------------------------


class LookupMapper:
    """Deterministic name -> codes table, for tests and offline scoring."""

    def __init__(self, table: Mapping[str, Sequence[str]]):
        self.table = {name.strip(): list(codes) for name, codes in table.items()}

    def resolve(self, name: str) -> list[str]:
        return list(self.table.get(name.strip(), []))

    @classmethod
    def from_file(cls, path: str | Path) -> "LookupMapper":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))


_CODE_IN_TEXT_RE = re.compile(r"[A-Za-z][0-9]{2}(?:\.[0-9A-Za-z]{1,4}|[0-9A-Za-z]{0,4})")


class LlmMapper:
    """Maps disease names to codes by asking a model; outputs are normalized."""

    def __init__(self, backend, model_id: str, prompts: PromptLibrary | None = None):
        self.backend = backend
        self.model_id = model_id
        self.prompts = prompts or PromptLibrary()

    def resolve(self, name: str) -> list[str]:
        text = self.prompts.render("icd_mapping", disease_name=name)
        req = gateway.request(self.model_id, [("user", text)])
        response = self.backend.complete(req)
        return _CODE_IN_TEXT_RE.findall(response)


def map_names_to_codes(names: Sequence[str], mapper) -> DiagnosisSet:
    """Resolve each name to >= 0 codes; unresolved names land in the audit list."""
    codes: list[str] = []
    display: list[str] = []
    unresolved: list[str] = []
    for name in names:
        raw = mapper.resolve(name)
        valid = []
        for candidate in raw:
            try:
                valid.append(normalize(candidate))
            except InvalidCode:
                logger.debug("mapper returned invalid code %r for %r", candidate, name)
        if valid:
            codes.extend(valid)
            display.extend([name] * len(valid))
        else:
            unresolved.append(name)
    return DiagnosisSet.from_raw(codes, display, unresolved=unresolved)
