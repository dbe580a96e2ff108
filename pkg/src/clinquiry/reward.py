"""Composite step-wise reward: weighted judge scores minus a divergence penalty.

A physician turn is scored against its reference on seven parts (six
reasoning sections plus the inquiry), each 0-10 by an LLM judge.  The
composite reward dots those scores with per-part weights; a separate judge
counts items (collected/to-collect information, diagnoses) absent from the
grounding CDRD, and each such item costs ``divergence_weight``.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import gateway
from .prompts import PromptLibrary
from .records import CdrdEntry
from .template import FIELD_NAMES, ReasoningBlock

logger = logging.getLogger(__name__)

DEFAULT_REASON_WEIGHTS = (0.1, 0.1, 0.1, 0.3, 0.3, 0.3)
DEFAULT_INQUIRY_WEIGHTS = (0.6,)
DEFAULT_DIVERGENCE_WEIGHT = 5.0

SCORE_MIN, SCORE_MAX = 0.0, 10.0

# Chinese display names for the seven scored parts, used in judge prompts.
PART_LABELS = ("已知信息", "待解决用户需求", "已提供给用户信息", "诊断", "待收集信息", "回复策略", "回复")


class JudgeParseFailure(Exception):
    def __init__(self, part_index: int, raw: str):
        super().__init__(f"judge response for part {part_index} unusable: {raw!r}")
        self.part_index = part_index
        self.raw = raw


@dataclass(frozen=True)
class RewardWeights:
    """Per-part weights and the divergence penalty coefficient."""

    w_reason: tuple[float, ...] = DEFAULT_REASON_WEIGHTS
    w_inquiry: tuple[float, ...] = DEFAULT_INQUIRY_WEIGHTS
    divergence_weight: float = DEFAULT_DIVERGENCE_WEIGHT

    def __post_init__(self):
        if len(self.w_reason) != 6:
            raise ValueError("w_reason must have 6 components")
        if len(self.w_inquiry) != 1:
            raise ValueError("w_inquiry must have 1 component")
        if any(w < 0 for w in self.w_reason + self.w_inquiry) or self.divergence_weight < 0:
            raise ValueError("weights must be non-negative")

    @classmethod
    def from_dict(cls, data: dict) -> "RewardWeights":
        return cls(
            w_reason=tuple(float(x) for x in data.get("w_reason", DEFAULT_REASON_WEIGHTS)),
            w_inquiry=tuple(float(x) for x in data.get("w_inquiry", DEFAULT_INQUIRY_WEIGHTS)),
            divergence_weight=float(data.get("divergence_weight", DEFAULT_DIVERGENCE_WEIGHT)),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "RewardWeights":
        """Load overrides from a JSON file; absent keys keep their defaults."""
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class JudgeScores:
    """Seven per-part similarity scores, each in [0, 10]."""

    r: tuple[float, ...]

    def __post_init__(self):
        if len(self.r) != 7:
            raise ValueError("expected 7 scores")
        for i, score in enumerate(self.r):
            if not SCORE_MIN <= score <= SCORE_MAX:
                raise ValueError(f"score {i} out of [0,10]: {score}")


@dataclass(frozen=True)
class DivergenceCount:
    n: int

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("divergence count must be >= 0")


@dataclass(frozen=True)
class RewardBreakdown:
    scores: JudgeScores
    n: DivergenceCount
    r_comp_r: float
    r_comp_i: float
    r_comp: float
    r_div: float
    r_step: float

    def to_dict(self) -> dict:
        return {
            "kind": "reward_breakdown",
            "scores": list(self.scores.r),
            "n": self.n.n,
            "r_comp_r": self.r_comp_r,
            "r_comp_i": self.r_comp_i,
            "r_comp": self.r_comp,
            "r_div": self.r_div,
            "r_step": self.r_step,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RewardBreakdown":
        return cls(
            scores=JudgeScores(tuple(float(x) for x in data["scores"])),
            n=DivergenceCount(int(data["n"])),
            r_comp_r=float(data["r_comp_r"]),
            r_comp_i=float(data["r_comp_i"]),
            r_comp=float(data["r_comp"]),
            r_div=float(data["r_div"]),
            r_step=float(data["r_step"]),
        )


def compute_reward(
    scores: JudgeScores,
    n: DivergenceCount,
    weights: RewardWeights = RewardWeights(),
) -> RewardBreakdown:
    """Pure arithmetic: weighted score sum minus the divergence penalty."""
    r = np.asarray(scores.r, dtype=float)
    r_comp_r = float(np.dot(weights.w_reason, r[:6]))
    r_comp_i = float(np.dot(weights.w_inquiry, r[6:]))
    r_comp = r_comp_r + r_comp_i
    r_div = weights.divergence_weight * n.n
    return RewardBreakdown(
        scores=scores,
        n=n,
        r_comp_r=r_comp_r,
        r_comp_i=r_comp_i,
        r_comp=r_comp,
        r_div=r_div,
        r_step=r_comp - r_div,
    )


_NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?")


def _parse_score(text: str) -> float | None:
    match = _NUMBER_RE.search(text)
    if match is None:
        return None
    value = float(match.group())
    if not SCORE_MIN <= value <= SCORE_MAX:
        return None
    return value


def _parse_count(text: str) -> int | None:
    match = _NUMBER_RE.search(text)
    if match is None:
        return None
    value = float(match.group())
    if value < 0 or value != int(value):
        return None
    return int(value)


def _score_request(
    prompts: PromptLibrary, model_id: str, part_index: int,
    candidate: ReasoningBlock, reference: ReasoningBlock,
) -> gateway.ChatRequest:
    field = FIELD_NAMES[part_index]
    text = prompts.render(
        "judge_score",
        part_name=PART_LABELS[part_index],
        reference_part=getattr(reference, field),
        candidate_part=getattr(candidate, field),
    )
    return gateway.request(model_id, [("user", text)])


def _reask(backend, req: gateway.ChatRequest, bad_response: str, instruction: str) -> str:
    """One corrective follow-up; the appended turns give a fresh fingerprint."""
    messages = req.messages + (
        gateway.ChatMessage("assistant", bad_response),
        gateway.ChatMessage("user", instruction),
    )
    retry = gateway.ChatRequest(
        model_id=req.model_id,
        messages=messages,
        temperature=req.temperature,
        max_tokens=req.max_tokens,
        seed=req.seed,
    )
    return backend.complete(retry)


def judge_turn(
    candidate: ReasoningBlock,
    reference: ReasoningBlock,
    judge_backend,
    *,
    model_id: str = "judge",
    prompts: PromptLibrary | None = None,
) -> JudgeScores:
    """Score all seven parts, one judge call per part (batched concurrently).

    An unparsable or out-of-range score triggers one corrective re-ask for
    that part; a second failure raises JudgeParseFailure with the part index.
    """
    prompts = prompts or PromptLibrary()
    requests = [
        _score_request(prompts, model_id, i, candidate, reference) for i in range(7)
    ]
    results = gateway.complete_many(requests, judge_backend)
    scores: list[float] = []
    for i, result in enumerate(results):
        if isinstance(result, Exception):
            raise result
        value = _parse_score(result)
        if value is None:
            retry_text = _reask(
                judge_backend, requests[i], result,
                "输出不符合要求。请只输出一个0到10之间的数字分数。",
            )
            value = _parse_score(retry_text)
            if value is None:
                raise JudgeParseFailure(i, retry_text)
        scores.append(value)
    return JudgeScores(tuple(scores))


def count_divergence(
    candidate: ReasoningBlock,
    cdrd: CdrdEntry,
    judge_backend,
    *,
    model_id: str = "judge",
    prompts: PromptLibrary | None = None,
) -> DivergenceCount:
    """Count candidate items (info + diagnoses) absent from the CDRD."""
    if not any(
        part.strip()
        for part in (candidate.provided_information, candidate.info_to_collect, candidate.diagnoses)
    ):
        return DivergenceCount(0)
    prompts = prompts or PromptLibrary()
    text = prompts.render(
        "judge_divergence",
        evidence_dimensions="\n".join(f"- {d.name}：{d.direction}" for d in cdrd.evidence_dimensions),
        differentials="\n".join(f"- {d.disease_name}" for d in cdrd.differentials),
        provided_information=candidate.provided_information,
        info_to_collect=candidate.info_to_collect,
        diagnoses=candidate.diagnoses,
    )
    req = gateway.request(model_id, [("user", text)])
    response = judge_backend.complete(req)
    value = _parse_count(response)
    if value is None:
        retry_text = _reask(judge_backend, req, response, "输出不符合要求。请只输出一个非负整数。")
        value = _parse_count(retry_text)
        if value is None:
            raise JudgeParseFailure(-1, retry_text)
    return DivergenceCount(value)
