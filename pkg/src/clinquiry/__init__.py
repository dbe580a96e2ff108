"""Evaluation and reward harness for clinical diagnostic inquiry models."""

from .dapo import ClipConfig, GroupSample, ToyPolicy, clipped_term, gradient, normalize_advantages, objective
from .gateway import BackendConfig, ChatMessage, ChatRequest, HttpBackend, ScriptedBackend, complete, complete_many, fingerprint
from .icd import BlockTable, DiagnosisSet, LookupMapper, default_blocks, icd_precision, icd_recall, map_names_to_codes, normalize, sim
from .records import (
    CdrdEntry,
    DifferentialEntry,
    EvidenceDimension,
    InquiryRecord,
    InquiryTurn,
    PatientProfile,
    QaPair,
    Transcript,
    load_records,
    store_records,
    validate_entry,
)
from .reward import DivergenceCount, JudgeScores, RewardBreakdown, RewardWeights, compute_reward, count_divergence, judge_turn
from .review import ReviewItem, ReviewStore, SatisfactionAggregate, Verdict, majority_outcome
from .template import EN_DIALECT, ZH_DIALECT, ReasoningBlock, TemplateDialect, extract_diagnosis_names, parse_block, serialize_block

__version__ = "0.1.0"

__all__ = [
    "BackendConfig",
    "BlockTable",
    "CdrdEntry",
    "ChatMessage",
    "ChatRequest",
    "ClipConfig",
    "DiagnosisSet",
    "DifferentialEntry",
    "DivergenceCount",
    "EN_DIALECT",
    "EvidenceDimension",
    "GroupSample",
    "HttpBackend",
    "InquiryRecord",
    "InquiryTurn",
    "JudgeScores",
    "LookupMapper",
    "PatientProfile",
    "QaPair",
    "ReasoningBlock",
    "ReviewItem",
    "ReviewStore",
    "RewardBreakdown",
    "RewardWeights",
    "SatisfactionAggregate",
    "ScriptedBackend",
    "TemplateDialect",
    "ToyPolicy",
    "Transcript",
    "Verdict",
    "ZH_DIALECT",
    "clipped_term",
    "complete",
    "complete_many",
    "compute_reward",
    "count_divergence",
    "default_blocks",
    "extract_diagnosis_names",
    "fingerprint",
    "gradient",
    "icd_precision",
    "icd_recall",
    "judge_turn",
    "load_records",
    "majority_outcome",
    "map_names_to_codes",
    "normalize",
    "normalize_advantages",
    "objective",
    "parse_block",
    "serialize_block",
    "sim",
    "store_records",
    "validate_entry",
]
