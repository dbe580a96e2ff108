from __future__ import annotations

import random

import numpy as np
import pytest

from clinquiry.gateway import ScriptedBackend, complete_many
from clinquiry.reward import (
    DivergenceCount,
    JudgeParseFailure,
    JudgeScores,
    RewardWeights,
    _score_request,
    compute_reward,
    count_divergence,
    judge_turn,
)
from clinquiry.prompts import PromptLibrary
from clinquiry.template import ReasoningBlock

PROMPTS = PromptLibrary()


def block(**overrides) -> ReasoningBlock:
    base = dict(
        known_information="咳嗽3天",
        user_intention="明确病因",
        provided_information="已建议多饮水",
        diagnoses="急性支气管炎",
        info_to_collect="是否发热",
        response_strategy="聚焦关键问题",
        inquiry="请问是否发热？",
    )
    base.update(overrides)
    return ReasoningBlock(**base)


class TestTypes:
    def test_default_weights(self):
        weights = RewardWeights()
        assert weights.w_reason == (0.1, 0.1, 0.1, 0.3, 0.3, 0.3)
        assert weights.w_inquiry == (0.6,)
        assert weights.divergence_weight == 5.0

    def test_weight_shapes_enforced(self):
        with pytest.raises(ValueError):
            RewardWeights(w_reason=(0.1,) * 5)
        with pytest.raises(ValueError):
            RewardWeights(w_inquiry=(0.6, 0.6))
        with pytest.raises(ValueError):
            RewardWeights(divergence_weight=-1)

    def test_scores_bounded(self):
        with pytest.raises(ValueError):
            JudgeScores((11, 0, 0, 0, 0, 0, 0))
        with pytest.raises(ValueError):
            JudgeScores((0,) * 6)

    def test_divergence_non_negative(self):
        with pytest.raises(ValueError):
            DivergenceCount(-1)


class TestComputeReward:
    def test_hand_derived_mixed_example(self):
        # 0.1*(8+7+9) + 0.3*(6+5+7) + 0.6*8 = 12.6, no penalty
        breakdown = compute_reward(JudgeScores((8, 7, 9, 6, 5, 7, 8)), DivergenceCount(0))
        assert breakdown.r_comp == 12.6
        assert breakdown.r_step == 12.6
        assert breakdown.r_div == 0.0

    def test_hand_derived_penalized_example(self):
        # 0.1*30 + 0.3*30 + 0.6*10 = 18.0; penalty 5*2 = 10
        breakdown = compute_reward(JudgeScores((10,) * 7), DivergenceCount(2))
        assert breakdown.r_comp == 18.0
        assert breakdown.r_div == 10.0
        assert breakdown.r_step == 8.0

    def test_zero_case(self):
        breakdown = compute_reward(JudgeScores((0,) * 7), DivergenceCount(0))
        assert breakdown.r_step == 0.0

    def test_breakdown_invariants(self):
        rng = random.Random(3)
        for _ in range(200):
            scores = JudgeScores(tuple(rng.uniform(0, 10) for _ in range(7)))
            n = DivergenceCount(rng.randrange(4))
            b = compute_reward(scores, n)
            assert b.r_comp == b.r_comp_r + b.r_comp_i
            assert b.r_step == b.r_comp - b.r_div

    def test_monotonic_in_scores_and_divergence(self):
        rng = random.Random(11)
        for _ in range(1000):
            r = [rng.uniform(0, 10) for _ in range(7)]
            base = compute_reward(JudgeScores(tuple(r)), DivergenceCount(1)).r_step
            i = rng.randrange(7)
            bumped = list(r)
            bumped[i] = min(10.0, bumped[i] + rng.uniform(0, 2))
            assert compute_reward(JudgeScores(tuple(bumped)), DivergenceCount(1)).r_step >= base
            assert compute_reward(JudgeScores(tuple(r)), DivergenceCount(2)).r_step <= base

    def test_linearity_by_superposition(self):
        rng = random.Random(5)
        for _ in range(1000):
            x = np.array([rng.uniform(0, 5) for _ in range(7)])
            y = np.array([rng.uniform(0, 5) for _ in range(7)])
            a, b = rng.uniform(0, 1), rng.uniform(0, 1)
            combined = compute_reward(
                JudgeScores(tuple(a * x + b * y)), DivergenceCount(0)
            ).r_comp
            split = (
                a * compute_reward(JudgeScores(tuple(x)), DivergenceCount(0)).r_comp
                + b * compute_reward(JudgeScores(tuple(y)), DivergenceCount(0)).r_comp
            )
            assert combined == pytest.approx(split, abs=1e-12)
        # additive in the divergence count
        r_div = lambda n: compute_reward(JudgeScores((0,) * 7), DivergenceCount(n)).r_div
        assert r_div(3) + r_div(4) == r_div(7)

    def test_bounds_with_defaults(self):
        rng = random.Random(13)
        for _ in range(500):
            scores = JudgeScores(tuple(rng.uniform(0, 10) for _ in range(7)))
            n = rng.randrange(5)
            step = compute_reward(scores, DivergenceCount(n)).r_step
            assert -5.0 * n <= step <= 18.0

    def test_custom_weights(self):
        weights = RewardWeights(w_reason=(1, 0, 0, 0, 0, 0), w_inquiry=(0,), divergence_weight=1)
        b = compute_reward(JudgeScores((4, 9, 9, 9, 9, 9, 9)), DivergenceCount(3), weights)
        assert b.r_comp == 4.0
        assert b.r_step == 1.0

    def test_record_round_trip(self):
        from clinquiry.reward import RewardBreakdown

        b = compute_reward(JudgeScores((8, 7, 9, 6, 5, 7, 8)), DivergenceCount(1))
        assert RewardBreakdown.from_dict(b.to_dict()) == b


def scripted_judge(part_scores: dict[int, str], candidate, reference) -> ScriptedBackend:
    backend = ScriptedBackend()
    for i in range(7):
        req = _score_request(PROMPTS, "judge", i, candidate, reference)
        backend.add_request(req, part_scores.get(i, "10"))
    return backend


class TestJudgeTurn:
    def test_identity_scores_ten(self):
        reference = block()
        backend = scripted_judge({}, reference, reference)
        scores = judge_turn(reference, reference, backend, model_id="judge", prompts=PROMPTS)
        assert scores.r == (10.0,) * 7

    def test_mixed_scores_verbatim(self):
        candidate, reference = block(diagnoses="肺炎"), block()
        wanted = {i: str(s) for i, s in enumerate([8, 7, 9, 6, 5, 7, 8])}
        backend = scripted_judge(wanted, candidate, reference)
        scores = judge_turn(candidate, reference, backend, model_id="judge", prompts=PROMPTS)
        assert scores.r == (8.0, 7.0, 9.0, 6.0, 5.0, 7.0, 8.0)

    def test_decimal_scores_accepted(self):
        reference = block()
        backend = scripted_judge({3: "7.5"}, reference, reference)
        scores = judge_turn(reference, reference, backend, model_id="judge", prompts=PROMPTS)
        assert scores.r[3] == 7.5

    def test_out_of_range_reasks_then_fails(self):
        reference = block()
        backend = scripted_judge({3: "11"}, reference, reference)
        backend.strict = False
        backend.default_response = "11"  # the re-ask also misbehaves
        with pytest.raises(JudgeParseFailure) as exc_info:
            judge_turn(reference, reference, backend, model_id="judge", prompts=PROMPTS)
        assert exc_info.value.part_index == 3

    def test_reask_recovers(self):
        reference = block()
        backend = scripted_judge({2: "分数很高"}, reference, reference)
        backend.strict = False
        backend.default_response = "9"  # corrective follow-up lands a clean score
        scores = judge_turn(reference, reference, backend, model_id="judge", prompts=PROMPTS)
        assert scores.r[2] == 9.0

    def test_calls_batched_via_complete_many(self):
        reference = block()
        backend = scripted_judge({}, reference, reference)
        judge_turn(reference, reference, backend, model_id="judge", prompts=PROMPTS)
        assert len(backend.calls) == 7


class TestCountDivergence:
    def test_scripted_zero(self, cough_entry):
        backend = ScriptedBackend(strict=False, default_response="0")
        assert count_divergence(block(), cough_entry, judge_backend=backend).n == 0

    def test_scripted_two(self, cough_entry):
        backend = ScriptedBackend(strict=False, default_response="2")
        candidate = block(diagnoses="急性支气管炎、胃炎、偏头痛")
        assert count_divergence(candidate, cough_entry, judge_backend=backend).n == 2

    def test_empty_fields_short_circuit(self, cough_entry):
        backend = ScriptedBackend()  # strict: would raise if called
        candidate = block(provided_information="", info_to_collect=" ", diagnoses="")
        assert count_divergence(candidate, cough_entry, judge_backend=backend).n == 0
        assert backend.calls == []

    def test_unparsable_reasks_then_fails(self, cough_entry):
        backend = ScriptedBackend(strict=False, default_response="好多处偏离")
        with pytest.raises(JudgeParseFailure):
            count_divergence(block(), cough_entry, judge_backend=backend)

    def test_negative_or_fractional_rejected(self, cough_entry):
        backend = ScriptedBackend(strict=False, default_response="2.5")
        with pytest.raises(JudgeParseFailure):
            count_divergence(block(), cough_entry, judge_backend=backend)


class TestWeightConfig:
    def test_from_file_overrides(self, tmp_path):
        path = tmp_path / "weights.json"
        path.write_text('{"divergence_weight": 2.0}', encoding="utf-8")
        weights = RewardWeights.from_file(path)
        assert weights.divergence_weight == 2.0
        assert weights.w_reason == (0.1, 0.1, 0.1, 0.3, 0.3, 0.3)
