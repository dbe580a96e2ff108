"""Acceptance gate: one test per release criterion, at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v`` for the per-criterion
pass/fail listing; each test also prints a [PASS] line (visible with -s).
"""

from __future__ import annotations

import json
import random
import time

import numpy as np
import pytest

from bench_fixtures import MAPPER_TABLE, five_cases, script_batch
from test_icd import make_pair_suite, oracle_precision, oracle_recall, oracle_sim

from clinquiry import dapo, synthesis
from clinquiry.cli import bench_main
from clinquiry.gateway import ScriptedBackend, request
from clinquiry.icd import DiagnosisSet, default_blocks, icd_precision, icd_recall, sim
from clinquiry.prompts import PromptLibrary
from clinquiry.records import store_records
from clinquiry.review import ReviewItem, ReviewStore, Verdict
from clinquiry.review_api import create_app
from clinquiry.reward import DivergenceCount, JudgeScores, compute_reward
from clinquiry.synthesis import DifferentialMismatch, complete_logic
from clinquiry.template import (
    ZH_DIALECT,
    MissingField,
    ReasoningBlock,
    extract_diagnosis_names,
    parse_block,
    serialize_block,
)

PROMPTS = PromptLibrary()
BLOCKS = default_blocks()


class Budget:
    def __init__(self, name: str, seconds: float):
        self.name = name
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, *_):
        elapsed = time.perf_counter() - self.start
        if exc_type is None:
            assert elapsed < self.seconds, f"{self.name} took {elapsed:.2f}s (budget {self.seconds}s)"
            print(f"[PASS] {self.name} ({elapsed:.2f}s)")
        else:
            print(f"[FAIL] {self.name}")
        return False


def test_algorithm_oracle_equivalence():
    """Hierarchical similarity agrees with a brute-force level checker on ~200 pairs."""
    with Budget("Algorithm oracle equivalence", 1.0):
        suite = make_pair_suite()
        assert len(suite) >= 200
        levels_seen = set()
        for p, g in suite:
            expected = oracle_sim(p, g)
            assert sim(p, g, BLOCKS) == expected, (p, g)
            levels_seen.add(expected)
        assert levels_seen == {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}


def test_metric_arithmetic():
    """Recall/precision worked examples plus 500 random set pairs vs a double-loop oracle."""
    with Budget("Metric arithmetic", 1.0):
        pred = DiagnosisSet.from_raw(["J451", "K210"])
        truth = DiagnosisSet.from_raw(["J459"])
        assert icd_recall(pred, truth, BLOCKS) == pytest.approx(0.6, abs=1e-12)
        assert icd_precision(pred, truth, BLOCKS) == pytest.approx(0.3, abs=1e-12)
        pred2 = DiagnosisSet.from_raw(["I10", "J459"])
        truth2 = DiagnosisSet.from_raw(["I10", "E119"])
        assert icd_recall(pred2, truth2, BLOCKS) == pytest.approx(0.5, abs=1e-12)

        rng = random.Random(41)
        letters = "ABCEIJKMNRSZ"
        for _ in range(500):
            make = lambda: f"{rng.choice(letters)}{rng.randrange(100):02d}" + (
                str(rng.randrange(10)) if rng.random() < 0.5 else ""
            )
            p_codes = [make() for _ in range(rng.randrange(1, 6))]
            g_codes = [make() for _ in range(rng.randrange(1, 5))]
            p_set = DiagnosisSet.from_raw(p_codes)
            g_set = DiagnosisSet.from_raw(g_codes)
            assert icd_recall(p_set, g_set, BLOCKS) == pytest.approx(
                oracle_recall(list(p_set.codes), list(g_set.codes)), abs=1e-12
            )
            assert icd_precision(p_set, g_set, BLOCKS) == pytest.approx(
                oracle_precision(list(p_set.codes), list(g_set.codes)), abs=1e-12
            )


def test_reward_algebra():
    """Exact worked examples; monotonicity and linearity over 1000 random vectors."""
    with Budget("Reward algebra", 1.0):
        mixed = compute_reward(JudgeScores((8, 7, 9, 6, 5, 7, 8)), DivergenceCount(0))
        assert mixed.r_comp == 12.6 and mixed.r_step == 12.6
        capped = compute_reward(JudgeScores((10,) * 7), DivergenceCount(2))
        assert capped.r_comp == 18.0 and capped.r_step == 8.0

        rng = random.Random(17)
        for _ in range(1000):
            r = [rng.uniform(0, 10) for _ in range(7)]
            n = rng.randrange(3)
            base = compute_reward(JudgeScores(tuple(r)), DivergenceCount(n))
            # monotone up in any score
            i = rng.randrange(7)
            up = list(r)
            up[i] = min(10.0, up[i] + rng.uniform(0, 3))
            assert compute_reward(JudgeScores(tuple(up)), DivergenceCount(n)).r_step >= base.r_step
            # monotone down in the divergence count
            assert compute_reward(JudgeScores(tuple(r)), DivergenceCount(n + 1)).r_step <= base.r_step
            # linear: superposition of two score vectors
            other = [rng.uniform(0, 5) for _ in range(7)]
            half = [0.5 * a + 0.5 * b for a, b in zip(r, other)]
            lhs = compute_reward(JudgeScores(tuple(half)), DivergenceCount(0)).r_comp
            rhs = 0.5 * compute_reward(JudgeScores(tuple(r)), DivergenceCount(0)).r_comp + \
                0.5 * compute_reward(JudgeScores(tuple(other)), DivergenceCount(0)).r_comp
            assert lhs == pytest.approx(rhs, abs=1e-12)


def test_dapo_criterion():
    """Advantage and clip worked examples; FD gradient agreement; ascent sanity."""
    with Budget("DAPO objective and gradients", 30.0):
        np.testing.assert_allclose(dapo.normalize_advantages([0.0, 2.0]), [-1.0, 1.0])
        np.testing.assert_array_equal(dapo.normalize_advantages([3.0] * 4), np.zeros(4))
        np.testing.assert_allclose(
            dapo.normalize_advantages([1.0, 2.0, 3.0, 4.0]),
            [-1.3416, -0.4472, 0.4472, 1.3416],
            atol=1e-4,
        )
        cfg = dapo.ClipConfig()
        assert dapo.clipped_term(2.0, 1.0, cfg) == 1.28
        assert dapo.clipped_term(0.5, -1.0, cfg) == -0.8

        worst = 0.0
        for seed in range(100):
            rng = np.random.default_rng(5000 + seed)
            policy, batch = dapo.make_instance(rng, divergence=0.4)
            err, checked = dapo.gradient_check(policy, batch, cfg)
            if checked:
                worst = max(worst, err)
        assert worst < 1e-5, f"max gradient relative error {worst}"

        for seed in range(10):
            rng = np.random.default_rng(7000 + seed)
            policy, batch = dapo.make_instance(rng, divergence=0.4)
            before = dapo.objective(policy, batch, cfg)
            stepped = policy.with_logits(policy.logits + 1e-4 * dapo.gradient(policy, batch, cfg))
            assert dapo.objective(stepped, batch, cfg) >= before - 1e-12


def test_template_criterion(zh_block_text):
    """Round-trip and extraction on the canonical turn; MissingField on truncation."""
    with Budget("Template round-trip and extraction", 1.0):
        block = parse_block(zh_block_text, ZH_DIALECT)
        assert "急性支气管炎" in block.diagnoses
        assert parse_block(serialize_block(block, ZH_DIALECT), ZH_DIALECT) == block
        assert extract_diagnosis_names(block) == ["急性支气管炎"]
        assert extract_diagnosis_names(
            ReasoningBlock(diagnoses="初步诊断：过敏性鼻炎。", inquiry="q")
        ) == ["过敏性鼻炎"]
        for marker, field_name in zip(ZH_DIALECT.markers,
                                      ("known_information", "user_intention", "provided_information",
                                       "diagnoses", "info_to_collect", "response_strategy", "inquiry")):
            truncated = zh_block_text[: zh_block_text.index(marker)]
            with pytest.raises(MissingField) as exc_info:
                parse_block(truncated if truncated else "无标记", ZH_DIALECT)
            assert exc_info.value.field_name in (field_name, "known_information")


def test_end_to_end_determinism(tmp_path, sample_profile):
    """bench run: byte-identical reports over 3 runs and parallelism {1, 4}."""
    with Budget("End-to-end benchmark determinism", 10.0):
        cases = five_cases(sample_profile)
        store_records(cases, tmp_path / "cases.jsonl")
        physician, patient = script_batch(cases, {"case-0005": "上呼吸道感染"})
        physician.save(tmp_path / "physician.script.jsonl")
        patient.save(tmp_path / "patient.script.jsonl")
        for name, model in (("physician", "fix-phys"), ("patient", "fix-pat")):
            (tmp_path / f"{name}.backend.json").write_text(
                json.dumps({
                    "type": "scripted",
                    "model": model,
                    "script_path": f"{name}.script.jsonl",
                    "strict": True,
                }),
                encoding="utf-8",
            )
        (tmp_path / "mapper.json").write_text(
            json.dumps(MAPPER_TABLE, ensure_ascii=False), encoding="utf-8"
        )

        outputs = []
        for run_index, parallelism in enumerate((1, 1, 4)):
            out_dir = tmp_path / f"out{run_index}"
            code = bench_main([
                "run",
                "--cases", str(tmp_path / "cases.jsonl"),
                "--physician", str(tmp_path / "physician.backend.json"),
                "--patient", str(tmp_path / "patient.backend.json"),
                "--rounds", "5",
                "--parallelism", str(parallelism),
                "--mapper", str(tmp_path / "mapper.json"),
                "--out", str(out_dir),
            ])
            assert code == 0
            outputs.append(
                (
                    (out_dir / "report.json").read_bytes(),
                    (out_dir / "report.txt").read_bytes(),
                )
            )
        assert outputs[0] == outputs[1] == outputs[2]

        # strata means recompute from case records to 1e-12
        payload = json.loads(outputs[0][0].decode("utf-8"))
        assert payload["overall"]["n_recall"] == 5
        for scope, key in (("by_department", "department"), ("by_diagnosis_count", "diagnosis_count")):
            for stratum, stats in payload[scope].items():
                members = [
                    c for c in payload["cases"]
                    if str(c[key]) == stratum and c["recall"] is not None
                ]
                recomputed = sum(c["recall"] for c in members) / len(members)
                assert stats["recall_mean"] == pytest.approx(recomputed, abs=1e-12)
        sizes = sum(s["n_recall"] for s in payload["by_department"].values())
        assert sizes == len(payload["cases"])


def test_synthesis_conservation(tmp_path):
    """complete_logic preserves differential sets on 50 scripted pairs; mismatch fires."""
    with Budget("Synthesis differential conservation", 5.0):
        guideline = synthesis.GuidelineDoc(id="g-many", chapter_text="指南正文……")
        rng = random.Random(123)
        pairs = []
        for i in range(50):
            diseases = [f"疾病{i}-{j}" for j in range(rng.randrange(1, 6))]
            pairs.append((f"症状{i}", diseases))

        def completion(diseases):
            return json.dumps(
                {
                    "differentials": [
                        {"disease_name": d, "features": [f"{d}特点"], "examinations": []}
                        for d in diseases
                    ],
                    "evidence_dimensions": [{"name": "病程", "direction": "几天"}],
                },
                ensure_ascii=False,
            )

        backend = ScriptedBackend()
        for symptom, diseases in pairs:
            backend.add_request(
                request("m", [(
                    "user",
                    PROMPTS.render(
                        "cdrd_logic",
                        guideline=guideline.chapter_text,
                        symptom=symptom,
                        disease_list=json.dumps(diseases, ensure_ascii=False),
                    ),
                )]),
                completion(diseases),
            )
        checkpoint_path = tmp_path / "diseases.json"
        synthesis.write_checkpoint(
            synthesis.STAGE_DISEASE_MATCH,
            guideline.id,
            {"pairs": [{"symptom": s, "diseases": d} for s, d in pairs], "errors": []},
            checkpoint_path,
        )
        synthesis.approve_checkpoint(checkpoint_path)
        entries = complete_logic(guideline, checkpoint_path, backend, model_id="m", prompts=PROMPTS)
        assert len(entries) == 50
        for (symptom, diseases), entry in zip(pairs, entries):
            assert {d.disease_name for d in entry.differentials} == set(diseases), symptom

        # inject an addition into the first pair's completion
        bad_backend = ScriptedBackend()
        symptom0, diseases0 = pairs[0]
        bad_backend.add_request(
            request("m", [(
                "user",
                PROMPTS.render(
                    "cdrd_logic",
                    guideline=guideline.chapter_text,
                    symptom=symptom0,
                    disease_list=json.dumps(diseases0, ensure_ascii=False),
                ),
            )]),
            completion(diseases0 + ["多出来的病"]),
        )
        bad_path = tmp_path / "bad.json"
        synthesis.write_checkpoint(
            synthesis.STAGE_DISEASE_MATCH,
            guideline.id,
            {"pairs": [{"symptom": symptom0, "diseases": diseases0}], "errors": []},
            bad_path,
        )
        synthesis.approve_checkpoint(bad_path)
        with pytest.raises(DifferentialMismatch) as exc_info:
            complete_logic(guideline, bad_path, bad_backend, model_id="m", prompts=PROMPTS)
        assert exc_info.value.extra == ["多出来的病"]


def _review_fixture(tmp_path):
    """30 items over two baselines with predetermined verdict patterns."""
    rng = random.Random(2024)
    patterns = []
    choices = ["A", "B", "tie"]
    for i in range(30):
        if i % 5 == 4:
            pattern = tuple(rng.sample(choices, 3))  # 1-1-1 split
        else:
            pattern = tuple(rng.choice(choices) for _ in range(3))
        patterns.append(pattern)

    items = []
    for i, pattern in enumerate(patterns):
        items.append(
            ReviewItem(
                item_id=f"item-{i:03d}",
                history=f"患者：主诉{i}。",
                latest_message=f"最新消息{i}。",
                candidate_a=f"候选A{i}",
                candidate_b=f"候选B{i}",
                harness_side="A" if i % 2 == 0 else "B",
                baseline_model_id="baseline-x" if i < 15 else "baseline-y",
                seed=9,
            )
        )

    # independent expectation: count directly from the patterns
    expected = {}
    for baseline in ("baseline-x", "baseline-y"):
        wins = losses = ties = 0
        for item, pattern in zip(items, patterns):
            if item.baseline_model_id != baseline:
                continue
            mapped = [
                "tie" if c == "tie" else ("win" if c == item.harness_side else "loss")
                for c in pattern
            ]
            if mapped.count("win") >= 2:
                wins += 1
            elif mapped.count("loss") >= 2:
                losses += 1
            else:
                ties += 1
        expected[baseline] = (wins, losses, ties)
    return items, patterns, expected


def test_review_aggregation(tmp_path):
    """Replaying a 30-item, 3-reviewer log reproduces majority outcomes; zero blinding leaks."""
    with Budget("Review aggregation and blinding", 10.0):
        items, patterns, expected = _review_fixture(tmp_path)
        data_dir = tmp_path / "review-data"
        store = ReviewStore(data_dir)
        store.ingest_items(items)
        tokens = [store.register_reviewer(f"医生{i}") for i in range(3)]
        by_id = {item.item_id: pattern for item, pattern in zip(items, patterns)}
        for reviewer_index, token in enumerate(tokens):
            for _ in range(len(items)):
                view = store.next_item(token)
                choice = by_id[view["item_id"]][reviewer_index]
                store.submit_verdict(
                    Verdict(
                        item_id=view["item_id"],
                        reviewer_id=token,
                        choice=choice,
                        relevance_pass_a=True,
                        relevance_pass_b=True,
                    )
                )

        # replay the persisted log in a fresh store
        replayed = ReviewStore(data_dir)
        for baseline, (wins, losses, ties) in expected.items():
            agg = replayed.aggregate(baseline)
            assert (agg.wins, agg.losses, agg.ties) == (wins, losses, ties), baseline
            assert agg.items_fully_reviewed == wins + losses + ties

        # blinding scan over served payloads
        from fastapi.testclient import TestClient

        client = TestClient(create_app(ReviewStore()))
        payload = [item.to_dict() for item in items]
        for entry in payload:
            entry.pop("kind")
        assert client.post("/items", json=payload).status_code == 200
        token = client.post("/reviewers", json={"name": "扫描"}).json()["token"]
        forbidden = ("harness_side", "baseline_model_id", "baseline-x", "baseline-y", '"seed"')
        for _ in range(len(items)):
            response = client.get("/next", params={"reviewer": token})
            assert response.status_code == 200
            for fragment in forbidden:
                assert fragment not in response.text
            view = response.json()
            submit = client.post(
                "/verdicts",
                json={
                    "item_id": view["item_id"],
                    "reviewer": token,
                    "choice": "tie",
                    "relevance_pass_a": True,
                    "relevance_pass_b": True,
                },
            )
            for fragment in forbidden:
                assert fragment not in submit.text
